//! Acceptance suite: one pass/fail line per criterion, nonzero exit if any
//! fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use carto_core::chained::chain_fit;
use carto_core::corpus::{build_doc_term_graph, BigramConfig, Corpus, Document, IngestConfig};
use carto_core::measures::{commonality_kernel, commonality_raw_kernel, kl_divergence, specificity_kernel, Profile};
use carto_core::oracle;
use carto_core::report::{select_terms, select_topics};
use carto_core::synth::{domain_era, group_term, planted_corpus, stop_word, two_era_corpus, EraConfig, PlantedConfig};
use carto_core::{fit, FitConfig, Model, NestedState, Side, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn ingest_cfg() -> IngestConfig {
    IngestConfig {
        bigrams: BigramConfig {
            enabled: false,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn fit_docs(docs: &[Document], seed: u64) -> (Corpus, Model) {
    let corpus = Corpus::ingest(docs, &ingest_cfg(), "raw").unwrap();
    let g = build_doc_term_graph(&corpus).unwrap();
    let out = fit(Arc::new(g.clone()), &FitConfig::default(), seed).unwrap();
    let m = Model::domain_topic(g, out.state.partition(), FitConfig::default(), seed, out.chain, "corpus".into());
    (corpus, m)
}

fn level1_docs(m: &Model) -> Vec<usize> {
    let n = m.graph.num_left();
    m.partition().assignments()[0][..n].iter().map(|&b| b as usize).collect()
}

fn move_deltas() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut moves, mut worst, mut bad) = (0usize, 0.0f64, 0usize);
    for _ in 0..200 {
        let sg = oracle::random_graph(&mut rng, 8);
        let g = Arc::new(sg.to_graph());
        let levels = oracle::random_levels(&mut rng, &sg, true);
        let state = NestedState::new(g.clone(), &oracle::to_partition(&g, &levels));
        let before = oracle::description_length(&sg, &levels);
        let nb = levels[0].iter().max().unwrap() + 1;
        for v in 0..sg.num_nodes() {
            let side = g.side_of(v);
            let targets = (0..nb)
                .filter(|&b| state.block_side(0, b as u32) == side)
                .map(Some)
                .chain([None]);
            for t in targets {
                let target = t.map_or(Target::Fresh, |b| Target::Block(b as u32));
                let Ok(got) = state.delta_dl(v, target) else {
                    continue;
                };
                let after = oracle::move_node(&sg, &levels, v, t);
                let want = oracle::description_length(&sg, &after) - before;
                let err = (got - want).abs();
                worst = worst.max(err);
                if err >= 1e-9 {
                    bad += 1;
                }
                moves += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        bad == 0 && moves > 0 && t < Duration::from_secs(30),
        format!("{moves} moves, {bad} mismatches, max error {worst:.2e}, {t:.1?}"),
    )
}

fn global_optimum() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut hits, mut below) = (0, 0);
    for i in 0..100 {
        let sg = oracle::random_graph(&mut rng, 6);
        let (best, _) = oracle::exhaustive_minimum(&sg);
        let got = fit(Arc::new(sg.to_graph()), &FitConfig::default(), i).unwrap().state.sigma();
        if (got - best).abs() < 1e-9 {
            hits += 1;
        } else if got < best {
            below += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        hits >= 95 && t < Duration::from_secs(300),
        format!("{hits}/100 equal to the enumerated minimum ({below} below it), {t:.1?}"),
    )
}

fn planted(stop_words: usize) -> Vec<(f64, bool, Duration)> {
    (0..10u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = PlantedConfig {
                stop_words,
                ..Default::default()
            };
            let (docs, truth) = planted_corpus(&cfg, &mut rng);
            let start = Instant::now();
            let (_, m) = fit_docs(&docs, seed);
            let t = start.elapsed();
            let score = oracle::nmi(&level1_docs(&m), &truth);
            let p = m.partition();
            let topic = |label: &str| {
                let v = m.graph.num_left() + m.graph.right_index(label).unwrap();
                p.block_of(v, 1)
            };
            let group_topics: Vec<u32> = (0..cfg.groups)
                .flat_map(|g| (0..cfg.vocab_per_group).map(move |i| group_term(g, i)))
                .filter(|t| m.graph.right_index(t).is_some())
                .map(|t| topic(&t))
                .collect();
            let stops_apart = (0..stop_words).all(|i| !group_topics.contains(&topic(&stop_word(i))));
            (score, stops_apart, t)
        })
        .collect()
}

fn planted_recovery() -> Outcome {
    let runs = planted(0);
    let good = runs.iter().filter(|r| r.0 >= 0.99 && r.2 < Duration::from_secs(60)).count();
    let slowest = runs.iter().map(|r| r.2).max().unwrap();
    let scores: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.0)).collect();
    outcome(good >= 9, format!("{good}/10 seeds with NMI >= 0.99 [{}], slowest {slowest:.1?}", scores.join(" ")))
}

fn degree_correction() -> Outcome {
    let runs = planted(5);
    let good = runs
        .iter()
        .filter(|r| r.0 >= 0.95 && r.1 && r.2 < Duration::from_secs(60))
        .count();
    let mixed = runs.iter().filter(|r| !r.1).count();
    let slowest = runs.iter().map(|r| r.2).max().unwrap();
    outcome(
        good >= 9,
        format!("{good}/10 seeds with NMI >= 0.95 and stop-words apart ({mixed} mixed), slowest {slowest:.1?}"),
    )
}

fn chained_invariants() -> Outcome {
    let (mut frozen, mut contiguous) = (0, 0);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (docs, _) = two_era_corpus(&EraConfig::default(), &mut rng);
        let (corpus, m) = fit_docs(&docs, seed);
        let chain = chain_fit(&m, "parent", &corpus, "year", &FitConfig::default(), seed, None).unwrap();
        let (cp, mp) = (chain.partition(), m.partition());

        let same_docs = (0..chain.graph.num_left()).all(|d| {
            let pd = m.doc_index(chain.graph.label(d)).unwrap();
            (1..=m.num_levels()).all(|l| chain.code(l, cp.block_of(d, l)) == m.code(l, mp.block_of(pd, l)))
        });
        frozen += same_docs as usize;

        let periods = if cp.num_levels() >= 2 { cp.blocks_on(2, Side::Right) } else { Vec::new() };
        let ok = periods.len() == 2
            && periods.iter().all(|&b| {
                let mut years: Vec<usize> = cp
                    .members(2, b)
                    .iter()
                    .map(|&v| chain.graph.label(v).parse().unwrap())
                    .collect();
                years.sort();
                years.windows(2).all(|w| w[1] == w[0] + 1)
            });
        contiguous += ok as usize;
    }
    outcome(
        frozen == 10 && contiguous >= 9,
        format!("documents frozen in {frozen}/10 seeds, 2 contiguous level-2 periods in {contiguous}/10"),
    )
}

fn measure_fixtures() -> Outcome {
    let mut fails: Vec<String> = Vec::new();
    fn check(fails: &mut Vec<String>, name: &str, got: f64, want: f64) {
        if (got - want).abs() >= 1e-9 {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    }
    // six-decimal reference values, compared at their printed precision
    fn printed(fails: &mut Vec<String>, name: &str, got: f64, want: f64) {
        if (got - want).abs() > 1e-6 {
            fails.push(format!("{name}: {got} vs {want}"));
        }
    }
    check(&mut fails, "specificity", specificity_kernel(0.5, &[0.25]), 0.5 * 2f64.ln());
    check(&mut fails, "raw commonality", commonality_raw_kernel(&[0.4, 0.2], &[0.3]), 0.5 * ((0.4f64 / 0.3).ln() + (0.2f64 / 0.3).ln()));
    check(&mut fails, "commonality", commonality_kernel(&[0.4, 0.2], &[0.3]), 0.3 * 0.5 * ((0.4f64 / 0.3).ln() + (0.2f64 / 0.3).ln()));
    printed(&mut fails, "printed specificity", specificity_kernel(0.5, &[0.25]), 0.346574);
    printed(&mut fails, "printed raw commonality", commonality_raw_kernel(&[0.4, 0.2], &[0.3]), -0.058892);
    printed(&mut fails, "printed commonality", commonality_kernel(&[0.4, 0.2], &[0.3]), -0.017668);
    check(&mut fails, "absent target", specificity_kernel(0.0, &[0.3]), 0.0);
    check(&mut fails, "absent from all children", commonality_kernel(&[0.0, 0.0], &[0.3]), 0.0);
    if commonality_raw_kernel(&[0.4, 0.0], &[0.3]) != f64::NEG_INFINITY {
        fails.push("missing child is not -inf".into());
    }

    // Σ_t Ŝ over a single-ancestor ladder against KL, on fitted models
    let mut kl_checks = 0;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (docs, _) = two_era_corpus(&EraConfig::default(), &mut rng);
        let (_, m) = fit_docs(&docs, seed);
        let prof = Profile::new(&m);
        for level in 1..m.num_levels() {
            for b in m.partition().blocks_on(level, Side::Left) {
                let ladder = prof.ladder((level, b));
                if ladder.len() != 1 {
                    continue;
                }
                for target_level in [0, 1] {
                    let rows = prof.measure((level, b), target_level).unwrap();
                    let sum: f64 = rows.iter().map(|r| r.specificity.unwrap()).sum();
                    let kl = kl_divergence(
                        &prof.usage((level, b), target_level).unwrap(),
                        &prof.usage(ladder[0], target_level).unwrap(),
                    );
                    check(&mut fails, "KL identity", sum, kl);
                    kl_checks += 1;
                }
            }
        }
    }
    if kl_checks == 0 {
        fails.push("no single-ancestor block to check".into());
    }
    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            format!("fixtures, conventions and {kl_checks} KL identities hold")
        } else {
            fails.join("; ")
        },
    )
}

fn brute_topics(values: &[(usize, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].1.total_cmp(&values[a].1).then(values[a].0.cmp(&values[b].0)));
    let half = 0.5 * values.iter().filter(|v| v.1 > 0.0).map(|v| v.1).sum::<f64>();
    if half <= 0.0 {
        return Vec::new();
    }
    for len in 1..=order.len() {
        let prefix = &order[..len];
        if prefix.iter().any(|&i| values[i].1 <= 0.0) {
            break;
        }
        let sum: f64 = prefix.iter().map(|&i| values[i].1).sum();
        if sum >= half {
            return prefix.to_vec();
        }
    }
    unreachable!("the positive values reach half their sum")
}

fn brute_terms(values: &[(usize, f64)]) -> Vec<usize> {
    let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let mut keep: Vec<usize> = (0..values.len()).filter(|&i| max > 0.0 && values[i].1 > max / 2.0).collect();
    keep.sort_by(|&a, &b| values[b].1.total_cmp(&values[a].1).then(values[a].0.cmp(&values[b].0)));
    keep
}

fn selection_rules() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fails = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..12);
        let values: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                let v = match rng.gen_range(0..10) {
                    0 => f64::NEG_INFINITY,
                    1 => 0.0,
                    2 => 0.25,
                    3 => -rng.gen_range(0.0..1.0),
                    _ => rng.gen_range(0.0..1.0),
                };
                (i, v)
            })
            .collect();
        if select_topics(&values) != brute_topics(&values) || select_terms(&values) != brute_terms(&values) {
            fails += 1;
        }
    }
    outcome(fails == 0, format!("{fails}/1000 vectors disagree with brute force"))
}

fn carto(dir: &Path, args: &[&str]) -> Result<String, String> {
    carto_with(dir, args, None)
}

fn carto_with(dir: &Path, args: &[&str], threads: Option<&str>) -> Result<String, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_carto"));
    if let Some(n) = threads {
        cmd.env("CARTO_THREADS", n);
    }
    let out = cmd
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).to_string())
    } else {
        Err(format!("carto {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn determinism() -> Outcome {
    let run = |threads: Option<&str>| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        carto_with(d, &["synth", "--kind", "eras", "--docs", "20", "--seed", "3"], threads)?;
        carto_with(d, &["ingest", "--input", "docs.jsonl"], threads)?;
        carto_with(d, &["fit", "--corpus", "corpus.json", "--seed", "7"], threads)?;
        carto_with(d, &["chain", "--model", "model.json", "--corpus", "corpus.json", "--dimension", "year", "--seed", "7"], threads)?;
        let (m, _) = Model::load(d.join("model.json")).map_err(|e| e.to_string())?;
        let top = m.num_levels();
        let root = m.code(top, m.partition().blocks_on(top, Side::Left)[0]).to_string();
        carto_with(d, &["table", "--model", "model.json", "--domain", &root, "--format", "json", "--output", "table.json"], threads)?;
        carto_with(d, &["export", "--model", "model.json", "--corpus", "corpus.json", "--histogram", "year", "--documents"], threads)?;
        let mut files = BTreeMap::new();
        for f in ["corpus.json", "model.json", "chain-year.json", "table.json", "map/map.json"] {
            files.insert(f.to_string(), std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        // save/load identity
        let (model, _) = Model::load(d.join("model.json")).map_err(|e| e.to_string())?;
        if model.to_json().unwrap().as_bytes() != files["model.json"].as_slice() {
            return Err("model does not round-trip".into());
        }
        let (chain, _) = Model::load(d.join("chain-year.json")).map_err(|e| e.to_string())?;
        if chain.to_json().unwrap().as_bytes() != files["chain-year.json"].as_slice() {
            return Err("chain does not round-trip".into());
        }
        Ok(files)
    };
    match (run(None), run(Some("1"))) {
        (Ok(a), Ok(b)) => {
            let differ: Vec<&String> = a.keys().filter(|k| a[*k] != b[*k]).collect();
            outcome(
                differ.is_empty(),
                if differ.is_empty() {
                    format!("{} artifacts byte-identical across runs and thread counts; model and chain round-trip", a.len())
                } else {
                    format!("differ: {differ:?}")
                },
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}

fn pipeline() -> Outcome {
    let start = Instant::now();
    let run = || -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let d = dir.path();
        carto(d, &["synth", "--kind", "eras", "--docs", "100", "--seed", "11"])?;
        carto(d, &["ingest", "--input", "docs.jsonl"])?;
        carto(d, &["fit", "--corpus", "corpus.json", "--seed", "11"])?;
        carto(d, &["chain", "--model", "model.json", "--corpus", "corpus.json", "--dimension", "year", "--seed", "11"])?;
        let shift = carto(
            d,
            &["shift", "--model", "model.json", "--chain", "chain-year.json", "--periods", "L2P1,L2P2", "--level", "1", "--format", "json"],
        )?;
        let rows: Vec<serde_json::Value> = serde_json::from_str(&shift).map_err(|e| e.to_string())?;

        let (model, _) = Model::load(d.join("model.json")).map_err(|e| e.to_string())?;
        let (chain, _) = Model::load(d.join("chain-year.json")).map_err(|e| e.to_string())?;
        let (pl, pb) = chain.resolve_str("L2P1").map_err(|e| e.to_string())?;
        let first_has_year1 = chain
            .partition()
            .members(pl, pb)
            .iter()
            .any(|&v| chain.graph.label(v) == "1");
        let extreme: Vec<(String, f64)> = rows
            .iter()
            .map(|r| (r["row"]["domain"].as_str().unwrap().to_string(), r["row"]["color_score"].as_f64().unwrap()))
            .filter(|(_, c)| (c.abs() - 1.0).abs() < 1e-12)
            .collect();
        let p = model.partition();
        let era_distinctive = extreme.iter().any(|(code, score)| {
            let (l, b) = model.resolve_str(code).unwrap();
            let eras: Vec<Option<usize>> = p
                .members(l, b)
                .iter()
                .map(|&v| domain_era(model.graph.label(v)))
                .collect();
            let early = eras.iter().filter(|e| **e == Some(0)).count();
            let late = eras.iter().filter(|e| **e == Some(1)).count();
            let declining = (*score < 0.0) == first_has_year1;
            if declining {
                early == eras.len()
            } else {
                late == eras.len()
            }
        });
        if !era_distinctive {
            return Err(format!("no era-distinctive domain at colorScore ±1: {extreme:?}"));
        }

        let top = model.num_levels();
        let root = model.code(top, p.blocks_on(top, Side::Left)[0]).to_string();
        carto(d, &["table", "--model", "model.json", "--domain", &root, "--output", "table.md"])?;
        let sub_domain = model.code(2, p.blocks_on(2, Side::Left)[0]).to_string();
        carto(d, &["subcorpus", "--corpus", "corpus.json", "--model", "model.json", "--domain", &sub_domain])?;
        carto(d, &["fit", "--corpus", "subcorpus.json", "--output", "sub-model.json", "--seed", "11"])?;
        carto(
            d,
            &["chain", "--model", "sub-model.json", "--corpus", "subcorpus.json", "--dimension", "year", "--seed", "11", "--output", "sub-chain.json"],
        )?;
        carto(d, &["validate", "--corpus", "subcorpus.json", "--model", "sub-model.json", "--chain", "sub-chain.json"])?;
        Ok(format!("extreme domains {extreme:?}, replay on {sub_domain}"))
    };
    match run() {
        Ok(detail) => {
            let t = start.elapsed();
            outcome(t < Duration::from_secs(300), format!("{detail}, {t:.1?}"))
        }
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("move deltas match the description-length oracle", move_deltas),
        ("fit reaches the enumerated optimum", global_optimum),
        ("planted partition recovery", planted_recovery),
        ("degree correction with stop-words", degree_correction),
        ("chained model invariants", chained_invariants),
        ("measure fixtures", measure_fixtures),
        ("selection rules", selection_rules),
        ("determinism and round-trip", determinism),
        ("end-to-end pipeline", pipeline),
    ];
    let only: Option<usize> = std::env::var("CARTO_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let start = Instant::now();
        let r = check();
        let status = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {status}: {name}: {} [{:.1?}]", i + 1, r.detail, start.elapsed());
        failed += !r.pass as usize;
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
