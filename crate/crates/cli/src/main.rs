//! `carto`: command-line pipeline from raw documents to tables and maps.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use carto_core::chained::{chain_fit, restrict_corpus};
use carto_core::corpus::{build_doc_term_graph, read_jsonl, Corpus, IngestConfig};
use carto_core::hash::sha256_hex;
use carto_core::mapexport::{build_bundle, check_chain_parent, ExportOptions, MapBundle};
use carto_core::measures::{fmt_measure, prevalence_shift, Profile};
use carto_core::report::domain_topic_table;
use carto_core::serve::StaticServer;
use carto_core::synth::{planted_corpus, two_era_corpus, EraConfig, PlantedConfig};
use carto_core::{fit, BlockKind, BlockRef, FitConfig, Model, ModelKind};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "carto", version, about = "Domain-topic cartography of document corpora")]
struct Cli {
    /// TOML file with `seed`, `[fit]` and `[ingest]` settings; flags take
    /// precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all randomness; a fresh one is drawn and printed if absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Md,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Groups of documents with disjoint vocabularies.
    Planted,
    /// Five domains over two eras of years.
    Eras,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a JSONL document file into a corpus artifact.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "corpus.json")]
        output: PathBuf,
        /// Drop terms found in fewer documents.
        #[arg(long)]
        min_df: Option<usize>,
        #[arg(long)]
        no_bigrams: bool,
    },
    /// Fit the domain-topic model of a corpus.
    Fit {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "model.json")]
        output: PathBuf,
        /// Independent chains.
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Fit a metadata dimension against a model's frozen domains.
    Chain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        dimension: String,
        /// Block kind letter for the metadata blocks (P or M).
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Usage, specificity and commonality of one block against the
    /// opposite side.
    Measure {
        /// Model or chain artifact.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        block: String,
        /// Level of the targets; 0 for terms (or metadata values).
        #[arg(long, default_value_t = 1)]
        target_level: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Domain-topic table of a block above level 1.
    Table {
        /// Model, or chain for a transposed table.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Prevalence shift of domains between two periods.
    Shift {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        /// Two period codes, `A,B`.
        #[arg(long, value_delimiter = ',', required = true)]
        periods: Vec<String>,
        /// Domain level; all levels if absent.
        #[arg(long)]
        level: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Corpus of the documents lying in every selected block.
    Subcorpus {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Chains resolving metadata block codes.
        #[arg(long)]
        chain: Vec<PathBuf>,
        /// Domain codes.
        #[arg(long)]
        domain: Vec<String>,
        /// Other block codes (periods, metadata blocks).
        #[arg(long)]
        block: Vec<String>,
        #[arg(long, default_value = "subcorpus.json")]
        output: PathBuf,
    },
    /// Write a map bundle and its page.
    Export {
        #[arg(long)]
        model: PathBuf,
        /// Export the domain-chained map of this chain instead.
        #[arg(long)]
        chain: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Metadata dimension for the histogram.
        #[arg(long)]
        histogram: Option<String>,
        /// List documents with titles and URLs.
        #[arg(long)]
        documents: bool,
        /// Seconds since the epoch; defaults to SOURCE_DATE_EPOCH or now.
        #[arg(long)]
        timestamp: Option<i64>,
        #[arg(long, default_value = "map")]
        out_dir: PathBuf,
    },
    /// Serve an exported map directory.
    Serve {
        #[arg(long, default_value = "map")]
        dir: PathBuf,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Check artifacts and the hashes linking them.
    Validate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        chain: Vec<PathBuf>,
        /// `map.json` files.
        #[arg(long)]
        map: Vec<PathBuf>,
    },
    /// Write a synthetic JSONL corpus.
    Synth {
        #[arg(long, value_enum)]
        kind: SynthKind,
        /// Documents per group or domain.
        #[arg(long, default_value_t = 20)]
        docs: usize,
        /// Stop-words used by every document (planted only).
        #[arg(long, default_value_t = 0)]
        stop_words: usize,
        #[arg(long, default_value = "docs.jsonl")]
        output: PathBuf,
    },
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    fit: FitConfig,
    ingest: IngestConfig,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).unwrap_or_else(|| {
        let s = rand::random::<u64>() >> 11;
        eprintln!("seed: {s}");
        s
    })
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    artifact: String,
    hash: String,
    config_hash: &'a str,
    seed: u64,
    description_length: f64,
    /// (documents, terms or values) blocks per level.
    blocks: Vec<(usize, usize)>,
}

fn report_model(m: &Model, path: &Path, hash: String) -> anyhow::Result<()> {
    let p = m.partition();
    info!("config hash {} seed {}", m.config_hash, m.seed);
    let s = Summary {
        artifact: path.display().to_string(),
        hash,
        config_hash: &m.config_hash,
        seed: m.seed,
        description_length: m.description_length,
        blocks: (1..=p.num_levels())
            .map(|l| {
                (
                    p.blocks_on(l, carto_core::Side::Left).len(),
                    p.blocks_on(l, carto_core::Side::Right).len(),
                )
            })
            .collect(),
    };
    println!("{}", serde_json::to_string(&s)?);
    Ok(())
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = load_config(cli.config.as_deref())?;
    let seed_flag = cli.seed;
    match cli.command {
        Command::Ingest {
            input,
            output,
            min_df,
            no_bigrams,
        } => {
            let mut cfg = file.ingest;
            if let Some(m) = min_df {
                cfg.min_df = m;
            }
            if no_bigrams {
                cfg.bigrams.enabled = false;
            }
            let (docs, raw_hash) = read_jsonl(&input)?;
            let corpus = Corpus::ingest(&docs, &cfg, &raw_hash)?;
            let hash = corpus.save(&output)?;
            println!(
                "{}",
                serde_json::json!({
                    "artifact": output.display().to_string(),
                    "hash": hash,
                    "documents": corpus.len(),
                    "terms": corpus.vocabulary.len(),
                    "bigrams": corpus.bigrams.len(),
                })
            );
        }
        Command::Fit { corpus, output, chains } => {
            let mut cfg = file.fit;
            if let Some(c) = chains {
                cfg.seeds = c;
            }
            let seed = resolve_seed(seed_flag, file.seed);
            let (corpus, chash) = Corpus::load(&corpus)?;
            let g = build_doc_term_graph(&corpus)?;
            let out = fit(Arc::new(g.clone()), &cfg, seed)?;
            let m = Model::domain_topic(g, out.state.partition(), cfg, seed, out.chain, chash);
            let hash = m.save(&output)?;
            report_model(&m, &output, hash)?;
        }
        Command::Chain {
            model,
            corpus,
            dimension,
            kind,
            output,
            chains,
        } => {
            let mut cfg = file.fit;
            if let Some(c) = chains {
                cfg.seeds = c;
            }
            let seed = resolve_seed(seed_flag, file.seed);
            let (parent, phash) = Model::load_kind(&model, ModelKind::Model)?;
            let (corpus, chash) = Corpus::load(&corpus)?;
            if parent.upstream_hash != chash {
                return Err(carto_core::Error::HashMismatch {
                    expected: parent.upstream_hash.clone(),
                    found: chash,
                }
                .into());
            }
            let kind = match kind.as_deref() {
                None => None,
                Some("P") => Some(BlockKind::P),
                Some("M") => Some(BlockKind::M),
                Some(k) => bail!(carto_core::Error::InvalidArgument(format!("metadata kind must be P or M, got {k}"))),
            };
            let chain = chain_fit(&parent, &phash, &corpus, &dimension, &cfg, seed, kind)?;
            let output = output.unwrap_or_else(|| PathBuf::from(format!("chain-{dimension}.json")));
            let hash = chain.save(&output)?;
            report_model(&chain, &output, hash)?;
        }
        Command::Measure {
            model,
            block,
            target_level,
            format,
            output,
        } => {
            let (m, _) = Model::load(&model)?;
            let b = m.resolve_str(&block)?;
            if target_level > m.num_levels() {
                bail!(carto_core::Error::InvalidArgument(format!("no level {target_level}")));
            }
            let rows = Profile::new(&m).measure(b, target_level)?;
            let text = match format {
                Format::Json => {
                    serde_json::to_string_pretty(&serde_json::json!({
                        "block": block,
                        "target_level": target_level,
                        "config_hash": m.config_hash,
                        "measures": rows,
                    }))? + "\n"
                }
                Format::Csv | Format::Md => csv_string(
                    &["block", "target", "usage", "specificity", "commonality_raw", "commonality"],
                    rows.iter()
                        .map(|r| {
                            vec![
                                block.clone(),
                                r.label.clone(),
                                r.usage.to_string(),
                                fmt_measure(r.specificity),
                                fmt_measure(r.commonality_raw),
                                fmt_measure(r.commonality),
                            ]
                        })
                        .collect(),
                )?,
            };
            emit(output.as_deref(), &text)?;
        }
        Command::Table {
            model,
            domain,
            format,
            output,
        } => {
            let (m, _) = Model::load(&model)?;
            let t = domain_topic_table(&m, &domain)?;
            let text = match format {
                Format::Json => t.to_json()?,
                Format::Csv => t.to_csv()?,
                Format::Md => t.to_markdown(),
            };
            emit(output.as_deref(), &text)?;
        }
        Command::Shift {
            model,
            chain,
            periods,
            level,
            format,
            output,
        } => {
            let (m, mhash) = Model::load_kind(&model, ModelKind::Model)?;
            let (c, _) = Model::load_kind(&chain, ModelKind::Chain)?;
            check_chain_parent(&m, &mhash, &c)?;
            if periods.len() != 2 {
                bail!(carto_core::Error::InvalidArgument(format!(
                    "--periods takes two codes, got {}",
                    periods.len()
                )));
            }
            let a: BlockRef = periods[0].parse()?;
            let b: BlockRef = periods[1].parse()?;
            let levels: Vec<usize> = match level {
                Some(l) => vec![l],
                None => (1..=m.num_levels()).collect(),
            };
            let mut rows = Vec::new();
            for l in levels {
                for r in prevalence_shift(&m, &c, l, &a, &b)? {
                    rows.push((l, r));
                }
            }
            let text = match format {
                Format::Json => {
                    let v: Vec<_> = rows
                        .iter()
                        .map(|(l, r)| serde_json::json!({"level": l, "row": r}))
                        .collect();
                    serde_json::to_string_pretty(&v)? + "\n"
                }
                Format::Csv | Format::Md => csv_string(
                    &["level", "domain", "prevalence_a", "prevalence_b", "shift", "color_score"],
                    rows.iter()
                        .map(|(l, r)| {
                            vec![
                                l.to_string(),
                                r.domain.clone(),
                                r.prevalence_a.to_string(),
                                r.prevalence_b.to_string(),
                                r.shift.to_string(),
                                r.color_score.to_string(),
                            ]
                        })
                        .collect(),
                )?,
            };
            emit(output.as_deref(), &text)?;
        }
        Command::Subcorpus {
            corpus,
            model,
            chain,
            domain,
            block,
            output,
        } => {
            let (corpus, chash) = Corpus::load(&corpus)?;
            let (m, mhash) = Model::load_kind(&model, ModelKind::Model)?;
            if m.upstream_hash != chash {
                return Err(carto_core::Error::HashMismatch {
                    expected: m.upstream_hash.clone(),
                    found: chash,
                }
                .into());
            }
            let mut chains = Vec::new();
            for p in &chain {
                let (c, _) = Model::load_kind(p, ModelKind::Chain)?;
                check_chain_parent(&m, &mhash, &c)?;
                chains.push(c);
            }
            let selectors = domain
                .iter()
                .chain(&block)
                .map(|s| s.parse())
                .collect::<carto_core::Result<Vec<BlockRef>>>()?;
            let refs: Vec<&Model> = chains.iter().collect();
            let sub = restrict_corpus(&corpus, &m, &refs, &selectors, &mhash)?;
            let hash = sub.save(&output)?;
            println!(
                "{}",
                serde_json::json!({
                    "artifact": output.display().to_string(),
                    "hash": hash,
                    "documents": sub.len(),
                    "terms": sub.vocabulary.len(),
                })
            );
        }
        Command::Export {
            model,
            chain,
            corpus,
            histogram,
            documents,
            timestamp,
            out_dir,
        } => {
            let (m, mhash) = Model::load_kind(&model, ModelKind::Model)?;
            let corpus = corpus.map(|p| Corpus::load(&p)).transpose()?;
            let target = match &chain {
                Some(p) => {
                    let (c, _) = Model::load_kind(p, ModelKind::Chain)?;
                    check_chain_parent(&m, &mhash, &c)?;
                    c
                }
                None => m.clone(),
            };
            if let Some((_, h)) = &corpus {
                if &m.upstream_hash != h {
                    return Err(carto_core::Error::HashMismatch {
                        expected: m.upstream_hash.clone(),
                        found: h.clone(),
                    }
                    .into());
                }
            }
            let opts = ExportOptions {
                corpus: corpus.as_ref().map(|(c, h)| (c, h.as_str())),
                histogram_dimension: histogram.as_deref(),
                include_documents: documents,
                timestamp,
            };
            let bundle = build_bundle(&target, &opts)?;
            bundle.validate()?;
            bundle.write(&out_dir)?;
            info!("config hash {} seed {}", target.config_hash, target.seed);
            println!(
                "{}",
                serde_json::json!({
                    "artifact": out_dir.join("map.json").display().to_string(),
                    "blocks": bundle.blocks.len(),
                })
            );
        }
        Command::Serve { dir, port, host } => {
            let server = StaticServer::bind(&dir, &format!("{host}:{port}"))?;
            eprintln!("serving {} on http://{host}:{}/", dir.display(), server.port());
            server.run();
        }
        Command::Validate {
            corpus,
            model,
            chain,
            map,
        } => {
            let mut checked = Vec::new();
            let corpus = corpus.map(|p| Corpus::load(&p).map(|c| (p, c))).transpose()?;
            if let Some((p, _)) = &corpus {
                checked.push(p.display().to_string());
            }
            let model = model
                .map(|p| Model::load_kind(&p, ModelKind::Model).map(|m| (p, m)))
                .transpose()?;
            if let Some((p, (m, _))) = &model {
                if let Some((_, (_, chash))) = &corpus {
                    if &m.upstream_hash != chash {
                        return Err(carto_core::Error::HashMismatch {
                            expected: m.upstream_hash.clone(),
                            found: chash.clone(),
                        }
                        .into());
                    }
                }
                checked.push(p.display().to_string());
            }
            let mut hashes = Vec::new();
            if let Some((_, (m, _))) = &model {
                hashes.push(m.config_hash.clone());
            }
            for p in &chain {
                let (c, _) = Model::load_kind(p, ModelKind::Chain)?;
                if let Some((_, (m, mhash))) = &model {
                    check_chain_parent(m, mhash, &c)?;
                }
                hashes.push(c.config_hash.clone());
                checked.push(p.display().to_string());
            }
            for p in &map {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let b = MapBundle::from_json(&text)?;
                b.validate()?;
                if !hashes.is_empty() && !hashes.contains(&b.meta.config_hash) {
                    return Err(carto_core::Error::HashMismatch {
                        expected: b.meta.config_hash.clone(),
                        found: hashes.join(","),
                    }
                    .into());
                }
                checked.push(p.display().to_string());
            }
            println!("{}", serde_json::json!({"ok": true, "checked": checked}));
        }
        Command::Synth {
            kind,
            docs,
            stop_words,
            output,
        } => {
            let seed = resolve_seed(seed_flag, file.seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let documents = match kind {
                SynthKind::Planted => {
                    let cfg = PlantedConfig {
                        docs_per_group: docs,
                        stop_words,
                        ..Default::default()
                    };
                    planted_corpus(&cfg, &mut rng).0
                }
                SynthKind::Eras => {
                    let cfg = EraConfig {
                        docs_per_domain: docs,
                        ..Default::default()
                    };
                    two_era_corpus(&cfg, &mut rng).0
                }
            };
            let mut text = String::new();
            for d in &documents {
                text.push_str(&serde_json::to_string(d)?);
                text.push('\n');
            }
            std::fs::write(&output, &text).with_context(|| format!("writing {}", output.display()))?;
            println!(
                "{}",
                serde_json::json!({
                    "artifact": output.display().to_string(),
                    "hash": sha256_hex(text.as_bytes()),
                    "documents": documents.len(),
                })
            );
        }
    }
    Ok(())
}

fn threads_from_env() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CARTO_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .with_context(|| format!("CARTO_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn error_json(e: &anyhow::Error) -> serde_json::Value {
    let kind = e
        .chain()
        .find_map(|c| c.downcast_ref::<carto_core::Error>())
        .map_or("error", |c| c.kind());
    let mut message = String::new();
    for cause in e.chain().map(|c| c.to_string()) {
        if message.is_empty() {
            message = cause;
        } else if !message.contains(&cause) {
            message = format!("{message}: {cause}");
        }
    }
    serde_json::json!({"error": {"kind": kind, "message": message}})
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": "usage", "message": e.to_string().trim_end()}})
            );
            return ExitCode::from(2);
        }
    };
    match threads_from_env().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
