//! Chained inference: partition the values of one metadata dimension while
//! the document hierarchy of a fitted model stays frozen.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::{debug, info};
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{build_doc_meta_graph, Corpus};
use crate::dl::description_length;
use crate::error::{Error, Result};
use crate::fit::{agglomerate, chain_rng, refine, FitConfig};
use crate::graph::{BipartiteGraph, Side};
use crate::model::{Model, ModelKind};
use crate::partition::{BlockCodes, BlockKind, BlockRef, NestedPartition};
use crate::state::{compact_raw, NestedState};

/// `P` when every value of the dimension is an integer (years), else `M`.
pub fn default_kind(graph: &BipartiteGraph) -> BlockKind {
    if !graph.right_labels().is_empty() && graph.right_labels().iter().all(|v| v.trim().parse::<i64>().is_ok()) {
        BlockKind::P
    } else {
        BlockKind::M
    }
}

/// Document-metadata graph restricted to documents that carry the dimension,
/// with each kept document's node index in the parent model.
fn chain_graph(parent: &Model, corpus: &Corpus, dimension: &str) -> Result<(BipartiteGraph, Vec<usize>)> {
    let meta = build_doc_meta_graph(corpus, dimension)?;
    let index: BTreeMap<&str, usize> = parent
        .graph
        .left_labels()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.as_str(), i))
        .collect();
    let unknown: Vec<String> = meta
        .left_labels()
        .iter()
        .filter(|d| !index.contains_key(d.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownDocuments(unknown));
    }
    let keep: Vec<usize> = meta.nodes_on(Side::Left).filter(|&d| meta.degree(d) > 0).collect();
    let excluded = meta.num_left() - keep.len();
    if excluded > 0 {
        info!("{excluded} documents lack `{dimension}` and are left out of the chain");
    }
    let graph = meta.restrict_left(&keep)?;
    let parent_nodes = graph.left_labels().iter().map(|d| index[d.as_str()]).collect();
    Ok((graph, parent_nodes))
}

/// Initial chained partition: documents copy their parent blocks at every
/// level, metadata values start as singletons under one metadata root.
fn initial_partition(graph: &BipartiteGraph, parent: &NestedPartition, parent_nodes: &[usize]) -> NestedPartition {
    let depth = parent.num_levels().max(2);
    let n_left = graph.num_left();
    let n_right = graph.num_right();
    let mut raw: Vec<Vec<u32>> = Vec::with_capacity(depth);
    // Raw ids: parent blocks of level l keep their ids, metadata blocks sit
    // after them.
    let parent_blocks = |l: usize| parent.num_blocks(l.min(parent.num_levels())) as u32;
    let mut level1: Vec<u32> = parent_nodes.iter().map(|&v| parent.block_of(v, 1)).collect();
    level1.extend((0..n_right as u32).map(|j| parent_blocks(1) + j));
    raw.push(level1);
    for l in 2..=depth {
        let below = parent_blocks(l - 1);
        let mut assign: Vec<u32> = (0..below)
            .map(|b| if l <= parent.num_levels() { parent.parent(l - 1, b).expect("level above") } else { b })
            .collect();
        let meta_width = if l == 2 { n_right as u32 } else { 1 };
        assign.extend(std::iter::repeat_n(parent_blocks(l), meta_width as usize));
        raw.push(assign);
    }
    debug_assert_eq!(raw[0].len(), n_left + n_right);
    compact_raw(graph, raw)
}

/// Replaces metadata level `k + 1` (0-based `k`) with the identity of level
/// `k`, all under the single metadata block of level `k + 2`.
fn open_metadata_level(graph: &BipartiteGraph, p: &NestedPartition, k: usize) -> NestedPartition {
    let mut levels = p.assignments().to_vec();
    let below = p.num_blocks(k);
    let doc_blocks_k1 = p.blocks_on(k + 1, Side::Left).len() as u32;
    let meta_root_k2 = p.blocks_on(k + 2, Side::Right)[0];
    let mut assign = Vec::with_capacity(below);
    let mut next_meta = doc_blocks_k1;
    for b in 0..below as u32 {
        if p.side(k, b) == Side::Left {
            assign.push(levels[k][b as usize]);
        } else {
            assign.push(next_meta);
            next_meta += 1;
        }
    }
    // Document blocks of level k+1 must keep ids below the new metadata ids.
    let remap: Vec<u32> = {
        let mut r = vec![0u32; p.num_blocks(k + 1)];
        for (i, b) in p.blocks_on(k + 1, Side::Left).into_iter().enumerate() {
            r[b as usize] = i as u32;
        }
        r
    };
    for (i, a) in assign.iter_mut().enumerate() {
        if p.side(k, i as u32) == Side::Left {
            *a = remap[*a as usize];
        }
    }
    let mut up: Vec<u32> = p
        .blocks_on(k + 1, Side::Left)
        .into_iter()
        .map(|b| levels[k + 1][b as usize])
        .collect();
    up.extend(std::iter::repeat_n(meta_root_k2, (next_meta - doc_blocks_k1) as usize));
    levels[k] = assign;
    levels[k + 1] = up;
    NestedPartition::new(graph, levels).expect("opened metadata level is valid")
}

fn restore(graph: &Arc<BipartiteGraph>, p: &NestedPartition) -> NestedState {
    let mut s = NestedState::new(graph.clone(), p);
    s.set_frozen(Some(Side::Left));
    s
}

fn chain_run<R: Rng>(graph: &Arc<BipartiteGraph>, init: &NestedPartition, cfg: &FitConfig, rng: &mut R) -> NestedPartition {
    let mut state = restore(graph, init);
    let top = state.num_levels() - 1;
    for k in 0..top {
        if k > 0 {
            let opened = open_metadata_level(graph, &state.partition(), k);
            state = restore(graph, &opened);
        }
        agglomerate(&mut state, k, cfg, rng);
        if state.num_blocks_on(k, Side::Right) <= 1 {
            break;
        }
    }
    refine(&mut state, cfg, rng);
    state.partition()
}

/// Fits the metadata hierarchy of `dimension` against the frozen document
/// hierarchy of `parent`. `parent_hash` is the hash of the parent artifact.
pub fn chain_fit(
    parent: &Model,
    parent_hash: &str,
    corpus: &Corpus,
    dimension: &str,
    cfg: &FitConfig,
    seed: u64,
    kind: Option<BlockKind>,
) -> Result<Model> {
    cfg.validate()?;
    if parent.kind != ModelKind::Model {
        return Err(Error::ArtifactKind {
            expected: "model".into(),
            found: "chain".into(),
        });
    }
    let (graph, parent_nodes) = chain_graph(parent, corpus, dimension)?;
    let kind = kind.unwrap_or_else(|| default_kind(&graph));
    if kind == BlockKind::D {
        return Err(Error::InvalidArgument("metadata blocks cannot use the domain kind".into()));
    }
    let graph = Arc::new(graph);
    let init = initial_partition(&graph, parent.partition(), &parent_nodes);

    let results: Vec<(f64, NestedPartition)> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| {
            let mut rng = chain_rng(seed, i);
            let p = chain_run(&graph, &init, cfg, &mut rng);
            let sigma = description_length(&graph, &p);
            debug!("chain {i}: Σ = {sigma:.6}");
            (sigma, p)
        })
        .collect();
    let (chain, (_, best)) = results
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .expect("at least one chain");

    let codes = chain_codes(&best, parent, &parent_nodes, kind)?;
    let graph = Arc::try_unwrap(graph).unwrap_or_else(|g| (*g).clone());
    Ok(Model::new(
        ModelKind::Chain,
        graph,
        best,
        codes,
        cfg.clone(),
        seed,
        chain,
        parent_hash.to_string(),
        Some(dimension.to_string()),
        Some(parent.config_hash.clone()),
    ))
}

/// Document blocks keep the parent's codes; metadata blocks are numbered
/// from 1 by size, then lowest member.
fn chain_codes(p: &NestedPartition, parent: &Model, parent_nodes: &[usize], kind: BlockKind) -> Result<BlockCodes> {
    let fresh = BlockCodes::assign(p, BlockKind::D, kind);
    let mut codes: Vec<Vec<BlockRef>> = fresh.levels().to_vec();
    for (k, row) in codes.iter_mut().enumerate() {
        let level = k + 1;
        let proj = p.projection(0, level);
        for (doc, &pv) in parent_nodes.iter().enumerate() {
            let b = proj[doc] as usize;
            row[b] = if level <= parent.num_levels() {
                parent.code(level, parent.partition().block_of(pv, level))
            } else {
                let c = parent.code(parent.num_levels(), parent.partition().block_of(pv, parent.num_levels()));
                BlockRef::new(BlockKind::D, level as u32, c.index)
            };
        }
    }
    BlockCodes::from_codes(codes)
}

/// Documents of `corpus` that belong to every selected block. Domain codes
/// resolve in `model`; metadata codes resolve in the chain of the matching
/// kind, where a document belongs to a metadata block when one of its values
/// does. Returns corpus document indices in corpus order.
pub fn select_documents(corpus: &Corpus, model: &Model, chains: &[&Model], selectors: &[BlockRef]) -> Result<Vec<usize>> {
    if selectors.is_empty() {
        return Err(Error::InvalidArgument("no block selected".into()));
    }
    let mut keep = vec![true; corpus.len()];
    let mut counts = Vec::new();
    for sel in selectors {
        let member = membership(corpus, model, chains, sel)?;
        counts.push(format!("{sel}: {}", member.iter().filter(|&&m| m).count()));
        for (k, m) in keep.iter_mut().zip(&member) {
            *k &= m;
        }
    }
    let docs: Vec<usize> = (0..corpus.len()).filter(|&i| keep[i]).collect();
    if docs.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no document lies in all selected blocks; per selector {}",
            counts.join(", ")
        )));
    }
    Ok(docs)
}

fn membership(corpus: &Corpus, model: &Model, chains: &[&Model], sel: &BlockRef) -> Result<Vec<bool>> {
    let holder = if sel.kind == BlockKind::D {
        model
    } else {
        chains
            .iter()
            .copied()
            .find(|c| c.resolve(sel).is_ok())
            .ok_or_else(|| Error::UnknownBlock(sel.to_string()))?
    };
    let (level, block) = holder.resolve(sel)?;
    let p = holder.partition();
    let g = &holder.graph;
    let mut in_block = vec![false; g.num_left()];
    if sel.kind == BlockKind::D {
        for (d, flag) in in_block.iter_mut().enumerate() {
            *flag = p.block_of(d, level) == block;
        }
    } else {
        for v in p.members(level, block) {
            for &d in g.neighbors(v) {
                in_block[d as usize] = true;
            }
        }
    }
    let index: BTreeMap<&str, usize> = g.left_labels().iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    Ok(corpus
        .documents
        .iter()
        .map(|d| index.get(d.id.as_str()).is_some_and(|&i| in_block[i]))
        .collect())
}

/// Sub-corpus of the documents lying in every selected block.
pub fn restrict_corpus(
    corpus: &Corpus,
    model: &Model,
    chains: &[&Model],
    selectors: &[BlockRef],
    upstream_hash: &str,
) -> Result<Corpus> {
    let docs = select_documents(corpus, model, chains, selectors)?;
    Ok(corpus.subset(&docs, upstream_hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_doc_term_graph, BigramConfig, Document, IngestConfig};
    use crate::fit::fit;
    use rand::SeedableRng;

    fn ingest(docs: &[Document]) -> Corpus {
        let cfg = IngestConfig {
            bigrams: BigramConfig {
                enabled: false,
                ..BigramConfig::default()
            },
            ..IngestConfig::default()
        };
        Corpus::ingest(docs, &cfg, "h").unwrap()
    }

    fn fitted(seed: u64) -> (Corpus, Model) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (docs, _) = crate::synth::two_era_corpus(&crate::synth::EraConfig::default(), &mut rng);
        let corpus = ingest(&docs);
        let g = build_doc_term_graph(&corpus).unwrap();
        let cfg = FitConfig {
            seeds: 4,
            ..FitConfig::default()
        };
        let out = fit(Arc::new(g.clone()), &cfg, seed).unwrap();
        let m = Model::domain_topic(g, out.state.partition(), cfg, seed, out.chain, "h".into());
        (corpus, m)
    }

    fn small_cfg() -> FitConfig {
        FitConfig {
            seeds: 4,
            ..FitConfig::default()
        }
    }

    #[test]
    fn documents_stay_frozen() {
        let (corpus, m) = fitted(1);
        let c = chain_fit(&m, "ph", &corpus, "year", &small_cfg(), 2, None).unwrap();
        assert_eq!(c.num_levels(), m.num_levels());
        let cp = c.partition();
        for d in 0..c.graph.num_left() {
            let pv = m.doc_index(&c.graph.left_labels()[d]).unwrap();
            for l in 1..=m.num_levels() {
                assert_eq!(c.code(l, cp.block_of(d, l)), m.code(l, m.partition().block_of(pv, l)));
            }
        }
        assert_eq!(c.parent_config_hash.as_deref(), Some(m.config_hash.as_str()));
        assert_eq!(c.right_kind(), BlockKind::P);
    }

    #[test]
    fn single_value_dimension_gives_one_block() {
        let (mut corpus, m) = fitted(3);
        for d in &mut corpus.documents {
            d.meta.insert("venue".into(), vec!["x".into()]);
        }
        let c = chain_fit(&m, "ph", &corpus, "venue", &small_cfg(), 0, None).unwrap();
        for l in 1..=c.num_levels() {
            assert_eq!(c.partition().blocks_on(l, Side::Right).len(), 1);
        }
        assert_eq!(c.right_kind(), BlockKind::M);
    }

    #[test]
    fn unknown_documents_are_rejected() {
        let (mut corpus, m) = fitted(4);
        corpus.documents[0].id = "stranger".into();
        let err = chain_fit(&m, "ph", &corpus, "year", &small_cfg(), 0, None).unwrap_err();
        assert!(matches!(err, Error::UnknownDocuments(v) if v == vec!["stranger".to_string()]));
    }

    #[test]
    fn selections_intersect() {
        let (corpus, m) = fitted(5);
        let c = chain_fit(&m, "ph", &corpus, "year", &small_cfg(), 0, None).unwrap();
        let top = m.code(m.num_levels(), m.partition().blocks_on(m.num_levels(), Side::Left)[0]);
        let all = select_documents(&corpus, &m, &[&c], &[top]).unwrap();
        assert_eq!(all.len(), corpus.len());

        // domain x period equals the direct cross-tabulation
        let cp = c.partition();
        let dom = m.code(1, m.partition().blocks_on(1, Side::Left)[0]);
        let per_block = cp.blocks_on(1, Side::Right)[0];
        let per = c.code(1, per_block);
        let got = select_documents(&corpus, &m, &[&c], &[dom, per]).unwrap();
        let (dl, db) = m.resolve(&dom).unwrap();
        let values: Vec<&str> = cp.members(1, per_block).iter().map(|&v| c.graph.label(v)).collect();
        let want = corpus
            .documents
            .iter()
            .filter(|d| {
                let v = m.doc_index(&d.id).unwrap();
                m.partition().block_of(v, dl) == db && d.meta["year"].iter().any(|y| values.contains(&y.as_str()))
            })
            .count();
        assert_eq!(got.len(), want);
    }

    #[test]
    fn disjoint_selection_is_an_error() {
        let (corpus, m) = fitted(6);
        let doms = m.partition().blocks_on(1, Side::Left);
        let a = m.code(1, doms[0]);
        let b = m.code(1, doms[1]);
        assert!(matches!(
            select_documents(&corpus, &m, &[], &[a, b]),
            Err(Error::EmptySelection(_))
        ));
    }
}
