//! Map bundles: the static `map.json` consumed by the interactive map.
//!
//! A bundle holds both hierarchies with sizes, parents and default
//! relevance, the level-1 cross matrix, precomputed hover selections, an
//! optional document listing and an optional histogram over one metadata
//! dimension. A domain-chained bundle is exported from a chain artifact and
//! shows metadata blocks in place of topics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{sort_categories, Corpus};
use crate::error::{Error, Result};
use crate::graph::Side;
use crate::model::{Model, ModelKind};
use crate::partition::BlockRef;
use crate::report::{Characterizer, Entry, Measure};

pub const MAP_SCHEMA_VERSION: u32 = 1;

/// Items listed per topic (or metadata block) for hovering.
pub const TOP_ITEMS: usize = 20;

const INDEX_HTML: &str = include_str!("../assets/index.html");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockSide {
    Doc,
    Term,
    Meta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopItem {
    pub name: String,
    /// Degree: documents using the term, or carrying the value.
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBlock {
    pub code: String,
    pub side: BlockSide,
    pub level: usize,
    /// Absent for the top block of each side.
    pub parent: Option<String>,
    /// Documents, terms or metadata values under the block.
    pub size: u32,
    /// Sum of member degrees.
    pub edges: u64,
    pub default_relevance: f64,
    /// Hover selections of document blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<Entry>,
    /// Most used members of opposite-side blocks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_items: Vec<TopItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level1Matrix {
    /// Level-1 document block codes.
    pub rows: Vec<String>,
    /// Level-1 topic or metadata block codes.
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub domain: String,
    /// Histogram bin of the document, if it has a value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub dimension: String,
    pub bins: Vec<String>,
    /// Counts per bin for each level-1 domain.
    pub per_domain: BTreeMap<String, Vec<u64>>,
    /// Documents of each level-1 domain without a value.
    pub missing: BTreeMap<String, u64>,
    pub totals: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    /// `domain-topic` or `domain-chained`.
    pub kind: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    /// RFC 3339; taken from `SOURCE_DATE_EPOCH` when set.
    pub generated_at: String,
    pub num_documents: usize,
    pub num_edges: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapBundle {
    pub schema_version: u32,
    pub meta: BundleMeta,
    pub blocks: Vec<MapBlock>,
    pub level1_matrix: Level1Matrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<Vec<MapDocument>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Histogram>,
}

#[derive(Debug, Clone, Default)]
pub struct ExportOptions<'a> {
    /// Corpus with its artifact hash; needed for documents and histogram.
    pub corpus: Option<(&'a Corpus, &'a str)>,
    pub histogram_dimension: Option<&'a str>,
    pub include_documents: bool,
    /// Fixed timestamp (seconds since the epoch).
    pub timestamp: Option<i64>,
}

/// Timestamp from `SOURCE_DATE_EPOCH`, or the current time.
pub fn default_timestamp() -> i64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| time::OffsetDateTime::now_utc().unix_timestamp())
}

fn rfc3339(ts: i64) -> Result<String> {
    let t = time::OffsetDateTime::from_unix_timestamp(ts)
        .map_err(|e| Error::InvalidArgument(format!("timestamp {ts}: {e}")))?;
    t.format(&time::format_description::well_known::Rfc3339)
        .map_err(|e| Error::InvalidArgument(format!("timestamp {ts}: {e}")))
}

/// Default relevance: document share for document blocks, edge share for
/// the others.
pub fn default_relevance(side: BlockSide, size: u32, edges: u64, num_docs: usize, num_edges: u64) -> f64 {
    match side {
        BlockSide::Doc => size as f64 / num_docs.max(1) as f64,
        _ => edges as f64 / num_edges.max(1) as f64,
    }
}

fn code_order(codes: &mut [String]) {
    codes.sort_by_key(|c| c.parse::<BlockRef>().map(|r| r.index).unwrap_or(u32::MAX));
}

/// Builds the bundle of a model, or of a chain (domain-chained map).
pub fn build_bundle(model: &Model, opts: &ExportOptions) -> Result<MapBundle> {
    let p = model.partition();
    let g = &model.graph;
    let right_side = match model.kind {
        ModelKind::Model => BlockSide::Term,
        ModelKind::Chain => BlockSide::Meta,
    };
    if let Some((_, hash)) = opts.corpus {
        if model.kind == ModelKind::Model && model.upstream_hash != hash {
            return Err(Error::HashMismatch {
                expected: model.upstream_hash.clone(),
                found: hash.to_string(),
            });
        }
    }
    let num_docs = g.num_left();
    let num_edges = g.num_edges() as u64;
    let ch = Characterizer::new(model);

    let mut blocks = Vec::new();
    for level in 1..=p.num_levels() {
        for side in [Side::Left, Side::Right] {
            let mut ids = p.blocks_on(level, side);
            ids.sort_by_key(|&b| model.code(level, b).index);
            for b in ids {
                let members = p.members(level, b);
                let edges: u64 = members.iter().map(|&v| g.degree(v) as u64).sum();
                let bside = if side == Side::Left { BlockSide::Doc } else { right_side };
                let size = members.len() as u32;
                let (measure, entries, top_items) = if side == Side::Left {
                    let m = Characterizer::measure_for((level, b));
                    (Some(m), ch.entries((level, b), m)?, Vec::new())
                } else {
                    let mut items: Vec<TopItem> = members
                        .iter()
                        .map(|&v| TopItem {
                            name: g.label(v).to_string(),
                            count: g.degree(v) as u64,
                        })
                        .collect();
                    items.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.name.cmp(&b.name)));
                    items.truncate(TOP_ITEMS);
                    (None, Vec::new(), items)
                };
                blocks.push(MapBlock {
                    code: model.code(level, b).to_string(),
                    side: bside,
                    level,
                    parent: p.parent(level, b).map(|q| model.code(level + 1, q).to_string()),
                    size,
                    edges,
                    default_relevance: default_relevance(bside, size, edges, num_docs, num_edges),
                    measure,
                    entries,
                    top_items,
                });
            }
        }
    }

    let cm = p.cross_matrix(g, 1, 1);
    let mut rows: Vec<(String, usize)> =
        cm.rows.iter().enumerate().map(|(i, &b)| (model.code(1, b).to_string(), i)).collect();
    let mut cols: Vec<(String, usize)> =
        cm.cols.iter().enumerate().map(|(j, &b)| (model.code(1, b).to_string(), j)).collect();
    let idx = |v: &[(String, usize)]| -> HashMap<String, usize> { v.iter().cloned().collect() };
    let (ri, ci) = (idx(&rows), idx(&cols));
    let mut rc: Vec<String> = rows.drain(..).map(|r| r.0).collect();
    let mut cc: Vec<String> = cols.drain(..).map(|c| c.0).collect();
    code_order(&mut rc);
    code_order(&mut cc);
    let counts = rc
        .iter()
        .map(|r| cc.iter().map(|c| cm.counts[ri[r]][ci[c]]).collect())
        .collect();
    let level1_matrix = Level1Matrix {
        rows: rc,
        cols: cc,
        counts,
    };

    let domain_of = |d: usize| model.code(1, p.block_of(d, 1)).to_string();
    let doc_pos: HashMap<&str, usize> = g.left_labels().iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let corpus_docs = opts.corpus.map(|(c, _)| {
        c.documents
            .iter()
            .filter_map(|d| doc_pos.get(d.id.as_str()).map(|&i| (i, d)))
            .collect::<Vec<_>>()
    });

    let first_value = |d: &crate::corpus::CorpusDocument, dim: &str| -> Option<String> {
        let mut vs = d.meta.get(dim)?.clone();
        sort_categories(&mut vs);
        vs.into_iter().next()
    };

    let histogram = match (opts.histogram_dimension, &corpus_docs) {
        (None, _) => None,
        (Some(_), None) => return Err(Error::InvalidArgument("a histogram needs the corpus".into())),
        (Some(dim), Some(docs)) => {
            let mut bins: Vec<String> = docs
                .iter()
                .filter_map(|(_, d)| d.meta.get(dim))
                .flatten()
                .cloned()
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            if bins.is_empty() {
                return Err(Error::UnknownDimension {
                    dimension: dim.to_string(),
                    available: opts.corpus.unwrap().0.dimensions(),
                });
            }
            sort_categories(&mut bins);
            let bin_of: HashMap<&str, usize> = bins.iter().enumerate().map(|(i, b)| (b.as_str(), i)).collect();
            let mut per_domain: BTreeMap<String, Vec<u64>> = BTreeMap::new();
            let mut missing: BTreeMap<String, u64> = BTreeMap::new();
            for b in p.blocks_on(1, Side::Left) {
                per_domain.insert(model.code(1, b).to_string(), vec![0; bins.len()]);
                missing.insert(model.code(1, b).to_string(), 0);
            }
            let mut totals = vec![0; bins.len()];
            for &(i, d) in docs {
                let dom = domain_of(i);
                match first_value(d, dim) {
                    Some(v) => {
                        let k = bin_of[v.as_str()];
                        per_domain.get_mut(&dom).unwrap()[k] += 1;
                        totals[k] += 1;
                    }
                    None => *missing.get_mut(&dom).unwrap() += 1,
                }
            }
            Some(Histogram {
                dimension: dim.to_string(),
                bins,
                per_domain,
                missing,
                totals,
            })
        }
    };

    let documents = if opts.include_documents {
        let docs = corpus_docs
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("document listing needs the corpus".into()))?;
        Some(
            docs.iter()
                .map(|&(i, d)| MapDocument {
                    id: d.id.clone(),
                    title: d.title.clone(),
                    url: d.url.clone(),
                    domain: domain_of(i),
                    histogram_value: opts.histogram_dimension.and_then(|dim| first_value(d, dim)),
                })
                .collect(),
        )
    } else {
        None
    };

    Ok(MapBundle {
        schema_version: MAP_SCHEMA_VERSION,
        meta: BundleMeta {
            kind: match model.kind {
                ModelKind::Model => "domain-topic",
                ModelKind::Chain => "domain-chained",
            }
            .into(),
            config_hash: model.config_hash.clone(),
            dimension: model.dimension.clone(),
            generated_at: rfc3339(opts.timestamp.unwrap_or_else(default_timestamp))?,
            num_documents: num_docs,
            num_edges,
        },
        blocks,
        level1_matrix,
        documents,
        histogram,
    })
}

/// Checks a chain against the model it claims to extend.
pub fn check_chain_parent(model: &Model, model_hash: &str, chain: &Model) -> Result<()> {
    if chain.kind != ModelKind::Chain {
        return Err(Error::ArtifactKind {
            expected: "chain".into(),
            found: "model".into(),
        });
    }
    if chain.upstream_hash != model_hash {
        return Err(Error::HashMismatch {
            expected: chain.upstream_hash.clone(),
            found: model_hash.to_string(),
        });
    }
    if chain.parent_config_hash.as_deref() != Some(model.config_hash.as_str()) {
        return Err(Error::HashMismatch {
            expected: chain.parent_config_hash.clone().unwrap_or_default(),
            found: model.config_hash.clone(),
        });
    }
    Ok(())
}

impl MapBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<MapBundle> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MAP_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: MAP_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Writes `map.json` and `index.html` into `dir`, creating it.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let map = dir.join("map.json");
        std::fs::write(&map, self.to_json()?).map_err(|e| Error::io(&map, e))?;
        let index = dir.join("index.html");
        std::fs::write(&index, INDEX_HTML).map_err(|e| Error::io(&index, e))?;
        Ok(())
    }

    pub fn block(&self, code: &str) -> Option<&MapBlock> {
        self.blocks.iter().find(|b| b.code == code)
    }

    /// Reconciles sizes, edge counts, parent links, matrix and histogram.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Inconsistent(m));
        let by_code: HashMap<&str, &MapBlock> = self.blocks.iter().map(|b| (b.code.as_str(), b)).collect();
        if by_code.len() != self.blocks.len() {
            return bad("duplicate block codes".into());
        }
        let top = self.blocks.iter().map(|b| b.level).max().unwrap_or(0);
        let mut child_size: HashMap<&str, (u32, u64)> = HashMap::new();
        for b in &self.blocks {
            match &b.parent {
                None if b.level != top => return bad(format!("{} has no parent", b.code)),
                None => {}
                Some(pc) => {
                    let Some(pb) = by_code.get(pc.as_str()) else {
                        return bad(format!("{} has unknown parent {pc}", b.code));
                    };
                    if pb.level != b.level + 1 || pb.side != b.side {
                        return bad(format!("{} has parent {pc} on another level or side", b.code));
                    }
                    let e = child_size.entry(pc.as_str()).or_default();
                    e.0 += b.size;
                    e.1 += b.edges;
                }
            }
        }
        for b in self.blocks.iter().filter(|b| b.level > 1) {
            if child_size.get(b.code.as_str()).copied().unwrap_or_default() != (b.size, b.edges) {
                return bad(format!("children of {} do not add up to it", b.code));
            }
        }
        for side in [BlockSide::Doc, BlockSide::Term, BlockSide::Meta] {
            let roots = self.blocks.iter().filter(|b| b.side == side && b.parent.is_none()).count();
            if roots > 1 {
                return bad(format!("{roots} top blocks on one side"));
            }
        }

        let m = &self.level1_matrix;
        let total: u64 = m.counts.iter().flatten().sum();
        if total != self.meta.num_edges {
            return bad(format!("level-1 matrix holds {total} edges, expected {}", self.meta.num_edges));
        }
        for (r, row) in m.rows.iter().zip(&m.counts) {
            match by_code.get(r.as_str()) {
                Some(b) if b.level == 1 && b.edges == row.iter().sum::<u64>() => {}
                _ => return bad(format!("matrix row {r} does not match its block")),
            }
        }
        let level1_docs = self.blocks.iter().filter(|b| b.level == 1 && b.side == BlockSide::Doc).count();
        if m.rows.len() != level1_docs {
            return bad("matrix rows do not cover the level-1 domains".into());
        }

        if let Some(h) = &self.histogram {
            let mut totals = vec![0u64; h.bins.len()];
            for (code, counts) in &h.per_domain {
                let Some(b) = by_code.get(code.as_str()) else {
                    return bad(format!("histogram names unknown domain {code}"));
                };
                let n: u64 = counts.iter().sum::<u64>() + h.missing.get(code).copied().unwrap_or(0);
                if n != b.size as u64 {
                    return bad(format!("histogram of {code} counts {n} documents, domain has {}", b.size));
                }
                for (t, c) in totals.iter_mut().zip(counts) {
                    *t += c;
                }
            }
            if totals != h.totals {
                return bad("histogram totals differ from the domain sums".into());
            }
        }
        if let Some(docs) = &self.documents {
            for d in docs {
                if !by_code.contains_key(d.domain.as_str()) {
                    return bad(format!("document {} in unknown domain {}", d.id, d.domain));
                }
            }
        }
        Ok(())
    }
}

/// Intensity of every opposite-side block for a selected level-1 block:
/// the share of its edges going to the selection, aggregated over children
/// for higher levels and divided by the level maximum.
pub fn recolor_matrix(bundle: &MapBundle, selected: &str) -> Result<BTreeMap<String, f64>> {
    let sel = bundle
        .block(selected)
        .ok_or_else(|| Error::UnknownBlock(selected.to_string()))?;
    if sel.level != 1 {
        return Err(Error::InvalidArgument(format!("{selected} is not a level-1 block")));
    }
    let m = &bundle.level1_matrix;
    // (edges to the selection, all edges) of each opposite level-1 block
    let mut acc: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    if sel.side == BlockSide::Doc {
        let r = m.rows.iter().position(|c| c == selected).expect("level-1 domain in matrix");
        for (j, c) in m.cols.iter().enumerate() {
            let total: u64 = m.counts.iter().map(|row| row[j]).sum();
            acc.insert(c.clone(), (m.counts[r][j], total));
        }
    } else {
        let j = m.cols.iter().position(|c| c == selected).expect("level-1 block in matrix");
        for (r, c) in m.rows.iter().enumerate() {
            acc.insert(c.clone(), (m.counts[r][j], m.counts[r].iter().sum()));
        }
    }
    let mut frontier: Vec<String> = acc.keys().cloned().collect();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for c in frontier {
            if let Some(parent) = bundle.block(&c).and_then(|b| b.parent.clone()) {
                let v = acc[&c];
                let e = acc.entry(parent.clone()).or_insert_with(|| {
                    next.push(parent.clone());
                    (0, 0)
                });
                e.0 += v.0;
                e.1 += v.1;
            }
        }
        next.sort();
        next.dedup();
        frontier = next;
    }
    let ratio: BTreeMap<String, f64> = acc
        .into_iter()
        .map(|(c, (x, n))| (c, if n == 0 { 0.0 } else { x as f64 / n as f64 }))
        .collect();
    let mut level_max: HashMap<usize, f64> = HashMap::new();
    for (c, &r) in &ratio {
        let l = bundle.block(c).map_or(0, |b| b.level);
        let e = level_max.entry(l).or_insert(0.0);
        *e = e.max(r);
    }
    Ok(ratio
        .into_iter()
        .map(|(c, r)| {
            let l = bundle.block(&c).map_or(0, |b| b.level);
            let max = level_max[&l];
            (c, if max > 0.0 { r / max } else { 0.0 })
        })
        .collect())
}
