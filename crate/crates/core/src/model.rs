//! Fitted-model artifacts: domain-topic models and chained models.
//!
//! An artifact embeds its graph, per-level assignments, block codes, block
//! statistics and Σ, plus the hashes tying it to its inputs. Loading rebuilds
//! everything from the assignments and rejects any disagreement.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dl::description_length;
use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::graph::{BipartiteGraph, Side};
use crate::hash::sha256_hex;
use crate::partition::{BlockCodes, BlockKind, BlockRef, NestedPartition};
use crate::state::DL_EPS;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Documents against terms.
    Model,
    /// Documents against one metadata dimension, document side frozen.
    Chain,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Model => "model",
            ModelKind::Chain => "chain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    /// Members (nodes at level 1, blocks above) of each block.
    pub sizes: Vec<u32>,
    /// Total degree of each block.
    pub degrees: Vec<u64>,
}

/// Inputs that determine a fit; their hash names the artifact.
#[derive(Serialize)]
struct Provenance<'a> {
    kind: ModelKind,
    config: &'a FitConfig,
    seed: u64,
    upstream_hash: &'a str,
    dimension: Option<&'a str>,
    parent_config_hash: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema_version: u32,
    pub kind: ModelKind,
    /// Hash of the corpus artifact (models) or parent model artifact (chains).
    pub upstream_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: FitConfig,
    /// Winning chain index.
    pub chain: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_config_hash: Option<String>,
    pub graph: BipartiteGraph,
    pub levels: Vec<Vec<u32>>,
    pub codes: BlockCodes,
    pub stats: Vec<LevelStats>,
    pub description_length: f64,
    #[serde(skip)]
    partition: Option<NestedPartition>,
}

fn level_stats(graph: &BipartiteGraph, p: &NestedPartition) -> Vec<LevelStats> {
    let mut node_degree: Vec<u64> = (0..graph.num_nodes()).map(|v| graph.degree(v) as u64).collect();
    let mut out = Vec::with_capacity(p.num_levels());
    for (k, assign) in p.assignments().iter().enumerate() {
        let nb = p.num_blocks(k + 1);
        let mut sizes = vec![0u32; nb];
        let mut degrees = vec![0u64; nb];
        for (i, &b) in assign.iter().enumerate() {
            sizes[b as usize] += 1;
            degrees[b as usize] += node_degree[i];
        }
        out.push(LevelStats {
            sizes,
            degrees: degrees.clone(),
        });
        node_degree = degrees;
    }
    out
}

impl Model {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ModelKind,
        graph: BipartiteGraph,
        partition: NestedPartition,
        codes: BlockCodes,
        config: FitConfig,
        seed: u64,
        chain: usize,
        upstream_hash: String,
        dimension: Option<String>,
        parent_config_hash: Option<String>,
    ) -> Model {
        let description_length = description_length(&graph, &partition);
        let stats = level_stats(&graph, &partition);
        let mut m = Model {
            schema_version: MODEL_SCHEMA_VERSION,
            kind,
            upstream_hash,
            config_hash: String::new(),
            seed,
            config,
            chain,
            dimension,
            parent_config_hash,
            graph,
            levels: partition.assignments().to_vec(),
            codes,
            stats,
            description_length,
            partition: Some(partition),
        };
        m.config_hash = m.compute_config_hash();
        m
    }

    /// Domain-topic model with default document/term codes.
    pub fn domain_topic(
        graph: BipartiteGraph,
        partition: NestedPartition,
        config: FitConfig,
        seed: u64,
        chain: usize,
        corpus_hash: String,
    ) -> Model {
        let codes = BlockCodes::assign(&partition, BlockKind::D, BlockKind::T);
        Model::new(ModelKind::Model, graph, partition, codes, config, seed, chain, corpus_hash, None, None)
    }

    fn compute_config_hash(&self) -> String {
        let prov = Provenance {
            kind: self.kind,
            config: &self.config,
            seed: self.seed,
            upstream_hash: &self.upstream_hash,
            dimension: self.dimension.as_deref(),
            parent_config_hash: self.parent_config_hash.as_deref(),
        };
        sha256_hex(&serde_json::to_vec(&prov).expect("provenance serializes"))
    }

    pub fn partition(&self) -> &NestedPartition {
        self.partition.as_ref().expect("model partition is built on construction and load")
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn code(&self, level: usize, block: u32) -> BlockRef {
        self.codes.code(level, block)
    }

    pub fn resolve(&self, code: &BlockRef) -> Result<(usize, u32)> {
        self.codes.resolve(code)
    }

    /// Parses and resolves a textual block code.
    pub fn resolve_str(&self, code: &str) -> Result<(usize, u32)> {
        self.resolve(&code.parse()?)
    }

    /// Side of the metadata or term blocks.
    pub fn right_kind(&self) -> BlockKind {
        self.codes
            .levels()
            .iter()
            .flatten()
            .find(|c| c.kind != BlockKind::D)
            .map_or(BlockKind::T, |c| c.kind)
    }

    pub fn side_of_kind(kind: BlockKind) -> Side {
        match kind {
            BlockKind::D => Side::Left,
            _ => Side::Right,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the artifact and returns the hash of the written bytes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let s = self.to_json()?;
        std::fs::write(path.as_ref(), &s).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(sha256_hex(s.as_bytes()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Model> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let mut m: Model = serde_json::from_value(value)?;
        m.codes.rebuild_lookup()?;
        m.check()?;
        Ok(m)
    }

    /// Loads an artifact, verifying it, and returns it with its byte hash.
    pub fn load(path: impl AsRef<Path>) -> Result<(Model, String)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Model::from_json(&bytes)?, sha256_hex(&bytes)))
    }

    /// Like `load`, also requiring the artifact kind.
    pub fn load_kind(path: impl AsRef<Path>, kind: ModelKind) -> Result<(Model, String)> {
        let (m, h) = Model::load(path)?;
        if m.kind != kind {
            return Err(Error::ArtifactKind {
                expected: kind.name().into(),
                found: m.kind.name().into(),
            });
        }
        Ok((m, h))
    }

    /// Rebuilds the partition, statistics, Σ and config hash from the stored
    /// assignments and compares them with the stored values.
    fn check(&mut self) -> Result<()> {
        let p = NestedPartition::new(&self.graph, self.levels.clone())
            .map_err(|e| Error::Inconsistent(e.to_string()))?;
        let shape: Vec<usize> = (1..=p.num_levels()).map(|l| p.num_blocks(l)).collect();
        let code_shape: Vec<usize> = self.codes.levels().iter().map(Vec::len).collect();
        if shape != code_shape {
            return Err(Error::Inconsistent(format!(
                "block codes cover {code_shape:?} blocks per level, assignments {shape:?}"
            )));
        }
        for l in 1..=p.num_levels() {
            for b in 0..p.num_blocks(l) as u32 {
                let c = self.codes.code(l, b);
                if Model::side_of_kind(c.kind) != p.side(l, b) {
                    return Err(Error::Inconsistent(format!("code {c} names a block on the other side")));
                }
            }
        }
        if level_stats(&self.graph, &p) != self.stats {
            return Err(Error::Inconsistent("block statistics differ from assignments".into()));
        }
        let sigma = description_length(&self.graph, &p);
        if (sigma - self.description_length).abs() > DL_EPS * sigma.abs().max(1.0) {
            return Err(Error::Inconsistent(format!(
                "stored Σ {} differs from recomputed {sigma}",
                self.description_length
            )));
        }
        let h = self.compute_config_hash();
        if h != self.config_hash {
            return Err(Error::HashMismatch {
                expected: self.config_hash.clone(),
                found: h,
            });
        }
        self.partition = Some(p);
        Ok(())
    }

    /// Node index of each document id on the left side.
    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.graph.left_labels().iter().position(|d| d == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let g = BipartiteGraph::from_edges(4, 4, vec![(0, 0), (1, 1), (2, 2), (3, 3), (0, 1), (2, 3)]).unwrap();
        let p = NestedPartition::new(&g, vec![vec![0, 0, 1, 1, 2, 2, 3, 3], vec![0, 0, 1, 1]]).unwrap();
        Model::domain_topic(g, p, FitConfig::default(), 7, 0, "abc".into())
    }

    #[test]
    fn round_trip_is_identity() {
        let m = model();
        let json = m.to_json().unwrap();
        let back = Model::from_json(json.as_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.description_length.to_bits(), m.description_length.to_bits());
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn tampered_assignment_is_rejected() {
        let m = model();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["levels"][0][1] = serde_json::json!(1);
        let err = Model::from_json(v.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Inconsistent(_)), "{err}");
    }

    #[test]
    fn legacy_version_is_rejected() {
        let m = model();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["schema_version"] = serde_json::json!(0);
        let err = Model::from_json(v.to_string().as_bytes()).unwrap_err();
        assert!(matches!(err, Error::SchemaVersion { found: 0, .. }));
    }

    #[test]
    fn changed_seed_breaks_the_config_hash() {
        let m = model();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        v["seed"] = serde_json::json!(8);
        assert!(matches!(
            Model::from_json(v.to_string().as_bytes()),
            Err(Error::HashMismatch { .. })
        ));
    }

    #[test]
    fn stats_conserve_edges() {
        let m = model();
        for s in &m.stats {
            assert_eq!(s.degrees.iter().sum::<u64>(), 2 * m.graph.num_edges() as u64);
        }
    }
}
