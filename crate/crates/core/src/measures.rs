//! Block characterization: usage distributions, nested specificity and
//! commonality, prevalence and prevalence shift.
//!
//! Any block can be measured against the blocks (or nodes) of the opposite
//! side at any level: domains against topics or terms, topics against
//! domains, periods against domains. Ladders and children are taken on the
//! view of the hierarchy where levels duplicating the one below (for the
//! source side) are collapsed.

use std::collections::BTreeSet;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::Side;
use crate::model::Model;
use crate::partition::{BlockRef, NestedPartition};

/// `Ŝ` for one target: ladder mean of `p_d ln(p_d / p_+)`, with the
/// convention `0 ln 0 = 0`.
pub fn specificity_kernel(p_d: f64, ladder: &[f64]) -> f64 {
    if p_d == 0.0 || ladder.is_empty() {
        return 0.0;
    }
    ladder.iter().map(|&q| p_d * (p_d / q).ln()).sum::<f64>() / ladder.len() as f64
}

/// `Ĉ*` for one target: mean over children of the ladder mean of
/// `ln(p_- / p_+)`. A child without the target gives `-∞`.
pub fn commonality_raw_kernel(children: &[f64], ladder: &[f64]) -> f64 {
    if children.iter().any(|&p| p == 0.0) {
        return f64::NEG_INFINITY;
    }
    let per_child = |p: f64| ladder.iter().map(|&q| (p / q).ln()).sum::<f64>() / ladder.len() as f64;
    children.iter().map(|&p| per_child(p)).sum::<f64>() / children.len() as f64
}

/// `Ĉ = mean(p_-) Ĉ*`, with `0 (-∞) = 0`.
pub fn commonality_kernel(children: &[f64], ladder: &[f64]) -> f64 {
    let mean = children.iter().sum::<f64>() / children.len() as f64;
    if mean == 0.0 {
        return 0.0;
    }
    mean * commonality_raw_kernel(children, ladder)
}

/// Kullback-Leibler divergence `Σ p ln(p / q)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// A block of a model: level (1-based) and block id.
pub type Block = (usize, u32);

/// Read-only measurement context over one model.
pub struct Profile<'a> {
    pub model: &'a Model,
    /// `proj[l][node]`: level-`l` block of each node (`proj[0]` is identity).
    proj: Vec<Vec<u32>>,
}

impl<'a> Profile<'a> {
    pub fn new(model: &'a Model) -> Self {
        let p = model.partition();
        let proj = (0..=p.num_levels()).map(|l| p.projection(0, l)).collect();
        Profile { model, proj }
    }

    pub fn partition(&self) -> &NestedPartition {
        self.model.partition()
    }

    pub fn side(&self, block: Block) -> Side {
        self.partition().side(block.0, block.1)
    }

    pub fn code(&self, block: Block) -> BlockRef {
        self.model.code(block.0, block.1)
    }

    /// Code of a block, or the node label at level 0.
    pub fn label(&self, level: usize, id: u32) -> String {
        if level == 0 {
            self.model.graph.label(id as usize).to_string()
        } else {
            self.code((level, id)).to_string()
        }
    }

    pub fn members(&self, block: Block) -> impl Iterator<Item = usize> + '_ {
        let (l, b) = block;
        self.proj[l].iter().enumerate().filter(move |&(_, &x)| x == b).map(|(v, _)| v)
    }

    /// Opposite-side targets at `level`: block ids, or node ids at level 0.
    pub fn targets(&self, side: Side, level: usize) -> Vec<u32> {
        if level == 0 {
            self.model.graph.nodes_on(side).map(|v| v as u32).collect()
        } else {
            self.partition().blocks_on(level, side)
        }
    }

    /// Edge share of each target at `target_level` among the edges of
    /// `block`, indexed by target id (node id at level 0).
    pub fn usage(&self, block: Block, target_level: usize) -> Result<Vec<f64>> {
        let g = &self.model.graph;
        let width = if target_level == 0 {
            g.num_nodes()
        } else {
            self.partition().num_blocks(target_level)
        };
        let mut counts = vec![0u64; width];
        let mut total = 0u64;
        for v in self.members(block) {
            for &u in g.neighbors(v) {
                counts[self.proj[target_level][u as usize] as usize] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::ZeroEdgeBlock(self.code(block).to_string()));
        }
        Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
    }

    /// Levels kept for `side` once duplicated levels are collapsed.
    pub fn kept_levels(&self, side: Side) -> Vec<usize> {
        self.partition().kept_levels(side)
    }

    /// Superblocks at kept levels above the block, up to the root.
    pub fn ladder(&self, block: Block) -> Vec<Block> {
        let side = self.side(block);
        let p = self.partition();
        let kept: BTreeSet<usize> = self.kept_levels(side).into_iter().collect();
        p.ancestors(block.0, block.1)
            .expect("valid block")
            .into_iter()
            .filter(|(l, _)| kept.contains(l))
            .collect()
    }

    /// Subblocks at the next lower kept level.
    pub fn children(&self, block: Block) -> Vec<Block> {
        let side = self.side(block);
        let Some(&below) = self.kept_levels(side).iter().rev().find(|&&l| l < block.0) else {
            return Vec::new();
        };
        let p = self.partition();
        p.blocks_on(below, side)
            .into_iter()
            .filter(|&c| {
                let mut x = c;
                for l in below..block.0 {
                    x = p.parent(l, x).expect("level above");
                }
                x == block.1
            })
            .map(|c| (below, c))
            .collect()
    }

    /// Number of graph nodes under a block.
    pub fn size(&self, block: Block) -> u32 {
        self.partition().size(block.0, block.1)
    }

    /// Measures of `block` against every opposite-side target at
    /// `target_level`.
    pub fn measure(&self, block: Block, target_level: usize) -> Result<Vec<TargetMeasure>> {
        let side = self.side(block);
        let p_d = self.usage(block, target_level)?;
        let ladder_blocks = self.ladder(block);
        let ladder: Vec<Vec<f64>> = ladder_blocks
            .iter()
            .map(|&a| self.usage(a, target_level))
            .collect::<Result<_>>()?;
        // The pooled block of isolated nodes has no usage and is skipped.
        let mut children = Vec::new();
        for c in self.children(block) {
            match self.usage(c, target_level) {
                Ok(u) => children.push(u),
                Err(Error::ZeroEdgeBlock(_)) => {}
                Err(e) => return Err(e),
            }
        }
        // The root has no ladder; its children are compared with itself.
        let common_ladder: Vec<&Vec<f64>> = if ladder.is_empty() {
            vec![&p_d]
        } else {
            ladder.iter().collect()
        };

        let mut out = Vec::new();
        for t in self.targets(side.opposite(), target_level) {
            let ti = t as usize;
            let up: Vec<f64> = ladder.iter().map(|q| q[ti]).collect();
            for (q, &a) in up.iter().zip(&ladder_blocks) {
                if p_d[ti] > 0.0 && *q == 0.0 {
                    return Err(Error::AbsoluteContinuity {
                        block: self.code(block).to_string(),
                        target: format!("{} (ancestor {})", self.label(target_level, t), self.code(a)),
                    });
                }
            }
            let specificity = (!ladder.is_empty()).then(|| specificity_kernel(p_d[ti], &up));
            let (commonality_raw, commonality) = if children.is_empty() {
                (None, None)
            } else {
                let kids: Vec<f64> = children.iter().map(|c| c[ti]).collect();
                let cl: Vec<f64> = common_ladder.iter().map(|q| q[ti]).collect();
                if cl.iter().any(|&q| q == 0.0) {
                    // Target unused above, hence by every child.
                    (Some(f64::NEG_INFINITY), Some(0.0))
                } else {
                    (
                        Some(commonality_raw_kernel(&kids, &cl)),
                        Some(commonality_kernel(&kids, &cl)),
                    )
                }
            };
            out.push(TargetMeasure {
                target: t,
                label: self.label(target_level, t),
                usage: p_d[ti],
                specificity,
                commonality_raw,
                commonality,
            });
        }
        Ok(out)
    }

    /// Level-1 block of a node.
    pub fn level1_of(&self, node: usize) -> u32 {
        self.proj[1][node]
    }
}

fn ser_measure<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        None => s.serialize_none(),
        Some(v) if v.is_finite() => s.serialize_f64(*v),
        Some(v) if *v < 0.0 => s.serialize_str("-inf"),
        Some(_) => s.serialize_str("inf"),
    }
}

/// Renders a measure for text output.
pub fn fmt_measure(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) if v == f64::NEG_INFINITY => "-inf".into(),
        Some(v) => format!("{v}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetMeasure {
    /// Target block id, or node id for level-0 targets.
    #[serde(skip)]
    pub target: u32,
    /// Target code, or node label for level-0 targets.
    pub label: String,
    pub usage: f64,
    /// Absent for blocks without a ladder (the root).
    #[serde(serialize_with = "ser_measure")]
    pub specificity: Option<f64>,
    /// Absent for blocks without children (level 1).
    #[serde(serialize_with = "ser_measure")]
    pub commonality_raw: Option<f64>,
    #[serde(serialize_with = "ser_measure")]
    pub commonality: Option<f64>,
}

/// Documents (left nodes) of a chain lying in a metadata block: those linked
/// to any of its values.
fn docs_of_meta_block(chain: &Model, block: Block) -> BTreeSet<usize> {
    let p = chain.partition();
    p.members(block.0, block.1)
        .into_iter()
        .flat_map(|v| chain.graph.neighbors(v).iter().map(|&d| d as usize))
        .collect()
}

/// Fraction of the documents of `period` that lie in `domain`. A domain
/// with no document carrying the dimension has prevalence 0.
pub fn prevalence(model: &Model, chain: &Model, domain: &BlockRef, period: &BlockRef) -> Result<f64> {
    model.resolve(domain)?;
    let (pl, pb) = chain.resolve(period)?;
    if chain.partition().side(pl, pb) != Side::Right {
        return Err(Error::InvalidArgument(format!("{period} is not a metadata block")));
    }
    let docs = docs_of_meta_block(chain, (pl, pb));
    if docs.is_empty() {
        return Err(Error::EmptyPeriod(period.to_string()));
    }
    let Ok((dl, db)) = chain.resolve(domain) else {
        return Ok(0.0);
    };
    let p = chain.partition();
    let inside = docs.iter().filter(|&&d| p.block_of(d, dl) == db).count();
    Ok(inside as f64 / docs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftRow {
    pub domain: String,
    pub prevalence_a: f64,
    pub prevalence_b: f64,
    /// `prevalence_b - prevalence_a`.
    pub shift: f64,
    /// Shift divided by the largest absolute shift among domains of the
    /// same level.
    pub color_score: f64,
}

/// Prevalence shift of every domain of `level` from period `a` to `b`.
pub fn prevalence_shift(model: &Model, chain: &Model, level: usize, a: &BlockRef, b: &BlockRef) -> Result<Vec<ShiftRow>> {
    if a == b {
        return Err(Error::InvalidArgument("periods must differ".into()));
    }
    if level == 0 || level > model.num_levels() {
        return Err(Error::InvalidArgument(format!("level {level} does not exist")));
    }
    let mut rows = Vec::new();
    for d in model.partition().blocks_on(level, Side::Left) {
        let code = model.code(level, d);
        let pa = prevalence(model, chain, &code, a)?;
        let pb = prevalence(model, chain, &code, b)?;
        rows.push(ShiftRow {
            domain: code.to_string(),
            prevalence_a: pa,
            prevalence_b: pb,
            shift: pb - pa,
            color_score: 0.0,
        });
    }
    let max = rows.iter().map(|r| r.shift.abs()).fold(0.0, f64::max);
    if max > 0.0 {
        for r in &mut rows {
            r.color_score = r.shift / max;
        }
    }
    rows.sort_by(|x, y| {
        let (cx, cy): (BlockRef, BlockRef) = (x.domain.parse().unwrap(), y.domain.parse().unwrap());
        cx.index.cmp(&cy.index)
    });
    Ok(rows)
}
