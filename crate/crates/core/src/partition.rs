//! Nested partitions over a bipartite graph and the block naming scheme.
//!
//! Level 1 partitions graph nodes; level `l > 1` partitions the blocks of
//! level `l - 1`. Block ids are compact (`0..num_blocks(level)`) and every
//! block is non-empty. The top level holds exactly one block per non-empty
//! side.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, Side};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedPartition {
    levels: Vec<Vec<u32>>,
    #[serde(skip)]
    sides: Vec<Vec<Side>>,
    #[serde(skip)]
    sizes: Vec<Vec<u32>>,
}

impl NestedPartition {
    /// Validates and wraps per-level assignment arrays. `levels[0][node]` is
    /// the level-1 block of each node; `levels[k][b]` is the level-(k+1)
    /// block of level-k block `b`.
    pub fn new(graph: &BipartiteGraph, levels: Vec<Vec<u32>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidPartition("no levels".into()));
        }
        let mut sides: Vec<Vec<Side>> = Vec::with_capacity(levels.len());
        let mut sizes: Vec<Vec<u32>> = Vec::with_capacity(levels.len());
        let mut item_sides: Vec<Side> = (0..graph.num_nodes()).map(|v| graph.side_of(v)).collect();
        let mut item_sizes: Vec<u32> = vec![1; graph.num_nodes()];
        for (k, assign) in levels.iter().enumerate() {
            if assign.len() != item_sides.len() {
                return Err(Error::InvalidPartition(format!(
                    "level {} has {} entries, expected {}",
                    k + 1,
                    assign.len(),
                    item_sides.len()
                )));
            }
            let nb = assign.iter().map(|&b| b as usize + 1).max().unwrap_or(0);
            let mut side: Vec<Option<Side>> = vec![None; nb];
            let mut size = vec![0u32; nb];
            for (item, &b) in assign.iter().enumerate() {
                let s = item_sides[item];
                match side[b as usize] {
                    None => side[b as usize] = Some(s),
                    Some(t) if t != s => {
                        return Err(Error::InvalidPartition(format!(
                            "level {} block {b} mixes sides",
                            k + 1
                        )))
                    }
                    _ => {}
                }
                size[b as usize] += item_sizes[item];
            }
            if let Some(b) = side.iter().position(|s| s.is_none()) {
                return Err(Error::InvalidPartition(format!(
                    "level {} block {b} is empty (ids must be compact)",
                    k + 1
                )));
            }
            item_sides = side.into_iter().map(|s| s.unwrap()).collect();
            item_sizes = size.clone();
            sides.push(item_sides.clone());
            sizes.push(size);
        }
        let top = sides.last().unwrap();
        let left = top.iter().filter(|&&s| s == Side::Left).count();
        let right = top.len() - left;
        if left > 1 || right > 1 {
            return Err(Error::InvalidPartition(format!(
                "top level must hold one block per side, found {left} left and {right} right"
            )));
        }
        Ok(NestedPartition {
            levels,
            sides,
            sizes,
        })
    }

    /// One block per side at level 1.
    pub fn trivial(graph: &BipartiteGraph) -> Self {
        let has_left = graph.num_left() > 0;
        let assign = (0..graph.num_nodes())
            .map(|v| match graph.side_of(v) {
                Side::Left => 0,
                Side::Right => u32::from(has_left),
            })
            .collect();
        Self::new(graph, vec![assign]).expect("trivial partition is valid")
    }

    pub fn assignments(&self) -> &[Vec<u32>] {
        &self.levels
    }

    pub fn into_assignments(self) -> Vec<Vec<u32>> {
        self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Number of blocks at `level` (1-based); level 0 counts nodes.
    pub fn num_blocks(&self, level: usize) -> usize {
        if level == 0 {
            self.levels[0].len()
        } else {
            self.sides[level - 1].len()
        }
    }

    pub fn side(&self, level: usize, block: u32) -> Side {
        self.sides[level - 1][block as usize]
    }

    /// Number of graph nodes under a block.
    pub fn size(&self, level: usize, block: u32) -> u32 {
        if level == 0 {
            1
        } else {
            self.sizes[level - 1][block as usize]
        }
    }

    /// Blocks of one side at `level`, in id order.
    pub fn blocks_on(&self, level: usize, side: Side) -> Vec<u32> {
        (0..self.num_blocks(level) as u32)
            .filter(|&b| self.side(level, b) == side)
            .collect()
    }

    /// Level-`level` block that contains `node`.
    pub fn block_of(&self, node: usize, level: usize) -> u32 {
        let mut b = node as u32;
        for k in 0..level {
            b = self.levels[k][b as usize];
        }
        b
    }

    /// Map from every item at `from` (0 = nodes) to its block at `to >= from`.
    pub fn projection(&self, from: usize, to: usize) -> Vec<u32> {
        let n = self.num_blocks(from);
        (0..n as u32)
            .map(|mut b| {
                for k in from..to {
                    b = self.levels[k][b as usize];
                }
                b
            })
            .collect()
    }

    pub fn parent(&self, level: usize, block: u32) -> Option<u32> {
        (level < self.levels.len()).then(|| self.levels[level][block as usize])
    }

    /// Superblocks, one per higher level, lowest first.
    pub fn ancestors(&self, level: usize, block: u32) -> Result<Vec<(usize, u32)>> {
        self.check(level, block)?;
        let mut out = Vec::new();
        let mut b = block;
        for l in level..self.levels.len() {
            b = self.levels[l][b as usize];
            out.push((l + 1, b));
        }
        Ok(out)
    }

    /// Subblocks at `level - 1`; empty for level-1 blocks.
    pub fn children(&self, level: usize, block: u32) -> Result<Vec<u32>> {
        self.check(level, block)?;
        if level == 1 {
            return Ok(Vec::new());
        }
        Ok(self.levels[level - 1]
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p == block)
            .map(|(c, _)| c as u32)
            .collect())
    }

    /// Graph nodes under a block, ascending.
    pub fn members(&self, level: usize, block: u32) -> Vec<usize> {
        let proj = self.projection(0, level);
        proj.iter()
            .enumerate()
            .filter(|&(_, &b)| b == block)
            .map(|(v, _)| v)
            .collect()
    }

    fn check(&self, level: usize, block: u32) -> Result<()> {
        if level == 0 || level > self.levels.len() || block as usize >= self.num_blocks(level) {
            return Err(Error::UnknownBlock(format!("level {level} block {block}")));
        }
        Ok(())
    }

    /// Levels at which `side`'s partition differs from the level below.
    /// Level 1 is always kept; a level whose blocks on `side` each have a
    /// single child is a duplicate and dropped.
    pub fn kept_levels(&self, side: Side) -> Vec<usize> {
        let mut kept = vec![1];
        for level in 2..=self.levels.len() {
            let below = self.blocks_on(level - 1, side).len();
            let here = self.blocks_on(level, side).len();
            if here != below {
                kept.push(level);
            }
        }
        kept
    }

    /// Edge counts between left blocks at `level_left` and right blocks at
    /// `level_right`; level 0 addresses individual nodes.
    pub fn cross_matrix(
        &self,
        graph: &BipartiteGraph,
        level_left: usize,
        level_right: usize,
    ) -> CrossMatrix {
        let rows = if level_left == 0 {
            graph.nodes_on(Side::Left).map(|v| v as u32).collect()
        } else {
            self.blocks_on(level_left, Side::Left)
        };
        let cols = if level_right == 0 {
            graph.nodes_on(Side::Right).map(|v| v as u32).collect()
        } else {
            self.blocks_on(level_right, Side::Right)
        };
        let row_pos: HashMap<u32, usize> = rows.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let col_pos: HashMap<u32, usize> = cols.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let lp = self.projection(0, level_left);
        let rp = self.projection(0, level_right);
        let mut counts = vec![vec![0u64; cols.len()]; rows.len()];
        for (u, v) in graph.global_edges() {
            counts[row_pos[&lp[u]]][col_pos[&rp[v]]] += 1;
        }
        CrossMatrix {
            level_left,
            level_right,
            rows,
            cols,
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub level_left: usize,
    pub level_right: usize,
    /// Block ids (or node ids at level 0) of the rows.
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl CrossMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    /// Domain: a block of documents.
    D,
    /// Topic: a block of terms.
    T,
    /// Period: a block of time-like metadata values.
    P,
    /// Any other metadata dimension.
    M,
}

impl BlockKind {
    fn letter(self) -> char {
        match self {
            BlockKind::D => 'D',
            BlockKind::T => 'T',
            BlockKind::P => 'P',
            BlockKind::M => 'M',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'D' => Some(BlockKind::D),
            'T' => Some(BlockKind::T),
            'P' => Some(BlockKind::P),
            'M' => Some(BlockKind::M),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef {
    pub kind: BlockKind,
    pub level: u32,
    pub index: u32,
}

impl BlockRef {
    pub fn new(kind: BlockKind, level: u32, index: u32) -> Self {
        BlockRef { kind, level, index }
    }
}

impl fmt::Display for BlockRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}{}{}", self.level, self.kind.letter(), self.index)
    }
}

impl FromStr for BlockRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadBlockCode(s.to_string());
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let pos = rest.find(|c: char| !c.is_ascii_digit()).ok_or_else(bad)?;
        let (level, rest) = rest.split_at(pos);
        let mut chars = rest.chars();
        let kind = chars.next().and_then(BlockKind::from_letter).ok_or_else(bad)?;
        let index = chars.as_str();
        if level.is_empty() || index.is_empty() || !index.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let level: u32 = level.parse().map_err(|_| bad())?;
        let index: u32 = index.parse().map_err(|_| bad())?;
        if level == 0 || index == 0 {
            return Err(bad());
        }
        Ok(BlockRef { kind, level, index })
    }
}

impl Serialize for BlockRef {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BlockRef {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Codes for every block of a nested partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCodes {
    /// `codes[level - 1][block]`.
    codes: Vec<Vec<BlockRef>>,
    #[serde(skip)]
    lookup: HashMap<BlockRef, (usize, u32)>,
}

impl BlockCodes {
    pub fn from_codes(codes: Vec<Vec<BlockRef>>) -> Result<Self> {
        let mut lookup = HashMap::new();
        for (k, level) in codes.iter().enumerate() {
            for (b, &c) in level.iter().enumerate() {
                if c.level as usize != k + 1 {
                    return Err(Error::Inconsistent(format!("code {c} stored at level {}", k + 1)));
                }
                if lookup.insert(c, (k + 1, b as u32)).is_some() {
                    return Err(Error::Inconsistent(format!("duplicate block code {c}")));
                }
            }
        }
        Ok(BlockCodes { codes, lookup })
    }

    /// Deterministic indexing: per level, right-side blocks first ordered by
    /// size descending then lowest member node, numbered from 1; left-side
    /// blocks continue after the highest right-side index.
    pub fn assign(
        partition: &NestedPartition,
        left_kind: BlockKind,
        right_kind: BlockKind,
    ) -> Self {
        let mut codes = Vec::with_capacity(partition.num_levels());
        for level in 1..=partition.num_levels() {
            let min_member = min_members(partition, level);
            let order = |side: Side| {
                let mut blocks = partition.blocks_on(level, side);
                blocks.sort_by_key(|&b| {
                    (
                        std::cmp::Reverse(partition.size(level, b)),
                        min_member[b as usize],
                    )
                });
                blocks
            };
            let mut row = vec![BlockRef::new(left_kind, 0, 0); partition.num_blocks(level)];
            let right = order(Side::Right);
            for (i, &b) in right.iter().enumerate() {
                row[b as usize] = BlockRef::new(right_kind, level as u32, i as u32 + 1);
            }
            for (i, &b) in order(Side::Left).iter().enumerate() {
                row[b as usize] =
                    BlockRef::new(left_kind, level as u32, (right.len() + i) as u32 + 1);
            }
            codes.push(row);
        }
        Self::from_codes(codes).expect("generated codes are unique")
    }

    pub fn code(&self, level: usize, block: u32) -> BlockRef {
        self.codes[level - 1][block as usize]
    }

    pub fn resolve(&self, code: &BlockRef) -> Result<(usize, u32)> {
        self.lookup
            .get(code)
            .copied()
            .ok_or_else(|| Error::UnknownBlock(code.to_string()))
    }

    pub fn levels(&self) -> &[Vec<BlockRef>] {
        &self.codes
    }

    pub fn rebuild_lookup(&mut self) -> Result<()> {
        *self = Self::from_codes(std::mem::take(&mut self.codes))?;
        Ok(())
    }
}

fn min_members(partition: &NestedPartition, level: usize) -> Vec<usize> {
    let proj = partition.projection(0, level);
    let mut out = vec![usize::MAX; partition.num_blocks(level)];
    for (v, &b) in proj.iter().enumerate() {
        out[b as usize] = out[b as usize].min(v);
    }
    out
}
