//! Simple, unweighted bipartite graphs.
//!
//! Nodes are indexed in a single space: left nodes (documents) occupy
//! `0..num_left`, right nodes (terms or metadata values) follow at
//! `num_left..num_left + num_right`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "GraphRepr", try_from = "GraphRepr")]
pub struct BipartiteGraph {
    left: Vec<String>,
    right: Vec<String>,
    /// Sorted, deduplicated `(left, right)` pairs with the right index local
    /// to the right side.
    edges: Vec<(u32, u32)>,
    /// Adjacency in global node indices.
    adj: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    left: Vec<String>,
    right: Vec<String>,
    edges: Vec<(u32, u32)>,
}

impl From<BipartiteGraph> for GraphRepr {
    fn from(g: BipartiteGraph) -> Self {
        GraphRepr {
            left: g.left,
            right: g.right,
            edges: g.edges,
        }
    }
}

impl TryFrom<GraphRepr> for BipartiteGraph {
    type Error = Error;

    fn try_from(r: GraphRepr) -> Result<Self> {
        BipartiteGraph::new(r.left, r.right, r.edges)
    }
}

impl BipartiteGraph {
    /// Builds a graph from labels and `(left, right)` index pairs. Duplicate
    /// pairs collapse to one edge.
    pub fn new(left: Vec<String>, right: Vec<String>, mut edges: Vec<(u32, u32)>) -> Result<Self> {
        let (nl, nr) = (left.len(), right.len());
        if let Some(&(u, v)) = edges
            .iter()
            .find(|&&(u, v)| u as usize >= nl || v as usize >= nr)
        {
            return Err(Error::InvalidArgument(format!(
                "edge ({u}, {v}) out of range for {nl} left and {nr} right nodes"
            )));
        }
        edges.sort_unstable();
        edges.dedup();
        let mut adj = vec![Vec::new(); nl + nr];
        for &(u, v) in &edges {
            let gv = nl as u32 + v;
            adj[u as usize].push(gv);
            adj[gv as usize].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        Ok(BipartiteGraph {
            left,
            right,
            edges,
            adj,
        })
    }

    /// Unlabeled graph, convenient for synthetic inputs.
    pub fn from_edges(num_left: usize, num_right: usize, edges: Vec<(u32, u32)>) -> Result<Self> {
        let left = (0..num_left).map(|i| format!("d{i}")).collect();
        let right = (0..num_right).map(|i| format!("t{i}")).collect();
        Self::new(left, right, edges)
    }

    pub fn num_left(&self) -> usize {
        self.left.len()
    }

    pub fn num_right(&self) -> usize {
        self.right.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn left_labels(&self) -> &[String] {
        &self.left
    }

    pub fn right_labels(&self) -> &[String] {
        &self.right
    }

    pub fn label(&self, node: usize) -> &str {
        if node < self.left.len() {
            &self.left[node]
        } else {
            &self.right[node - self.left.len()]
        }
    }

    /// Edges as `(left, right)` with the right index local to its side.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Edges in global node indices.
    pub fn global_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let nl = self.left.len();
        self.edges
            .iter()
            .map(move |&(u, v)| (u as usize, nl + v as usize))
    }

    pub fn side_of(&self, node: usize) -> Side {
        if node < self.left.len() {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn nodes_on(&self, side: Side) -> std::ops::Range<usize> {
        match side {
            Side::Left => 0..self.left.len(),
            Side::Right => self.left.len()..self.num_nodes(),
        }
    }

    pub fn right_index(&self, label: &str) -> Option<usize> {
        self.right.iter().position(|r| r == label)
    }

    /// Graph restricted to the given left nodes (in the given order); right
    /// nodes left without edges are dropped.
    pub fn restrict_left(&self, keep: &[usize]) -> Result<Self> {
        let mut used = vec![false; self.right.len()];
        for &u in keep {
            for &gv in &self.adj[u] {
                used[gv as usize - self.left.len()] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.right.len()];
        let mut right = Vec::new();
        for (i, label) in self.right.iter().enumerate() {
            if used[i] {
                remap[i] = right.len() as u32;
                right.push(label.clone());
            }
        }
        let mut edges = Vec::new();
        for (nu, &u) in keep.iter().enumerate() {
            for &gv in &self.adj[u] {
                edges.push((nu as u32, remap[gv as usize - self.left.len()]));
            }
        }
        let left = keep.iter().map(|&u| self.left[u].clone()).collect();
        Self::new(left, right, edges)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_edges_collapse() {
        let g = BipartiteGraph::from_edges(1, 1, vec![(0, 0), (0, 0), (0, 0)]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.degree(1), 1);
    }

    #[test]
    fn out_of_range_edge_rejected() {
        assert!(BipartiteGraph::from_edges(1, 1, vec![(0, 1)]).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_adjacency() {
        let g = BipartiteGraph::from_edges(2, 3, vec![(0, 0), (1, 2), (0, 2)]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: BipartiteGraph = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert_eq!(back.neighbors(4), &[0, 1]);
    }

    #[test]
    fn restrict_left_drops_orphan_terms() {
        let g = BipartiteGraph::from_edges(2, 3, vec![(0, 0), (1, 1), (1, 2)]).unwrap();
        let r = g.restrict_left(&[1]).unwrap();
        assert_eq!(r.num_left(), 1);
        assert_eq!(r.right_labels(), &["t1".to_string(), "t2".to_string()]);
        assert_eq!(r.num_edges(), 2);
    }
}
