//! Exact microcanonical description length of a nested degree-corrected
//! bipartite block model, in nats.
//!
//! ```text
//! Σ = S₀ + L_deg + Σ_l (L_edges(l) + L_part(l))
//! S₀        = Σ_r ln e_r! − Σ_{r<s} ln e_rs! − Σ_v ln k_v!        (level 1)
//! L_deg     = Σ_r ln C(n_r + e_r − 1, e_r)                         (level 1)
//! L_edges(l)= Σ_{g<h} ln C(n_g n_h + e_gh − 1, e_gh)
//!           + Σ_g ln C(n_g(n_g+1)/2 + e_gg − 1, e_gg)
//! L_part(l) = ln N + ln C(N − 1, B − 1) + ln N! − Σ_r ln n_r!
//! ```
//!
//! `L_edges(l)` counts the level-`l` block multigraph given the groups of
//! level `l + 1` (`n_g` level-`l` blocks per group); the top level uses a
//! single group. `L_part(l)` partitions the `N` items of level `l − 1` into
//! the `B` blocks of level `l`.

use std::collections::BTreeMap;

use crate::graph::BipartiteGraph;
use crate::lnfact::{ln_binom, ln_fact, ln_multiset};
use crate::partition::NestedPartition;

#[derive(Debug, Clone, PartialEq)]
pub struct DlTerms {
    pub edge_placement: f64,
    pub degrees: f64,
    /// `L_edges` per level, lowest first.
    pub edges: Vec<f64>,
    /// `L_part` per level, lowest first.
    pub partitions: Vec<f64>,
}

impl DlTerms {
    pub fn total(&self) -> f64 {
        self.edge_placement
            + self.degrees
            + self.edges.iter().sum::<f64>()
            + self.partitions.iter().sum::<f64>()
    }
}

pub fn description_length(graph: &BipartiteGraph, partition: &NestedPartition) -> f64 {
    dl_terms(graph, partition).total()
}

/// Edge counts between blocks of one level, keyed `(min, max)`.
type PairCounts = BTreeMap<(u32, u32), u64>;

fn lift(pairs: &PairCounts, assign: &[u32]) -> PairCounts {
    let mut out = PairCounts::new();
    for (&(a, b), &c) in pairs {
        let (x, y) = (assign[a as usize], assign[b as usize]);
        *out.entry((x.min(y), x.max(y))).or_default() += c;
    }
    out
}

pub fn dl_terms(graph: &BipartiteGraph, partition: &NestedPartition) -> DlTerms {
    let levels = partition.assignments();
    let num_levels = levels.len();
    let edges_total = graph.num_edges() as u64;

    let mut node_pairs = PairCounts::new();
    for (u, v) in graph.global_edges() {
        node_pairs.insert((u as u32, v as u32), 1);
    }

    // Level 1: degree-corrected edge placement and degree prior.
    let l1 = &levels[0];
    let b1 = partition.num_blocks(1);
    let pairs1 = lift(&node_pairs, l1);
    let mut e_r = vec![0u64; b1];
    for (&(a, b), &c) in &pairs1 {
        e_r[a as usize] += c;
        e_r[b as usize] += c;
    }
    let mut edge_placement: f64 = e_r.iter().map(|&e| ln_fact(e)).sum();
    edge_placement -= pairs1.values().map(|&c| ln_fact(c)).sum::<f64>();
    edge_placement -= (0..graph.num_nodes())
        .map(|v| ln_fact(graph.degree(v) as u64))
        .sum::<f64>();
    let degrees = (0..b1 as u32)
        .map(|r| ln_multiset(partition.size(1, r) as u64, e_r[r as usize]))
        .sum();

    let mut edges = Vec::with_capacity(num_levels);
    let mut partitions = Vec::with_capacity(num_levels);
    let mut pairs = pairs1;
    for l in 1..=num_levels {
        let assign = &levels[l - 1];
        let items = assign.len() as u64;
        let nb = partition.num_blocks(l);
        let mut n = vec![0u64; nb];
        for &b in assign {
            n[b as usize] += 1;
        }
        partitions.push(
            (items as f64).ln() + ln_binom(items - 1, nb as u64 - 1) + ln_fact(items)
                - n.iter().map(|&x| ln_fact(x)).sum::<f64>(),
        );

        let term = if l < num_levels {
            let up = &levels[l];
            let mut groups = vec![0u64; partition.num_blocks(l + 1)];
            for &g in up {
                groups[g as usize] += 1;
            }
            let lifted = lift(&pairs, up);
            let t = lifted
                .iter()
                .map(|(&(g, h), &c)| {
                    let (ng, nh) = (groups[g as usize], groups[h as usize]);
                    if g == h {
                        ln_multiset(ng * (ng + 1) / 2, c)
                    } else {
                        ln_multiset(ng * nh, c)
                    }
                })
                .sum();
            pairs = lifted;
            t
        } else {
            let nb = nb as u64;
            ln_multiset(nb * (nb + 1) / 2, edges_total)
        };
        edges.push(term);
    }

    DlTerms {
        edge_placement,
        degrees,
        edges,
        partitions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_graph_by_hand() {
        let g = BipartiteGraph::from_edges(1, 1, vec![(0, 0)]).unwrap();
        let p = NestedPartition::trivial(&g);
        let t = dl_terms(&g, &p);
        // S0 = ln1! + ln1! - ln1! - ln1! - ln1! = 0
        assert_eq!(t.edge_placement, 0.0);
        // Ldeg = 2 * ln C(1,1) = 0
        assert_eq!(t.degrees, 0.0);
        // Top single group with two blocks: ln C(3 + 1 - 1, 1) = ln 3
        assert!((t.edges[0] - 3f64.ln()).abs() < 1e-12);
        // Lpart: N = 2, B = 2: ln 2 + ln C(1,1) + ln 2! - 0
        assert!((t.partitions[0] - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn relabeling_invariance() {
        let g = BipartiteGraph::from_edges(2, 2, vec![(0, 0), (1, 1), (0, 1)]).unwrap();
        let a = NestedPartition::new(&g, vec![vec![0, 1, 2, 2], vec![0, 0, 1]]).unwrap();
        let b = NestedPartition::new(&g, vec![vec![2, 0, 1, 1], vec![1, 0, 1]]).unwrap();
        assert!((description_length(&g, &a) - description_length(&g, &b)).abs() < 1e-12);
    }
}
