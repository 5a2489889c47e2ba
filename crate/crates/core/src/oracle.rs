//! Brute-force reference computations for tests.
//!
//! Everything here is written from first principles with dense matrices and
//! summed logarithms, sharing no code with the optimized description-length
//! paths it is used to check.

use rand::Rng;

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_multichoose(n: u64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        ln_choose(n + k - 1, k)
    }
}

/// A small bipartite graph in global node indices (left nodes first).
#[derive(Debug, Clone)]
pub struct SmallGraph {
    pub num_left: usize,
    pub num_right: usize,
    /// `(left, right)` with `right` in `num_left..num_left + num_right`.
    pub edges: Vec<(usize, usize)>,
}

impl SmallGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_left + self.num_right
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    pub fn is_left(&self, v: usize) -> bool {
        v < self.num_left
    }

    pub fn to_graph(&self) -> crate::BipartiteGraph {
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (u as u32, (v - self.num_left) as u32))
            .collect();
        crate::BipartiteGraph::from_edges(self.num_left, self.num_right, edges).expect("valid small graph")
    }
}

/// Converts oracle level arrays into a validated partition.
pub fn to_partition(g: &crate::BipartiteGraph, levels: &[Vec<usize>]) -> crate::NestedPartition {
    let levels = levels
        .iter()
        .map(|l| l.iter().map(|&b| b as u32).collect())
        .collect();
    crate::NestedPartition::new(g, levels).expect("valid oracle partition")
}

/// Description length of a nested partition given as per-level assignment
/// arrays (`levels[0][node]`, `levels[k][block of level k]`), all compact.
pub fn description_length(g: &SmallGraph, levels: &[Vec<usize>]) -> f64 {
    let n = g.num_nodes();
    let num_levels = levels.len();
    let blocks = |k: usize| levels[k].iter().max().map_or(0, |m| m + 1);

    // Dense level-1 block matrix.
    let b1 = blocks(0);
    let mut m = vec![vec![0u64; b1]; b1];
    for &(u, v) in &g.edges {
        let (a, b) = (levels[0][u], levels[0][v]);
        m[a][b] += 1;
        m[b][a] += 1;
    }
    let mut total = 0.0;
    for r in 0..b1 {
        let e_r: u64 = m[r].iter().sum();
        total += ln_factorial(e_r);
        for s in (r + 1)..b1 {
            total -= ln_factorial(m[r][s]);
        }
        let n_r = levels[0].iter().filter(|&&b| b == r).count() as u64;
        total += ln_multichoose(n_r, e_r);
    }
    for v in 0..n {
        total -= ln_factorial(g.degree(v) as u64);
    }

    let mut items = n;
    for k in 0..num_levels {
        let bk = blocks(k);
        // partition prior
        total += (items as f64).ln() + ln_choose(items as u64 - 1, bk as u64 - 1)
            + ln_factorial(items as u64);
        for r in 0..bk {
            let c = levels[k].iter().filter(|&&b| b == r).count() as u64;
            total -= ln_factorial(c);
        }
        // block multigraph of level k given groups of level k+1
        let (groups, group_of): (usize, Vec<usize>) = if k + 1 < num_levels {
            (blocks(k + 1), levels[k + 1].clone())
        } else {
            (1, vec![0; bk])
        };
        let mut gm = vec![vec![0u64; groups]; groups];
        for r in 0..bk {
            for s in (r + 1)..bk {
                let (x, y) = (group_of[r], group_of[s]);
                gm[x.min(y)][x.max(y)] += m[r][s];
            }
            let (x, _) = (group_of[r], ());
            gm[x][x] += m[r][r] / 2;
        }
        for x in 0..groups {
            let nx = group_of.iter().filter(|&&g| g == x).count() as u64;
            total += ln_multichoose(nx * (nx + 1) / 2, gm[x][x]);
            for y in (x + 1)..groups {
                let ny = group_of.iter().filter(|&&g| g == y).count() as u64;
                total += ln_multichoose(nx * ny, gm[x][y]);
            }
        }
        // lift the block matrix to level k+1
        if k + 1 < num_levels {
            let mut up = vec![vec![0u64; groups]; groups];
            for r in 0..bk {
                for s in 0..bk {
                    up[group_of[r]][group_of[s]] += m[r][s];
                }
            }
            m = up;
        }
        items = bk;
    }
    total
}

/// All set partitions of `n` items as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + usize::from(i > 0) {
            if i == 0 && b > 0 {
                break;
            }
            cur.push(b);
            rec(i + 1, n, cur, max.max(b), out);
            cur.pop();
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), 0, &mut out);
    out
}

/// Minimum description length over all side-pure level-1 partitions with at
/// most two levels. Isolated nodes of each side share a dedicated block.
/// Returns the minimum and its level assignments.
pub fn exhaustive_minimum(g: &SmallGraph) -> (f64, Vec<Vec<usize>>) {
    let n = g.num_nodes();
    let side_nodes = |left: bool| -> (Vec<usize>, Vec<usize>) {
        (0..n)
            .filter(|&v| g.is_left(v) == left)
            .partition(|&v| g.degree(v) > 0)
    };
    let (left_active, left_iso) = side_nodes(true);
    let (right_active, right_iso) = side_nodes(false);
    let mut best = (f64::INFINITY, Vec::new());
    for lp in set_partitions(left_active.len()) {
        for rp in set_partitions(right_active.len()) {
            let mut assign = vec![usize::MAX; n];
            let mut next = 0;
            let place = |nodes: &[usize], labels: &[usize], iso: &[usize], assign: &mut Vec<usize>, next: &mut usize| {
                let nb = labels.iter().max().map_or(0, |m| m + 1);
                for (&v, &b) in nodes.iter().zip(labels) {
                    assign[v] = *next + b;
                }
                *next += nb;
                if !iso.is_empty() {
                    for &v in iso {
                        assign[v] = *next;
                    }
                    *next += 1;
                }
            };
            place(&left_active, &lp, &left_iso, &mut assign, &mut next);
            let left_blocks = next;
            place(&right_active, &rp, &right_iso, &mut assign, &mut next);
            let right_blocks = next - left_blocks;
            let mut levels = vec![assign];
            if left_blocks > 1 || right_blocks > 1 {
                let top: Vec<usize> = (0..next)
                    .map(|b| if b < left_blocks || left_blocks == 0 { 0 } else { 1 })
                    .collect();
                levels.push(top);
            }
            let dl = description_length(g, &levels);
            if dl < best.0 {
                best = (dl, levels);
            }
        }
    }
    best
}

/// Random bipartite graph with at most `max_nodes` nodes and at least one
/// edge.
pub fn random_graph<R: Rng>(rng: &mut R, max_nodes: usize) -> SmallGraph {
    loop {
        let total = rng.gen_range(2..=max_nodes);
        let num_left = rng.gen_range(1..total);
        let num_right = total - num_left;
        let p = rng.gen_range(0.2..0.9);
        let mut edges = Vec::new();
        for u in 0..num_left {
            for v in 0..num_right {
                if rng.gen_bool(p) {
                    edges.push((u, num_left + v));
                }
            }
        }
        if !edges.is_empty() {
            return SmallGraph {
                num_left,
                num_right,
                edges,
            };
        }
    }
}

/// Random valid nested partition: random side-pure level 1, an optional
/// random intermediate level, and a per-side top.
pub fn random_levels<R: Rng>(rng: &mut R, g: &SmallGraph, allow_middle: bool) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let mut raw = vec![0usize; n];
    for (v, slot) in raw.iter_mut().enumerate() {
        let side_len = if g.is_left(v) { g.num_left } else { g.num_right };
        let label = rng.gen_range(0..side_len);
        *slot = if g.is_left(v) { label } else { n + label };
    }
    let (l1, sides) = compact(&raw, &(0..n).map(|v| g.is_left(v)).collect::<Vec<_>>());
    let mut levels = vec![l1];
    let mut sides = sides;
    if allow_middle && rng.gen_bool(0.5) {
        let nb = sides.len();
        let raw: Vec<usize> = (0..nb)
            .map(|b| {
                let label = rng.gen_range(0..nb);
                if sides[b] {
                    label
                } else {
                    nb + label
                }
            })
            .collect();
        let (l2, s2) = compact(&raw, &sides);
        levels.push(l2);
        sides = s2;
    }
    let left = sides.iter().filter(|&&s| s).count();
    let right = sides.len() - left;
    if left > 1 || right > 1 {
        let has_left = left > 0;
        levels.push(
            sides
                .iter()
                .map(|&s| if s || !has_left { 0 } else { 1 })
                .collect(),
        );
    }
    levels
}

fn compact(raw: &[usize], is_left: &[bool]) -> (Vec<usize>, Vec<bool>) {
    let mut map = std::collections::BTreeMap::new();
    let mut sides = Vec::new();
    let mut keys: Vec<usize> = raw.to_vec();
    keys.sort_unstable();
    keys.dedup();
    for k in keys {
        map.insert(k, map.len());
    }
    sides.resize(map.len(), false);
    let out: Vec<usize> = raw.iter().map(|r| map[r]).collect();
    for (i, &b) in out.iter().enumerate() {
        sides[b] = is_left[i];
    }
    (out, sides)
}

/// Level arrays after moving node `v` to level-1 block `target`, or to a new
/// block sharing the ancestors of its current block when `target` is `None`.
/// Emptied blocks disappear at every level, and a per-side top is appended
/// when level 1 stops being per-side in a single-level hierarchy.
pub fn move_node(g: &SmallGraph, levels: &[Vec<usize>], v: usize, target: Option<usize>) -> Vec<Vec<usize>> {
    let mut raw: Vec<Vec<usize>> = levels.to_vec();
    let old = raw[0][v];
    let dest = match target {
        Some(b) => b,
        None => {
            let fresh = raw[0].iter().max().unwrap() + 1;
            if raw.len() > 1 {
                let parent = raw[1][old];
                raw[1].push(parent);
            }
            fresh
        }
    };
    raw[0][v] = dest;
    let n = g.num_nodes();
    let mut is_left: Vec<bool> = (0..n).map(|u| g.is_left(u)).collect();
    let mut out = Vec::new();
    let mut prev: Vec<usize> = (0..n).collect();
    for assign in raw {
        // keep only entries for items that still exist, renumbered by `prev`
        let mut items: Vec<(usize, usize)> = prev
            .iter()
            .enumerate()
            .filter(|&(_, &p)| p != usize::MAX)
            .map(|(old, &new)| (new, assign[old]))
            .collect();
        items.sort();
        let labels: Vec<usize> = items.iter().map(|&(_, b)| b).collect();
        let (compacted, sides) = compact(&labels, &is_left);
        let width = assign.iter().max().map_or(0, |m| m + 1);
        let mut next_prev = vec![usize::MAX; width];
        for (&raw_b, &new_b) in labels.iter().zip(&compacted) {
            next_prev[raw_b] = new_b;
        }
        out.push(compacted);
        prev = next_prev;
        is_left = sides;
    }
    let left = is_left.iter().filter(|&&s| s).count();
    let right = is_left.len() - left;
    if out.len() == 1 && (left > 1 || right > 1) {
        out.push(is_left.iter().map(|&s| if s || left == 0 { 0 } else { 1 }).collect());
    }
    out
}

/// Normalized mutual information (arithmetic normalization) between two
/// labelings. Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![vec![0f64; kb]; ka];
    let mut pa = vec![0f64; ka];
    let mut pb = vec![0f64; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x][y] += 1.0;
        pa[x] += 1.0;
        pb[y] += 1.0;
    }
    let h = |p: &[f64]| -> f64 {
        p.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (h(&pa), h(&pb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x][y];
            if c > 0.0 {
                mi += (c / n) * ((c * n) / (pa[x] * pb[y])).ln();
            }
        }
    }
    2.0 * mi / (ha + hb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (0..7).map(|n| set_partitions(n).len()).collect();
        assert_eq!(counts, [1, 1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn nmi_bounds() {
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]) - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 1, 0, 1], &[0, 0, 1, 1]).abs() < 1e-12);
    }
}
