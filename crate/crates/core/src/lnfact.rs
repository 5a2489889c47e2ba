//! Cached log-factorials and the binomial/multiset helpers built on them.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

const TABLE_SIZE: usize = 1 << 16;

fn table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..TABLE_SIZE)
            .map(|n| if n < 2 { 0.0 } else { ln_gamma(n as f64 + 1.0) })
            .collect()
    })
}

/// `ln(n!)`.
#[inline]
pub fn ln_fact(n: u64) -> f64 {
    if (n as usize) < TABLE_SIZE {
        table()[n as usize]
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`; zero when `k == 0` or `k == n`.
#[inline]
pub fn ln_binom(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n, "ln_binom({n}, {k})");
    if k == 0 || k == n {
        return 0.0;
    }
    ln_fact(n) - ln_fact(k) - ln_fact(n - k)
}

/// Log of the number of multisets of size `k` drawn from `n` kinds,
/// `ln C(n + k - 1, k)`. Defined as zero when `k == 0`.
#[inline]
pub fn ln_multiset(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    debug_assert!(n > 0, "ln_multiset(0, {k})");
    ln_binom(n + k - 1, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values_match_direct_sums() {
        let mut acc = 0.0f64;
        for n in 1..200u64 {
            acc += (n as f64).ln();
            assert!((ln_fact(n) - acc).abs() < 1e-9 * acc.max(1.0));
        }
    }

    #[test]
    fn table_boundary_is_continuous() {
        let n = TABLE_SIZE as u64;
        let step = ln_fact(n) - ln_fact(n - 1);
        assert!((step - (n as f64).ln()).abs() < 1e-7);
    }

    #[test]
    fn multiset_counts() {
        // 3 kinds, 2 draws: 6 multisets.
        assert!((ln_multiset(3, 2) - 6f64.ln()).abs() < 1e-12);
        assert_eq!(ln_multiset(5, 0), 0.0);
        assert!((ln_binom(5, 2) - 10f64.ln()).abs() < 1e-12);
    }
}
