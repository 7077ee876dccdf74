//! Pairwise summation. Used for every reduction whose terms nearly cancel
//! (loss numerators, per-layer gradient contributions).

const BLOCK: usize = 32;

pub(crate) fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i` in `0..n`, without materializing the terms.
pub(crate) fn pairwise_map(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= BLOCK {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise(&v), 499_500.0);
        assert_eq!(pairwise_map(1000, &|i| i as f64), 499_500.0);
        assert_eq!(pairwise(&[]), 0.0);
    }

    #[test]
    fn beats_naive_on_many_small_terms() {
        let v = vec![0.1; 1 << 20];
        let exact = 0.1 * (1u64 << 20) as f64;
        let naive: f64 = v.iter().sum();
        assert!((pairwise(&v) - exact).abs() <= (naive - exact).abs());
    }
}
