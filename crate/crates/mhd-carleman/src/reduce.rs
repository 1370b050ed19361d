//! Deterministic reductions.
//!
//! Every norm, dot product and quadrature in this crate funnels through the
//! pairwise sums below. The summation tree depends only on the slice length,
//! never on the number of worker threads, so reruns produce bitwise-identical
//! results whether the rayon pool has 1 or 64 threads.

/// Below this length the recursion runs on the current thread.
const PAR_CUTOFF: usize = 16_384;
/// Leaf size of the summation tree.
const LEAF: usize = 32;

/// Pairwise (cascade) sum with a fixed tree shape.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= LEAF {
        let mut acc = 0.0;
        for &v in x {
            acc += v;
        }
        return acc;
    }
    let mid = x.len() / 2;
    let (a, b) = x.split_at(mid);
    if x.len() >= PAR_CUTOFF {
        let (sa, sb) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        sa + sb
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Pairwise dot product, same tree as `pairwise_sum`.
pub fn pairwise_dot(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() <= LEAF {
        let mut acc = 0.0;
        for (a, b) in x.iter().zip(y) {
            acc += a * b;
        }
        return acc;
    }
    let mid = x.len() / 2;
    let (x0, x1) = x.split_at(mid);
    let (y0, y1) = y.split_at(mid);
    if x.len() >= PAR_CUTOFF {
        let (s0, s1) = rayon::join(|| pairwise_dot(x0, y0), || pairwise_dot(x1, y1));
        s0 + s1
    } else {
        pairwise_dot(x0, y0) + pairwise_dot(x1, y1)
    }
}

/// Deterministic sum of `f(i)` for `i in 0..n` (pairwise over the index range).
pub fn pairwise_sum_indexed<F>(n: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    fn rec<F: Fn(usize) -> f64 + Sync>(lo: usize, hi: usize, f: &F) -> f64 {
        let len = hi - lo;
        if len <= LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + len / 2;
        if len >= PAR_CUTOFF {
            let (a, b) = rayon::join(|| rec(lo, mid, f), || rec(mid, hi, f));
            a + b
        } else {
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}

pub fn l2_norm(x: &[f64]) -> f64 {
    pairwise_dot(x, x).sqrt()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_naive_on_small_input() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-12);
    }

    #[test]
    fn tree_is_thread_count_independent() {
        let x: Vec<f64> = (0..200_000).map(|i| ((i * 37 % 101) as f64).exp().recip()).collect();
        let pools: Vec<f64> = [1usize, 4, 8]
            .iter()
            .map(|&k| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
                pool.install(|| pairwise_sum(&x))
            })
            .collect();
        assert_eq!(pools[0].to_bits(), pools[1].to_bits());
        assert_eq!(pools[0].to_bits(), pools[2].to_bits());
    }

    #[test]
    fn indexed_agrees_with_slice() {
        let x: Vec<f64> = (0..5000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = pairwise_sum(&x);
        let b = pairwise_sum_indexed(x.len(), &|i| x[i]);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
