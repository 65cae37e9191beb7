//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper preserves input order in its output, and the `sum_*` helpers
//! reduce fixed-size chunks in index order, so floating-point results are
//! identical whether the work runs on one thread or many.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by the ordered reductions.
const CHUNK: usize = 256;

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Ordered sum of `f(i)` for `i < n` over any additive type.
pub fn sum_range<T, F>(n: usize, f: F) -> T
where
    T: Send + Copy + std::iter::Sum<T> + std::ops::Add<Output = T>,
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partials = map_range(chunks, |c| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<T>()
    });
    partials.into_iter().sum()
}

/// Number of worker threads the helpers will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_sum_matches_sequential() {
        let f = |i: usize| 1.0 / (1.0 + i as f64).powi(2);
        let seq: f64 = (0..10_000).map(f).sum::<f64>();
        let par = sum_range(10_000, f);
        assert!((seq - par).abs() < 1e-12);
        assert_eq!(sum_range(0, f), 0.0);
    }

    #[test]
    fn map_preserves_order() {
        let v = map_range(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
        let w = map_slice(&v, |x| x + 1);
        assert_eq!(w[10], 101);
    }
}
