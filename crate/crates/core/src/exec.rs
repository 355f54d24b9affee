//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the loops run on the rayon pool; without it they
//! run in order on the calling thread. Reductions always combine per-row partial
//! sums with the same fixed pairwise tree, so results do not depend on the
//! thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f` on `0..n` and collects results in index order.
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

/// Calls `f(chunk_index, chunk)` on consecutive chunks of `values`.
pub fn for_each_chunk_mut<T, F>(values: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        values
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        values.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sums an `N`-component quantity over rows `0..n_rows`.
///
/// Each row is reduced sequentially by `f`; row partials are combined pairwise.
pub fn sum_rows<const N: usize, F>(n_rows: usize, f: F) -> [f64; N]
where
    F: Fn(usize) -> [f64; N] + Sync + Send,
{
    let partial = map_range(n_rows, f);
    let mut out = [0.0; N];
    let mut col = vec![0.0; partial.len()];
    for (k, o) in out.iter_mut().enumerate() {
        for (c, p) in col.iter_mut().zip(&partial) {
            *c = p[k];
        }
        *o = pairwise_sum(&col);
    }
    out
}

/// Number of worker threads the core will use.
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
