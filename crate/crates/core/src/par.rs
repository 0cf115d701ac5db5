//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures on the calling thread. Reductions are done over
//! fixed-size chunks whose partial sums are combined in index order, so the
//! floating-point result does not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for ordered reductions.
pub const REDUCE_CHUNK: usize = 1024;

/// `(0..len).map(f).collect()`, in parallel when enabled.
pub fn map_range<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Applies `f` to consecutive chunks of `data`, passing the chunk index.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Sum of `f(i)` for `i in 0..len`, chunked so the result is reproducible.
pub fn ordered_sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(REDUCE_CHUNK);
    let partial = map_range(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(len);
        (lo..hi).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

/// Maximum of `f(i)` for `i in 0..len`; `-inf` when empty.
pub fn max_of<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = len.div_ceil(REDUCE_CHUNK);
    map_range(chunks, |c| {
        let lo = c * REDUCE_CHUNK;
        let hi = (lo + REDUCE_CHUNK).min(len);
        (lo..hi).map(&f).fold(f64::NEG_INFINITY, f64::max)
    })
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
}
