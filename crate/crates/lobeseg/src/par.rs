//! Execution helpers that route every data-parallel loop in the crate through
//! one place, so the `parallel` feature swaps rayon in and out without touching
//! the algorithms.
//!
//! Reductions accumulate fixed-size chunk partials and combine them in index
//! order, which makes the parallel results bit-identical to the sequential
//! fallback regardless of thread count or scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for order-stable reductions and elementwise updates.
const CHUNK: usize = 4096;

/// True when the build carries the rayon backend.
pub(crate) fn default_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Dot product with chunked accumulation; identical result in both modes.
pub(crate) fn dot(a: &[f64], b: &[f64], parallel: bool) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    fn chunk_sum(ca: &[f64], cb: &[f64]) -> f64 {
        ca.iter().zip(cb).map(|(x, y)| x * y).sum()
    }
    #[cfg(feature = "parallel")]
    if parallel {
        let partials: Vec<f64> = a
            .par_chunks(CHUNK)
            .zip(b.par_chunks(CHUNK))
            .map(|(ca, cb)| chunk_sum(ca, cb))
            .collect();
        return partials.iter().sum();
    }
    let _ = parallel;
    a.chunks(CHUNK)
        .zip(b.chunks(CHUNK))
        .map(|(ca, cb)| chunk_sum(ca, cb))
        .sum()
}

/// Euclidean norm via the chunked dot product.
pub(crate) fn norm2(a: &[f64], parallel: bool) -> f64 {
    dot(a, a, parallel).sqrt()
}

/// Apply `f(chunk_index, chunk)` over disjoint chunks of `chunk_len` elements.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, parallel: bool, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    debug_assert!(chunk_len > 0);
    #[cfg(feature = "parallel")]
    if parallel {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = parallel;
    for (i, c) in data.chunks_mut(chunk_len).enumerate() {
        f(i, c);
    }
}

/// Map indices `0..n` to owned values, preserving index order in the output.
pub(crate) fn map_collect<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}
