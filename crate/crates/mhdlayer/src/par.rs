//! Data-parallel helpers with a sequential fallback.
//!
//! With the default `parallel` feature the heavy loops fan out through rayon;
//! without it the same entry points run sequentially. All reductions collect
//! results by index, so outputs are identical (bitwise) in both builds and
//! for any thread count.

/// Maps `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Maps `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Applies `f` to each chunk of `data` of length `chunk`, passing the chunk index.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Applies `f` to each chunk of `data` of length `chunk`, passing the chunk index.
#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Runs `f` inside a rayon pool of `jobs` threads (0 = library default).
/// Without the `parallel` feature `jobs` is ignored and `f` runs inline.
#[cfg(feature = "parallel")]
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool construction cannot fail for positive sizes")
            .install(f)
    }
}

/// Runs `f` inside a rayon pool of `jobs` threads (0 = library default).
/// Without the `parallel` feature `jobs` is ignored and `f` runs inline.
#[cfg(not(feature = "parallel"))]
pub fn with_jobs<R>(jobs: usize, f: impl FnOnce() -> R) -> R {
    let _ = jobs;
    f()
}
