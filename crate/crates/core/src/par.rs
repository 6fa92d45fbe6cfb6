//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run on the calling thread. Every caller reduces results in a
//! canonical order, so outputs do not depend on which path is compiled in
//! or on the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
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

/// Map `f` over fixed-size chunks of `items` and fold the partial results
/// with an associative `merge`. `identity` must be a neutral element.
pub fn chunk_reduce<T, R, F, M, I>(items: &[T], chunk_len: usize, identity: I, f: F, merge: M) -> R
where
    T: Sync,
    R: Send,
    I: Fn() -> R + Sync + Send,
    F: Fn(usize, &[T]) -> R + Sync + Send,
    M: Fn(R, R) -> R + Sync + Send,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        items
            .par_chunks(chunk_len)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .reduce(identity, merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items
            .chunks(chunk_len)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .fold(identity(), merge)
    }
}

/// Run `f` with at most `threads` workers. `None` keeps the ambient pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("failed to build thread pool")
                .install(f),
            None => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Number of workers available to [`map`] and [`chunk_reduce`].
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
