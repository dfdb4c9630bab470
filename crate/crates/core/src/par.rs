//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in index order, so reductions performed by the
//! caller are deterministic regardless of the thread count. Without the
//! `parallel` feature [`Execution::Parallel`] silently runs sequentially.

/// How a data-parallel loop is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// True when this mode actually spreads work over threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Maps every element of `items` (with its index) and collects in order.
pub fn map_slice<S, T, F>(exec: Execution, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(usize, &S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, s)| f(i, s)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, s)| f(i, s)).collect()
}

/// Applies `f` to every element of `items` in place.
pub fn for_each_mut<S, F>(exec: Execution, items: &mut [S], f: F)
where
    S: Send,
    F: Fn(usize, &mut S) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, s)| f(i, s));
        return;
    }
    let _ = exec;
    items.iter_mut().enumerate().for_each(|(i, s)| f(i, s));
}

/// Applies `f` to fixed-size chunks of `items`; chunk boundaries do not depend
/// on the number of threads.
pub fn for_each_chunk_mut<S, F>(exec: Execution, items: &mut [S], chunk: usize, f: F)
where
    S: Send,
    F: Fn(usize, &mut [S]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        items
            .par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    items.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}
