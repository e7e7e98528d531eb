//! Data-parallel dispatch with a sequential fallback.
//!
//! Every helper here splits work into chunks whose results are either written
//! to disjoint output slices or collected in index order, so parallel and
//! sequential execution produce bitwise-identical results. Reductions over
//! the collected partials are always performed sequentially by the caller.
//!
//! Parallelism needs the `parallel` cargo feature; at runtime it can also be
//! switched off with [`set_parallel`] (the benches use this to compare both).

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enables or disables parallel execution at runtime. No-op without the
/// `parallel` feature.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

/// True when chunks will actually be dispatched to the rayon pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Worker threads available to parallel chunks; 1 when parallelism is off.
pub fn thread_count() -> usize {
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        return rayon::current_num_threads();
    }
    1
}

/// Applies `f(index, chunk)` to consecutive `chunk`-sized pieces of `data`.
pub fn for_each_chunk<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if chunk == 0 || data.is_empty() {
        return;
    }
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Like [`for_each_chunk`] over two equally chunked buffers.
pub fn for_each_chunk2<T, U, F>(a: &mut [T], ca: usize, b: &mut [U], cb: usize, f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut [U]) + Sync + Send,
{
    if ca == 0 || cb == 0 || a.is_empty() {
        return;
    }
    debug_assert_eq!(a.len() / ca, b.len() / cb);
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        a.par_chunks_mut(ca)
            .zip(b.par_chunks_mut(cb))
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
        return;
    }
    a.chunks_mut(ca)
        .zip(b.chunks_mut(cb))
        .enumerate()
        .for_each(|(i, (x, y))| f(i, x, y));
}

/// Evaluates `f(i)` for `i in 0..n`, returning results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Sums equally sized partial buffers in index order.
pub(crate) fn sum_ordered(parts: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut acc = vec![0.0; len];
    for p in parts {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_results_match_sequential() {
        let mut a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let mut b = a.clone();
        set_parallel(true);
        for_each_chunk(&mut a, 7, |i, c| c.iter_mut().for_each(|v| *v = v.sin() * i as f64));
        set_parallel(false);
        for_each_chunk(&mut b, 7, |i, c| c.iter_mut().for_each(|v| *v = v.sin() * i as f64));
        set_parallel(true);
        assert_eq!(a, b);
    }

    #[test]
    fn map_indexed_keeps_order() {
        let v = map_indexed(50, |i| i * 2);
        assert_eq!(v, (0..50).map(|i| i * 2).collect::<Vec<_>>());
    }
}
