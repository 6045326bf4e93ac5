//! Thin switch between rayon and plain iterators.
//!
//! Every helper preserves index order in its output so that reductions done
//! afterwards by the caller are independent of scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Calls `f(row_index, row, extra)` for each `width`-sized row of `rows`
/// paired with the matching element of `extra`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_row<T, U, F>(rows: &mut [T], width: usize, extra: &mut [U], f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut U) + Sync + Send,
{
    rows.par_chunks_mut(width)
        .zip(extra.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, e))| f(i, row, e));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_row<T, U, F>(rows: &mut [T], width: usize, extra: &mut [U], f: F)
where
    T: Send,
    U: Send,
    F: Fn(usize, &mut [T], &mut U) + Sync + Send,
{
    rows.chunks_mut(width)
        .zip(extra.iter_mut())
        .enumerate()
        .for_each(|(i, (row, e))| f(i, row, e));
}
