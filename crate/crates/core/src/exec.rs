//! Execution strategy for the data-parallel loops.
//!
//! With the `parallel` feature (default) [`Exec::Parallel`] runs on the rayon
//! global pool; without it every strategy degrades to the sequential loop.
//! Both strategies produce bit-identical results: work items are independent
//! and results are collected in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Maps `f` over `0..len`, preserving order.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..len).into_par_iter().map(f).collect(),
            _ => (0..len).map(f).collect(),
        }
    }

    /// Maps `f` over a slice, preserving order.
    pub fn map_slice<'a, S, T, F>(self, items: &'a [S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&'a S) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Calls `f(row_index, row)` for every `row_len`-sized chunk of `data`.
    pub fn for_each_row<T, F>(self, data: &mut [T], row_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(y, row)| f(y, row)),
            _ => data
                .chunks_mut(row_len)
                .enumerate()
                .for_each(|(y, row)| f(y, row)),
        }
    }
}
