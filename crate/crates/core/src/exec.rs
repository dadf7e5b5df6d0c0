//! Execution mode for replicate loops.
//!
//! Work is split into fixed-size chunks whose results are reduced in chunk order,
//! so sequential and parallel runs produce bit-identical output.

use std::ops::Range;

/// How replicate loops are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    /// Data parallel over the rayon global pool. Falls back to sequential when the
    /// `parallel` feature is disabled.
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

/// Replicates per chunk.
pub const CHUNK: usize = 16;

impl Exec {
    /// Maps `f` over `0..n`, preserving order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Runs `work` on consecutive chunks of `0..n` and feeds the results to `reduce`
    /// in chunk order. At most a bounded number of chunk results are held at once.
    pub fn fold_chunks<T, W, R>(self, n: usize, chunk: usize, work: W, mut reduce: R)
    where
        T: Send,
        W: Fn(Range<usize>) -> T + Sync + Send,
        R: FnMut(T),
    {
        let chunk = chunk.max(1);
        let ranges: Vec<Range<usize>> =
            (0..n).step_by(chunk).map(|s| s..(s + chunk).min(n)).collect();
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                let wave = 2 * rayon::current_num_threads().max(1);
                for group in ranges.chunks(wave) {
                    let out: Vec<T> = group.par_iter().cloned().map(&work).collect();
                    out.into_iter().for_each(&mut reduce);
                }
            }
            _ => ranges.into_iter().map(work).for_each(&mut reduce),
        }
    }
}
