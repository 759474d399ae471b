//! Execution-mode switch between rayon data-parallelism and plain loops.
//!
//! Heavy operations (decodability enumeration, class search, Monte-Carlo
//! trials) take an [`Exec`] and produce bit-identical results in either mode:
//! work is always mapped over an index range into an ordered buffer and
//! reduced sequentially or with an order-insensitive total order. Built
//! without the `parallel` feature, [`Exec::Parallel`] degrades to the
//! sequential path so the public API is unchanged.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run a data-parallel region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    /// Plain sequential loops.
    Sequential,
    /// rayon work-stealing over the current thread pool (requires the
    /// `parallel` feature; otherwise behaves as `Sequential`).
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

/// Map `f` over `0..len` into an ordered `Vec`.
///
/// The output is identical in both modes; only the schedule differs.
pub fn map_collect<T, F>(exec: Exec, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Exec::Sequential => (0..len).map(f).collect(),
        Exec::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..len).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..len).map(f).collect()
            }
        }
    }
}

/// Unstable sort, parallel when the mode and feature allow it.
///
/// Sorting is a deterministic operation either way; the parallel path only
/// changes the schedule.
pub fn sort_unstable<T>(exec: Exec, items: &mut [T])
where
    T: Ord + Send,
{
    match exec {
        Exec::Sequential => items.sort_unstable(),
        Exec::Parallel => {
            #[cfg(feature = "parallel")]
            {
                items.par_sort_unstable();
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.sort_unstable();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_produce_identical_ordered_output() {
        let seq = map_collect(Exec::Sequential, 1000, |i| i * i);
        let par = map_collect(Exec::Parallel, 1000, |i| i * i);
        assert_eq!(seq, par);
    }

    #[test]
    fn both_sort_modes_agree() {
        let mut a: Vec<u64> = (0..5000).map(|i| (i * 2654435761u64) % 1000).collect();
        let mut b = a.clone();
        sort_unstable(Exec::Sequential, &mut a);
        sort_unstable(Exec::Parallel, &mut b);
        assert_eq!(a, b);
    }
}
