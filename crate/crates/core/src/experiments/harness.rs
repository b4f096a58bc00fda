//! Trial-level parallelism with seed-ordered results.

use crate::error::Result;
use crate::rng;

/// Seed of trial `i` in grid cell `(width, depth)`.
pub fn cell_trial_seed(master: u64, width: usize, depth: usize, trial: usize) -> u64 {
    rng::trial_seed(master, rng::cell_label(width, depth), trial as u64)
}

/// Runs `f(0), ..., f(trials - 1)` on up to `workers` threads and returns the
/// results in index order. The first failing index (in index order, not in
/// completion order) decides the error.
pub fn run_trials<T, F>(workers: usize, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let out: Vec<Result<T>> = map_ordered(workers, trials, f);
    out.into_iter().collect()
}

#[cfg(feature = "parallel")]
fn map_ordered<T, F>(workers: usize, trials: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || trials <= 1 {
        return (0..trials).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..trials).into_par_iter().map(&f).collect()),
        // could not spawn threads: same results, just slower
        Err(_) => (0..trials).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, F>(_workers: usize, trials: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..trials).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn order_is_index_order() {
        let v = run_trials(4, 100, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn first_error_in_index_order_wins() {
        let r: Result<Vec<usize>> = run_trials(4, 50, |i| {
            if i % 7 == 3 {
                Err(Error::Domain(format!("trial {i}")))
            } else {
                Ok(i)
            }
        });
        assert_eq!(r.unwrap_err(), Error::Domain("trial 3".into()));
    }

    #[test]
    fn seeds_differ_by_cell_and_trial() {
        let a = cell_trial_seed(42, 8, 2, 0);
        assert_ne!(a, cell_trial_seed(42, 8, 2, 1));
        assert_ne!(a, cell_trial_seed(42, 2, 8, 0));
        assert_ne!(a, cell_trial_seed(43, 8, 2, 0));
    }
}
