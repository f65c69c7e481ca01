//! Deterministic parallel execution of Monte Carlo trials.
//!
//! Trial `i` always draws from `master.substream(i)` and results are
//! collected in index order, so the output never depends on how many
//! workers ran or how rayon scheduled them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Runs `f(i, stream_i)` for `i in 0..trials` and returns results in index order.
pub fn run_trials<T, F>(master: &RngStream, trials: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut s = master.substream(i as u64);
            f(i, &mut s)
        })
        .collect()
}

/// Fallible variant of [`run_trials`]; the first error in index order wins.
pub fn try_run_trials<T, F>(master: &RngStream, trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync,
{
    run_trials(master, trials, f).into_iter().collect()
}

/// Runs `op` on a dedicated pool of `workers` threads.
pub fn with_workers<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    Ok(pool.install(op))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let master = RngStream::new(42, 7);
        let run = |w| with_workers(w, || run_trials(&master, 1000, |_, s| s.standard_normal())).unwrap();
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(8));
    }
}
