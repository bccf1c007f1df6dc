//! Order-preserving batch map over a worker pool.
//!
//! With the `parallel` feature the batch runs on a dedicated rayon pool of the
//! requested size; without it (or with one worker) items run in index order on
//! the calling thread. Output order never depends on scheduling.

/// Number of workers to use when the caller asks for "all available".
pub fn available_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// `f(state, i)` for `i in 0..n`, where each worker builds its own `state` with
/// `init` (solver sessions are not shared between threads).
pub fn map_init<S, R, I, F>(n: usize, workers: usize, init: I, f: F) -> Vec<R>
where
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && n > 1 {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => return pool.install(|| (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect()),
            Err(e) => log::warn!("could not start a {workers}-thread pool ({e}); running sequentially"),
        }
    }
    let _ = workers;
    let mut state = init();
    (0..n).map(|i| f(&mut state, i)).collect()
}

pub fn map<R, F>(n: usize, workers: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    map_init(n, workers, || (), |_, i| f(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_for_any_worker_count() {
        let seq = map(100, 1, |i| i * i);
        for w in [2, 3, 8] {
            assert_eq!(map(100, w, |i| i * i), seq);
        }
    }

    #[test]
    fn state_is_per_worker() {
        let out = map_init(10, 2, Vec::<usize>::new, |s, i| {
            s.push(i);
            s.len()
        });
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|&k| k >= 1));
    }
}
