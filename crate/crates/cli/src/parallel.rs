//! Thread-pool plumbing. All parallel maps collect results in job order,
//! so any thread count produces output identical to `--threads 1`.

use rayon::prelude::*;

use ventric_core::net::BatchMap;

pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool");
        Pool { pool }
    }

    /// Ordered parallel map over an index range.
    pub fn map<T: Send>(&self, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
        self.pool
            .install(|| (0..jobs).into_par_iter().map(&f).collect())
    }
}

impl BatchMap for Pool {
    fn run<T: Send>(&self, jobs: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
        self.map(jobs, f)
    }
}
