use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use ssr_core::select::Executor;

/// Executor backed by a dedicated rayon pool.
pub struct Workers {
    pool: ThreadPool,
}

impl Workers {
    /// `n = 0` uses one thread per available core.
    pub fn new(n: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = ThreadPoolBuilder::new().num_threads(n).build()?;
        Ok(Workers { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Workers {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }
}
