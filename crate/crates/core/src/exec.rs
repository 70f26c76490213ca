//! Data-parallel execution with a sequential fallback.
//!
//! Results are always collected by index, and callers reduce them in index
//! order, so outputs are identical for every thread count. Without the
//! `parallel` feature every `Exec` runs sequentially.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone)]
pub struct Exec {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Exec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Exec").field("threads", &self.threads).finish()
    }
}

impl Default for Exec {
    fn default() -> Self {
        let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Exec::with_threads(threads)
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Exec {
            threads: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `threads <= 1` gives the sequential executor.
    pub fn with_threads(threads: usize) -> Self {
        if threads <= 1 {
            return Exec::sequential();
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map(Arc::new)
                .ok();
            Exec { threads, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec { threads }
        }
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        {
            self.pool.is_some()
        }
        #[cfg(not(feature = "parallel"))]
        {
            false
        }
    }

    /// `(0..len).map(f).collect()`, possibly in parallel; output order is by index.
    pub fn map<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..len).into_par_iter().map(&f).collect());
        }
        (0..len).map(f).collect()
    }

    /// Like [`Exec::map`] over fixed-size chunks `[start, end)`, which keeps
    /// per-item overhead out of hot Monte Carlo loops.
    pub fn map_chunks<T, F>(&self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, usize) -> T + Sync + Send,
    {
        let chunk = chunk.max(1);
        let n_chunks = len.div_ceil(chunk);
        self.map(n_chunks, |c| {
            let start = c * chunk;
            f(start, (start + chunk).min(len))
        })
    }
}
