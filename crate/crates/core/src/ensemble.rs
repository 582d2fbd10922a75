//! Parallel trial execution with results independent of scheduling.
//!
//! Trials run on a rayon pool. [`Harness::map`] returns results in trial
//! order; [`Harness::fold_chunks`] folds fixed trial ranges sequentially and
//! merges the partial states in chunk order, so floating-point reductions
//! are identical for any pool size.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{invalid, Result};

pub struct Harness {
    pool: rayon::ThreadPool,
}

impl Harness {
    /// `threads = None` uses the available cores.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return Err(invalid("threads", "must be at least 1"));
            }
            builder = builder.num_threads(t);
        }
        let pool = builder.build().map_err(|e| invalid("threads", e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn map<T, F>(&self, trials: Range<u64>, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.pool
            .install(|| trials.into_par_iter().map(&f).collect::<Result<Vec<T>>>())
    }

    pub fn fold_chunks<A, I, S, M>(&self, n_trials: u64, chunk: u64, init: I, step: S, merge: M) -> Result<A>
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        S: Fn(&mut A, u64) -> Result<()> + Sync + Send,
        M: Fn(&mut A, A),
    {
        let chunk = chunk.max(1);
        let n_chunks = n_trials.div_ceil(chunk);
        let parts = self.map(0..n_chunks, |c| {
            let mut acc = init();
            for t in c * chunk..((c + 1) * chunk).min(n_trials) {
                step(&mut acc, t)?;
            }
            Ok(acc)
        })?;
        let mut total = init();
        for part in parts {
            merge(&mut total, part);
        }
        Ok(total)
    }
}

impl Default for Harness {
    fn default() -> Self {
        Self::new(None).expect("default thread pool")
    }
}
