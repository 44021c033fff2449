use rayon::prelude::*;

use crate::{Error, Result};

/// Runs per-agent work either inline or on a private thread pool. Each
/// agent's computation is independent, so both paths give identical bits.
pub(crate) struct Exec {
    pool: Option<rayon::ThreadPool>,
}

impl Exec {
    pub(crate) fn sequential() -> Self {
        Exec { pool: None }
    }

    pub(crate) fn with_threads(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Exec::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
        Ok(Exec { pool: Some(pool) })
    }

    pub(crate) fn map<T, R, F>(&self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(usize, &mut T) -> R + Sync,
    {
        match &self.pool {
            None => items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect(),
            Some(pool) => pool.install(|| items.par_iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()),
        }
    }
}
