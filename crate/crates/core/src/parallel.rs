//! Per-item data parallelism with a sequential fallback.
//!
//! Results always come back in input order and every reduction downstream is
//! done sequentially over that order, so outputs are bit-identical whether
//! the work ran on one thread or many.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    /// Rayon's global pool. Falls back to sequential without the `parallel`
    /// feature.
    #[default]
    Threads,
}

impl Parallelism {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Threads
    }
}

pub fn map_indexed<I, R, F>(items: &[I], par: Parallelism, f: F) -> Vec<R>
where
    I: Sync,
    R: Send,
    F: Fn(usize, &I) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let _ = par;
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}
