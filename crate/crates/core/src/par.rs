//! Worker-count aware map over slices.
//!
//! With the `parallel` feature the work runs on a rayon pool; without it, or
//! when a single worker is requested, it runs on the calling thread. Output
//! order always matches input order.

use std::num::NonZeroUsize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// A dedicated pool with exactly this many workers.
    Workers(NonZeroUsize),
    /// The global rayon pool.
    #[default]
    Auto,
}

impl Parallelism {
    /// `0` means [`Parallelism::Auto`], `1` sequential.
    pub fn from_hint(hint: usize) -> Self {
        match hint {
            0 => Parallelism::Auto,
            1 => Parallelism::Sequential,
            n => Parallelism::Workers(NonZeroUsize::new(n).unwrap()),
        }
    }

    /// Worker count this setting resolves to on this build.
    pub fn effective_workers(self) -> usize {
        if !cfg!(feature = "parallel") {
            return 1;
        }
        match self {
            Parallelism::Sequential => 1,
            Parallelism::Workers(n) => n.get(),
            Parallelism::Auto => std::thread::available_parallelism().map_or(1, NonZeroUsize::get),
        }
    }
}

#[cfg(feature = "parallel")]
pub(crate) fn map<T, R, F>(parallelism: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match parallelism {
        Parallelism::Sequential => items.iter().map(f).collect(),
        Parallelism::Auto => items.par_iter().map(f).collect(),
        Parallelism::Workers(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.get()).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(err) => {
                log::warn!("falling back to sequential execution: {err}");
                items.iter().map(f).collect()
            }
        },
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<T, R, F>(_parallelism: Parallelism, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
