//! Data-parallel helpers. Without the `parallel` feature every
//! [`Execution`] runs sequentially.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Parallel only when the crate is built with rayon.
    pub fn effective(self) -> Execution {
        if cfg!(feature = "parallel") {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Sizes the global worker pool (0 keeps one worker per core) and returns
/// the execution mode to use. One worker means sequential.
pub fn configure_workers(workers: usize) -> Execution {
    if workers == 1 {
        return Execution::Sequential;
    }
    #[cfg(feature = "parallel")]
    if workers > 1 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::debug!("worker pool already initialised: {e}");
        }
    }
    Execution::Parallel.effective()
}

/// Order-preserving map.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec.effective() {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}
