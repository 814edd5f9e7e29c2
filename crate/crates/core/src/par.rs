//! Row-parallel execution helpers.
//!
//! Every kernel in this crate writes each output row from exactly one closure
//! call and accumulates within a row in a fixed order, so the sequential and
//! parallel paths produce bit-identical results. With the `parallel` feature
//! disabled only the sequential path exists.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many output values the parallel path falls back to sequential.
#[cfg(feature = "parallel")]
const PAR_MIN_LEN: usize = 4096;

/// How a kernel distributes its output rows. `Parallel` is the default when
/// the feature is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[default]
    Parallel,
}

/// Calls `f(row_index, row)` for each `width`-sized row of `out`.
pub(crate) fn for_each_row<F>(exec: Execution, out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if width == 0 || out.is_empty() {
        return;
    }
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel if out.len() >= PAR_MIN_LEN => {
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
        _ => {
            out.chunks_mut(width)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub(crate) fn map_ordered<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        Execution::Sequential => items.iter().map(f).collect(),
    }
}

/// Environment variable that caps worker threads.
pub const THREADS_ENV: &str = "RAWLSGNN_THREADS";

/// Reads [`THREADS_ENV`]; unset or empty means no cap.
pub fn threads_from_env() -> crate::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => crate::error::input_err(format!(
                "{THREADS_ENV} must be a positive integer, got '{v}'"
            )),
        },
        Err(_) => Ok(None),
    }
}

/// Caps the global worker pool at `threads`. Has no effect without the
/// `parallel` feature, and fails if the pool was already built.
pub fn init_thread_pool(threads: Option<usize>) -> crate::Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::Input(format!("cannot configure thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}
