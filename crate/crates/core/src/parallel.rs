//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) [`ExecPolicy::Parallel`] fans work
//! out over rayon; without it every policy runs sequentially. Results are
//! always returned in input order, so output never depends on scheduling.

/// Environment variable that caps the worker count.
pub const THREADS_ENV: &str = "FREQMARKET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

pub fn par_map<T, R, F>(items: &[T], policy: ExecPolicy, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match policy {
        #[cfg(feature = "parallel")]
        ExecPolicy::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Sizes the global pool from `FREQMARKET_THREADS`, if set. Call once,
/// before any parallel work; later calls are no-ops.
pub fn configure_threads() -> Option<usize> {
    let n: usize = std::env::var(THREADS_ENV).ok()?.trim().parse().ok()?;
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Some(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_and_keep_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = par_map(&xs, ExecPolicy::Sequential, |x| x * x);
        let b = par_map(&xs, ExecPolicy::Parallel, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[999], 999 * 999);
    }
}
