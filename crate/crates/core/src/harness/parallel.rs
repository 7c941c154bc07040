//! Order-preserving parallel map, capped by `PUSHOPT_THREADS`.
//!
//! `PUSHOPT_THREADS=0` runs everything on the calling thread. Results are
//! always collected in input order, so output never depends on scheduling.

pub const THREADS_ENV: &str = "PUSHOPT_THREADS";

/// `None` means "use the default pool".
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok()
}

#[cfg(feature = "parallel")]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    use std::sync::OnceLock;

    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    match thread_cap() {
        Some(0) => items.iter().map(f).collect(),
        Some(k) => {
            let pool = POOL.get_or_init(|| {
                rayon::ThreadPoolBuilder::new().num_threads(k).build().ok()
            });
            match pool {
                Some(p) => p.install(|| items.par_iter().map(&f).collect()),
                None => items.iter().map(f).collect(),
            }
        }
        None => items.par_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
