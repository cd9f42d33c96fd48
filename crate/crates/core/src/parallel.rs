//! Worker pool shared by the per-image stages.
//!
//! `FVPAD_THREADS` caps the number of workers; 0 or unset means "let rayon
//! pick". All parallel loops in this crate either map per-image work into an
//! order-preserving collect or reduce partial sums in a fixed order, so
//! results do not depend on the worker count.

use std::sync::OnceLock;

static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

pub fn pool() -> &'static rayon::ThreadPool {
    POOL.get_or_init(|| {
        let threads = std::env::var("FVPAD_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build worker pool")
    })
}
