//! Data-parallel batch helpers.
//!
//! The heavy loops (per-pair gradient evaluation, dataset synthesis, batch
//! inference and metric sweeps) fan out over rayon when the `parallel`
//! feature is enabled. Without the feature the same helpers degrade to plain
//! sequential iteration, and [`set_parallel`] lets benches toggle the two
//! paths at runtime for a like-for-like comparison.
//!
//! Outputs are always collected in input order, so results do not depend on
//! scheduling.

use std::sync::atomic::{AtomicBool, Ordering};

static PARALLEL: AtomicBool = AtomicBool::new(true);

/// Enable or disable the rayon path at runtime. No effect when the crate is
/// built without the `parallel` feature (everything is sequential then).
pub fn set_parallel(on: bool) {
    PARALLEL.store(on, Ordering::Relaxed);
}

/// Whether batch loops will actually run on rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && PARALLEL.load(Ordering::Relaxed)
}

/// Map `f` over `items`, preserving order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if PARALLEL.load(Ordering::Relaxed) {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving order.
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if PARALLEL.load(Ordering::Relaxed) {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let out = map_range(100, |i| i * i);
        assert_eq!(out, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn sequential_toggle_matches_parallel() {
        let data: Vec<u64> = (0..64).collect();
        let par = map_slice(&data, |x| x.wrapping_mul(2654435761).rotate_left(7));
        set_parallel(false);
        let seq = map_slice(&data, |x| x.wrapping_mul(2654435761).rotate_left(7));
        set_parallel(true);
        assert_eq!(par, seq);
    }
}
