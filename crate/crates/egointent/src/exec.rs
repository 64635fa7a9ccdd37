//! Data-parallel map helpers with a sequential fallback.
//!
//! Every bulk stage in the pipeline (per-frame label synthesis, per-sample
//! gradients, per-image evaluation) maps an independent function over a
//! slice and then reduces the results in index order. The map runs on a
//! rayon pool when the `parallel` feature is enabled and on the calling
//! thread otherwise; because collection preserves input order and all
//! reductions happen afterwards in a fixed order, both modes produce
//! bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order.
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map `f` over `0..n`, preserving order.
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Human-readable name of the active execution mode, used by benches.
pub fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}
