//! Order-preserving map over independent work items.
//!
//! The parallel path (rayon, `parallel` feature, on by default) and the
//! sequential path produce identical output vectors, so sweeps and paired
//! experiments stay reproducible either way. `map_items_seq` is always
//! compiled; benches compare the two directly.

/// Sequential reference implementation.
pub fn map_items_seq<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_items_par<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// Map over items, in parallel when the `parallel` feature is enabled.
pub fn map_items<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R + Sync + Send,
    T: Send,
    R: Send,
{
    #[cfg(feature = "parallel")]
    {
        map_items_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_items_seq(items, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let xs: Vec<u64> = (0..257).collect();
        let out = map_items(xs.clone(), |x| x * 3);
        let reference = map_items_seq(xs, |x| x * 3);
        assert_eq!(out, reference);
    }
}
