//! Data-parallel helpers. With the `parallel` feature off, or when the caller
//! asks for sequential execution, everything runs on the calling thread.
//! Results always come back in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `items`, in parallel when `parallel` is set and available.
pub(crate) fn map<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && items.len() > 1 {
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Index of the first item (in input order) satisfying `pred`.
pub(crate) fn find_first<T, F>(items: &[T], parallel: bool, pred: F) -> Option<usize>
where
    T: Sync,
    F: Fn(&T) -> bool + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        return items.par_iter().position_first(pred);
    }
    let _ = parallel;
    items.iter().position(pred)
}

/// Whether this build can run anything in parallel.
pub fn available() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u32> = (0..1000).collect();
        assert_eq!(map(&xs, true, |x| x * 2), map(&xs, false, |x| x * 2));
        assert_eq!(find_first(&xs, true, |x| x % 97 == 96), Some(96));
    }
}
