//! Minimal scoped-thread fan-out. Output is always index-ordered, so results
//! are identical no matter how many workers run.

/// Worker count from `QRES_THREADS`; absent, unparsable, or zero means 1.
pub(crate) fn worker_count() -> usize {
    std::env::var("QRES_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

/// Evaluates `f(0..n)` and returns the results in index order. With one worker
/// this is a plain sequential map; otherwise indices are split into contiguous
/// chunks, one scoped thread per chunk, each writing into its own slice.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = worker_count().min(n.max(1));
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (ci, slots) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(f(ci * chunk + k));
                }
            });
        }
    });
    out.into_iter().map(|s| s.expect("every index filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_is_index_ordered() {
        let v = map_indexed(17, |i| i * i);
        assert_eq!(v, (0..17).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn empty_input_is_fine() {
        let v: Vec<usize> = map_indexed(0, |i| i);
        assert!(v.is_empty());
    }
}
