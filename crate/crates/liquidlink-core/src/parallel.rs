//! Deterministic fork-join helper.
//!
//! `map_ordered` applies a function to every item using up to `workers`
//! scoped threads, each taking one contiguous chunk, and returns results in
//! input order. Because reduction order is fixed by the input — never by
//! thread completion — callers get bit-identical results for any worker
//! count, which the reproducibility guarantees elsewhere rely on.

/// Map `f` over `items` on up to `workers` threads, preserving input order.
pub fn map_ordered<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let n = items.len();
    if workers <= 1 || n <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = n.div_ceil(workers.min(n));
    let mut out: Vec<R> = Vec::with_capacity(n);
    std::thread::scope(|scope| {
        let f = &f;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<R>>()))
            .collect();
        for handle in handles {
            out.extend(handle.join().expect("worker thread panicked"));
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn results_match_serial_execution_for_any_worker_count() {
        let items: Vec<u64> = (0..103).collect();
        let serial: Vec<u64> = items.iter().map(|&x| x * x + 1).collect();
        for workers in [1, 2, 3, 7, 16, 200] {
            let parallel = map_ordered(&items, workers, |&x| x * x + 1);
            assert_eq!(parallel, serial, "workers = {workers}");
        }
    }

    #[test]
    fn every_item_is_visited_exactly_once() {
        let items: Vec<usize> = (0..50).collect();
        let visits = AtomicUsize::new(0);
        let out = map_ordered(&items, 4, |&x| {
            visits.fetch_add(1, Ordering::SeqCst);
            x
        });
        assert_eq!(visits.load(Ordering::SeqCst), 50);
        assert_eq!(out, items);
    }

    #[test]
    fn empty_and_single_inputs_are_handled() {
        let empty: Vec<i32> = Vec::new();
        assert!(map_ordered(&empty, 8, |&x| x).is_empty());
        assert_eq!(map_ordered(&[42], 8, |&x| x + 1), vec![43]);
    }

    #[test]
    fn order_is_preserved_even_when_early_chunks_finish_last() {
        let items: Vec<u64> = (0..12).collect();
        let out = map_ordered(&items, 4, |&x| {
            if x < 3 {
                // First chunk sleeps so later chunks complete first.
                std::thread::sleep(std::time::Duration::from_millis(30));
            }
            x
        });
        assert_eq!(out, items);
    }
}
