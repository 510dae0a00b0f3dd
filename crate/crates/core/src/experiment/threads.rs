//! Deterministic fan-out over test samples.
//!
//! Work items map to results in index order regardless of the worker
//! count, so parallel runs are byte-identical to serial ones. The
//! `AMBIENT_THREADS` environment variable caps the workers.

use std::sync::atomic::{AtomicUsize, Ordering};

pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var("AMBIENT_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Apply `f` to every index in order-preserving fashion across worker
/// threads; results come back indexed.
pub fn parallel_map<R: Send>(count: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let workers = worker_count().min(count.max(1));
    if workers <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..count).map(|_| None).collect();
    let slots_ptr = SlotWriter(slots.as_mut_ptr());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let fref = &f;
            let nref = &next;
            let writer = &slots_ptr;
            scope.spawn(move || loop {
                let idx = nref.fetch_add(1, Ordering::Relaxed);
                if idx >= count {
                    break;
                }
                let out = fref(idx);
                // each index is claimed exactly once, so the write is
                // race-free
                unsafe {
                    *writer.0.add(idx) = Some(out);
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("all slots filled")).collect()
}

struct SlotWriter<R>(*mut Option<R>);
unsafe impl<R: Send> Sync for SlotWriter<R> {}
