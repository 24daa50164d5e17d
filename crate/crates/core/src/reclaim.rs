//! Deferred reclamation for nodes unlinked from the lock-free structures.
//!
//! Backed by the global `crossbeam-epoch` collector: each participating thread
//! announces its epoch when it pins, and retired nodes are freed once every
//! thread that could still hold a reference has moved past the retiring epoch.
//!
//! Poison mode is a debugging aid. While it is on, retired allocations are not
//! returned to the allocator. Their bytes are overwritten with [`POISON_BYTE`]
//! and the memory is quarantined (leaked), so a traversal that touches a
//! reclaimed node reads an obviously invalid row instead of recycled data.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

pub use crossbeam_epoch::Guard;

pub const POISON_BYTE: u8 = 0xDE;
/// Row value observed when reading a poisoned node.
pub const POISON_ROW_U64: u64 = u64::from_ne_bytes([POISON_BYTE; 8]);
pub const POISON_ROW_U32: u32 = u32::from_ne_bytes([POISON_BYTE; 4]);

static POISON: AtomicBool = AtomicBool::new(false);
static RETIRED: AtomicU64 = AtomicU64::new(0);
static RECLAIMED: AtomicU64 = AtomicU64::new(0);

#[inline]
pub fn pin() -> Guard {
    crossbeam_epoch::pin()
}

pub fn set_poison_mode(on: bool) {
    POISON.store(on, Ordering::SeqCst);
}

pub fn poison_mode() -> bool {
    POISON.load(Ordering::Relaxed)
}

/// Process-wide count of (retired, reclaimed) nodes.
pub fn counters() -> (u64, u64) {
    (RETIRED.load(Ordering::Relaxed), RECLAIMED.load(Ordering::Relaxed))
}

struct SendPtr<T>(*mut T);
unsafe impl<T> Send for SendPtr<T> {}

/// Schedules `ptr` (obtained from `Box::into_raw`) for destruction once no
/// pinned thread can observe it.
///
/// # Safety
/// `ptr` must be unreachable from every shared structure, must not be retired
/// twice, and must have been allocated with `Box`.
pub unsafe fn retire<T>(guard: &Guard, ptr: *mut T) {
    RETIRED.fetch_add(1, Ordering::Relaxed);
    let p = SendPtr(ptr);
    guard.defer_unchecked(move || {
        let p = p;
        RECLAIMED.fetch_add(1, Ordering::Relaxed);
        if POISON.load(Ordering::Relaxed) {
            core::ptr::write_bytes(p.0 as *mut u8, POISON_BYTE, core::mem::size_of::<T>());
        } else {
            drop(Box::from_raw(p.0));
        }
    });
}

/// Pushes pending garbage of the calling thread towards collection.
pub fn flush() {
    pin().flush();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retired_boxes_are_eventually_reclaimed() {
        let (r0, _) = counters();
        for i in 0..1000u64 {
            let g = pin();
            unsafe { retire(&g, Box::into_raw(Box::new(i))) };
        }
        for _ in 0..64 {
            flush();
        }
        let (r1, c1) = counters();
        assert!(r1 - r0 >= 1000);
        assert!(c1 > 0);
    }
}
