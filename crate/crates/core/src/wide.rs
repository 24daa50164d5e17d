//! Double-width (128-bit) atomic cells.
//!
//! Every window descriptor and sub-stack descriptor in this crate is a plain
//! `u128` that is read and replaced as a unit. With the default build the cell
//! is a hardware 128-bit atomic (`cmpxchg16b` on x86-64, `casp` on aarch64).
//! With the `indirect-window` feature the cell instead holds a pointer to an
//! immutable heap record and swaps the pointer, which only needs single-word
//! atomics.

use core::sync::atomic::Ordering;

#[cfg(not(feature = "indirect-window"))]
mod imp {
    use super::Ordering;
    use portable_atomic::AtomicU128;

    pub struct WideCell(AtomicU128);

    impl WideCell {
        pub fn new(v: u128) -> Self {
            WideCell(AtomicU128::new(v))
        }

        #[inline]
        pub fn load(&self) -> u128 {
            self.0.load(Ordering::Acquire)
        }

        #[inline]
        pub fn compare_exchange(&self, current: u128, new: u128) -> Result<u128, u128> {
            self.0
                .compare_exchange(current, new, Ordering::AcqRel, Ordering::Acquire)
        }

        pub fn is_lock_free() -> bool {
            AtomicU128::is_lock_free()
        }
    }
}

#[cfg(feature = "indirect-window")]
mod imp {
    use super::Ordering;
    use crossbeam_epoch::{self as epoch, Atomic, Owned};

    pub struct WideCell(Atomic<u128>);

    impl WideCell {
        pub fn new(v: u128) -> Self {
            WideCell(Atomic::new(v))
        }

        #[inline]
        pub fn load(&self) -> u128 {
            let guard = epoch::pin();
            // SAFETY: the record is never null and is retired through the epoch.
            unsafe { *self.0.load(Ordering::Acquire, &guard).deref() }
        }

        pub fn compare_exchange(&self, current: u128, new: u128) -> Result<u128, u128> {
            let guard = epoch::pin();
            let mut fresh = Owned::new(new);
            loop {
                let cur = self.0.load(Ordering::Acquire, &guard);
                // SAFETY: as above.
                let seen = unsafe { *cur.deref() };
                if seen != current {
                    return Err(seen);
                }
                match self
                    .0
                    .compare_exchange(cur, fresh, Ordering::AcqRel, Ordering::Acquire, &guard)
                {
                    Ok(_) => {
                        // SAFETY: `cur` is unlinked and only reachable by pinned readers.
                        unsafe { guard.defer_destroy(cur) };
                        return Ok(seen);
                    }
                    Err(e) => fresh = e.new,
                }
            }
        }

        pub fn is_lock_free() -> bool {
            true
        }
    }

    impl Drop for WideCell {
        fn drop(&mut self) {
            // SAFETY: exclusive access on drop.
            unsafe {
                let g = epoch::unprotected();
                drop(self.0.load(Ordering::Relaxed, g).into_owned());
            }
        }
    }
}

pub use imp::WideCell;

impl core::fmt::Debug for WideCell {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "WideCell({:#034x})", self.load())
    }
}

/// Extracts `bits` bits of `word` starting at bit `shift`.
#[inline]
pub(crate) const fn field(word: u128, shift: u32, bits: u32) -> u128 {
    (word >> shift) & ((1u128 << bits) - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn compare_exchange_reports_current_on_failure() {
        let c = WideCell::new(1 << 100 | 7);
        assert_eq!(c.compare_exchange(3, 4), Err(1 << 100 | 7));
        assert_eq!(c.compare_exchange(1 << 100 | 7, u128::MAX), Ok(1 << 100 | 7));
        assert_eq!(c.load(), u128::MAX);
    }

    #[test]
    fn concurrent_increments_are_not_lost() {
        let c = Arc::new(WideCell::new(0));
        let hs: Vec<_> = (0..4)
            .map(|_| {
                let c = c.clone();
                std::thread::spawn(move || {
                    for _ in 0..10_000 {
                        let mut cur = c.load();
                        // bump both halves so a torn read would be visible
                        while let Err(seen) = c.compare_exchange(cur, cur + (1 << 64) + 1) {
                            cur = seen;
                        }
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
        let v = c.load();
        assert_eq!(v as u64, 40_000);
        assert_eq!((v >> 64) as u64, 40_000);
    }

    #[test]
    fn field_extraction() {
        let w: u128 = 0xABCD << 48 | 0x1234;
        assert_eq!(field(w, 48, 16), 0xABCD);
        assert_eq!(field(w, 0, 16), 0x1234);
    }
}
