//! Row-tagged Treiber stack: one lane of the 2D stack.
//!
//! The lane descriptor packs the top pointer, the top row `N_j` and a stamp
//! into one 128-bit word so a pop reads the top and its row consistently.
//!
//! ```text
//!  127        96 95        64 63                     0
//! +------------+------------+------------------------+
//! |   stamp    |  top row   |      top pointer       |
//! +------------+------------+------------------------+
//! ```

use core::mem::MaybeUninit;

use crossbeam_epoch::Guard;

use crate::reclaim;
use crate::wide::{field, WideCell};

pub(crate) struct StackNode<T, G> {
    value: MaybeUninit<T>,
    pub(crate) row: u32,
    pub(crate) tag: G,
    next: *mut StackNode<T, G>,
}

impl<T, G: Default> StackNode<T, G> {
    pub(crate) fn new(value: T, row: u32) -> Box<Self> {
        Box::new(StackNode {
            value: MaybeUninit::new(value),
            row,
            tag: G::default(),
            next: core::ptr::null_mut(),
        })
    }
}

/// Decoded lane descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneDescriptor {
    pub(crate) top: usize,
    /// `N_j`: row of the top node, 0 when the lane is empty.
    pub rows: u32,
    pub stamp: u32,
}

impl LaneDescriptor {
    #[inline]
    pub fn pack(self) -> u128 {
        self.top as u64 as u128 | (self.rows as u128) << 64 | (self.stamp as u128) << 96
    }

    #[inline]
    pub fn unpack(w: u128) -> Self {
        LaneDescriptor {
            top: field(w, 0, 64) as usize,
            rows: field(w, 64, 32) as u32,
            stamp: field(w, 96, 32) as u32,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.top == 0
    }
}

/// A strict LIFO lane. Each push and pop bumps the stamp, so the stamp
/// returned by an operation totally orders the operations of one lane.
pub struct SubStack<T, G = ()> {
    desc: WideCell,
    _marker: core::marker::PhantomData<Box<StackNode<T, G>>>,
}

unsafe impl<T: Send, G: Send> Send for SubStack<T, G> {}
unsafe impl<T: Send, G: Send + Sync> Sync for SubStack<T, G> {}

impl<T, G: Default + Copy> Default for SubStack<T, G> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T, G: Default + Copy> SubStack<T, G> {
    pub fn new() -> Self {
        SubStack {
            desc: WideCell::new(LaneDescriptor { top: 0, rows: 0, stamp: 0 }.pack()),
            _marker: core::marker::PhantomData,
        }
    }

    #[inline]
    pub fn descriptor(&self) -> LaneDescriptor {
        LaneDescriptor::unpack(self.desc.load())
    }

    /// Pushes `node` on top of the observed descriptor with `N_j <- row`.
    /// Linearization point of a push. Returns the new stamp.
    pub(crate) fn try_push(
        &self,
        seen: LaneDescriptor,
        mut node: Box<StackNode<T, G>>,
    ) -> Result<u32, Box<StackNode<T, G>>> {
        node.next = seen.top as *mut StackNode<T, G>;
        let row = node.row;
        let raw = Box::into_raw(node);
        let new = LaneDescriptor { top: raw as usize, rows: row, stamp: seen.stamp.wrapping_add(1) };
        match self.desc.compare_exchange(seen.pack(), new.pack()) {
            Ok(_) => Ok(new.stamp),
            // SAFETY: never published.
            Err(_) => Err(unsafe { Box::from_raw(raw) }),
        }
    }

    /// Pops the observed top with `N_j <-` the row of the node below.
    /// Linearization point of a pop. Returns `(value, row, tag, stamp)` with
    /// the stamp the pop installed.
    pub(crate) fn try_pop(&self, seen: LaneDescriptor, guard: &Guard) -> Option<(T, u32, G, u32)> {
        if seen.is_empty() {
            return None;
        }
        let top = seen.top as *mut StackNode<T, G>;
        // SAFETY: `top` was reachable when `seen` was read under `guard`.
        let (next, row, tag) = unsafe { ((*top).next, (*top).row, (*top).tag) };
        debug_assert_ne!(row, reclaim::POISON_ROW_U32, "read reclaimed node");
        let next_rows = if next.is_null() { 0 } else { unsafe { (*next).row } };
        let new = LaneDescriptor { top: next as usize, rows: next_rows, stamp: seen.stamp.wrapping_add(1) };
        match self.desc.compare_exchange(seen.pack(), new.pack()) {
            Ok(_) => {
                // SAFETY: the winning pop owns the payload; the node is unlinked.
                let value = unsafe { (*top).value.assume_init_read() };
                unsafe { reclaim::retire(guard, top) };
                Some((value, row, tag, new.stamp))
            }
            Err(_) => None,
        }
    }

    /// Strict push retrying until it lands. Returns the stamp of the push.
    pub fn push(&self, value: T, row: u32) -> u32 {
        let mut node = StackNode::new(value, row);
        loop {
            let seen = self.descriptor();
            match self.try_push(seen, node) {
                Ok(s) => return s,
                Err(n) => node = n,
            }
        }
    }

    /// Strict pop. Returns `(value, row, stamp)`.
    pub fn pop(&self) -> Option<(T, u32, u32)> {
        let guard = reclaim::pin();
        loop {
            let seen = self.descriptor();
            if seen.is_empty() {
                return None;
            }
            if let Some((v, r, _, s)) = self.try_pop(seen, &guard) {
                return Some((v, r, s));
            }
        }
    }

    /// Visits `(row, tag)` of resident items from the top down. Requires
    /// external exclusion of pops (oracle lock or quiescence).
    pub(crate) fn for_each_resident(&self, _guard: &Guard, mut f: impl FnMut(u32, &G)) {
        let mut cur = self.descriptor().top as *const StackNode<T, G>;
        while !cur.is_null() {
            // SAFETY: protected by the guard and the caller's exclusion.
            let n = unsafe { &*cur };
            f(n.row, &n.tag);
            cur = n.next;
        }
    }

    pub fn len(&self) -> usize {
        let guard = reclaim::pin();
        let mut n = 0;
        self.for_each_resident(&guard, |_, _| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        self.descriptor().is_empty()
    }
}

impl<T, G> Drop for SubStack<T, G> {
    fn drop(&mut self) {
        let mut cur = LaneDescriptor::unpack(self.desc.load()).top as *mut StackNode<T, G>;
        while !cur.is_null() {
            // SAFETY: exclusive access on drop; every linked node owns a value.
            let mut b = unsafe { Box::from_raw(cur) };
            cur = b.next;
            unsafe { b.value.assume_init_drop() };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use parking_lot::Mutex;
    use std::sync::Arc;

    #[test]
    fn lifo_and_rows() {
        let s: SubStack<&str> = SubStack::new();
        s.push("a", 2);
        s.push("b", 4);
        assert_eq!(s.descriptor().rows, 4);
        assert_eq!(s.pop().map(|(v, r, _)| (v, r)), Some(("b", 4)));
        assert_eq!(s.descriptor().rows, 2);
        assert_eq!(s.pop().map(|(v, r, _)| (v, r)), Some(("a", 2)));
        assert_eq!(s.descriptor().rows, 0);
    }

    #[test]
    fn pop_empty_keeps_zero_rows() {
        let s: SubStack<u8> = SubStack::new();
        assert!(s.pop().is_none());
        assert_eq!(s.descriptor().rows, 0);
        assert!(s.is_empty());
    }

    #[test]
    fn descriptor_packing_round_trips() {
        let d = LaneDescriptor { top: 0x7fff_dead_beef, rows: u32::MAX - 3, stamp: 17 };
        assert_eq!(LaneDescriptor::unpack(d.pack()), d);
    }

    #[test]
    fn drop_releases_remaining_payloads() {
        let marker = Arc::new(());
        {
            let s: SubStack<Arc<()>> = SubStack::new();
            for r in 1..=4 {
                s.push(marker.clone(), r);
            }
        }
        assert_eq!(Arc::strong_count(&marker), 1);
    }

    /// Every step runs under a global lock next to a `Vec` shadow; `N_j`
    /// must equal the shadow's top row after each step.
    #[test]
    fn rows_track_top_under_shadow_serialization() {
        let s: Arc<SubStack<u64>> = Arc::new(SubStack::new());
        let shadow: Arc<Mutex<Vec<(u64, u32)>>> = Arc::new(Mutex::new(Vec::new()));
        let hs: Vec<_> = (0..4u64)
            .map(|t| {
                let s = s.clone();
                let shadow = shadow.clone();
                std::thread::spawn(move || {
                    use rand::{Rng, SeedableRng};
                    let mut rng = rand::rngs::SmallRng::seed_from_u64(t);
                    for i in 0..3000u64 {
                        let mut sh = shadow.lock();
                        if rng.gen_bool(0.55) {
                            let row = sh.last().map_or(0, |x| x.1) + 1 + rng.gen_range(0..2);
                            s.push(t << 32 | i, row);
                            sh.push((t << 32 | i, row));
                        } else {
                            let got = s.pop().map(|(v, r, _)| (v, r));
                            assert_eq!(got, sh.pop());
                        }
                        assert_eq!(s.descriptor().rows, sh.last().map_or(0, |x| x.1));
                    }
                })
            })
            .collect();
        for h in hs {
            h.join().unwrap();
        }
    }

    #[test]
    fn stamps_totally_order_lane_operations() {
        let s: Arc<SubStack<u64>> = Arc::new(SubStack::new());
        let hs: Vec<_> = (0..4u64)
            .map(|t| {
                let s = s.clone();
                std::thread::spawn(move || {
                    let mut log = Vec::new();
                    for i in 0..2000u64 {
                        let v = t << 32 | i;
                        log.push((s.push(v, 1), Some(v), true));
                        if let Some((v, _, st)) = s.pop() {
                            log.push((st, Some(v), false));
                        }
                    }
                    log
                })
            })
            .collect();
        let mut all: Vec<(u32, Option<u64>, bool)> =
            hs.into_iter().flat_map(|h| h.join().unwrap()).collect();
        all.sort_by_key(|e| e.0);
        // replay in stamp order against a sequential stack
        let mut replay = Vec::new();
        for (i, (stamp, v, is_push)) in all.iter().enumerate() {
            assert_eq!(*stamp as usize, i + 1);
            if *is_push {
                replay.push(v.unwrap());
            } else {
                assert_eq!(replay.pop(), *v);
            }
        }
    }
}
