//! Row-tagged Michael-Scott queue: one lane of the 2D queues.

use core::mem::MaybeUninit;
use core::sync::atomic::Ordering::{AcqRel, Acquire, Relaxed, Release};

use crossbeam_epoch::{Atomic, Guard, Owned, Shared};
use crossbeam_utils::CachePadded;

use crate::reclaim;

pub(crate) struct QueueNode<T, G> {
    value: MaybeUninit<T>,
    pub(crate) row: u64,
    pub(crate) tag: G,
    next: Atomic<QueueNode<T, G>>,
}

impl<T, G: Default> QueueNode<T, G> {
    pub(crate) fn new(value: T, row: u64) -> Owned<Self> {
        Owned::new(QueueNode {
            value: MaybeUninit::new(value),
            row,
            tag: G::default(),
            next: Atomic::null(),
        })
    }

    fn sentinel(row: u64) -> Owned<Self> {
        Owned::new(QueueNode {
            value: MaybeUninit::uninit(),
            row,
            tag: G::default(),
            next: Atomic::null(),
        })
    }
}

/// Last node of a lane as observed by [`SubQueue::top`].
pub(crate) struct LaneTop<'g, T, G> {
    node: Shared<'g, QueueNode<T, G>>,
    /// Row of the newest item, or of the sentinel when the lane is drained.
    pub(crate) row: u64,
}

/// Oldest item of a lane as observed by [`SubQueue::front`].
pub(crate) enum Front<'g, T, G> {
    Empty {
        head: Shared<'g, QueueNode<T, G>>,
    },
    Item {
        head: Shared<'g, QueueNode<T, G>>,
        next: Shared<'g, QueueNode<T, G>>,
        row: u64,
    },
}

impl<'g, T, G> Front<'g, T, G> {
    pub(crate) fn head_addr(&self) -> usize {
        match self {
            Front::Empty { head, .. } | Front::Item { head, .. } => head.as_raw() as usize,
        }
    }
}

/// A strict FIFO lane whose nodes carry a strictly increasing row.
///
/// Always holds a sentinel node; the sentinel keeps the row of the last
/// removed item so an empty lane still knows how far it has been filled.
pub struct SubQueue<T, G = ()> {
    head: CachePadded<Atomic<QueueNode<T, G>>>,
    tail: CachePadded<Atomic<QueueNode<T, G>>>,
}

unsafe impl<T: Send, G: Send> Send for SubQueue<T, G> {}
unsafe impl<T: Send, G: Send + Sync> Sync for SubQueue<T, G> {}

impl<T, G: Default + Copy> Default for SubQueue<T, G> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T, G: Default + Copy> SubQueue<T, G> {
    pub fn new() -> Self {
        let q = SubQueue {
            head: CachePadded::new(Atomic::null()),
            tail: CachePadded::new(Atomic::null()),
        };
        // SAFETY: not yet shared.
        let s = QueueNode::sentinel(0).into_shared(unsafe { crossbeam_epoch::unprotected() });
        q.head.store(s, Relaxed);
        q.tail.store(s, Relaxed);
        q
    }

    /// Reads the last node, first swinging a lagging tail forward.
    pub(crate) fn top<'g>(&self, guard: &'g Guard) -> LaneTop<'g, T, G> {
        loop {
            let tail = self.tail.load(Acquire, guard);
            // SAFETY: nodes reachable from the lane are protected by `guard`.
            let t = unsafe { tail.deref() };
            let next = t.next.load(Acquire, guard);
            if next.is_null() {
                debug_assert_ne!(t.row, reclaim::POISON_ROW_U64, "read reclaimed node");
                return LaneTop { node: tail, row: t.row };
            }
            let _ = self.tail.compare_exchange(tail, next, Release, Relaxed, guard);
        }
    }

    /// Links `node` after the observed top. This is the enqueue linearization
    /// point. Returns the node back if another enqueue got there first.
    pub(crate) fn try_append<'g>(
        &self,
        top: &LaneTop<'g, T, G>,
        node: Owned<QueueNode<T, G>>,
        guard: &'g Guard,
    ) -> Result<(), Owned<QueueNode<T, G>>> {
        debug_assert!(node.row > top.row, "rows must increase along a lane");
        // SAFETY: protected by guard.
        let t = unsafe { top.node.deref() };
        match t.next.compare_exchange(Shared::null(), node, AcqRel, Acquire, guard) {
            Ok(new) => {
                let _ = self.tail.compare_exchange(top.node, new, Release, Relaxed, guard);
                Ok(())
            }
            Err(e) => Err(e.new),
        }
    }

    pub(crate) fn front<'g>(&self, guard: &'g Guard) -> Front<'g, T, G> {
        let head = self.head.load(Acquire, guard);
        // SAFETY: protected by guard.
        let h = unsafe { head.deref() };
        let next = h.next.load(Acquire, guard);
        match unsafe { next.as_ref() } {
            None => Front::Empty { head },
            Some(n) => {
                debug_assert_ne!(n.row, reclaim::POISON_ROW_U64, "read reclaimed node");
                Front::Item { head, next, row: n.row }
            }
        }
    }

    /// Unlinks the observed front item. This is the dequeue linearization
    /// point. `None` means the head moved since `front` was read.
    pub(crate) fn try_take<'g>(
        &self,
        front: &Front<'g, T, G>,
        guard: &'g Guard,
    ) -> Option<(T, u64, G)> {
        let Front::Item { head, next, row } = *front else {
            return None;
        };
        // Keep the tail from pointing at a node we are about to retire.
        let tail = self.tail.load(Acquire, guard);
        if tail == head {
            let _ = self.tail.compare_exchange(tail, next, Release, Relaxed, guard);
        }
        match self.head.compare_exchange(head, next, AcqRel, Acquire, guard) {
            Ok(_) => {
                // SAFETY: winning the head exchange grants exclusive ownership
                // of `next`'s payload; the old sentinel is now unreachable.
                unsafe {
                    let n = next.deref();
                    let value = n.value.assume_init_read();
                    let tag = n.tag;
                    reclaim::retire(guard, head.as_raw() as *mut QueueNode<T, G>);
                    Some((value, row, tag))
                }
            }
            Err(_) => None,
        }
    }

    /// Strict enqueue that retries until linked. Returns the number of failed
    /// link attempts.
    pub fn enqueue(&self, value: T, row: u64) -> usize {
        let guard = reclaim::pin();
        let mut node = QueueNode::new(value, row);
        let mut failures = 0;
        loop {
            let top = self.top(&guard);
            assert!(row > top.row, "row {row} not above lane top {}", top.row);
            match self.try_append(&top, node, &guard) {
                Ok(()) => return failures,
                Err(n) => {
                    node = n;
                    failures += 1;
                }
            }
        }
    }

    pub fn dequeue(&self) -> Option<(T, u64)> {
        let guard = reclaim::pin();
        loop {
            let f = self.front(&guard);
            if let Front::Empty { .. } = f {
                return None;
            }
            if let Some((v, row, _)) = self.try_take(&f, &guard) {
                return Some((v, row));
            }
        }
    }

    /// Row of the newest item (or of the sentinel when empty).
    pub fn top_row(&self) -> u64 {
        let guard = reclaim::pin();
        self.top(&guard).row
    }

    pub fn is_empty(&self) -> bool {
        let guard = reclaim::pin();
        matches!(self.front(&guard), Front::Empty { .. })
    }

    /// Visits `(row, tag)` of every resident item, oldest first. Only
    /// meaningful when no concurrent removal runs (oracle lock or quiescence).
    pub(crate) fn for_each_resident(&self, guard: &Guard, mut f: impl FnMut(u64, &G)) {
        let head = self.head.load(Acquire, guard);
        // SAFETY: protected by guard.
        let mut cur = unsafe { head.deref() }.next.load(Acquire, guard);
        while let Some(n) = unsafe { cur.as_ref() } {
            f(n.row, &n.tag);
            cur = n.next.load(Acquire, guard);
        }
    }

    pub fn len(&self) -> usize {
        let guard = reclaim::pin();
        let mut n = 0;
        self.for_each_resident(&guard, |_, _| n += 1);
        n
    }
}

impl<T, G> Drop for SubQueue<T, G> {
    fn drop(&mut self) {
        // SAFETY: exclusive access; the first node is the sentinel whose
        // payload is absent, every later node owns its payload.
        unsafe {
            let g = crossbeam_epoch::unprotected();
            let mut cur = self.head.load(Relaxed, g);
            let mut first = true;
            while !cur.is_null() {
                let next = cur.deref().next.load(Relaxed, g);
                let mut b = cur.into_owned().into_box();
                if !first {
                    b.value.assume_init_drop();
                }
                first = false;
                cur = next;
            }
        }
    }
}
