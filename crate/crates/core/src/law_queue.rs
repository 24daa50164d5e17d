//! Elastic Lateral-as-Window 2D queue.
//!
//! The Lateral is a Michael-Scott queue of immutable window records. Its head
//! record is the dequeue window and its last record the enqueue window; a tail
//! shift appends a record built from the current targets, a head shift
//! unlinks the head record once every lane has been drained past it.

use core::sync::atomic::Ordering::{AcqRel, Acquire, Relaxed, Release};

use crossbeam_epoch::{Atomic, Guard, Owned, Shared};
use crossbeam_utils::CachePadded;

use crate::api::{Handle, Order, Placement, Relaxed as RelaxedApi, Removed, Snapshot};
use crate::probe::{Insertion, Ledger, NoProbe, Probe, Removal, ShiftRecord, WindowMark};
use crate::reclaim;
use crate::substrate::{lanes, Front, QueueNode, SubQueue};
use crate::window::{
    insert_row, row_valid_insert, HopReason, RelaxationTarget, Stats, WindowView, DEFAULT_MAX_WIDTH,
};

struct LawWindow {
    max: u64,
    depth: u32,
    width: u32,
    next: Atomic<LawWindow>,
}

impl LawWindow {
    fn view(&self) -> WindowView {
        WindowView { max: self.max, depth: self.depth, width: self.width }
    }
}

fn mark(v: WindowView) -> WindowMark {
    WindowMark { max: v.max, depth: v.depth, width: v.width, version: v.max }
}

pub struct LawQueue<T, P: Probe = NoProbe> {
    lanes: Box<[CachePadded<SubQueue<T, P::Tag>>]>,
    lat_head: CachePadded<Atomic<LawWindow>>,
    lat_tail: CachePadded<Atomic<LawWindow>>,
    targets: RelaxationTarget,
    stats: Stats,
    probe: P,
}

unsafe impl<T: Send, P: Probe> Send for LawQueue<T, P> {}
unsafe impl<T: Send, P: Probe> Sync for LawQueue<T, P> {}

impl<T> LawQueue<T> {
    /// Builds a queue with `max_width` lanes and a first window
    /// `{max: depth, depth, width}`.
    pub fn new(max_width: usize, width: usize, depth: u32) -> Self {
        Self::with_probe(max_width, width, depth, NoProbe)
    }
}

impl<T> Default for LawQueue<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_WIDTH, 1, 1)
    }
}

impl<T, P: Probe> LawQueue<T, P> {
    pub fn with_probe(max_width: usize, width: usize, depth: u32, probe: P) -> Self {
        let targets = RelaxationTarget::new(max_width, width, depth, 1);
        let (w, d) = targets.get();
        let first = Owned::new(LawWindow { max: d as u64, depth: d, width: w as u32, next: Atomic::null() });
        // SAFETY: not yet shared.
        let first = first.into_shared(unsafe { crossbeam_epoch::unprotected() });
        let q = LawQueue {
            lanes: lanes(targets.max_width()),
            lat_head: CachePadded::new(Atomic::null()),
            lat_tail: CachePadded::new(Atomic::null()),
            targets,
            stats: Stats::default(),
            probe,
        };
        q.lat_head.store(first, Relaxed);
        q.lat_tail.store(first, Relaxed);
        let view = unsafe { first.deref() }.view();
        q.probe.serialized(|l| l.shifted(ShiftRecord { window: mark(view) }));
        q
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }

    /// Last Lateral record, swinging a lagging tail pointer first.
    fn tail_window<'g>(&self, guard: &'g Guard) -> Shared<'g, LawWindow> {
        loop {
            let t = self.lat_tail.load(Acquire, guard);
            // SAFETY: Lateral records are protected by the guard.
            let next = unsafe { t.deref() }.next.load(Acquire, guard);
            if next.is_null() {
                return t;
            }
            let _ = self.lat_tail.compare_exchange(t, next, Release, Relaxed, guard);
        }
    }

    pub fn tail_view(&self) -> WindowView {
        let guard = reclaim::pin();
        unsafe { self.tail_window(&guard).deref() }.view()
    }

    pub fn head_view(&self) -> WindowView {
        let guard = reclaim::pin();
        unsafe { self.lat_head.load(Acquire, &guard).deref() }.view()
    }

    /// Number of window records in the Lateral.
    pub fn lateral_len(&self) -> usize {
        let guard = reclaim::pin();
        let mut n = 0;
        let mut cur = self.lat_head.load(Acquire, &guard);
        while let Some(w) = unsafe { cur.as_ref() } {
            n += 1;
            cur = w.next.load(Acquire, &guard);
        }
        n
    }

    /// Appends a window after `old` if `old` is still the last record.
    /// Returns whether this call appended.
    fn shift_tail<'g>(&self, old: Shared<'g, LawWindow>, guard: &'g Guard) -> bool {
        Stats::bump(&self.stats.shifts_attempted);
        // SAFETY: protected by guard.
        let o = unsafe { old.deref() };
        let (width, depth) = self.targets.get();
        let max = o.max.checked_add(depth as u64).expect("row counter overflow");
        let new = Owned::new(LawWindow { max, depth, width: width as u32, next: Atomic::null() });
        let view = new.view();
        let done = self.probe.serialized(|l| {
            match o.next.compare_exchange(Shared::null(), new, AcqRel, Acquire, guard) {
                Ok(n) => {
                    l.shifted(ShiftRecord { window: mark(view) });
                    Some(n)
                }
                Err(_) => None,
            }
        });
        match done {
            Some(n) => {
                let _ = self.lat_tail.compare_exchange(old, n, Release, Relaxed, guard);
                Stats::bump(&self.stats.shifts_succeeded);
                true
            }
            None => false,
        }
    }

    /// Unlinks `head` from the Lateral if it is still the head record and
    /// has a successor.
    fn shift_head<'g>(&self, head: Shared<'g, LawWindow>, guard: &'g Guard) -> bool {
        Stats::bump(&self.stats.shifts_attempted);
        let next = unsafe { head.deref() }.next.load(Acquire, guard);
        if next.is_null() {
            return false;
        }
        let ok = self.probe.serialized(|_| {
            self.lat_head.compare_exchange(head, next, AcqRel, Acquire, guard).is_ok()
        });
        if ok {
            Stats::bump(&self.stats.shifts_succeeded);
            // SAFETY: unlinked, and the tail pointer was already swung past
            // it by the `tail_window` call that preceded this shift.
            unsafe { reclaim::retire(guard, head.as_raw() as *mut LawWindow) };
        }
        ok
    }

    pub fn enqueue_with(&self, h: &mut Handle, value: T) -> Placement {
        let guard = reclaim::pin();
        let mut node = QueueNode::<T, P::Tag>::new(value, 0);
        'retry: loop {
            let tail = self.tail_window(&guard);
            let view = unsafe { tail.deref() }.view();
            let width = view.width as usize;
            let mut scan = h.cursor.scan(width);
            while let Some(lane) = scan.next() {
                let q = &self.lanes[lane];
                let top = q.top(&guard);
                if !row_valid_insert(&view, top.row) {
                    continue;
                }
                let row = insert_row(&view, top.row);
                node.row = row;
                let res = self.probe.serialized(|l| {
                    if P::ACTIVE {
                        let now = unsafe { self.tail_window(&guard).deref() }.view();
                        node.tag = l.admit(Insertion { lane, row, window: mark(now) });
                    }
                    let tag = node.tag;
                    let r = q.try_append(&top, node, &guard);
                    if r.is_ok() {
                        l.inserted(&tag);
                        if l.wants_live_audit() {
                            l.live_audit(self.residents(&guard));
                        }
                    }
                    r
                });
                match res {
                    Ok(()) => {
                        h.observe(true, &self.targets, || (view.max, width));
                        h.cursor.set(lane);
                        return Placement { lane, row, stamp: 0 };
                    }
                    Err(n) => {
                        node = n;
                        h.observe(false, &self.targets, || (view.max, width));
                        h.cursor.set(lane);
                        h.cursor.next_lane(width, HopReason::Contention);
                        Stats::bump(&self.stats.contention_hops);
                        continue 'retry;
                    }
                }
            }
            Stats::bump(&self.stats.full_scans_failed);
            self.shift_tail(tail, &guard);
        }
    }

    pub fn dequeue_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        let guard = reclaim::pin();
        'retry: loop {
            let head = self.lat_head.load(Acquire, &guard);
            // Read before the scan: once the tail has moved on, every lane
            // in the head width was filled to its max, so a failed scan
            // afterwards really has drained the head window.
            let tail = self.tail_window(&guard);
            let view = unsafe { head.deref() }.view();
            let width = view.width as usize;
            let mut scan = h.cursor.scan(width);
            while let Some(lane) = scan.next() {
                let q = &self.lanes[lane];
                let front = q.front(&guard);
                let Front::Item { row, .. } = front else { continue };
                if row > view.max {
                    continue;
                }
                debug_assert!(row > view.min(), "item at row {row} below head window {view:?}");
                let res = self.probe.serialized(|l| {
                    let r = q.try_take(&front, &guard);
                    if let Some((_, _, tag)) = &r {
                        let now = unsafe { self.lat_head.load(Acquire, &guard).deref() }.view();
                        l.removed(tag, Removal { lane, row, window: mark(now) });
                        if l.wants_live_audit() {
                            let live = self.residents(&guard);
                            l.live_audit(live);
                        }
                    }
                    r
                });
                let tail_of = || {
                    let g = reclaim::pin();
                    let t = unsafe { self.tail_window(&g).deref() }.view();
                    (t.max, t.width as usize)
                };
                match res {
                    Some((value, row, _)) => {
                        h.observe(true, &self.targets, tail_of);
                        h.cursor.set(lane);
                        return Some(Removed { value, lane, row, stamp: 0 });
                    }
                    None => {
                        h.observe(false, &self.targets, tail_of);
                        h.cursor.set(lane);
                        h.cursor.next_lane(width, HopReason::Contention);
                        Stats::bump(&self.stats.contention_hops);
                        continue 'retry;
                    }
                }
            }
            Stats::bump(&self.stats.full_scans_failed);
            if tail != head {
                self.shift_head(head, &guard);
                continue;
            }
            if self.confirm_empty(head, width, &guard) {
                return None;
            }
        }
    }

    /// Two identical collects of the Lateral endpoints and every lane head of
    /// the single remaining window, all lanes empty. The second collect runs
    /// serialized so the oracle sees the empty return at a quiet point.
    fn confirm_empty<'g>(&self, head: Shared<'g, LawWindow>, width: usize, guard: &'g Guard) -> bool {
        let collect = || -> Option<Vec<usize>> {
            if self.lat_head.load(Acquire, guard) != head {
                return None;
            }
            if !unsafe { head.deref() }.next.load(Acquire, guard).is_null() {
                return None;
            }
            let mut heads = Vec::with_capacity(width);
            for q in &self.lanes[..width] {
                let f = q.front(guard);
                if let Front::Item { .. } = f {
                    return None;
                }
                heads.push(f.head_addr());
            }
            Some(heads)
        };
        let Some(first) = collect() else { return false };
        self.probe.serialized(|l| {
            let second = collect();
            if second.as_ref() == Some(&first) {
                l.empty_returned();
                true
            } else {
                false
            }
        })
    }

    /// Tags of every resident item. Needs the oracle lock or quiescence.
    fn residents(&self, guard: &Guard) -> Vec<P::Tag> {
        let mut v = Vec::new();
        for q in self.lanes.iter() {
            q.for_each_resident(guard, |_, t| v.push(*t));
        }
        v
    }

    pub fn enqueue(&self, value: T) -> Placement {
        crate::api::with_default_handle(|h| self.enqueue_with(h, value))
    }

    pub fn dequeue(&self) -> Option<T> {
        crate::api::with_default_handle(|h| self.dequeue_with(h)).map(|r| r.value)
    }

    pub fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    pub fn snapshot(&self) -> Snapshot {
        let head = self.head_view();
        Snapshot {
            insert_window: self.tail_view(),
            remove_window: head,
            version: 0,
            bound_k: (head.width as u64 - 1) * head.depth as u64,
            lateral_len: self.lateral_len(),
            stats: self.stats.snapshot(),
        }
    }

    pub fn len(&self) -> usize {
        self.lanes.iter().map(|q| q.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.iter().all(|q| q.is_empty())
    }
}

impl<T, P: Probe> Drop for LawQueue<T, P> {
    fn drop(&mut self) {
        // SAFETY: exclusive access; every record still linked is owned here.
        unsafe {
            let g = crossbeam_epoch::unprotected();
            let mut cur = self.lat_head.load(Relaxed, g);
            while !cur.is_null() {
                let next = cur.deref().next.load(Relaxed, g);
                drop(cur.into_owned());
                cur = next;
            }
        }
    }
}

impl<T: Send, P: Probe> RelaxedApi<T> for LawQueue<T, P> {
    const ORDER: Order = Order::Fifo;

    fn insert_with(&self, h: &mut Handle, value: T) -> Placement {
        self.enqueue_with(h, value)
    }

    fn remove_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        self.dequeue_with(h)
    }

    fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    fn snapshot(&self) -> Snapshot {
        LawQueue::snapshot(self)
    }

    fn len(&self) -> usize {
        LawQueue::len(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_enqueue_lands_on_row_one() {
        let q: LawQueue<u32> = LawQueue::new(8, 2, 4);
        let mut h = Handle::new(1);
        let p = q.enqueue_with(&mut h, 7);
        assert_eq!(p.row, 1);
        assert!(p.lane < 2);
        assert_eq!(q.tail_view(), WindowView { max: 4, depth: 4, width: 2 });
    }

    #[test]
    fn single_item_then_empty() {
        let q: LawQueue<u32> = LawQueue::new(8, 2, 3);
        q.enqueue(5);
        assert_eq!(q.dequeue(), Some(5));
        assert_eq!(q.dequeue(), None);
    }

    #[test]
    fn shift_tail_uses_targets() {
        let q: LawQueue<u32> = LawQueue::new(8, 2, 4);
        q.targets().set_width(3);
        q.targets().set_depth(2);
        let mut h = Handle::new(3);
        for i in 0..9 {
            q.enqueue_with(&mut h, i);
        }
        assert_eq!(q.tail_view(), WindowView { max: 6, depth: 2, width: 3 });
        assert_eq!(q.lateral_len(), 2);
    }

    #[test]
    fn unchanged_targets_translate_by_depth() {
        let q: LawQueue<u32> = LawQueue::new(8, 2, 4);
        let mut h = Handle::new(3);
        for i in 0..17 {
            q.enqueue_with(&mut h, i);
        }
        assert_eq!(q.tail_view(), WindowView { max: 12, depth: 4, width: 2 });
    }

    #[test]
    fn head_follows_tail_records() {
        let q: LawQueue<u32> = LawQueue::new(8, 2, 2);
        let mut h = Handle::new(5);
        for i in 0..5 {
            q.enqueue_with(&mut h, i);
        }
        assert_eq!(q.lateral_len(), 2);
        for _ in 0..4 {
            assert!(q.dequeue_with(&mut h).is_some());
        }
        assert_eq!(q.head_view().max, 2);
        q.dequeue_with(&mut h).unwrap();
        assert_eq!(q.head_view().max, 4);
        assert_eq!(q.lateral_len(), 1);
        assert!(q.dequeue_with(&mut h).is_none());
    }

    #[test]
    fn strict_configuration_is_fifo() {
        let q: LawQueue<u32> = LawQueue::new(8, 1, 1);
        for i in 0..100 {
            q.enqueue(i);
        }
        for i in 0..100 {
            assert_eq!(q.dequeue(), Some(i));
        }
        assert_eq!(q.dequeue(), None);
    }

    #[test]
    fn drop_with_residents() {
        let marker = std::sync::Arc::new(());
        {
            let q = LawQueue::new(4, 4, 4);
            for _ in 0..50 {
                q.enqueue(marker.clone());
            }
        }
        assert_eq!(std::sync::Arc::strong_count(&marker), 1);
    }
}
