//! Elastic Lateral-plus-Window 2D queue.
//!
//! Head and tail windows are separate 128-bit words, so each side changes
//! depth on its own. Width changes only at the tail and are announced one
//! shift early through `next_width`; the shifter first appends a
//! `{row, width}` node to the Lateral queue, and the head adopts the width
//! when it reaches that row.
//!
//! ```text
//! tail word  127    112 111     96 95      80 79      64 63           0
//!           +--------+-----------+----------+----------+--------------+
//!           | unused | next_width|  width   |  depth   |     max      |
//!           +--------+-----------+----------+----------+--------------+
//! head word  same layout with next_width unused
//! ```

use core::sync::atomic::Ordering::{AcqRel, Acquire, Relaxed, Release};

use crossbeam_epoch::{Atomic, Guard, Owned, Shared};
use crossbeam_utils::CachePadded;

use crate::api::{Handle, Order, Placement, Relaxed as RelaxedApi, Removed, Snapshot};
use crate::probe::{Check, Insertion, Ledger, NoProbe, Probe, Removal, ShiftRecord, WindowMark};
use crate::reclaim;
use crate::substrate::{lanes, Front, QueueNode, SubQueue};
use crate::wide::{field, WideCell};
use crate::window::{
    insert_row, row_valid_insert, HopReason, RelaxationTarget, Stats, WindowView, DEFAULT_MAX_WIDTH,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct TailWindow {
    pub max: u64,
    pub depth: u16,
    pub width: u16,
    pub next_width: u16,
}

impl TailWindow {
    pub fn pack(self) -> u128 {
        self.max as u128
            | (self.depth as u128) << 64
            | (self.width as u128) << 80
            | (self.next_width as u128) << 96
    }

    pub fn unpack(w: u128) -> Self {
        TailWindow {
            max: field(w, 0, 64) as u64,
            depth: field(w, 64, 16) as u16,
            width: field(w, 80, 16) as u16,
            next_width: field(w, 96, 16) as u16,
        }
    }

    pub fn view(&self) -> WindowView {
        WindowView { max: self.max, depth: self.depth as u32, width: self.width as u32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct HeadWindow {
    pub max: u64,
    pub depth: u16,
    pub width: u16,
}

impl HeadWindow {
    pub fn pack(self) -> u128 {
        self.max as u128 | (self.depth as u128) << 64 | (self.width as u128) << 80
    }

    pub fn unpack(w: u128) -> Self {
        HeadWindow {
            max: field(w, 0, 64) as u64,
            depth: field(w, 64, 16) as u16,
            width: field(w, 80, 16) as u16,
        }
    }

    pub fn view(&self) -> WindowView {
        WindowView { max: self.max, depth: self.depth as u32, width: self.width as u32 }
    }
}

/// First row at which `width` applies.
struct WidthNode {
    row: u64,
    width: u16,
    next: Atomic<WidthNode>,
}

fn mark(v: WindowView) -> WindowMark {
    WindowMark { max: v.max, depth: v.depth, width: v.width, version: v.max }
}

/// Fault switches for mutation tests of the oracle.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default)]
pub struct Faults {
    pub skip_sync_tail: bool,
}

pub struct LpwQueue<T, P: Probe = NoProbe> {
    lanes: Box<[CachePadded<SubQueue<T, P::Tag>>]>,
    tail: CachePadded<WideCell>,
    head: CachePadded<WideCell>,
    /// Sentinel-headed Michael-Scott queue of width changes.
    lat_head: CachePadded<Atomic<WidthNode>>,
    lat_tail: CachePadded<Atomic<WidthNode>>,
    targets: RelaxationTarget,
    /// Depth target of the head window; `targets` carries the tail depth.
    head_targets: RelaxationTarget,
    stats: Stats,
    faults: Faults,
    probe: P,
}

unsafe impl<T: Send, P: Probe> Send for LpwQueue<T, P> {}
unsafe impl<T: Send, P: Probe> Sync for LpwQueue<T, P> {}

impl<T> LpwQueue<T> {
    /// Builds a queue whose first head and tail windows are both
    /// `{max: depth, depth, width}`.
    pub fn new(max_width: usize, width: usize, depth: u32) -> Self {
        Self::with_probe(max_width, width, depth, NoProbe)
    }
}

impl<T> Default for LpwQueue<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_WIDTH, 1, 1)
    }
}

impl<T, P: Probe> LpwQueue<T, P> {
    pub fn with_probe(max_width: usize, width: usize, depth: u32, probe: P) -> Self {
        let targets = RelaxationTarget::new(max_width, width, depth, 1);
        let head_targets = RelaxationTarget::new(max_width, width, depth, 1);
        let (w, d) = targets.get();
        let tail = TailWindow { max: d as u64, depth: d as u16, width: w as u16, next_width: w as u16 };
        let head = HeadWindow { max: d as u64, depth: d as u16, width: w as u16 };
        let sentinel = Owned::new(WidthNode { row: 0, width: w as u16, next: Atomic::null() });
        // SAFETY: not yet shared.
        let sentinel = sentinel.into_shared(unsafe { crossbeam_epoch::unprotected() });
        let q = LpwQueue {
            lanes: lanes(targets.max_width()),
            tail: CachePadded::new(WideCell::new(tail.pack())),
            head: CachePadded::new(WideCell::new(head.pack())),
            lat_head: CachePadded::new(Atomic::null()),
            lat_tail: CachePadded::new(Atomic::null()),
            targets,
            head_targets,
            stats: Stats::default(),
            faults: Faults::default(),
            probe,
        };
        q.lat_head.store(sentinel, Relaxed);
        q.lat_tail.store(sentinel, Relaxed);
        q.probe.serialized(|l| l.shifted(ShiftRecord { window: mark(tail.view()) }));
        q
    }

    #[doc(hidden)]
    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }

    pub fn tail_window(&self) -> TailWindow {
        TailWindow::unpack(self.tail.load())
    }

    pub fn head_window(&self) -> HeadWindow {
        HeadWindow::unpack(self.head.load())
    }

    /// Sets the depth used by future head shifts only.
    pub fn set_head_depth(&self, d: u32) -> u32 {
        self.head_targets.set_depth(d)
    }

    /// Sets the depth used by future tail shifts only.
    pub fn set_tail_depth(&self, d: u32) -> u32 {
        self.targets.set_depth(d)
    }

    /// `(row, width)` of every pending width change, oldest first.
    pub fn lateral(&self) -> Vec<(u64, u16)> {
        let guard = reclaim::pin();
        let mut out = Vec::new();
        let s = self.lat_head.load(Acquire, &guard);
        let mut cur = unsafe { s.deref() }.next.load(Acquire, &guard);
        while let Some(n) = unsafe { cur.as_ref() } {
            out.push((n.row, n.width));
            cur = n.next.load(Acquire, &guard);
        }
        out
    }

    fn lateral_tail<'g>(&self, guard: &'g Guard) -> Shared<'g, WidthNode> {
        loop {
            let t = self.lat_tail.load(Acquire, guard);
            // SAFETY: Lateral nodes are protected by the guard.
            let next = unsafe { t.deref() }.next.load(Acquire, guard);
            if next.is_null() {
                return t;
            }
            let _ = self.lat_tail.compare_exchange(t, next, Release, Relaxed, guard);
        }
    }

    /// Appends `{old.max + 1, old.next_width}` unless a node past `old.max`
    /// is already there.
    fn sync_tail(&self, old: TailWindow, guard: &Guard) {
        let row = old.max + 1;
        let mut node = Owned::new(WidthNode { row, width: old.next_width, next: Atomic::null() });
        loop {
            let t = self.lateral_tail(guard);
            // SAFETY: protected by guard.
            let tn = unsafe { t.deref() };
            if tn.row > old.max {
                return;
            }
            let res = self.probe.serialized(|l| {
                if l.wants(Check::HeadBelowLateral) {
                    let h = self.head_window();
                    l.check(Check::HeadBelowLateral, h.max < row, &|| {
                        format!("head max {} not below lateral row {row}", h.max)
                    });
                }
                tn.next.compare_exchange(Shared::null(), node, AcqRel, Acquire, guard)
            });
            match res {
                Ok(n) => {
                    let _ = self.lat_tail.compare_exchange(t, n, Release, Relaxed, guard);
                    return;
                }
                Err(e) => node = e.new,
            }
        }
    }

    fn shift_tail(&self, old: TailWindow, guard: &Guard) -> bool {
        Stats::bump(&self.stats.shifts_attempted);
        if old.width != old.next_width && !self.faults.skip_sync_tail {
            self.sync_tail(old, guard);
        }
        let (width, depth) = self.targets.get();
        let new = TailWindow {
            width: old.next_width,
            next_width: width as u16,
            depth: depth as u16,
            max: old.max.checked_add(depth as u64).expect("row counter overflow"),
        };
        let ok = self.probe.serialized(|l| {
            let ok = self.tail.compare_exchange(old.pack(), new.pack()).is_ok();
            if ok {
                l.shifted(ShiftRecord { window: mark(new.view()) });
            }
            ok
        });
        if ok {
            Stats::bump(&self.stats.shifts_succeeded);
        }
        ok
    }

    /// Advances the head window over rows already drained. Returns false if
    /// the head has caught up with the tail or lost a race.
    /// `tail` must have been read before the scan that found the head
    /// window drained; a tail read afterwards can cover enqueues that landed
    /// in the head window behind the scan.
    fn shift_head(&self, old: HeadWindow, tail: TailWindow, guard: &Guard) -> bool {
        Stats::bump(&self.stats.shifts_attempted);
        if old.max >= tail.max {
            return false;
        }
        // drop width changes at or below the current head window
        let mut first;
        loop {
            let s = self.lat_head.load(Acquire, guard);
            first = unsafe { s.deref() }.next.load(Acquire, guard);
            match unsafe { first.as_ref() } {
                Some(n) if n.row <= old.max => {
                    if self.lat_head.compare_exchange(s, first, AcqRel, Acquire, guard).is_ok() {
                        // SAFETY: the old sentinel is unlinked; the tail pointer is
                        // past it because `first` follows it.
                        let _ = self.lat_tail.compare_exchange(s, first, Release, Relaxed, guard);
                        unsafe { reclaim::retire(guard, s.as_raw() as *mut WidthNode) };
                    }
                }
                _ => break,
            }
        }
        let depth = self.head_targets.depth() as u64;
        let mut max = tail.max.min(old.max + depth);
        let mut width = old.width;
        let mut pending = first;
        if let Some(n) = unsafe { pending.as_ref() } {
            if n.row == old.max + 1 {
                width = n.width;
                pending = n.next.load(Acquire, guard);
            }
        }
        // the window must end below the next change so it spans one width
        if let Some(n) = unsafe { pending.as_ref() } {
            if n.row <= max {
                max = n.row - 1;
            }
        }
        if max <= old.max {
            return false;
        }
        let new = HeadWindow { max, depth: (max - old.max) as u16, width };
        let ok = self.probe.serialized(|l| {
            let ok = self.head.compare_exchange(old.pack(), new.pack()).is_ok();
            if ok {
                l.shifted(ShiftRecord { window: mark(new.view()) });
            }
            ok
        });
        if ok {
            Stats::bump(&self.stats.shifts_succeeded);
        }
        ok
    }

    pub fn enqueue_with(&self, h: &mut Handle, value: T) -> Placement {
        let guard = reclaim::pin();
        let mut node = QueueNode::<T, P::Tag>::new(value, 0);
        'retry: loop {
            let tw = self.tail_window();
            let view = tw.view();
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
                        let now = self.tail_window().view();
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
            self.shift_tail(tw, &guard);
        }
    }

    pub fn dequeue_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        let guard = reclaim::pin();
        'retry: loop {
            let hw = self.head_window();
            let tw_before = self.tail_window();
            let view = hw.view();
            let width = view.width as usize;
            let mut scan = h.cursor.scan(width);
            while let Some(lane) = scan.next() {
                let q = &self.lanes[lane];
                let front = q.front(&guard);
                // rows at or below the head min are still valid: a lane left
                // short by an earlier head window can be topped up later
                let Front::Item { row, .. } = front else { continue };
                if row > view.max {
                    continue;
                }
                let res = self.probe.serialized(|l| {
                    let r = q.try_take(&front, &guard);
                    if let Some((_, _, tag)) = &r {
                        let now = self.head_window().view();
                        l.removed(tag, Removal { lane, row, window: mark(now) });
                        if l.wants_live_audit() {
                            let live = self.residents(&guard);
                            l.live_audit(live);
                        }
                    }
                    r
                });
                let tail_of = || {
                    let t = self.tail_window();
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
            if self.shift_head(hw, tw_before, &guard) {
                continue;
            }
            if self.head.load() != hw.pack() {
                continue;
            }
            let tw = self.tail_window();
            if tw.max == hw.max && self.confirm_empty(hw, tw, &guard) {
                return None;
            }
        }
    }

    /// Double collect: both window words unchanged and every lane that either
    /// window covers empty with the same head node, twice.
    fn confirm_empty(&self, hw: HeadWindow, tw: TailWindow, guard: &Guard) -> bool {
        let width = hw.width.max(tw.width) as usize;
        let collect = || -> Option<Vec<usize>> {
            if self.head.load() != hw.pack() || self.tail.load() != tw.pack() {
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
            if collect().as_ref() == Some(&first) {
                l.empty_returned();
                true
            } else {
                false
            }
        })
    }

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
        let t = self.tail_window();
        let hw = self.head_window();
        let w = t.width.max(hw.width) as u64;
        Snapshot {
            insert_window: t.view(),
            remove_window: hw.view(),
            version: 0,
            bound_k: (w - 1) * (t.depth as u64 + hw.depth as u64).saturating_sub(1),
            lateral_len: self.lateral().len(),
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

impl<T, P: Probe> Drop for LpwQueue<T, P> {
    fn drop(&mut self) {
        // SAFETY: exclusive access.
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

impl<T: Send, P: Probe> RelaxedApi<T> for LpwQueue<T, P> {
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
        LpwQueue::snapshot(self)
    }

    fn len(&self) -> usize {
        LpwQueue::len(self)
    }

    fn set_depth(&self, d: u32) -> u32 {
        self.head_targets.set_depth(d);
        self.targets.set_depth(d)
    }

    fn set_head_depth(&self, d: u32) -> u32 {
        LpwQueue::set_head_depth(self, d)
    }

    fn set_tail_depth(&self, d: u32) -> u32 {
        LpwQueue::set_tail_depth(self, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn queue_at(tail: TailWindow, head: HeadWindow) -> LpwQueue<u32> {
        let q = LpwQueue::new(16, head.width as usize, head.depth as u32);
        q.tail.compare_exchange(q.tail.load(), tail.pack()).unwrap();
        q.head.compare_exchange(q.head.load(), head.pack()).unwrap();
        q
    }

    fn push_lateral(q: &LpwQueue<u32>, row: u64, width: u16) {
        let guard = reclaim::pin();
        let t = q.lateral_tail(&guard);
        let n = Owned::new(WidthNode { row, width, next: Atomic::null() });
        let n = unsafe { t.deref() }.next.compare_exchange(Shared::null(), n, AcqRel, Acquire, &guard);
        q.lat_tail.store(n.ok().unwrap(), Release);
    }

    #[test]
    fn sync_tail_appends_next_width_above_max() {
        let q = queue_at(
            TailWindow { max: 10, depth: 5, width: 4, next_width: 6 },
            HeadWindow { max: 5, depth: 5, width: 4 },
        );
        push_lateral(&q, 8, 4);
        let guard = reclaim::pin();
        q.sync_tail(q.tail_window(), &guard);
        assert_eq!(q.lateral(), vec![(8, 4), (11, 6)]);
        // already appended: no-op
        q.sync_tail(q.tail_window(), &guard);
        assert_eq!(q.lateral(), vec![(8, 4), (11, 6)]);
    }

    #[test]
    fn shift_tail_delays_width_by_one_shift() {
        let q = queue_at(
            TailWindow { max: 10, depth: 5, width: 4, next_width: 4 },
            HeadWindow { max: 5, depth: 5, width: 4 },
        );
        q.targets.set_width(6);
        q.targets.set_depth(5);
        let guard = reclaim::pin();
        assert!(q.shift_tail(q.tail_window(), &guard));
        assert_eq!(q.tail_window(), TailWindow { max: 15, depth: 5, width: 4, next_width: 6 });
        assert!(q.lateral().is_empty());
        assert!(q.shift_tail(q.tail_window(), &guard));
        assert_eq!(q.tail_window(), TailWindow { max: 20, depth: 5, width: 6, next_width: 6 });
        assert_eq!(q.lateral(), vec![(16, 6)]);
    }

    #[test]
    fn width_oscillation_leaves_two_nodes() {
        let q: LpwQueue<u32> = LpwQueue::new(16, 4, 5);
        let guard = reclaim::pin();
        q.targets.set_width(6);
        q.shift_tail(q.tail_window(), &guard);
        q.targets.set_width(4);
        q.shift_tail(q.tail_window(), &guard);
        q.shift_tail(q.tail_window(), &guard);
        q.shift_tail(q.tail_window(), &guard);
        // windows: (5,10] w4, (10,15] w6, (15,20] w4
        assert_eq!(q.lateral(), vec![(11, 6), (16, 4)]);
    }

    #[test]
    fn shift_head_plain() {
        let q = queue_at(
            TailWindow { max: 20, depth: 5, width: 4, next_width: 4 },
            HeadWindow { max: 10, depth: 5, width: 4 },
        );
        q.set_head_depth(3);
        let guard = reclaim::pin();
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert_eq!(q.head_window(), HeadWindow { max: 13, depth: 3, width: 4 });
    }

    #[test]
    fn shift_head_adopts_width_at_first_row() {
        let q = queue_at(
            TailWindow { max: 20, depth: 5, width: 6, next_width: 6 },
            HeadWindow { max: 10, depth: 5, width: 4 },
        );
        push_lateral(&q, 11, 6);
        q.set_head_depth(5);
        let guard = reclaim::pin();
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert_eq!(q.head_window(), HeadWindow { max: 15, depth: 5, width: 6 });
    }

    #[test]
    fn shift_head_stops_below_next_change() {
        let q = queue_at(
            TailWindow { max: 20, depth: 5, width: 6, next_width: 6 },
            HeadWindow { max: 10, depth: 5, width: 4 },
        );
        push_lateral(&q, 14, 6);
        q.set_head_depth(5);
        let guard = reclaim::pin();
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert_eq!(q.head_window(), HeadWindow { max: 13, depth: 3, width: 4 });
        // the stale node is dropped once the head passes it
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert_eq!(q.head_window(), HeadWindow { max: 18, depth: 5, width: 6 });
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert!(q.lateral().is_empty());
    }

    #[test]
    fn shift_head_never_passes_tail() {
        let q = queue_at(
            TailWindow { max: 12, depth: 5, width: 4, next_width: 4 },
            HeadWindow { max: 10, depth: 5, width: 4 },
        );
        q.set_head_depth(5);
        let guard = reclaim::pin();
        assert!(q.shift_head(q.head_window(), q.tail_window(), &guard));
        assert_eq!(q.head_window().max, 12);
        assert!(!q.shift_head(q.head_window(), q.tail_window(), &guard));
    }

    #[test]
    fn strict_configuration_is_fifo() {
        let q: LpwQueue<u32> = LpwQueue::new(8, 1, 1);
        for i in 0..100 {
            q.enqueue(i);
        }
        for i in 0..100 {
            assert_eq!(q.dequeue(), Some(i));
        }
        assert_eq!(q.dequeue(), None);
    }

    #[test]
    fn width_change_reaches_head() {
        let q: LpwQueue<u32> = LpwQueue::new(16, 2, 2);
        let mut h = Handle::new(2);
        q.targets.set_width(5);
        for i in 0..200 {
            q.enqueue_with(&mut h, i);
        }
        let mut got = Vec::new();
        while let Some(r) = q.dequeue_with(&mut h) {
            got.push(r.value);
        }
        got.sort_unstable();
        assert_eq!(got, (0..200).collect::<Vec<_>>());
        assert_eq!(q.head_window().width, 5);
        assert_eq!(q.tail_window().width, 5);
    }

    proptest! {
        #[test]
        fn tail_packing_round_trips(max: u64, depth: u16, width: u16, next_width: u16) {
            let w = TailWindow { max, depth, width, next_width };
            prop_assert_eq!(TailWindow::unpack(w.pack()), w);
        }

        #[test]
        fn head_packing_round_trips(max: u64, depth: u16, width: u16) {
            let w = HeadWindow { max, depth, width };
            prop_assert_eq!(HeadWindow::unpack(w.pack()), w);
        }
    }
}
