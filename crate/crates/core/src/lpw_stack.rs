//! Elastic Lateral-plus-Window 2D stack.
//!
//! One window word moves up on full pushes and down on empty pops, by half
//! its depth. Pushes use `push_width` lanes; pops use `pop_width`, the widest
//! width any row above the window bottom may have been pushed with. The
//! Lateral is a stack of `{row, width}` bounds that is stabilized (lowered and
//! extended) once per window version before that window may shift.
//!
//! ```text
//!  127      97  96  95         80 79       64 63        48 47     32 31      0
//! +----------+----+-------------+-----------+------------+---------+---------+
//! | version  |dir | last_push_w | pop_width | push_width |  depth  |   max   |
//! +----------+----+-------------+-----------+------------+---------+---------+
//! ```

use crossbeam_epoch::Guard;
use crossbeam_utils::CachePadded;

use crate::api::{Handle, Order, Placement, Relaxed as RelaxedApi, Removed, Snapshot};
use crate::probe::{Check, Insertion, Ledger, NoProbe, Probe, Removal, ShiftRecord, WindowMark};
use crate::reclaim;
use crate::substrate::{lanes, StackNode, SubStack};
use crate::wide::{field, WideCell};
use crate::window::{HopReason, RelaxationTarget, Stats, WindowView, DEFAULT_MAX_WIDTH};

pub const VERSION_MASK: u32 = (1 << 31) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shift {
    Up,
    Down,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackWindow {
    pub max: u32,
    pub depth: u16,
    pub push_width: u16,
    pub pop_width: u16,
    pub last_push_width: u16,
    pub last_shift: Shift,
    /// 31 bits, wrapping.
    pub version: u32,
}

impl StackWindow {
    pub fn pack(self) -> u128 {
        self.max as u128
            | (self.depth as u128) << 32
            | (self.push_width as u128) << 48
            | (self.pop_width as u128) << 64
            | (self.last_push_width as u128) << 80
            | ((self.last_shift == Shift::Down) as u128) << 96
            | ((self.version & VERSION_MASK) as u128) << 97
    }

    pub fn unpack(w: u128) -> Self {
        StackWindow {
            max: field(w, 0, 32) as u32,
            depth: field(w, 32, 16) as u16,
            push_width: field(w, 48, 16) as u16,
            pop_width: field(w, 64, 16) as u16,
            last_push_width: field(w, 80, 16) as u16,
            last_shift: if field(w, 96, 1) == 1 { Shift::Down } else { Shift::Up },
            version: field(w, 97, 31) as u32,
        }
    }

    #[inline]
    pub fn min(&self) -> u32 {
        self.max - self.depth as u32
    }

    #[inline]
    pub fn shift(&self) -> u32 {
        self.depth as u32 / 2
    }

    pub fn view(&self) -> WindowView {
        WindowView { max: self.max as u64, depth: self.depth as u32, width: self.push_width as u32 }
    }

    fn mark(&self) -> WindowMark {
        WindowMark {
            max: self.max as u64,
            depth: self.depth as u32,
            width: self.push_width as u32,
            version: self.version as u64,
        }
    }
}

/// Immutable once published; stabilization replaces nodes instead of
/// editing them.
struct LateralNode {
    row: u32,
    width: u16,
    next: *const LateralNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LateralWord {
    top: usize,
    version: u32,
}

impl LateralWord {
    fn pack(self) -> u128 {
        self.top as u64 as u128 | (self.version as u128) << 64
    }

    fn unpack(w: u128) -> Self {
        LateralWord { top: field(w, 0, 64) as usize, version: field(w, 64, 32) as u32 }
    }
}

/// Iterates `(row, width)` from the top of a Lateral chain.
///
/// # Safety
/// The chain must stay protected for the iterator's lifetime.
unsafe fn chain(top: *const LateralNode) -> impl Iterator<Item = (u32, u16)> {
    let mut cur = top;
    core::iter::from_fn(move || {
        let n = unsafe { cur.as_ref() }?;
        cur = n.next;
        Some((n.row, n.width))
    })
}

/// Widest bound among nodes above `row`, 0 if there are none.
fn lateral_width(nodes: impl Iterator<Item = (u32, u16)>, row: u32) -> u16 {
    nodes.filter(|n| n.0 > row).map(|n| n.1).max().unwrap_or(0)
}

/// Bound of `row` in a chain listed top-down: the node whose range
/// `(next.row, row]` holds it, or `above` for rows over the top node.
fn width_bound(nodes: &[(u32, u16)], row: u32, above: u16) -> u16 {
    if nodes.first().map_or(true, |n| row > n.0) {
        return above;
    }
    for (i, n) in nodes.iter().enumerate() {
        let below = nodes.get(i + 1).map_or(0, |b| b.0);
        if below < row && row <= n.0 {
            return n.1;
        }
    }
    above
}

/// Fault switches for mutation tests of the oracle.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, Default)]
pub struct Faults {
    /// Use `max(push_width, Lateral.width(min))` for the pop width.
    pub literal_pop_width: bool,
    /// Skip Lateral stabilization.
    pub skip_stabilize: bool,
}

pub struct LpwStack<T, P: Probe = NoProbe> {
    lanes: Box<[CachePadded<SubStack<T, P::Tag>>]>,
    window: CachePadded<WideCell>,
    lateral: CachePadded<WideCell>,
    targets: RelaxationTarget,
    stats: Stats,
    faults: Faults,
    probe: P,
}

unsafe impl<T: Send, P: Probe> Send for LpwStack<T, P> {}
unsafe impl<T: Send, P: Probe> Sync for LpwStack<T, P> {}

impl<T> LpwStack<T> {
    /// Builds a stack with first window `{max: depth, depth, width}`. Depth
    /// is at least 2 so the window can move by half of it.
    pub fn new(max_width: usize, width: usize, depth: u32) -> Self {
        Self::with_probe(max_width, width, depth, NoProbe)
    }
}

impl<T> Default for LpwStack<T> {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_WIDTH, 1, 2)
    }
}

impl<T, P: Probe> LpwStack<T, P> {
    pub fn with_probe(max_width: usize, width: usize, depth: u32, probe: P) -> Self {
        let targets = RelaxationTarget::new(max_width, width, depth, 2);
        let (w, d) = targets.get();
        let win = StackWindow {
            max: d,
            depth: d as u16,
            push_width: w as u16,
            pop_width: w as u16,
            last_push_width: w as u16,
            last_shift: Shift::Up,
            version: 0,
        };
        let s = LpwStack {
            lanes: lanes(targets.max_width()),
            window: CachePadded::new(WideCell::new(win.pack())),
            lateral: CachePadded::new(WideCell::new(LateralWord { top: 0, version: 0 }.pack())),
            targets,
            stats: Stats::default(),
            faults: Faults::default(),
            probe,
        };
        s.probe.serialized(|l| l.shifted(ShiftRecord { window: win.mark() }));
        s
    }

    #[doc(hidden)]
    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    pub fn probe(&self) -> &P {
        &self.probe
    }

    pub fn window(&self) -> StackWindow {
        StackWindow::unpack(self.window.load())
    }

    /// `(row, width)` of the Lateral from the top down, and its version.
    pub fn lateral(&self) -> (Vec<(u32, u16)>, u32) {
        let _guard = reclaim::pin();
        let lw = LateralWord::unpack(self.lateral.load());
        // SAFETY: protected by the guard.
        (unsafe { chain(lw.top as *const LateralNode) }.collect(), lw.version)
    }

    /// Lowers Lateral nodes above `win.min()` and clones the rest; nodes at
    /// or below it are shared. Returns the new top, the nodes allocated for
    /// it and the old nodes it no longer references.
    fn update(
        &self,
        top: *const LateralNode,
        win: &StackWindow,
    ) -> (*const LateralNode, Vec<*mut LateralNode>, Vec<*const LateralNode>) {
        let min = win.min();
        let mut above = Vec::new();
        let mut cur = top;
        // SAFETY: the caller holds a guard over the chain.
        while let Some(n) = unsafe { cur.as_ref() } {
            if n.row <= min {
                break;
            }
            above.push(cur);
            cur = n.next;
        }
        let mut created = Vec::new();
        let mut replaced = Vec::new();
        let mut next = cur;
        let mut next_row = unsafe { next.as_ref() }.map_or(0, |n| n.row);
        for &old in above.iter().rev() {
            let n = unsafe { &*old };
            let row = if n.width <= win.push_width {
                min
            } else if n.width > win.last_push_width && win.last_shift == Shift::Down {
                n.row.min(win.max - win.shift())
            } else {
                n.row
            };
            if row <= next_row {
                // the range collapsed into the one below it
                replaced.push(old);
                continue;
            }
            if row == n.row && n.next == next {
                next = old;
                next_row = row;
                continue;
            }
            let fresh = Box::into_raw(Box::new(LateralNode { row, width: n.width, next }));
            created.push(fresh);
            replaced.push(old);
            next = fresh;
            next_row = row;
        }
        (next, created, replaced)
    }

    /// Makes the Lateral consistent for `win` before it shifts. At most one
    /// stabilization succeeds per window version.
    fn stabilize(&self, win: &StackWindow, guard: &Guard) {
        let read = self.lateral.load();
        let lw = LateralWord::unpack(read);
        if self.window.load() != win.pack() || lw.version == win.version {
            return;
        }
        let (mut top, mut created, replaced) = self.update(lw.top as *const LateralNode, win);
        let top_row = unsafe { top.as_ref() }.map_or(0, |n| n.row);
        let min = win.min();
        let mut extra = None;
        if win.push_width > win.last_push_width && top_row < min {
            extra = Some(min);
        } else if win.push_width < win.last_push_width {
            let lanes = &self.lanes[win.push_width as usize..win.last_push_width as usize];
            let upper = lanes.iter().map(|q| q.descriptor().rows).fold(win.max, u32::max);
            if top_row < upper {
                extra = Some(upper);
            }
        }
        if let Some(row) = extra {
            let n = Box::into_raw(Box::new(LateralNode { row, width: win.last_push_width, next: top }));
            created.push(n);
            top = n;
        }
        let new = LateralWord { top: top as usize, version: win.version };
        match self.lateral.compare_exchange(read, new.pack()) {
            Ok(_) => {
                for old in replaced {
                    // SAFETY: unlinked by the exchange above.
                    unsafe { reclaim::retire(guard, old as *mut LateralNode) };
                }
            }
            Err(_) => {
                for n in created {
                    // SAFETY: never published.
                    drop(unsafe { Box::from_raw(n) });
                }
            }
        }
    }

    fn shift(&self, dir: Shift, old: StackWindow, guard: &Guard) -> bool {
        Stats::bump(&self.stats.shifts_attempted);
        if !self.faults.skip_stabilize {
            self.stabilize(&old, guard);
        }
        let (width, depth) = self.targets.get();
        let depth = depth.min(u16::MAX as u32);
        let s = depth / 2;
        let max = match dir {
            Shift::Up => old.max.checked_add(s).expect("row counter overflow"),
            Shift::Down => old.min() + s,
        };
        // keep the window bottom at or above row 0
        let max = max.max(depth);
        let min = max - depth;
        let lw = LateralWord::unpack(self.lateral.load());
        let below = lateral_width(unsafe { chain(lw.top as *const LateralNode) }, min);
        let pop_width = if self.faults.literal_pop_width {
            (width as u16).max(below)
        } else {
            // rows pushed under the old width may sit above the Lateral top
            // until the next stabilization records them
            (width as u16).max(old.push_width).max(below)
        };
        let new = StackWindow {
            max,
            depth: depth as u16,
            push_width: width as u16,
            pop_width,
            last_push_width: old.push_width,
            last_shift: dir,
            version: old.version.wrapping_add(1) & VERSION_MASK,
        };
        let ok = self.probe.serialized(|l| {
            if P::ACTIVE && self.window.load() == old.pack() {
                self.pre_shift_checks(l, &old, guard);
            }
            let ok = self.window.compare_exchange(old.pack(), new.pack()).is_ok();
            if ok {
                l.shifted(ShiftRecord { window: new.mark() });
                if l.wants(Check::StaticEnvelope) {
                    self.envelope_check(l, &new);
                }
            }
            ok
        });
        if ok {
            Stats::bump(&self.stats.shifts_succeeded);
        }
        ok
    }

    fn pre_shift_checks(&self, l: &mut P::Ledger, old: &StackWindow, _guard: &Guard) {
        if l.wants(Check::LateralCovers) {
            let (nodes, _) = self.lateral();
            l.audit_residents(Check::LateralCovers, &mut |lane, row| {
                width_bound(&nodes, row as u32, old.push_width) as usize > lane
            });
        }
        if l.wants(Check::StaticEnvelope) {
            self.envelope_check(l, old);
        }
    }

    /// One of `min - s <= N_j <= max` or `min <= N_j <= max + s` holds for
    /// every lane of a static configuration.
    fn envelope_check(&self, l: &mut P::Ledger, win: &StackWindow) {
        let width = win.push_width.max(win.pop_width) as usize;
        let rows: Vec<u32> = self.lanes[..width].iter().map(|q| q.descriptor().rows).collect();
        let (min, max, s) = (win.min() as i64, win.max as i64, win.shift() as i64);
        let low = rows.iter().all(|&n| (min - s..=max).contains(&(n as i64)));
        let high = rows.iter().all(|&n| (min..=max + s).contains(&(n as i64)));
        l.check(Check::StaticEnvelope, low || high, &|| format!("lanes {rows:?} under {win:?}"));
    }

    pub fn push_with(&self, h: &mut Handle, value: T) -> Placement {
        let guard = reclaim::pin();
        let mut node = StackNode::<T, P::Tag>::new(value, 0);
        'retry: loop {
            let win = self.window();
            let width = win.push_width as usize;
            let (min, max) = (win.min(), win.max);
            let mut scan = h.cursor.scan(width);
            while let Some(lane) = scan.next() {
                let q = &self.lanes[lane];
                let seen = q.descriptor();
                if seen.rows >= max {
                    continue;
                }
                let row = min.max(seen.rows) + 1;
                node.row = row;
                let res = self.probe.serialized(|l| {
                    // A push planned under an older window could land far
                    // above the current one after several downward shifts.
                    if self.window.load() != win.pack() {
                        return Err((node, true));
                    }
                    if P::ACTIVE {
                        node.tag = l.admit(Insertion { lane, row: row as u64, window: win.mark() });
                    }
                    let tag = node.tag;
                    let r = q.try_push(seen, node);
                    if r.is_ok() {
                        l.inserted(&tag);
                        if l.wants_live_audit() {
                            l.live_audit(self.residents(&guard));
                        }
                    }
                    r.map_err(|n| (n, false))
                });
                let tail_of = || (win.version as u64, width);
                match res {
                    Ok(stamp) => {
                        h.observe(true, &self.targets, tail_of);
                        h.cursor.set(lane);
                        return Placement { lane, row: row as u64, stamp };
                    }
                    Err((n, true)) => {
                        node = n;
                        continue 'retry;
                    }
                    Err((n, false)) => {
                        node = n;
                        h.observe(false, &self.targets, tail_of);
                        h.cursor.set(lane);
                        h.cursor.next_lane(width, HopReason::Contention);
                        Stats::bump(&self.stats.contention_hops);
                        continue 'retry;
                    }
                }
            }
            Stats::bump(&self.stats.full_scans_failed);
            self.shift(Shift::Up, win, &guard);
        }
    }

    pub fn pop_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        let guard = reclaim::pin();
        'retry: loop {
            let win = self.window();
            let width = win.pop_width as usize;
            let min = win.min();
            let mut scan = h.cursor.scan(width);
            while let Some(lane) = scan.next() {
                let q = &self.lanes[lane];
                let seen = q.descriptor();
                if seen.rows <= min {
                    continue;
                }
                let res = self.probe.serialized(|l| {
                    // after an upward shift this lane may hold items below the window
                    if self.window.load() != win.pack() {
                        return Err(true);
                    }
                    let r = q.try_pop(seen, &guard);
                    if let Some((_, row, tag, _)) = &r {
                        l.removed(tag, Removal { lane, row: *row as u64, window: win.mark() });
                        if l.wants_live_audit() {
                            let live = self.residents(&guard);
                            l.live_audit(live);
                        }
                    }
                    r.ok_or(false)
                });
                let tail_of = || {
                    let w = self.window();
                    (w.version as u64, w.push_width as usize)
                };
                match res {
                    Ok((value, row, _, stamp)) => {
                        h.observe(true, &self.targets, tail_of);
                        h.cursor.set(lane);
                        return Some(Removed { value, lane, row: row as u64, stamp });
                    }
                    Err(true) => continue 'retry,
                    Err(false) => {
                        h.observe(false, &self.targets, tail_of);
                        h.cursor.set(lane);
                        h.cursor.next_lane(width, HopReason::Contention);
                        Stats::bump(&self.stats.contention_hops);
                        continue 'retry;
                    }
                }
            }
            Stats::bump(&self.stats.full_scans_failed);
            if min > 0 {
                self.shift(Shift::Down, win, &guard);
                continue;
            }
            if self.confirm_empty(&win) {
                return None;
            }
        }
    }

    /// Window unchanged and every pop lane empty with the same stamp, twice.
    fn confirm_empty(&self, win: &StackWindow) -> bool {
        let width = win.pop_width as usize;
        let collect = || -> Option<Vec<u32>> {
            if self.window.load() != win.pack() {
                return None;
            }
            let mut stamps = Vec::with_capacity(width);
            for q in &self.lanes[..width] {
                let d = q.descriptor();
                if !d.is_empty() {
                    return None;
                }
                stamps.push(d.stamp);
            }
            Some(stamps)
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

    pub fn push(&self, value: T) -> Placement {
        crate::api::with_default_handle(|h| self.push_with(h, value))
    }

    pub fn pop(&self) -> Option<T> {
        crate::api::with_default_handle(|h| self.pop_with(h)).map(|r| r.value)
    }

    pub fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    /// Top rows `N_j` of the first `n` lanes.
    pub fn lane_rows(&self, n: usize) -> Vec<u32> {
        self.lanes[..n.min(self.lanes.len())].iter().map(|q| q.descriptor().rows).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        let w = self.window();
        let mut pop = w.view();
        pop.width = w.pop_width as u32;
        let width = w.push_width.max(w.pop_width) as u64;
        Snapshot {
            insert_window: w.view(),
            remove_window: pop,
            version: w.version,
            bound_k: (width - 1) * (3 * w.depth as u64 - 1),
            lateral_len: self.lateral().0.len(),
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

impl<T, P: Probe> Drop for LpwStack<T, P> {
    fn drop(&mut self) {
        let mut cur = LateralWord::unpack(self.lateral.load()).top as *mut LateralNode;
        while !cur.is_null() {
            // SAFETY: exclusive access; the chain is owned by the stack.
            let b = unsafe { Box::from_raw(cur) };
            cur = b.next as *mut LateralNode;
        }
    }
}

impl<T: Send, P: Probe> RelaxedApi<T> for LpwStack<T, P> {
    const ORDER: Order = Order::Lifo;

    fn insert_with(&self, h: &mut Handle, value: T) -> Placement {
        self.push_with(h, value)
    }

    fn remove_with(&self, h: &mut Handle) -> Option<Removed<T>> {
        self.pop_with(h)
    }

    fn targets(&self) -> &RelaxationTarget {
        &self.targets
    }

    fn snapshot(&self) -> Snapshot {
        LpwStack::snapshot(self)
    }

    fn len(&self) -> usize {
        LpwStack::len(self)
    }
}
