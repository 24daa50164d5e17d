//! Window rules shared by all 2D designs: the relaxation targets picked up at
//! window shifts, row validity, and lane hopping.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering::Relaxed};

use crossbeam_utils::CachePadded;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

/// Largest width any window can encode (16-bit window fields).
pub const WIDTH_LIMIT: usize = u16::MAX as usize;
/// Largest depth any window can encode.
pub const DEPTH_LIMIT: u32 = u16::MAX as u32;
pub const DEFAULT_MAX_WIDTH: usize = 256;

/// Desired width and depth, written by users or the controller and read by
/// the next window shift. Writes are clamped, so shift code never validates.
#[derive(Debug)]
pub struct RelaxationTarget {
    width: CachePadded<AtomicU32>,
    depth: CachePadded<AtomicU32>,
    max_width: u32,
    min_depth: u32,
}

impl RelaxationTarget {
    pub fn new(max_width: usize, width: usize, depth: u32, min_depth: u32) -> Self {
        let t = RelaxationTarget {
            width: CachePadded::new(AtomicU32::new(1)),
            depth: CachePadded::new(AtomicU32::new(min_depth)),
            max_width: max_width.clamp(1, WIDTH_LIMIT) as u32,
            min_depth,
        };
        t.set_width(width);
        t.set_depth(depth);
        t
    }

    /// Stores the clamped width and returns the value stored.
    pub fn set_width(&self, w: usize) -> usize {
        let w = (w.min(u32::MAX as usize) as u32).clamp(1, self.max_width);
        self.width.store(w, Relaxed);
        w as usize
    }

    pub fn set_depth(&self, d: u32) -> u32 {
        let d = d.clamp(self.min_depth, DEPTH_LIMIT);
        self.depth.store(d, Relaxed);
        d
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width.load(Relaxed) as usize
    }

    #[inline]
    pub fn depth(&self) -> u32 {
        self.depth.load(Relaxed)
    }

    pub fn get(&self) -> (usize, u32) {
        (self.width(), self.depth())
    }

    pub fn max_width(&self) -> usize {
        self.max_width as usize
    }
}

/// A decoded window: valid rows are `(max - depth, max]` over `width` lanes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct WindowView {
    pub max: u64,
    pub depth: u32,
    pub width: u32,
}

impl WindowView {
    #[inline]
    pub fn min(&self) -> u64 {
        self.max.saturating_sub(self.depth as u64)
    }
}

/// A lane whose newest row is `lane_row` can take an insert under `view`.
#[inline]
pub fn row_valid_insert(view: &WindowView, lane_row: u64) -> bool {
    lane_row < view.max
}

/// A lane whose removable row is `lane_row` can serve a delete under `view`.
#[inline]
pub fn row_valid_delete(view: &WindowView, lane_row: u64) -> bool {
    lane_row > view.min()
}

/// Row an insert lands on: just above the lane top, but never below the
/// window, which leaves gaps in lanes that fell behind.
#[inline]
pub fn insert_row(view: &WindowView, lane_row: u64) -> u64 {
    view.min().max(lane_row) + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HopReason {
    Contention,
    InvalidRow,
}

/// Per-thread lane position and hop randomness.
#[derive(Debug)]
pub struct LaneCursor {
    index: usize,
    rng: SmallRng,
    pub contention_hops: u64,
    pub invalid_hops: u64,
}

impl LaneCursor {
    pub fn new(seed: u64) -> Self {
        let mut rng = SmallRng::seed_from_u64(seed);
        LaneCursor { index: rng.gen(), rng, contention_hops: 0, invalid_hops: 0 }
    }

    pub fn from_entropy() -> Self {
        Self::new(rand::random())
    }

    /// Current lane, folded into `[0, width)`.
    #[inline]
    pub fn lane(&mut self, width: usize) -> usize {
        debug_assert!(width >= 1);
        if self.index >= width {
            self.index %= width;
        }
        self.index
    }

    #[inline]
    pub fn set(&mut self, lane: usize) {
        self.index = lane;
    }

    /// Moves to a uniformly random lane other than the current one.
    pub fn next_lane(&mut self, width: usize, reason: HopReason) -> usize {
        match reason {
            HopReason::Contention => self.contention_hops += 1,
            HopReason::InvalidRow => self.invalid_hops += 1,
        }
        let cur = self.lane(width);
        if width > 1 {
            let step = self.rng.gen_range(1..width);
            self.index = (cur + step) % width;
        }
        self.index
    }

    /// Starts a full scan: the current lane followed by every other lane in
    /// `[0, width)` exactly once, beginning at a random other lane.
    pub fn scan(&mut self, width: usize) -> Scan {
        let start = self.lane(width);
        let offset = if width > 1 { self.rng.gen_range(0..width - 1) } else { 0 };
        Scan { start, offset, width, i: 0 }
    }
}

/// Lane order for one full scan; see [`LaneCursor::scan`].
#[derive(Clone, Debug)]
pub struct Scan {
    start: usize,
    offset: usize,
    width: usize,
    i: usize,
}

impl Iterator for Scan {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.i >= self.width {
            return None;
        }
        let lane = if self.i == 0 {
            self.start
        } else {
            let k = (self.offset + self.i - 1) % (self.width - 1);
            (self.start + 1 + k) % self.width
        };
        self.i += 1;
        Some(lane)
    }
}

/// Slow-path counters of one structure.
#[derive(Debug, Default)]
pub struct Stats {
    pub full_scans_failed: CachePadded<AtomicU64>,
    pub shifts_attempted: CachePadded<AtomicU64>,
    pub shifts_succeeded: CachePadded<AtomicU64>,
    pub contention_hops: CachePadded<AtomicU64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StatsSnapshot {
    pub full_scans_failed: u64,
    pub shifts_attempted: u64,
    pub shifts_succeeded: u64,
    pub contention_hops: u64,
}

impl Stats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            full_scans_failed: self.full_scans_failed.load(Relaxed),
            shifts_attempted: self.shifts_attempted.load(Relaxed),
            shifts_succeeded: self.shifts_succeeded.load(Relaxed),
            contention_hops: self.contention_hops.load(Relaxed),
        }
    }

    #[inline]
    pub(crate) fn bump(c: &AtomicU64) {
        c.fetch_add(1, Relaxed);
    }
}
