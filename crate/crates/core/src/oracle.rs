//! Rank-error oracle.
//!
//! Implements [`Probe`] with one global lock around every linearizing
//! exchange and a shadow FIFO/LIFO mirroring the contents. Each removal yields
//! a [`RankSample`]: the removed item's distance from the strict head (queue)
//! or top (stack), next to the bound its recorded windows allow. Structural checks
//! reported by the structures are tallied per [`Check`].
//!
//! Serializing every operation slows runs by orders of magnitude and changes
//! the timing distribution; oracle runs are for measurement only.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;

use crate::api::Order;
use crate::probe::{Check, Insertion, Ledger, Probe, Removal, ShiftRecord, WindowMark};

/// Which bound a removal is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundRule {
    /// `(w_head - 1) * d_head` with the head window at removal.
    LawQueue,
    /// `(w_enq - 1) * (d_enq + d_deq - 1)` from the item's two windows.
    LpwQueue,
    /// `(max_w - 1) * (3 * max_d - 1)` over the item's lifetime.
    ElasticStack,
    /// `(2d + 2s + floor((d - 1) / s) * s) * (w - 1)`, `s = floor(d / 2)`.
    StaticStack,
    /// Every removal must take the strict head or top.
    Strict,
}

impl BoundRule {
    fn order(self) -> Option<Order> {
        match self {
            BoundRule::LawQueue | BoundRule::LpwQueue => Some(Order::Fifo),
            BoundRule::ElasticStack | BoundRule::StaticStack => Some(Order::Lifo),
            BoundRule::Strict => None,
        }
    }
}

/// Bound of the static 2D stack for width `w` and depth `d >= 2`.
pub fn static_stack_bound(w: u64, d: u64) -> u64 {
    let s = (d / 2).max(1);
    (2 * d + 2 * s + (d.saturating_sub(1) / s) * s) * w.saturating_sub(1)
}

pub fn elastic_stack_bound(max_w: u64, max_d: u64) -> u64 {
    max_w.saturating_sub(1) * (3 * max_d).saturating_sub(1)
}

pub fn lpw_queue_bound(w_enq: u64, d_enq: u64, d_deq: u64) -> u64 {
    w_enq.saturating_sub(1) * (d_enq + d_deq).saturating_sub(1)
}

pub fn law_queue_bound(w: u64, d: u64) -> u64 {
    w.saturating_sub(1) * d
}

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    pub order: Order,
    pub rule: BoundRule,
    /// Compare shadow and live contents every this many inserts and removals;
    /// 0 never.
    pub audit_every: u64,
    /// Evaluate the structural checks (the bound check always runs).
    pub structural: bool,
    pub keep_samples: bool,
}

impl OracleConfig {
    pub fn new(order: Order, rule: BoundRule) -> Self {
        if let Some(o) = rule.order() {
            assert_eq!(o, order, "bound rule does not match the structure order");
        }
        OracleConfig { order, rule, audit_every: 0, structural: true, keep_samples: true }
    }
}

/// Tag stored in every node while the oracle is active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ItemTag {
    pub id: u64,
    pub lane: u32,
    pub row: u64,
    /// Insert-side window at the insert's linearization.
    pub window: WindowMark,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RankSample {
    /// Index of the removal among all removals.
    pub op: u64,
    pub timestamp_ns: u64,
    pub rank_error: u64,
    pub bound_k: u64,
    pub insert_window: WindowMark,
    pub remove_window: WindowMark,
}

/// Range maxima over the window log, in blocks of 64 entries.
#[derive(Debug, Default)]
struct RangeMax {
    values: Vec<(u32, u32)>,
    blocks: Vec<(u32, u32)>,
}

impl RangeMax {
    const B: usize = 64;

    fn push(&mut self, width: u32, depth: u32) {
        if self.values.len() % Self::B == 0 {
            self.blocks.push((0, 0));
        }
        self.values.push((width, depth));
        let b = self.blocks.last_mut().unwrap();
        *b = (b.0.max(width), b.1.max(depth));
    }

    fn len(&self) -> usize {
        self.values.len()
    }

    /// Maximum width and depth over `lo..=hi`.
    fn query(&self, lo: usize, hi: usize) -> (u32, u32) {
        let mut acc = (0, 0);
        let mut i = lo;
        while i <= hi {
            if i % Self::B == 0 && i + Self::B - 1 <= hi {
                let b = self.blocks[i / Self::B];
                acc = (acc.0.max(b.0), acc.1.max(b.1));
                i += Self::B;
            } else {
                let v = self.values[i];
                acc = (acc.0.max(v.0), acc.1.max(v.1));
                i += 1;
            }
        }
        acc
    }
}

/// State behind the oracle lock; also the [`Ledger`] handed to structures.
#[derive(Debug)]
pub struct OracleState {
    cfg: OracleConfig,
    start: Instant,
    next_id: u64,
    shadow: VecDeque<ItemTag>,
    samples: Vec<RankSample>,
    removals: u64,
    inserts: u64,
    empties: u64,
    ops: u64,
    audits: u64,
    /// Published windows in shift order.
    log: RangeMax,
    last_version: u64,
    violations: [u64; Check::ALL.len()],
    evaluated: [u64; Check::ALL.len()],
    details: Vec<String>,
    streak: u64,
    streak_k: u64,
    rank_sum: u128,
    rank_max: u64,
}

impl OracleState {
    fn new(cfg: OracleConfig) -> Self {
        OracleState {
            cfg,
            start: Instant::now(),
            next_id: 0,
            shadow: VecDeque::new(),
            samples: Vec::new(),
            removals: 0,
            inserts: 0,
            empties: 0,
            ops: 0,
            audits: 0,
            log: RangeMax::default(),
            last_version: 0,
            violations: [0; Check::ALL.len()],
            evaluated: [0; Check::ALL.len()],
            details: Vec::new(),
            streak: 0,
            streak_k: 0,
            rank_sum: 0,
            rank_max: 0,
        }
    }

    fn record(&mut self, check: Check, holds: bool, detail: impl FnOnce() -> String) {
        self.evaluated[check.index()] += 1;
        if !holds {
            self.violations[check.index()] += 1;
            if self.details.len() < 32 {
                self.details.push(format!("{}: {}", check.name(), detail()));
            }
        }
    }

    /// Log index of a stack window version (31-bit, wrapping).
    fn log_index(&self, version: u64) -> usize {
        let back = (self.last_version.wrapping_sub(version)) & crate::lpw_stack::VERSION_MASK as u64;
        self.log.len() - 1 - back as usize
    }

    /// Maximum push width and depth over the windows from `from` to `to`.
    fn lifetime_max(&self, from: &WindowMark, to: &WindowMark) -> (u64, u64) {
        let (a, b) = (self.log_index(from.version), self.log_index(to.version));
        let (w, d) = self.log.query(a.min(b), a.max(b));
        (w.max(from.width).max(to.width) as u64, d.max(from.depth).max(to.depth) as u64)
    }

    fn timestamp(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }

    fn maybe_audit(&mut self) -> bool {
        self.ops += 1;
        self.cfg.audit_every > 0 && self.ops % self.cfg.audit_every == 0
    }
}

impl Ledger for OracleState {
    type Tag = ItemTag;

    fn admit(&mut self, ins: Insertion) -> ItemTag {
        let id = self.next_id;
        self.next_id += 1;
        ItemTag { id, lane: ins.lane as u32, row: ins.row, window: ins.window }
    }

    fn inserted(&mut self, tag: &ItemTag) {
        self.inserts += 1;
        self.shadow.push_back(*tag);
    }

    fn removed(&mut self, tag: &ItemTag, rem: Removal) {
        let pos = match self.cfg.order {
            Order::Fifo => self.shadow.iter().position(|t| t.id == tag.id),
            Order::Lifo => self.shadow.iter().rposition(|t| t.id == tag.id),
        };
        let Some(pos) = pos else {
            panic!("shadow divergence: removed item {tag:?} is not in the shadow");
        };
        let rank = match self.cfg.order {
            Order::Fifo => pos,
            Order::Lifo => self.shadow.len() - 1 - pos,
        } as u64;
        let enq = tag.window;
        let deq = rem.window;
        let bound = match self.cfg.rule {
            BoundRule::LawQueue => law_queue_bound(deq.width as u64, deq.depth as u64),
            BoundRule::LpwQueue => {
                lpw_queue_bound(enq.width as u64, enq.depth as u64, deq.depth as u64)
            }
            BoundRule::ElasticStack => {
                let (w, d) = self.lifetime_max(&enq, &deq);
                elastic_stack_bound(w, d)
            }
            BoundRule::StaticStack => static_stack_bound(enq.width as u64, enq.depth as u64),
            BoundRule::Strict => 0,
        };
        self.record(Check::Bound, rank <= bound, || {
            format!("rank {rank} > bound {bound} for {tag:?} removed under {deq:?}")
        });

        if self.cfg.structural {
            if self.cfg.order == Order::Fifo {
                if rank == 0 {
                    self.streak = 0;
                    self.streak_k = 0;
                } else {
                    self.streak += 1;
                    self.streak_k = self.streak_k.max(bound);
                    let (s, k) = (self.streak, self.streak_k);
                    self.record(Check::Lateness, s <= k, || format!("{s} removals skipped the head, bound {k}"));
                }
            }
            if self.cfg.rule == BoundRule::LpwQueue {
                self.record(Check::SingleWidthHead, enq.width == deq.width, || {
                    format!("item inserted under width {} removed under width {}", enq.width, deq.width)
                });
            }
            if matches!(self.cfg.rule, BoundRule::ElasticStack | BoundRule::StaticStack) {
                let (_, max_d) = self.lifetime_max(&enq, &deq);
                let shift = max_d / 2;
                let lower = enq.min().saturating_sub(shift);
                let upper = deq.max + shift;
                let above = || self.shadow.iter().skip(pos + 1);
                let low = above().find(|t| t.row < lower).copied();
                let high = above().find(|t| t.row > upper).copied();
                self.record(Check::LowerEnvelope, low.is_none(), || {
                    format!("{low:?} pushed over {tag:?} lies below {lower}")
                });
                self.record(Check::UpperEnvelope, high.is_none(), || {
                    format!("{high:?} pushed over {tag:?} lies above {upper} at pop {deq:?}")
                });
            }
        }

        self.shadow.remove(pos);
        self.rank_sum += rank as u128;
        self.rank_max = self.rank_max.max(rank);
        if self.cfg.keep_samples {
            let ts = self.timestamp();
            self.samples.push(RankSample {
                op: self.removals,
                timestamp_ns: ts,
                rank_error: rank,
                bound_k: bound,
                insert_window: enq,
                remove_window: deq,
            });
        }
        self.removals += 1;
    }

    fn empty_returned(&mut self) {
        self.empties += 1;
        let n = self.shadow.len();
        self.record(Check::EmptyLinearizable, n == 0, || format!("empty returned with {n} items present"));
    }

    fn shifted(&mut self, rec: ShiftRecord) {
        self.log.push(rec.window.width, rec.window.depth);
        self.last_version = rec.window.version;
    }

    fn wants(&self, check: Check) -> bool {
        if check == Check::Bound || check == Check::EmptyLinearizable {
            return true;
        }
        if !self.cfg.structural {
            return false;
        }
        match check {
            Check::HeadBelowLateral | Check::SingleWidthHead => self.cfg.rule == BoundRule::LpwQueue,
            Check::LateralCovers | Check::LowerEnvelope | Check::UpperEnvelope => {
                matches!(self.cfg.rule, BoundRule::ElasticStack | BoundRule::StaticStack)
            }
            Check::StaticEnvelope => self.cfg.rule == BoundRule::StaticStack,
            Check::Lateness => self.cfg.order == Order::Fifo,
            Check::Bound | Check::EmptyLinearizable => true,
        }
    }

    fn check(&mut self, check: Check, holds: bool, detail: &dyn Fn() -> String) {
        self.record(check, holds, detail);
    }

    fn audit_residents(&mut self, check: Check, pred: &mut dyn FnMut(usize, u64) -> bool) {
        let bad: Vec<ItemTag> =
            self.shadow.iter().filter(|t| !pred(t.lane as usize, t.row)).copied().collect();
        self.record(check, bad.is_empty(), || format!("{} residents fail, first {:?}", bad.len(), bad.first()));
    }

    fn wants_live_audit(&mut self) -> bool {
        self.maybe_audit()
    }

    fn live_audit(&mut self, live: Vec<ItemTag>) {
        self.audits += 1;
        let mut a: Vec<u64> = live.iter().map(|t| t.id).collect();
        let mut b: Vec<u64> = self.shadow.iter().map(|t| t.id).collect();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            panic!("shadow divergence: live holds {} items, shadow {}", a.len(), b.len());
        }
    }
}

/// The oracle probe. Share it with the structure through an `Arc`.
#[derive(Debug)]
pub struct Oracle {
    state: Mutex<OracleState>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Arc<Self> {
        Arc::new(Oracle { state: Mutex::new(OracleState::new(cfg)) })
    }

    pub fn report(&self, bucket_ns: u64) -> OracleReport {
        let s = self.state.lock();
        let summary = if s.cfg.keep_samples {
            summarize(&s.samples, bucket_ns)
        } else {
            RankSummary {
                count: s.removals,
                mean: if s.removals == 0 { 0.0 } else { s.rank_sum as f64 / s.removals as f64 },
                max: s.rank_max,
                ..Default::default()
            }
        };
        OracleReport {
            summary,
            inserts: s.inserts,
            removals: s.removals,
            empties: s.empties,
            audits: s.audits,
            resident: s.shadow.len() as u64,
            checks: Check::ALL
                .iter()
                .map(|c| CheckTally { check: *c, evaluated: s.evaluated[c.index()], failed: s.violations[c.index()] })
                .collect(),
            details: s.details.clone(),
        }
    }

    pub fn samples(&self) -> Vec<RankSample> {
        self.state.lock().samples.clone()
    }

    pub fn violations(&self) -> u64 {
        self.state.lock().violations.iter().sum()
    }
}

impl Probe for Arc<Oracle> {
    type Tag = ItemTag;
    type Ledger = OracleState;
    const ACTIVE: bool = true;

    fn serialized<R>(&self, f: impl FnOnce(&mut OracleState) -> R) -> R {
        f(&mut self.state.lock())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckTally {
    pub check: Check,
    pub evaluated: u64,
    pub failed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub summary: RankSummary,
    pub inserts: u64,
    pub removals: u64,
    pub empties: u64,
    pub audits: u64,
    pub resident: u64,
    pub checks: Vec<CheckTally>,
    pub details: Vec<String>,
}

impl OracleReport {
    pub fn failures(&self) -> u64 {
        self.checks.iter().map(|c| c.failed).sum()
    }

    pub fn tally(&self, check: Check) -> CheckTally {
        self.checks[check.index()]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bucket {
    pub start_ns: u64,
    pub count: u64,
    pub mean_rank: f64,
    pub max_rank: u64,
    pub mean_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankSummary {
    pub count: u64,
    pub mean: f64,
    pub max: u64,
    /// Samples whose rank error exceeds their bound.
    pub violations: u64,
    pub series: Vec<Bucket>,
}

/// Mean, maximum and violation count of `samples`, plus fixed-width time
/// buckets of `bucket_ns` (25 ms is the customary choice).
pub fn summarize(samples: &[RankSample], bucket_ns: u64) -> RankSummary {
    if samples.is_empty() {
        return RankSummary::default();
    }
    let bucket_ns = bucket_ns.max(1);
    let mut series: Vec<Bucket> = Vec::new();
    let mut sum = 0u128;
    let mut max = 0;
    let mut violations = 0;
    let mut acc: Option<(u64, u64, u128, u64, u128)> = None;
    let flush = |series: &mut Vec<Bucket>, a: (u64, u64, u128, u64, u128)| {
        series.push(Bucket {
            start_ns: a.0 * bucket_ns,
            count: a.1,
            mean_rank: a.2 as f64 / a.1 as f64,
            max_rank: a.3,
            mean_bound: a.4 as f64 / a.1 as f64,
        });
    };
    for s in samples {
        sum += s.rank_error as u128;
        max = max.max(s.rank_error);
        violations += (s.rank_error > s.bound_k) as u64;
        let b = s.timestamp_ns / bucket_ns;
        match acc.as_mut() {
            Some(a) if a.0 == b => {
                a.1 += 1;
                a.2 += s.rank_error as u128;
                a.3 = a.3.max(s.rank_error);
                a.4 += s.bound_k as u128;
            }
            _ => {
                if let Some(a) = acc.take() {
                    flush(&mut series, a);
                }
                acc = Some((b, 1, s.rank_error as u128, s.rank_error, s.bound_k as u128));
            }
        }
    }
    if let Some(a) = acc {
        flush(&mut series, a);
    }
    RankSummary {
        count: samples.len() as u64,
        mean: sum as f64 / samples.len() as f64,
        max,
        violations,
        series,
    }
}

pub const SAMPLE_HEADER: [&str; 6] = ["timestamp_ns", "op", "rank_error", "bound_k", "width", "depth"];

/// Writes samples as CSV; width and depth are the remove-side window's.
pub fn write_samples_csv<W: Write>(samples: &[RankSample], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SAMPLE_HEADER)?;
    for s in samples {
        w.write_record(&[
            s.timestamp_ns.to_string(),
            s.op.to_string(),
            s.rank_error.to_string(),
            s.bound_k.to_string(),
            s.remove_window.width.to_string(),
            s.remove_window.depth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
