//! Hooks around linearization points.
//!
//! Every structure is generic over a [`Probe`]. Each linearizing exchange (lane
//! insert/remove, window shift, Lateral update) runs inside
//! [`Probe::serialized`], which hands it a [`Ledger`] to report what happened.
//! [`NoProbe`] inlines to nothing; the measurement oracle implements the trait
//! with a global lock and a shadow structure.

/// Window in force at an event, flattened for all designs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WindowMark {
    pub max: u64,
    pub depth: u32,
    pub width: u32,
    /// Stack window version; window max for the queues.
    pub version: u64,
}

impl WindowMark {
    pub fn min(&self) -> u64 {
        self.max.saturating_sub(self.depth as u64)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Insertion {
    pub lane: usize,
    pub row: u64,
    /// Insert-side window at the linearization point.
    pub window: WindowMark,
}

#[derive(Clone, Copy, Debug)]
pub struct Removal {
    pub lane: usize,
    pub row: u64,
    /// Remove-side window at the linearization point.
    pub window: WindowMark,
}

/// A published window, reported at each successful shift (and at
/// construction) so the oracle can track lifetime maxima.
#[derive(Clone, Copy, Debug)]
pub struct ShiftRecord {
    pub window: WindowMark,
}

/// Properties the structures assert at their linearization points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Check {
    /// Rank error within the per-item bound.
    Bound,
    /// Consecutive removes that skip the oldest item stay within the bound.
    Lateness,
    /// Head window max below the row of a Lateral node being appended.
    HeadBelowLateral,
    /// Lateral width bounds cover every resident item before a stack shift.
    LateralCovers,
    /// Lower row envelope of items pushed during an item's lifetime.
    LowerEnvelope,
    /// Upper row envelope of items still present when an item is popped.
    UpperEnvelope,
    /// One-sided lane-size envelope of the static stack at shift points.
    StaticEnvelope,
    /// All rows of a head window were inserted under one width.
    SingleWidthHead,
    /// An empty return happened while the shadow held items.
    EmptyLinearizable,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::Bound,
        Check::Lateness,
        Check::HeadBelowLateral,
        Check::LateralCovers,
        Check::LowerEnvelope,
        Check::UpperEnvelope,
        Check::StaticEnvelope,
        Check::SingleWidthHead,
        Check::EmptyLinearizable,
    ];

    pub fn index(self) -> usize {
        Check::ALL.iter().position(|c| *c == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            Check::Bound => "bound",
            Check::Lateness => "lateness",
            Check::HeadBelowLateral => "head-below-lateral",
            Check::LateralCovers => "lateral-covers-residents",
            Check::LowerEnvelope => "lower-envelope",
            Check::UpperEnvelope => "upper-envelope",
            Check::StaticEnvelope => "static-lane-envelope",
            Check::SingleWidthHead => "single-width-head",
            Check::EmptyLinearizable => "empty-linearizable",
        }
    }
}

/// Receiver of events that happen inside a serialized region.
pub trait Ledger {
    type Tag;

    /// Creates the tag stored in a node about to be published.
    fn admit(&mut self, ins: Insertion) -> Self::Tag;
    fn inserted(&mut self, tag: &Self::Tag);
    fn removed(&mut self, tag: &Self::Tag, rem: Removal);
    fn empty_returned(&mut self);
    fn shifted(&mut self, rec: ShiftRecord);
    /// Whether a check is evaluated; lets callers skip expensive evidence.
    fn wants(&self, check: Check) -> bool;
    fn check(&mut self, check: Check, holds: bool, detail: &dyn Fn() -> String);
    /// Evaluates `pred(lane, row)` over every resident item.
    fn audit_residents(&mut self, check: Check, pred: &mut dyn FnMut(usize, u64) -> bool);
    fn wants_live_audit(&mut self) -> bool;
    /// Compares the shadow with the live contents.
    fn live_audit(&mut self, live: Vec<Self::Tag>);
}

pub trait Probe: Send + Sync + 'static {
    type Tag: Copy + Default + Send + Sync + 'static;
    type Ledger: Ledger<Tag = Self::Tag>;
    /// False for probes whose ledger ignores everything.
    const ACTIVE: bool;

    fn serialized<R>(&self, f: impl FnOnce(&mut Self::Ledger) -> R) -> R;
}

/// The release-mode probe: no lock, no tags.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoProbe;

#[derive(Debug, Default)]
pub struct Silent;

impl Ledger for Silent {
    type Tag = ();
    #[inline(always)]
    fn admit(&mut self, _: Insertion) {}
    #[inline(always)]
    fn inserted(&mut self, _: &()) {}
    #[inline(always)]
    fn removed(&mut self, _: &(), _: Removal) {}
    #[inline(always)]
    fn empty_returned(&mut self) {}
    #[inline(always)]
    fn shifted(&mut self, _: ShiftRecord) {}
    #[inline(always)]
    fn wants(&self, _: Check) -> bool {
        false
    }
    #[inline(always)]
    fn check(&mut self, _: Check, _: bool, _: &dyn Fn() -> String) {}
    #[inline(always)]
    fn audit_residents(&mut self, _: Check, _: &mut dyn FnMut(usize, u64) -> bool) {}
    #[inline(always)]
    fn wants_live_audit(&mut self) -> bool {
        false
    }
    #[inline(always)]
    fn live_audit(&mut self, _: Vec<()>) {}
}

impl Probe for NoProbe {
    type Tag = ();
    type Ledger = Silent;
    const ACTIVE: bool = false;

    #[inline(always)]
    fn serialized<R>(&self, f: impl FnOnce(&mut Silent) -> R) -> R {
        f(&mut Silent)
    }
}
