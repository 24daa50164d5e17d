//! Benchmark harness: static scaling, manual reconfiguration schedules and the
//! producer-consumer controller scenario.
//!
//! Workers record a timestamp every 1000 operations; the main thread samples
//! the structure's windows once per millisecond and applies the schedules.
//! Both streams are folded into fixed-width buckets (25 ms by default).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use clap::ValueEnum;
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

use crate::api::{Handle, Order, Relaxed, Snapshot};
use crate::baseline::{MsQueue, TreiberStack};
use crate::controller::ControllerConfig;
use crate::error::BenchError;
use crate::law_queue::LawQueue;
use crate::lpw_queue::LpwQueue;
use crate::lpw_stack::LpwStack;
use crate::oracle::{self, BoundRule, Oracle, OracleConfig, OracleReport, RankSample};
use crate::window::{DEFAULT_MAX_WIDTH, DEPTH_LIMIT, WIDTH_LIMIT};

/// Operations between two worker timestamps.
pub const FLUSH_EVERY: u64 = 1000;
pub const DEFAULT_BUCKET: Duration = Duration::from_millis(25);
const TICK: Duration = Duration::from_millis(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Structure {
    LawQueue,
    LpwQueue,
    LpwStack,
    MsQueue,
    TreiberStack,
}

impl Structure {
    pub const ALL: [Structure; 5] = [
        Structure::LawQueue,
        Structure::LpwQueue,
        Structure::LpwStack,
        Structure::MsQueue,
        Structure::TreiberStack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Structure::LawQueue => "law-queue",
            Structure::LpwQueue => "lpw-queue",
            Structure::LpwStack => "lpw-stack",
            Structure::MsQueue => "ms-queue",
            Structure::TreiberStack => "treiber-stack",
        }
    }

    pub fn order(self) -> Order {
        match self {
            Structure::LpwStack | Structure::TreiberStack => Order::Lifo,
            _ => Order::Fifo,
        }
    }

    pub fn is_relaxed(self) -> bool {
        !matches!(self, Structure::MsQueue | Structure::TreiberStack)
    }

    /// Strict design of the same order.
    pub fn baseline(self) -> Structure {
        match self.order() {
            Order::Fifo => Structure::MsQueue,
            Order::Lifo => Structure::TreiberStack,
        }
    }

    /// Bound of a static configuration with equal head and tail depth.
    pub fn static_bound(self, width: usize, depth: u32) -> u64 {
        let (w, d) = (width as u64, depth as u64);
        match self {
            Structure::LawQueue => oracle::law_queue_bound(w, d),
            Structure::LpwQueue => oracle::lpw_queue_bound(w, d, d),
            Structure::LpwStack => oracle::static_stack_bound(w, d),
            Structure::MsQueue | Structure::TreiberStack => 0,
        }
    }

    /// Largest depth whose static bound stays within `k` at `width`, found
    /// by scanning down from `k / (width - 1)`.
    pub fn depth_for_k(self, width: usize, k: u64) -> u32 {
        let floor = if self == Structure::LpwStack { 2 } else { 1 };
        if width <= 1 {
            return (k.max(floor as u64)).min(DEPTH_LIMIT as u64) as u32;
        }
        let mut d = (k / (width as u64 - 1)).clamp(floor as u64, DEPTH_LIMIT as u64) as u32;
        while d > floor && self.static_bound(width, d) > k {
            d -= 1;
        }
        d
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Throughput,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Workload {
    /// Every thread inserts or removes with equal probability.
    Mixed50,
    /// Dedicated consumers remove continuously; producers insert while active.
    ProducerConsumer,
}

/// Thread pinning strategy, read from `ELASTIC_PIN` by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Pin {
    RoundRobin,
    None,
}

impl Pin {
    pub const ENV: &'static str = "ELASTIC_PIN";

    pub fn from_env() -> Result<Pin, BenchError> {
        match std::env::var(Self::ENV) {
            Err(_) => Ok(Pin::RoundRobin),
            Ok(v) => Pin::from_str(&v, true)
                .map_err(|_| BenchError::config(format!("{}={v}: expected round-robin or none", Self::ENV))),
        }
    }
}

/// Reconfiguration applied at a time offset. `depth` sets both sides;
/// `head_depth` and `tail_depth` only matter for designs that separate them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScheduleStep {
    pub at: Duration,
    pub width: Option<usize>,
    pub depth: Option<u32>,
    pub head_depth: Option<u32>,
    pub tail_depth: Option<u32>,
}

/// Parses `MS:key=value,...` with keys `w`, `d`, `hd` and `td`, e.g. `500:w=8,d=4`.
impl FromStr for ScheduleStep {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        let bad = |why: &str| BenchError::config(format!("schedule step {s:?}: {why}"));
        let (at, rest) = s.split_once(':').ok_or_else(|| bad("expected MS:key=value,..."))?;
        let at = at.trim().parse::<u64>().map_err(|_| bad("offset is not whole milliseconds"))?;
        let mut step = ScheduleStep { at: Duration::from_millis(at), ..Default::default() };
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let v: u64 = v.trim().parse().map_err(|_| bad("value is not a number"))?;
            match k.trim() {
                "w" => step.width = Some(v as usize),
                "d" => step.depth = Some(v as u32),
                "hd" => step.head_depth = Some(v as u32),
                "td" => step.tail_depth = Some(v as u32),
                other => return Err(bad(&format!("unknown key {other:?}"))),
            }
        }
        if step == (ScheduleStep { at: step.at, ..Default::default() }) {
            return Err(bad("no change given"));
        }
        Ok(step)
    }
}

/// Fraction of producers active from a time offset on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityStep {
    pub at: Duration,
    pub active: f64,
}

/// Parses `MS:FRACTION`, e.g. `500:0.25`.
impl FromStr for ActivityStep {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        let bad = || BenchError::config(format!("activity step {s:?}: expected MS:FRACTION"));
        let (at, f) = s.split_once(':').ok_or_else(bad)?;
        let at = at.trim().parse::<u64>().map_err(|_| bad())?;
        let active = f.trim().parse::<f64>().map_err(|_| bad())?;
        Ok(ActivityStep { at: Duration::from_millis(at), active })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub structure: Structure,
    pub threads: usize,
    pub duration: Duration,
    pub prefill: u64,
    /// Initial width; derived from `k` when that is set.
    pub width: usize,
    pub depth: u32,
    /// Derives width `2 * threads` and the largest depth within `k`.
    pub k: Option<u64>,
    /// Lanes allocated up front; the ceiling for every width change.
    pub max_width: usize,
    pub schedule: Vec<ScheduleStep>,
    pub workload: Workload,
    /// Consumer threads in the producer-consumer workload; a third of the
    /// threads when unset.
    pub consumers: Option<usize>,
    /// Active producer fraction over time; all producers are active initially.
    pub activity: Vec<ActivityStep>,
    /// Width controller run by producers (every thread under mixed50).
    pub controller: Option<ControllerConfig>,
    pub seed: u64,
    pub mode: Mode,
    /// Stops the run after this many operations in total.
    pub ops: Option<u64>,
    pub bucket: Duration,
    /// Oracle runs last `stretch` times longer and timestamps are divided by
    /// it afterwards. Defaults to 1000 for queues and 2000 for the stack.
    pub stretch: Option<f64>,
    /// Oracle bound; picked from the structure and schedule when unset.
    pub bound_rule: Option<BoundRule>,
    /// Shadow/live comparison every this many operations (oracle mode).
    pub audit_every: u64,
    pub pin: Pin,
    /// Keep removed values for the post-run multiset check.
    pub verify: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            structure: Structure::LawQueue,
            threads: 4,
            duration: Duration::from_secs(1),
            prefill: 1 << 15,
            width: 8,
            depth: 8,
            k: None,
            max_width: DEFAULT_MAX_WIDTH,
            schedule: Vec::new(),
            workload: Workload::Mixed50,
            consumers: None,
            activity: Vec::new(),
            controller: None,
            seed: 1,
            mode: Mode::Throughput,
            ops: None,
            bucket: DEFAULT_BUCKET,
            stretch: None,
            bound_rule: None,
            audit_every: 0,
            pin: Pin::None,
            verify: true,
        }
    }
}

/// A validated configuration with everything derived.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub cfg: BenchConfig,
    pub width: usize,
    pub depth: u32,
    pub max_width: usize,
    pub producers: usize,
    pub consumers: usize,
    pub stretch: f64,
    pub rule: Option<BoundRule>,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<Resolved, BenchError> {
        let err = |m: String| Err(BenchError::Config(m));
        if self.threads == 0 {
            return err("threads must be at least 1".into());
        }
        if self.duration.is_zero() && self.ops.is_none() {
            return err("a run needs a duration or an operation budget".into());
        }
        if self.bucket.is_zero() {
            return err("bucket must be positive".into());
        }
        let (width, depth) = match self.k {
            Some(k) => {
                let w = 2 * self.threads;
                (w, self.structure.depth_for_k(w, k))
            }
            None => (self.width, self.depth),
        };
        if width == 0 || depth == 0 {
            return err("width and depth must be at least 1".into());
        }
        let max_width = self.max_width.min(WIDTH_LIMIT);
        if width > max_width {
            return err(format!("width {width} exceeds max width {max_width}"));
        }
        for s in &self.schedule {
            if !self.duration.is_zero() && s.at > self.duration {
                return err(format!("schedule step at {:?} lies past the duration", s.at));
            }
            if s.width.is_some_and(|w| w == 0 || w > max_width) {
                return err(format!("schedule width {:?} outside 1..={max_width}", s.width));
            }
            if [s.depth, s.head_depth, s.tail_depth].iter().any(|d| *d == Some(0)) {
                return err("schedule depth must be at least 1".into());
            }
        }
        if self.schedule.windows(2).any(|p| p[0].at > p[1].at) {
            return err("schedule steps must be in time order".into());
        }
        for a in &self.activity {
            if !(0.0..=1.0).contains(&a.active) {
                return err(format!("activity {} outside [0, 1]", a.active));
            }
            if !self.duration.is_zero() && a.at > self.duration {
                return err(format!("activity step at {:?} lies past the duration", a.at));
            }
        }
        if self.activity.windows(2).any(|p| p[0].at > p[1].at) {
            return err("activity steps must be in time order".into());
        }
        let (producers, consumers) = match self.workload {
            Workload::Mixed50 => {
                if !self.activity.is_empty() || self.consumers.is_some() {
                    return err("activity and consumers need the producer-consumer workload".into());
                }
                (self.threads, 0)
            }
            Workload::ProducerConsumer => {
                if self.threads < 2 {
                    return err("producer-consumer needs at least 2 threads".into());
                }
                let c = self.consumers.unwrap_or((self.threads / 3).max(1));
                if c == 0 || c >= self.threads {
                    return err(format!("{c} consumers leave no producers or no consumers"));
                }
                (self.threads - c, c)
            }
        };
        let oracle = self.mode == Mode::Oracle;
        if oracle && !self.structure.is_relaxed() {
            return err(format!("{} has no oracle mode", self.structure));
        }
        if self.stretch.is_some_and(|s| !(s >= 1.0 && s.is_finite())) {
            return err("stretch must be at least 1".into());
        }
        let stretch = match (oracle, self.stretch) {
            (false, _) => 1.0,
            (true, Some(s)) => s,
            (true, None) if self.structure.order() == Order::Lifo => 2000.0,
            (true, None) => 1000.0,
        };
        let elastic = !self.schedule.is_empty() || self.controller.is_some();
        let rule = oracle.then(|| {
            self.bound_rule.unwrap_or(match self.structure {
                Structure::LawQueue => BoundRule::LawQueue,
                Structure::LpwQueue => BoundRule::LpwQueue,
                _ if elastic => BoundRule::ElasticStack,
                _ => BoundRule::StaticStack,
            })
        });
        Ok(Resolved { cfg: self.clone(), width, depth, max_width, producers, consumers, stretch, rule })
    }
}

/// One aggregation bucket. Times are on the compressed timeline of oracle runs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BucketRow {
    pub t_ns: u64,
    pub ops: u64,
    /// Operations per second of wall time within the bucket.
    pub throughput: f64,
    pub insert_width: u64,
    pub insert_depth: u64,
    pub remove_width: u64,
    pub remove_depth: u64,
    /// Rank-error bound of the current configuration.
    pub bound_k: u64,
    /// `(insert width - 1) * insert depth`.
    pub insert_error: u64,
    pub active_producers: u64,
    pub producer_latency_ns: f64,
    pub consumer_latency_ns: f64,
    pub mean_rank: f64,
    pub max_rank: u64,
}

pub const BUCKET_HEADER: [&str; 14] = [
    "t_ns",
    "ops",
    "throughput",
    "insert_width",
    "insert_depth",
    "remove_width",
    "remove_depth",
    "bound_k",
    "insert_error",
    "active_producers",
    "producer_latency_ns",
    "consumer_latency_ns",
    "mean_rank",
    "max_rank",
];

impl BucketRow {
    fn fields(&self) -> [String; 14] {
        [
            self.t_ns.to_string(),
            self.ops.to_string(),
            self.throughput.to_string(),
            self.insert_width.to_string(),
            self.insert_depth.to_string(),
            self.remove_width.to_string(),
            self.remove_depth.to_string(),
            self.bound_k.to_string(),
            self.insert_error.to_string(),
            self.active_producers.to_string(),
            self.producer_latency_ns.to_string(),
            self.consumer_latency_ns.to_string(),
            self.mean_rank.to_string(),
            self.max_rank.to_string(),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self, BenchError> {
        if rec.len() != BUCKET_HEADER.len() {
            return Err(BenchError::Parse(format!("expected {} fields, got {}", BUCKET_HEADER.len(), rec.len())));
        }
        let u = |i: usize| {
            rec[i].parse::<u64>().map_err(|_| BenchError::Parse(format!("{}: {:?}", BUCKET_HEADER[i], &rec[i])))
        };
        let f = |i: usize| {
            rec[i].parse::<f64>().map_err(|_| BenchError::Parse(format!("{}: {:?}", BUCKET_HEADER[i], &rec[i])))
        };
        Ok(BucketRow {
            t_ns: u(0)?,
            ops: u(1)?,
            throughput: f(2)?,
            insert_width: u(3)?,
            insert_depth: u(4)?,
            remove_width: u(5)?,
            remove_depth: u(6)?,
            bound_k: u(7)?,
            insert_error: u(8)?,
            active_producers: u(9)?,
            producer_latency_ns: f(10)?,
            consumer_latency_ns: f(11)?,
            mean_rank: f(12)?,
            max_rank: u(13)?,
        })
    }
}

/// Window state sampled by the main thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TracePoint {
    pub t_ns: u64,
    pub insert_width: u64,
    pub insert_depth: u64,
    pub remove_width: u64,
    pub remove_depth: u64,
    pub bound_k: u64,
    pub width_target: u64,
    pub active_producers: u64,
}

impl TracePoint {
    fn new(t_ns: u64, s: &Snapshot, width_target: usize, active: usize) -> Self {
        TracePoint {
            t_ns,
            insert_width: s.insert_window.width as u64,
            insert_depth: s.insert_window.depth as u64,
            remove_width: s.remove_window.width as u64,
            remove_depth: s.remove_window.depth as u64,
            bound_k: s.bound_k,
            width_target: width_target as u64,
            active_producers: active as u64,
        }
    }
}

/// A schedule step as applied, with the targets actually stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchedulePoint {
    pub t_ns: u64,
    pub width: u64,
    pub depth: u64,
}

/// Post-run multiset check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Verification {
    pub inserted: u64,
    pub removed: u64,
    pub drained: u64,
    /// Inserted values never seen again.
    pub missing: u64,
    /// Values returned more than once.
    pub duplicated: u64,
    /// Values returned that were never inserted.
    pub foreign: u64,
    /// Lanes whose per-lane tallies disagree.
    pub lane_mismatches: u64,
}

impl Verification {
    pub fn ok(&self) -> bool {
        self.missing == 0 && self.duplicated == 0 && self.foreign == 0 && self.lane_mismatches == 0
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    /// `key=value` pairs written as `#` comment lines.
    pub meta: Vec<(String, String)>,
    pub total_ops: u64,
    pub inserts: u64,
    pub removes: u64,
    pub empty_removes: u64,
    pub thread_ops: Vec<u64>,
    /// Wall time of the measured phase.
    pub elapsed: Duration,
    /// Total operations per second of wall time.
    pub throughput: f64,
    pub buckets: Vec<BucketRow>,
    pub trace: Vec<TracePoint>,
    pub schedule_points: Vec<SchedulePoint>,
    pub verification: Option<Verification>,
    pub oracle: Option<OracleReport>,
    /// Compressed rank samples of oracle runs.
    pub samples: Vec<RankSample>,
    /// Snapshot after the post-run drain.
    pub final_snapshot: Snapshot,
    pub pinned: bool,
}

impl RunRecord {
    /// All enabled assertions hold.
    pub fn passed(&self) -> bool {
        self.verification.is_none_or(|v| v.ok()) && self.oracle.as_ref().is_none_or(|o| o.failures() == 0)
    }
}

/// Runs one benchmark.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<RunRecord, BenchError> {
    let r = cfg.validate()?;
    let (mw, w, d) = (r.max_width, r.width, r.depth);
    let oracle = r.rule.map(|rule| {
        let mut oc = OracleConfig::new(cfg.structure.order(), rule);
        oc.audit_every = cfg.audit_every;
        Oracle::new(oc)
    });
    let rec = match (cfg.structure, oracle) {
        (Structure::LawQueue, None) => drive(&LawQueue::<u64>::new(mw, w, d), &r, None),
        (Structure::LawQueue, Some(o)) => drive(&LawQueue::with_probe(mw, w, d, o.clone()), &r, Some(&o)),
        (Structure::LpwQueue, None) => drive(&LpwQueue::<u64>::new(mw, w, d), &r, None),
        (Structure::LpwQueue, Some(o)) => drive(&LpwQueue::with_probe(mw, w, d, o.clone()), &r, Some(&o)),
        (Structure::LpwStack, None) => drive(&LpwStack::<u64>::new(mw, w, d), &r, None),
        (Structure::LpwStack, Some(o)) => drive(&LpwStack::with_probe(mw, w, d, o.clone()), &r, Some(&o)),
        (Structure::MsQueue, _) => drive(&MsQueue::<u64>::new(), &r, None),
        (Structure::TreiberStack, _) => drive(&TreiberStack::<u64>::new(), &r, None),
    };
    Ok(rec)
}

/// Per-lane tallies of a key mixed through splitmix64.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct LaneSums {
    count: u64,
    sum: u64,
    xor: u64,
}

impl LaneSums {
    fn add(&mut self, key: u64) {
        let m = mix(key);
        self.count += 1;
        self.sum = self.sum.wrapping_add(m);
        self.xor ^= m;
    }

    fn merge(&mut self, o: &LaneSums) {
        self.count += o.count;
        self.sum = self.sum.wrapping_add(o.sum);
        self.xor ^= o.xor;
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SEQ_BITS: u32 = 40;

fn encode(thread: usize, seq: u64) -> u64 {
    (thread as u64) << SEQ_BITS | seq
}

fn decode(v: u64) -> (usize, u64) {
    ((v >> SEQ_BITS) as usize, v & ((1 << SEQ_BITS) - 1))
}

/// What a worker or the prefill/drain phase did.
#[derive(Default)]
struct Tally {
    ops: u64,
    inserts: u64,
    removes: u64,
    empties: u64,
    flushes: Vec<(Instant, u64)>,
    removed: Vec<u64>,
    inserted_lanes: Vec<LaneSums>,
    removed_lanes: Vec<LaneSums>,
}

impl Tally {
    fn new(lanes: usize) -> Self {
        Tally {
            inserted_lanes: vec![LaneSums::default(); lanes],
            removed_lanes: vec![LaneSums::default(); lanes],
            ..Default::default()
        }
    }

    fn insert<S: Relaxed<u64>>(&mut self, s: &S, h: &mut Handle, value: u64, verify: bool) {
        let p = s.insert_with(h, value);
        self.inserts += 1;
        if verify {
            let key = if S::ORDER == Order::Lifo { p.stamp as u64 } else { p.row };
            self.inserted_lanes[p.lane].add(key);
        }
    }

    fn remove<S: Relaxed<u64>>(&mut self, s: &S, h: &mut Handle, verify: bool) -> bool {
        match s.remove_with(h) {
            Some(r) => {
                self.removes += 1;
                if verify {
                    self.removed.push(r.value);
                    let key = if S::ORDER == Order::Lifo { r.stamp as u64 } else { r.row };
                    self.removed_lanes[r.lane].add(key);
                }
                true
            }
            None => {
                self.empties += 1;
                false
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Mixed,
    Producer(usize),
    Consumer,
}

fn pin_threads(pin: Pin) -> Option<Vec<core_affinity::CoreId>> {
    if pin == Pin::None {
        return None;
    }
    match core_affinity::get_core_ids() {
        Some(ids) if !ids.is_empty() => Some(ids),
        _ => {
            eprintln!("warning: thread pinning unsupported here, running unpinned");
            None
        }
    }
}

fn drive<S: Relaxed<u64>>(s: &S, r: &Resolved, oracle: Option<&Arc<Oracle>>) -> RunRecord {
    let cfg = &r.cfg;
    let verify = cfg.verify;
    let lanes = r.max_width.max(1);
    let threads = cfg.threads;

    // prefill under the seed so single-threaded runs repeat exactly
    let mut prefill = Tally::new(lanes);
    let mut h = Handle::new(cfg.seed ^ 0x5eed);
    for seq in 0..cfg.prefill {
        prefill.insert(s, &mut h, encode(threads, seq), verify);
    }

    let cores = pin_threads(cfg.pin);
    let pinned = cores.is_some();
    let stop = AtomicBool::new(false);
    let finished = AtomicUsize::new(0);
    let active = AtomicUsize::new(r.producers);
    let barrier = Barrier::new(threads + 1);
    let budget = |i: usize| {
        cfg.ops.map(|n| n / threads as u64 + ((i as u64) < n % threads as u64) as u64).unwrap_or(u64::MAX)
    };
    let roles: Vec<Role> = (0..threads)
        .map(|i| match cfg.workload {
            Workload::Mixed50 => Role::Mixed,
            // consumers take the highest indices so producer i is active
            // whenever i < active
            Workload::ProducerConsumer if i < r.producers => Role::Producer(i),
            Workload::ProducerConsumer => Role::Consumer,
        })
        .collect();
    let deadline = cfg.duration.mul_f64(r.stretch);
    let stretch_ns = |d: Duration| (d.as_nanos() as f64 / r.stretch) as u64;

    let mut trace = Vec::new();
    let mut points = Vec::new();
    let mut t0 = Instant::now();
    let tallies: Vec<Tally> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|i| {
                let (stop, finished, active, barrier) = (&stop, &finished, &active, &barrier);
                let role = roles[i];
                let core = cores.as_ref().map(|c| c[i % c.len()]);
                let limit = budget(i);
                scope.spawn(move || {
                    if let Some(c) = core {
                        if !core_affinity::set_for_current(c) {
                            eprintln!("warning: could not pin worker {i}");
                        }
                    }
                    let seed = cfg.seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64);
                    let mut h = Handle::new(seed);
                    if matches!(role, Role::Mixed | Role::Producer(_)) {
                        h.set_controller(cfg.controller);
                    }
                    let mut rng = SmallRng::seed_from_u64(seed ^ 0xa5a5);
                    let mut t = Tally::new(lanes);
                    let mut seq = 0;
                    barrier.wait();
                    while t.ops < limit && !stop.load(Ordering::Relaxed) {
                        let insert = match role {
                            Role::Mixed => rng.gen::<bool>(),
                            Role::Consumer => false,
                            Role::Producer(p) => {
                                if p >= active.load(Ordering::Relaxed) {
                                    std::thread::sleep(Duration::from_micros(50));
                                    continue;
                                }
                                true
                            }
                        };
                        if insert {
                            t.insert(s, &mut h, encode(i, seq), verify);
                            seq += 1;
                        } else {
                            t.remove(s, &mut h, verify);
                        }
                        t.ops += 1;
                        if t.ops % FLUSH_EVERY == 0 {
                            t.flushes.push((Instant::now(), t.ops));
                        }
                    }
                    t.flushes.push((Instant::now(), t.ops));
                    finished.fetch_add(1, Ordering::Release);
                    t
                })
            })
            .collect();

        barrier.wait();
        t0 = Instant::now();
        let (mut next_step, mut next_act) = (0, 0);
        loop {
            let el = t0.elapsed();
            while let Some(step) = cfg.schedule.get(next_step).filter(|st| st.at.mul_f64(r.stretch) <= el) {
                let (width, depth) = apply_step(s, step);
                points.push(SchedulePoint { t_ns: stretch_ns(el), width: width as u64, depth: depth as u64 });
                next_step += 1;
            }
            while let Some(a) = cfg.activity.get(next_act).filter(|a| a.at.mul_f64(r.stretch) <= el) {
                active.store((a.active * r.producers as f64).round() as usize, Ordering::Relaxed);
                next_act += 1;
            }
            let snap = s.snapshot();
            let (wt, _) = s.get_targets();
            trace.push(TracePoint::new(stretch_ns(el), &snap, wt, active.load(Ordering::Relaxed)));
            if finished.load(Ordering::Acquire) == threads || (!cfg.duration.is_zero() && el >= deadline) {
                break;
            }
            std::thread::sleep(TICK);
        }
        stop.store(true, Ordering::Relaxed);
        workers.into_iter().map(|w| w.join().expect("worker panicked")).collect()
    });
    let elapsed = tallies
        .iter()
        .filter_map(|t| t.flushes.last())
        .map(|(at, _)| at.saturating_duration_since(t0))
        .max()
        .unwrap_or_default();
    let final_trace = TracePoint::new(stretch_ns(elapsed), &s.snapshot(), s.get_targets().0, active.load(Ordering::Relaxed));

    let report_before_drain = oracle.map(|o| (o.report(cfg.bucket.as_nanos() as u64), o.samples()));

    let mut drain = Tally::new(lanes);
    let mut h = Handle::new(cfg.seed ^ 0xd4a1);
    while drain.remove(s, &mut h, verify) {}
    let final_snapshot = s.snapshot();

    let mut rec = RunRecord {
        total_ops: tallies.iter().map(|t| t.ops).sum(),
        inserts: tallies.iter().map(|t| t.inserts).sum(),
        removes: tallies.iter().map(|t| t.removes).sum(),
        empty_removes: tallies.iter().map(|t| t.empties).sum(),
        thread_ops: tallies.iter().map(|t| t.ops).collect(),
        elapsed,
        trace,
        schedule_points: points,
        final_snapshot,
        pinned,
        ..Default::default()
    };
    rec.trace.push(final_trace);
    rec.throughput = if elapsed.is_zero() { 0.0 } else { rec.total_ops as f64 / elapsed.as_secs_f64() };

    if let (Some(o), Some((_, samples))) = (oracle, report_before_drain) {
        // drain removals are checked too; the series only covers the run
        let mut report = o.report(cfg.bucket.as_nanos() as u64);
        let run_samples: Vec<RankSample> = samples
            .into_iter()
            .map(|mut x| {
                x.timestamp_ns = (x.timestamp_ns as f64 / r.stretch) as u64;
                x
            })
            .collect();
        report.summary.series = oracle::summarize(&run_samples, cfg.bucket.as_nanos() as u64).series;
        rec.samples = run_samples;
        rec.oracle = Some(report);
    }
    rec.buckets = buckets(&rec, &tallies, &roles, t0, r);
    if verify {
        rec.verification = Some(verification(S::ORDER, &prefill, &tallies, &drain, threads, lanes));
    }
    rec.meta = metadata(r, &rec, oracle.is_some());
    rec
}

fn apply_step<S: Relaxed<u64>>(s: &S, step: &ScheduleStep) -> (usize, u32) {
    if let Some(w) = step.width {
        s.set_width(w);
    }
    if let Some(d) = step.depth {
        s.set_depth(d);
    }
    if let Some(d) = step.head_depth {
        s.set_head_depth(d);
    }
    if let Some(d) = step.tail_depth {
        s.set_tail_depth(d);
    }
    s.get_targets()
}

fn buckets(rec: &RunRecord, tallies: &[Tally], roles: &[Role], t0: Instant, r: &Resolved) -> Vec<BucketRow> {
    let width = r.cfg.bucket.as_nanos() as u64;
    let end = rec.elapsed.as_nanos() as u64;
    let n = ((end as f64 / r.stretch) as u64).div_ceil(width).max(1) as usize;
    if rec.total_ops == 0 {
        return Vec::new();
    }
    let mut rows: Vec<BucketRow> = (0..n).map(|i| BucketRow { t_ns: i as u64 * width, ..Default::default() }).collect();
    // (sum of interval ns, sum of interval ops) per role class
    let mut lat = vec![[(0u128, 0u64); 2]; n];
    let slot = |at: Instant| {
        let t = at.saturating_duration_since(t0).as_nanos() as f64 / r.stretch;
        ((t as u64) / width).min(n as u64 - 1) as usize
    };
    for (t, role) in tallies.iter().zip(roles) {
        let mut prev = (t0, 0u64);
        for &(at, done) in &t.flushes {
            let b = slot(at);
            let ops = done - prev.1;
            rows[b].ops += ops;
            if ops > 0 {
                let class = (*role == Role::Consumer) as usize;
                lat[b][class].0 += at.saturating_duration_since(prev.0).as_nanos();
                lat[b][class].1 += ops;
            }
            prev = (at, done);
        }
    }
    let mut ti = 0;
    let mut last = rec.trace.first().copied().unwrap_or_default();
    let wall = width as f64 * r.stretch / 1e9;
    for (i, row) in rows.iter_mut().enumerate() {
        let bucket_end = (i as u64 + 1) * width;
        while ti < rec.trace.len() && rec.trace[ti].t_ns < bucket_end {
            last = rec.trace[ti];
            ti += 1;
        }
        row.throughput = row.ops as f64 / wall;
        row.insert_width = last.insert_width;
        row.insert_depth = last.insert_depth;
        row.remove_width = last.remove_width;
        row.remove_depth = last.remove_depth;
        row.bound_k = last.bound_k;
        row.insert_error = last.insert_width.saturating_sub(1) * last.insert_depth;
        row.active_producers = last.active_producers;
        let avg = |(ns, ops): (u128, u64)| if ops == 0 { 0.0 } else { ns as f64 / ops as f64 };
        row.producer_latency_ns = avg(lat[i][0]);
        row.consumer_latency_ns = avg(lat[i][1]);
    }
    if let Some(o) = &rec.oracle {
        for b in &o.summary.series {
            let i = (b.start_ns / width) as usize;
            if let Some(row) = rows.get_mut(i) {
                row.mean_rank = b.mean_rank;
                row.max_rank = b.max_rank;
            }
        }
    }
    rows
}

fn verification(
    order: Order,
    prefill: &Tally,
    workers: &[Tally],
    drain: &Tally,
    threads: usize,
    lanes: usize,
) -> Verification {
    let mut v = Verification::default();
    // inserted sequence numbers per producing thread; prefill is thread `threads`
    let mut counts: Vec<u64> = workers.iter().map(|t| t.inserts).collect();
    counts.push(prefill.inserts);
    v.inserted = counts.iter().sum();
    v.removed = workers.iter().map(|t| t.removes).sum();
    v.drained = drain.removes;

    let mut seen: Vec<u64> = workers.iter().chain([drain]).flat_map(|t| t.removed.iter().copied()).collect();
    seen.sort_unstable();
    let mut unique = 0;
    for (i, &x) in seen.iter().enumerate() {
        let (t, seq) = decode(x);
        if t > threads || seq >= counts[t] {
            v.foreign += 1;
        } else if i > 0 && seen[i - 1] == x {
            v.duplicated += 1;
        } else {
            unique += 1;
        }
    }
    v.missing = v.inserted - unique;

    let all = || [prefill].into_iter().chain(workers).chain([drain]);
    for lane in 0..lanes {
        let mut ins = LaneSums::default();
        let mut rem = LaneSums::default();
        for t in all() {
            ins.merge(&t.inserted_lanes[lane]);
            rem.merge(&t.removed_lanes[lane]);
        }
        let ok = match order {
            // every (lane, row) inserted comes back exactly once
            Order::Fifo => ins == rem,
            // pushes and pops of a lane carry the stamps 1..=n exactly once
            Order::Lifo => {
                let mut both = ins;
                both.merge(&rem);
                let mut want = LaneSums::default();
                (1..=both.count).for_each(|s| want.add(s));
                both == want
            }
        };
        v.lane_mismatches += !ok as u64;
    }
    v
}

fn metadata(r: &Resolved, rec: &RunRecord, oracle: bool) -> Vec<(String, String)> {
    let cfg = &r.cfg;
    let mut m: Vec<(String, String)> = vec![
        ("structure".into(), cfg.structure.name().into()),
        ("mode".into(), if oracle { "oracle" } else { "throughput" }.into()),
        ("workload".into(), format!("{:?}", cfg.workload).to_lowercase()),
        ("threads".into(), cfg.threads.to_string()),
        ("producers".into(), r.producers.to_string()),
        ("consumers".into(), r.consumers.to_string()),
        ("width".into(), r.width.to_string()),
        ("depth".into(), r.depth.to_string()),
        ("max_width".into(), r.max_width.to_string()),
        ("k".into(), cfg.k.map(|k| k.to_string()).unwrap_or_default()),
        ("prefill".into(), cfg.prefill.to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("duration_ms".into(), cfg.duration.as_millis().to_string()),
        ("stretch".into(), r.stretch.to_string()),
        ("bucket_ms".into(), cfg.bucket.as_millis().to_string()),
        ("controller".into(), cfg.controller.is_some().to_string()),
        ("pinned".into(), rec.pinned.to_string()),
        ("total_ops".into(), rec.total_ops.to_string()),
        ("elapsed_ns".into(), rec.elapsed.as_nanos().to_string()),
        ("throughput".into(), rec.throughput.to_string()),
    ];
    for p in &rec.schedule_points {
        m.push(("schedule_point".into(), format!("t_ns={} width={} depth={}", p.t_ns, p.width, p.depth)));
    }
    if let Some(v) = &rec.verification {
        m.push(("verified".into(), v.ok().to_string()));
    }
    if let Some(o) = &rec.oracle {
        m.push(("rank_mean".into(), o.summary.mean.to_string()));
        m.push(("rank_max".into(), o.summary.max.to_string()));
        m.push(("violations".into(), o.failures().to_string()));
    }
    m
}

/// Writes a record: `# key=value` metadata lines, then the bucket table.
pub fn write_csv<W: Write>(rec: &RunRecord, mut out: W) -> std::io::Result<()> {
    for (k, v) in &rec.meta {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BUCKET_HEADER)?;
    for b in &rec.buckets {
        w.write_record(b.fields())?;
    }
    w.flush()
}

pub fn emit_csv(rec: &RunRecord, path: &Path) -> Result<(), BenchError> {
    let io = |source| BenchError::Io { path: path.to_owned(), source };
    let f = std::fs::File::create(path).map_err(io)?;
    write_csv(rec, std::io::BufWriter::new(f)).map_err(io)
}

pub fn emit_samples_csv(samples: &[RankSample], path: &Path) -> Result<(), BenchError> {
    let f = std::fs::File::create(path).map_err(|source| BenchError::Io { path: path.to_owned(), source })?;
    oracle::write_samples_csv(samples, std::io::BufWriter::new(f))
        .map_err(|source| BenchError::Csv { path: path.to_owned(), source })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedCsv {
    pub meta: Vec<(String, String)>,
    pub buckets: Vec<BucketRow>,
}

pub fn parse_csv<R: Read>(mut input: R) -> Result<ParsedCsv, BenchError> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|e| BenchError::Parse(e.to_string()))?;
    let mut meta = Vec::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let kv = line[1..].trim();
        let (k, v) = kv.split_once('=').ok_or_else(|| BenchError::Parse(format!("metadata line {line:?}")))?;
        meta.push((k.to_string(), v.to_string()));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| BenchError::Parse(e.to_string()))?.clone();
    if header.iter().ne(BUCKET_HEADER.iter().copied()) {
        return Err(BenchError::Parse(format!("unexpected header {header:?}")));
    }
    let buckets = rdr
        .records()
        .map(|r| r.map_err(|e| BenchError::Parse(e.to_string())).and_then(|r| BucketRow::parse(&r)))
        .collect::<Result<_, _>>()?;
    Ok(ParsedCsv { meta, buckets })
}

/// Mean and sample standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quick(structure: Structure) -> BenchConfig {
        BenchConfig {
            structure,
            threads: 2,
            duration: Duration::ZERO,
            ops: Some(20_000),
            prefill: 100,
            width: 4,
            depth: 3,
            max_width: 16,
            ..Default::default()
        }
    }

    #[test]
    fn depth_for_k_inverts_the_static_bounds() {
        // oracle: the largest d with bound(w, d) <= k, by brute force
        for s in [Structure::LawQueue, Structure::LpwQueue, Structure::LpwStack] {
            for w in [2, 4, 8, 16] {
                for k in [8, 100, 512, 5000] {
                    let floor = if s == Structure::LpwStack { 2 } else { 1 };
                    let want = (floor..=5000).filter(|&d| s.static_bound(w, d) <= k).max().unwrap_or(floor);
                    assert_eq!(s.depth_for_k(w, k), want, "{s} w={w} k={k}");
                }
            }
        }
        assert_eq!(Structure::LawQueue.depth_for_k(16, 5000), 333);
    }

    #[test]
    fn schedule_parsing() {
        let s: ScheduleStep = "500:w=8,d=4".parse().unwrap();
        assert_eq!(s.at, Duration::from_millis(500));
        assert_eq!((s.width, s.depth, s.head_depth), (Some(8), Some(4), None));
        let s: ScheduleStep = "0:hd=3,td=9".parse().unwrap();
        assert_eq!((s.head_depth, s.tail_depth), (Some(3), Some(9)));
        assert!("10".parse::<ScheduleStep>().is_err());
        assert!("10:".parse::<ScheduleStep>().is_err());
        assert!("10:q=1".parse::<ScheduleStep>().is_err());
        let a: ActivityStep = "250:0.25".parse().unwrap();
        assert_eq!(a.active, 0.25);
    }

    #[test]
    fn validation() {
        let ok = BenchConfig::default().validate().unwrap();
        assert_eq!(ok.stretch, 1.0);
        let bad = |c: BenchConfig| assert!(matches!(c.validate(), Err(BenchError::Config(_))), "{c:?}");
        bad(BenchConfig { threads: 0, ..Default::default() });
        bad(BenchConfig { width: 300, ..Default::default() });
        bad(BenchConfig {
            schedule: vec!["2000:w=4".parse().unwrap()],
            ..Default::default()
        });
        bad(BenchConfig { mode: Mode::Oracle, structure: Structure::MsQueue, ..Default::default() });
        bad(BenchConfig { workload: Workload::ProducerConsumer, threads: 1, ..Default::default() });
        let k = BenchConfig { k: Some(5000), threads: 8, ..Default::default() }.validate().unwrap();
        assert_eq!((k.width, k.depth), (16, 333));
        let pc = BenchConfig { workload: Workload::ProducerConsumer, threads: 9, ..Default::default() };
        let pc = pc.validate().unwrap();
        assert_eq!((pc.producers, pc.consumers), (6, 3));
        let o = BenchConfig { mode: Mode::Oracle, structure: Structure::LpwStack, ..Default::default() };
        let o = o.validate().unwrap();
        assert_eq!((o.stretch, o.rule), (2000.0, Some(BoundRule::StaticStack)));
    }

    #[test]
    fn smoke_every_structure() {
        for s in Structure::ALL {
            let rec = run_benchmark(&quick(s)).unwrap();
            assert_eq!(rec.total_ops, 20_000);
            assert_eq!(rec.thread_ops.iter().sum::<u64>(), rec.total_ops);
            let v = rec.verification.unwrap();
            assert!(v.ok(), "{s}: {v:?}");
            assert_eq!(v.inserted, v.removed + v.drained);
            assert!(rec.final_snapshot.insert_window.width >= 1);
        }
    }

    #[test]
    fn strict_queue_single_thread_is_fifo() {
        let cfg = BenchConfig {
            structure: Structure::MsQueue,
            threads: 1,
            duration: Duration::from_millis(100),
            prefill: 0,
            ..Default::default()
        };
        let rec = run_benchmark(&cfg).unwrap();
        assert!(rec.total_ops > 0);
        assert!(rec.verification.unwrap().ok());
    }

    #[test]
    fn single_thread_runs_repeat() {
        let mut cfg = quick(Structure::LpwQueue);
        cfg.threads = 1;
        let a = run_benchmark(&cfg).unwrap();
        let b = run_benchmark(&cfg).unwrap();
        assert_eq!((a.inserts, a.removes, a.empty_removes), (b.inserts, b.removes, b.empty_removes));
    }

    #[test]
    fn bucket_ops_add_up() {
        let mut cfg = quick(Structure::LawQueue);
        cfg.ops = None;
        cfg.duration = Duration::from_millis(120);
        let rec = run_benchmark(&cfg).unwrap();
        assert_eq!(rec.buckets.iter().map(|b| b.ops).sum::<u64>(), rec.total_ops);
        assert!(rec.buckets.len() >= 4);
        let expect = rec.total_ops as f64 / rec.elapsed.as_secs_f64();
        assert!((rec.throughput - expect).abs() <= expect * 0.01);
    }

    #[test]
    fn oracle_mode_reports_samples() {
        let mut cfg = quick(Structure::LawQueue);
        cfg.mode = Mode::Oracle;
        cfg.stretch = Some(1.0);
        let rec = run_benchmark(&cfg).unwrap();
        let o = rec.oracle.as_ref().unwrap();
        assert_eq!(o.failures(), 0, "{:?}", o.details);
        assert!(o.summary.max <= 9);
        assert_eq!(o.removals, rec.removes + rec.verification.unwrap().drained);
        assert!(rec.passed());
    }

    #[test]
    fn empty_record_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&RunRecord::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), BUCKET_HEADER.join(",") + "\n");
        assert_eq!(parse_csv(&b""[..]).map(|p| p.buckets.len()).ok(), None);
    }

    #[test]
    fn two_buckets_two_rows() {
        let rec = RunRecord {
            meta: vec![("structure".into(), "law-queue".into())],
            buckets: vec![BucketRow { ops: 3, ..Default::default() }, BucketRow { t_ns: 25, ..Default::default() }],
            ..Default::default()
        };
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        let p = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(p.buckets.len(), 2);
        assert_eq!(p.meta, rec.meta);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(parse_csv(&b"a,b\n1,2\n"[..]).is_err());
        let bad = BUCKET_HEADER.join(",") + "\n1,2\n";
        assert!(parse_csv(bad.as_bytes()).is_err());
    }

    fn row() -> impl Strategy<Value = BucketRow> {
        let f = || prop_oneof![Just(0.0), 0.0f64..1e12, any::<u32>().prop_map(|x| x as f64 / 7.0)];
        (
            (any::<u64>(), any::<u64>(), f(), any::<u16>(), any::<u16>(), any::<u16>(), any::<u16>()),
            (any::<u64>(), any::<u64>(), any::<u32>(), f(), f(), f(), any::<u64>()),
        )
            .prop_map(|(a, b)| BucketRow {
                t_ns: a.0,
                ops: a.1,
                throughput: a.2,
                insert_width: a.3 as u64,
                insert_depth: a.4 as u64,
                remove_width: a.5 as u64,
                remove_depth: a.6 as u64,
                bound_k: b.0,
                insert_error: b.1,
                active_producers: b.2 as u64,
                producer_latency_ns: b.3,
                consumer_latency_ns: b.4,
                mean_rank: b.5,
                max_rank: b.6,
            })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec(row(), 0..20), seed in any::<u64>()) {
            let rec = RunRecord {
                meta: vec![("seed".into(), seed.to_string())],
                buckets: rows,
                ..Default::default()
            };
            let mut buf = Vec::new();
            write_csv(&rec, &mut buf).unwrap();
            let p = parse_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(p.buckets, rec.buckets);
            prop_assert_eq!(p.meta, rec.meta);
        }
    }
}
