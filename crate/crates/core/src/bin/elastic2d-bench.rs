//! Benchmark driver. `run` executes one configuration and writes the bucket
//! CSV; `sweep` repeats runs over thread counts and bounds and writes one
//! summary row per run. The exit code is nonzero when a configuration is
//! rejected or any enabled check fails.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use elastic2d::bench::{
    emit_csv, emit_samples_csv, mean_stddev, run_benchmark, ActivityStep, BenchConfig, Mode, Pin,
    RunRecord, ScheduleStep, Structure, Workload,
};
use elastic2d::{BenchError, ControllerConfig, DEFAULT_MAX_WIDTH};

#[derive(Parser)]
#[command(version, about = "Throughput and rank-error benchmarks for the elastic 2D structures")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configuration.
    Run(RunArgs),
    /// Repeat runs over thread counts and rank bounds.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, value_enum, default_value = "law-queue")]
    structure: Structure,
    #[arg(long, default_value_t = 4)]
    threads: usize,
    /// Seconds.
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    #[arg(long, default_value_t = 1 << 15)]
    prefill: u64,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 8)]
    depth: u32,
    #[arg(long, default_value_t = DEFAULT_MAX_WIDTH)]
    max_width: usize,
    #[arg(long, value_enum, default_value = "mixed50")]
    workload: Workload,
    /// Consumer threads for producer-consumer (default: a third).
    #[arg(long)]
    consumers: Option<usize>,
    /// Active producer fraction over time, `MS:FRACTION`; repeatable.
    #[arg(long = "activity")]
    activity: Vec<ActivityStep>,
    /// Reconfiguration `MS:w=..,d=..,hd=..,td=..`; repeatable.
    #[arg(long = "schedule")]
    schedule: Vec<ScheduleStep>,
    /// Enable the contention-driven width controller.
    #[arg(long)]
    controller: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "throughput")]
    mode: Mode,
    /// Stop after this many operations in total.
    #[arg(long)]
    ops: Option<u64>,
    /// Bucket width in milliseconds.
    #[arg(long, default_value_t = 25)]
    bucket_ms: u64,
    /// Oracle slow-down factor (default 1000 for queues, 2000 for the stack).
    #[arg(long)]
    stretch: Option<f64>,
    /// Shadow/live comparison every N operations in oracle mode; 0 disables.
    #[arg(long, default_value_t = 0)]
    audit_every: u64,
    /// Skip the post-run multiset check (saves memory on long runs).
    #[arg(long)]
    no_verify: bool,
}

impl Common {
    fn config(&self, pin: Pin) -> BenchConfig {
        BenchConfig {
            structure: self.structure,
            threads: self.threads,
            duration: Duration::from_secs_f64(self.duration.max(0.0)),
            prefill: self.prefill,
            width: self.width,
            depth: self.depth,
            k: None,
            max_width: self.max_width,
            schedule: self.schedule.clone(),
            workload: self.workload,
            consumers: self.consumers,
            activity: self.activity.clone(),
            controller: self.controller.then(ControllerConfig::default),
            seed: self.seed,
            mode: self.mode,
            ops: self.ops,
            bucket: Duration::from_millis(self.bucket_ms),
            stretch: self.stretch,
            bound_rule: None,
            audit_every: self.audit_every,
            pin,
            verify: !self.no_verify,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Rank bound; sets width to twice the thread count and the largest depth within it.
    #[arg(long)]
    k: Option<u64>,
    /// Bucket CSV output.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Per-removal rank samples (oracle mode).
    #[arg(long)]
    samples: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    thread_counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "8,512,5000")]
    ks: Vec<u64>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn summarize(rec: &RunRecord) -> String {
    let mut s = format!("ops={} throughput={:.0}/s", rec.total_ops, rec.throughput);
    if let Some(v) = &rec.verification {
        s += &format!(
            " multiset={} (missing {} duplicated {} foreign {} lanes {})",
            if v.ok() { "ok" } else { "FAILED" },
            v.missing,
            v.duplicated,
            v.foreign,
            v.lane_mismatches
        );
    }
    if let Some(o) = &rec.oracle {
        s += &format!(" rank mean={:.3} max={} violations={}", o.summary.mean, o.summary.max, o.failures());
        for d in o.details.iter().take(5) {
            s += &format!("\n  {d}");
        }
    }
    s
}

fn run(args: RunArgs, pin: Pin) -> Result<bool, BenchError> {
    let mut cfg = args.common.config(pin);
    cfg.k = args.k;
    let rec = run_benchmark(&cfg)?;
    if let Some(p) = &args.out {
        emit_csv(&rec, p)?;
    } else {
        elastic2d::bench::write_csv(&rec, std::io::stdout().lock())
            .map_err(|source| BenchError::Io { path: "<stdout>".into(), source })?;
    }
    if let Some(p) = &args.samples {
        emit_samples_csv(&rec.samples, p)?;
    }
    eprintln!("{}: {}", cfg.structure, summarize(&rec));
    Ok(rec.passed())
}

fn sweep(args: SweepArgs, pin: Pin) -> Result<bool, BenchError> {
    let path = args.out.clone().unwrap_or_else(|| PathBuf::from("/dev/stdout"));
    let io = |source| BenchError::Io { path: path.clone(), source };
    let mut out = std::fs::File::create(&path).map_err(io)?;
    writeln!(out, "structure,threads,k,width,depth,rep,ops,throughput,rank_mean,rank_max,passed").map_err(io)?;
    let mut passed = true;
    for &threads in &args.thread_counts {
        // strict baselines ignore k; run them once per thread count
        let ks: Vec<Option<u64>> =
            if args.common.structure.is_relaxed() { args.ks.iter().map(|&k| Some(k)).collect() } else { vec![None] };
        for k in ks {
            let mut tput = Vec::new();
            for rep in 0..args.reps {
                let mut cfg = args.common.config(pin);
                cfg.threads = threads;
                cfg.k = k;
                cfg.seed = args.common.seed.wrapping_add(rep as u64);
                let r = cfg.validate()?;
                let rec = run_benchmark(&cfg)?;
                passed &= rec.passed();
                tput.push(rec.throughput);
                let (mean, max) = rec.oracle.as_ref().map(|o| (o.summary.mean, o.summary.max)).unwrap_or((0.0, 0));
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    cfg.structure,
                    threads,
                    k.map(|k| k.to_string()).unwrap_or_default(),
                    r.width,
                    r.depth,
                    rep,
                    rec.total_ops,
                    rec.throughput,
                    mean,
                    max,
                    rec.passed()
                )
                .map_err(io)?;
            }
            let (m, sd) = mean_stddev(&tput);
            eprintln!("{} threads={threads} k={k:?}: {m:.0} ± {sd:.0} ops/s", args.common.structure);
        }
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Pin::from_env().and_then(|pin| match cli.cmd {
        Cmd::Run(a) => run(a, pin),
        Cmd::Sweep(a) => sweep(a, pin),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a run failed its checks");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
