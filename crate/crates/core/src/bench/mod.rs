//! Desk-scale benchmark kernels and the thread-sweep harness behind the
//! `bench` binary.

mod kernels;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::schedule::ScheduleSpec;

pub use kernels::{
    generate_text, quad_integrand, residual, run_fib, run_jacobi, run_pi, run_quad, run_wordcount, JacobiResult,
    LinearSystem, RunOpts, WordCounts,
};

pub const CSV_HEADER: [&str; 5] = ["bench", "threads", "run", "seconds", "checksum"];

/// Iteration cap and tolerance for the jacobi kernel.
pub const JACOBI_MAX_ITERS: usize = 1000;
pub const JACOBI_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchName {
    Pi,
    Quad,
    Jacobi,
    Fib,
    Wordcount,
}

impl BenchName {
    pub const ALL: [BenchName; 5] = [
        BenchName::Pi,
        BenchName::Quad,
        BenchName::Jacobi,
        BenchName::Fib,
        BenchName::Wordcount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchName::Pi => "pi",
            BenchName::Quad => "quad",
            BenchName::Jacobi => "jacobi",
            BenchName::Fib => "fib",
            BenchName::Wordcount => "wordcount",
        }
    }

    /// Intervals, samples, matrix dimension, n, or characters.
    pub fn default_size(self) -> u64 {
        match self {
            BenchName::Pi | BenchName::Quad => 10_000_000,
            BenchName::Jacobi => 512,
            BenchName::Fib => 25,
            BenchName::Wordcount => 1_000_000,
        }
    }
}

impl fmt::Display for BenchName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchName {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        BenchName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| BenchError::InvalidConfig(format!("unknown bench `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchConfig {
    pub bench: BenchName,
    pub size: u64,
    pub threads: Vec<usize>,
    pub repeats: usize,
    pub schedule: ScheduleSpec,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(bench: BenchName) -> Self {
        BenchConfig {
            bench,
            size: bench.default_size(),
            threads: vec![1],
            repeats: 10,
            schedule: ScheduleSpec::STATIC,
            seed: 42,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_string()));
        if self.size == 0 {
            return bad("size must be positive");
        }
        if self.threads.is_empty() || self.threads.contains(&0) {
            return bad("threads must be a non-empty list of positive integers");
        }
        if self.repeats == 0 {
            return bad("repeats must be positive");
        }
        if self.bench == BenchName::Fib && self.size > 40 {
            return bad("fib size must be at most 40");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub bench: BenchName,
    pub threads: usize,
    pub mean: f64,
    pub stddev: f64,
    pub checksum: f64,
    /// Seconds per timed repeat.
    pub samples: Vec<f64>,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub bench: BenchName,
    pub threads: usize,
    pub run: usize,
    pub seconds: f64,
    pub checksum: f64,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{bench} with {threads} threads, run {run}: result {got} does not match reference {want}")]
    ChecksumMismatch {
        bench: BenchName,
        threads: usize,
        run: usize,
        got: f64,
        want: f64,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Prepared input plus the sequential reference result.
enum Workload {
    Pi { n: u64, want: f64 },
    Quad { n: u64, want: f64 },
    Jacobi { system: LinearSystem, want: JacobiResult },
    Fib { n: u64, want: u64 },
    Wordcount { text: Vec<u8>, want: WordCounts },
}

fn pi_oracle(n: u64) -> f64 {
    let w = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) * w;
            4.0 / (1.0 + x * x)
        })
        .sum::<f64>()
        * w
}

fn quad_oracle(n: u64) -> f64 {
    let h = 10.0 / n as f64;
    (0..n).map(|i| quad_integrand((i as f64 + 0.5) * h)).sum::<f64>() * h
}

fn jacobi_oracle(s: &LinearSystem) -> JacobiResult {
    let n = s.dim;
    let mut x = vec![0.0; n];
    let mut iterations = 0;
    let mut error = f64::INFINITY;
    while iterations < JACOBI_MAX_ITERS {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let sigma: f64 = (0..n).filter(|j| *j != i).map(|j| s.a[i * n + j] * x[j]).sum();
                (s.b[i] - sigma) / s.a[i * n + i]
            })
            .collect();
        error = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = next;
        iterations += 1;
        if error < JACOBI_TOL {
            break;
        }
    }
    JacobiResult { x, error, iterations }
}

fn fib_oracle(n: u64) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        (a, b) = (b, a + b);
    }
    a
}

/// Whole-text word count, without splitting into lines first.
pub fn wordcount_oracle(text: &[u8]) -> WordCounts {
    let mut m = WordCounts::new();
    for w in text.split(u8::is_ascii_whitespace).filter(|w| !w.is_empty()) {
        *m.entry(w.to_vec()).or_default() += 1;
    }
    m
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * want.abs().max(f64::MIN_POSITIVE)
}

impl Workload {
    fn prepare(cfg: &BenchConfig) -> Workload {
        let n = cfg.size;
        match cfg.bench {
            BenchName::Pi => Workload::Pi { n, want: pi_oracle(n) },
            BenchName::Quad => Workload::Quad {
                n,
                want: quad_oracle(n),
            },
            BenchName::Jacobi => {
                let system = LinearSystem::generate(n as usize, cfg.seed);
                let want = jacobi_oracle(&system);
                Workload::Jacobi { system, want }
            }
            BenchName::Fib => Workload::Fib { n, want: fib_oracle(n) },
            BenchName::Wordcount => {
                let text = generate_text(n as usize, cfg.seed);
                let want = wordcount_oracle(&text);
                Workload::Wordcount { text, want }
            }
        }
    }

    /// Runs once; returns (checksum, reference checksum, matches reference).
    fn run(&self, opts: RunOpts) -> (f64, f64, bool) {
        match self {
            Workload::Pi { n, want } => {
                let got = run_pi(*n, opts);
                (got, *want, rel_close(got, *want, 1e-12))
            }
            Workload::Quad { n, want } => {
                let got = run_quad(*n, opts);
                (got, *want, (got - want).abs() <= 1e-4)
            }
            Workload::Jacobi { system, want } => {
                let got = run_jacobi(system, JACOBI_MAX_ITERS, JACOBI_TOL, opts);
                let sum = |r: &JacobiResult| r.x.iter().sum::<f64>();
                (sum(&got), sum(want), got == *want)
            }
            Workload::Fib { n, want } => {
                let got = run_fib(*n, opts);
                (got as f64, *want as f64, got == *want)
            }
            Workload::Wordcount { text, want } => {
                let got = run_wordcount(text, opts);
                let total = |m: &WordCounts| m.values().sum::<u64>() as f64;
                (total(&got), total(want), got == *want)
            }
        }
    }
}

fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs `cfg.bench` for every thread count: one unrecorded warm-up, then
/// `cfg.repeats` timed runs. Every run is checked against the sequential
/// reference before its row is written.
pub fn sweep<W: Write>(cfg: &BenchConfig, out: &mut csv::Writer<W>) -> Result<Vec<BenchResult>, BenchError> {
    cfg.validate()?;
    let work = Workload::prepare(cfg);
    let mut results = Vec::new();
    for &threads in &cfg.threads {
        let opts = RunOpts::new(threads).with_schedule(cfg.schedule);
        let check = |run: usize, (got, want, ok): (f64, f64, bool)| {
            if ok {
                Ok(got)
            } else {
                Err(BenchError::ChecksumMismatch {
                    bench: cfg.bench,
                    threads,
                    run,
                    got,
                    want,
                })
            }
        };
        check(0, work.run(opts))?;
        let mut samples = Vec::with_capacity(cfg.repeats);
        let mut checksum = 0.0;
        for run in 1..=cfg.repeats {
            let start = Instant::now();
            let r = work.run(opts);
            let seconds = start.elapsed().as_secs_f64();
            checksum = check(run, r)?;
            out.write_record([
                cfg.bench.as_str().to_string(),
                threads.to_string(),
                run.to_string(),
                format!("{seconds:.9}"),
                checksum.to_string(),
            ])?;
            samples.push(seconds);
        }
        out.flush()?;
        let (mean, stddev) = mean_stddev(&samples);
        results.push(BenchResult {
            bench: cfg.bench,
            threads,
            mean,
            stddev,
            checksum,
            samples,
        });
    }
    Ok(results)
}

/// A CSV writer with the header row already written.
pub fn csv_writer<W: Write>(w: W) -> Result<csv::Writer<W>, BenchError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    Ok(out)
}
