use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use omprt::bench::{csv_writer, sweep, BenchConfig, BenchError, BenchName};
use omprt::{omp_get_max_threads, ScheduleSpec};

/// Thread-sweep timings for the pi, quad, jacobi, fib and wordcount kernels.
#[derive(Debug, Parser)]
#[command(name = "bench")]
struct Args {
    /// pi, quad, jacobi, fib or wordcount
    #[arg(long)]
    bench: BenchName,
    /// Problem size; defaults per kernel
    #[arg(long)]
    size: Option<u64>,
    /// Comma-separated thread counts (default: OMP_NUM_THREADS or the CPU count)
    #[arg(long, value_delimiter = ',')]
    threads: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// kind[,chunk]
    #[arg(long, default_value = "static")]
    schedule: ScheduleSpec,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// CSV destination (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> Result<(), BenchError> {
    let cfg = BenchConfig {
        bench: args.bench,
        size: args.size.unwrap_or(args.bench.default_size()),
        threads: args.threads.unwrap_or_else(|| vec![omp_get_max_threads()]),
        repeats: args.repeats,
        schedule: args.schedule,
        seed: args.seed,
    };
    cfg.validate()?;
    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = csv_writer(sink)?;
    let results = sweep(&cfg, &mut out)?;
    out.flush()?;
    for r in &results {
        eprintln!(
            "{} threads={} mean={:.6}s stddev={:.6}s checksum={}",
            r.bench, r.threads, r.mean, r.stddev, r.checksum
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            ExitCode::FAILURE
        }
    }
}
