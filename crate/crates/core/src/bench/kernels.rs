use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data_env::{reduction_begin, reduction_end};
use crate::directive::ReductionOp;
use crate::runtime::{critical, parallel_run};
use crate::schedule::ScheduleSpec;
use crate::tasking::task_scope;
use crate::worksharing::{scheduled_range, single, StepRange};

/// Team size and loop schedule used by a kernel run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOpts {
    pub threads: usize,
    pub schedule: ScheduleSpec,
}

impl RunOpts {
    pub fn new(threads: usize) -> Self {
        RunOpts {
            threads,
            schedule: ScheduleSpec::STATIC,
        }
    }

    pub fn with_schedule(mut self, schedule: ScheduleSpec) -> Self {
        self.schedule = schedule;
        self
    }
}

fn region(opts: RunOpts, f: impl Fn() + Sync) {
    let outcome = parallel_run(Some(opts.threads.max(1)), None, f).expect("team size is positive");
    if let Some(e) = outcome.caught_errors.first() {
        panic!("kernel failed on thread {}: {}", e.thread_index, e.message);
    }
}

/// `Σ f(i)` over `0..n` with a `+` reduction across the team.
fn parallel_sum(n: u64, opts: RunOpts, f: impl Fn(u64) -> f64 + Sync) -> f64 {
    let total = Mutex::new(0.0f64);
    region(opts, || {
        let mut slot = reduction_begin(ReductionOp::Add, &total).expect("f64 supports +");
        let mut range = scheduled_range(StepRange::upto(n as i64), opts.schedule, false);
        while let Some((lo, hi)) = range.next_chunk() {
            let acc = slot.local_mut();
            // flat index k is iteration k for a 0..n range
            for k in lo..hi {
                *acc += f(k);
            }
        }
        drop(range);
        reduction_end(slot);
    });
    total.into_inner().unwrap_or_else(|e| e.into_inner())
}

/// Midpoint-rule estimate of `∫₀¹ 4/(1+x²) dx = π` with `n` intervals.
pub fn run_pi(n: u64, opts: RunOpts) -> f64 {
    assert!(n >= 1, "pi needs at least one interval");
    let w = 1.0 / n as f64;
    parallel_sum(n, opts, |i| {
        let x = (i as f64 + 0.5) * w;
        4.0 / (1.0 + x * x)
    }) * w
}

pub fn quad_integrand(x: f64) -> f64 {
    50.0 / (std::f64::consts::PI * (2500.0 * x * x + 1.0))
}

/// Average-value estimate of `∫₀¹⁰ f` from `n` midpoint samples.
pub fn run_quad(n: u64, opts: RunOpts) -> f64 {
    assert!(n >= 1, "quad needs at least one sample");
    let h = 10.0 / n as f64;
    parallel_sum(n, opts, |i| quad_integrand((i as f64 + 0.5) * h)) * h
}

/// A dense system `A x = b` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub dim: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearSystem {
    /// Off-diagonal entries uniform in [0, 1), each diagonal entry one more than
    /// its row's absolute off-diagonal sum, `b` uniform in [0, 1).
    pub fn generate(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            let mut row_sum = 0.0;
            for j in 0..dim {
                if i != j {
                    let v: f64 = rng.gen();
                    a[i * dim + j] = v;
                    row_sum += v;
                }
            }
            a[i * dim + i] = row_sum + 1.0;
        }
        let b = (0..dim).map(|_| rng.gen()).collect();
        LinearSystem { dim, a, b }
    }

    pub fn identity(b: Vec<f64>) -> Self {
        let dim = b.len();
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = 1.0;
        }
        LinearSystem { dim, a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiResult {
    pub x: Vec<f64>,
    /// Max-norm of the last update.
    pub error: f64,
    pub iterations: usize,
}

/// Jacobi iteration from `x = 0` until the max-norm update drops below `tol`
/// or `max_iters` sweeps have run.
pub fn run_jacobi(system: &LinearSystem, max_iters: usize, tol: f64, opts: RunOpts) -> JacobiResult {
    let n = system.dim;
    let mut x = vec![0.0f64; n];
    let next: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        let err = Mutex::new(0.0f64);
        let cur = &x;
        region(opts, || {
            let mut slot = reduction_begin(ReductionOp::Max, &err).expect("f64 supports max");
            for i in scheduled_range(StepRange::upto(n as i64), opts.schedule, false) {
                let i = i as usize;
                let row = &system.a[i * n..(i + 1) * n];
                let mut sigma = 0.0;
                for (j, (aij, xj)) in row.iter().zip(cur).enumerate() {
                    if j != i {
                        sigma += aij * xj;
                    }
                }
                let v = (system.b[i] - sigma) / row[i];
                next[i].store(v.to_bits(), Ordering::Relaxed);
                slot.accumulate((v - cur[i]).abs());
            }
            reduction_end(slot);
        });
        for (xi, v) in x.iter_mut().zip(&next) {
            *xi = f64::from_bits(v.load(Ordering::Relaxed));
        }
        error = err.into_inner().unwrap_or_else(|e| e.into_inner());
        iterations += 1;
        if error < tol {
            break;
        }
    }
    JacobiResult { x, error, iterations }
}

/// `‖A x − b‖∞`.
pub fn residual(system: &LinearSystem, x: &[f64]) -> f64 {
    let n = system.dim;
    (0..n)
        .map(|i| {
            let ax: f64 = system.a[i * n..(i + 1) * n].iter().zip(x).map(|(a, x)| a * x).sum();
            (ax - system.b[i]).abs()
        })
        .fold(0.0, f64::max)
}

fn fib_task(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let (mut i, mut j) = (0, 0);
    task_scope(|s| {
        s.spawn(|| i = fib_task(n - 1));
        s.spawn(|| j = fib_task(n - 2));
    });
    i + j
}

/// Recursive Fibonacci with two tasks per call, started by one member of a team.
pub fn run_fib(n: u64, opts: RunOpts) -> u64 {
    let out = Mutex::new(0);
    region(opts, || {
        single(false, || *out.lock().unwrap() = fib_task(n));
    });
    out.into_inner().unwrap()
}

pub type WordCounts = HashMap<Vec<u8>, u64>;

fn count_line(line: &[u8], into: &mut WordCounts) {
    for w in line.split(|b| b.is_ascii_whitespace()).filter(|w| !w.is_empty()) {
        *into.entry(w.to_vec()).or_insert(0) += 1;
    }
}

/// Counts whitespace-separated words; lines are shared out over the team and
/// per-thread tables are merged under a critical section.
pub fn run_wordcount(text: &[u8], opts: RunOpts) -> WordCounts {
    let lines: Vec<&[u8]> = text.split(|b| *b == b'\n').collect();
    let count = Mutex::new(WordCounts::new());
    region(opts, || {
        let mut local = WordCounts::new();
        for i in scheduled_range(StepRange::upto(lines.len() as i64), opts.schedule, false) {
            count_line(lines[i as usize], &mut local);
        }
        critical(None, || {
            let mut shared = count.lock().unwrap();
            for (w, c) in local.drain() {
                *shared.entry(w).or_insert(0) += c;
            }
        });
    });
    count.into_inner().unwrap()
}

/// Random text of `chars` bytes: lowercase words of 3 to 10 letters, each
/// followed by a newline with probability 0.1 and a space otherwise.
pub fn generate_text(chars: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(chars + 11);
    while out.len() < chars {
        let len = rng.gen_range(3..=10);
        out.extend((0..len).map(|_| rng.gen_range(b'a'..=b'z')));
        out.push(if rng.gen_bool(0.1) { b'\n' } else { b' ' });
    }
    out.truncate(chars);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_count(text: &[u8]) -> WordCounts {
        let mut m = WordCounts::new();
        for w in std::str::from_utf8(text).unwrap().split_whitespace() {
            *m.entry(w.as_bytes().to_vec()).or_default() += 1;
        }
        m
    }

    #[test]
    fn pi_single_interval() {
        assert!((run_pi(1, RunOpts::new(2)) - 3.2).abs() < 1e-15);
    }

    #[test]
    fn pi_independent_of_team_size() {
        let base = run_pi(100_000, RunOpts::new(1));
        for t in [2, 8] {
            let v = run_pi(100_000, RunOpts::new(t));
            assert!((v - base).abs() <= 1e-12 * base, "T={t}");
        }
        assert!((base - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn quad_single_sample() {
        assert!((run_quad(1, RunOpts::new(1)) - quad_integrand(5.0) * 10.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_identity_is_one_sweep() {
        let b = vec![0.25, -1.5, 3.0];
        let sys = LinearSystem::identity(b.clone());
        let r = run_jacobi(&sys, 1, 1e-12, RunOpts::new(2));
        assert_eq!(r.x, b);
        let r = run_jacobi(&sys, 100, 1e-12, RunOpts::new(2));
        assert_eq!(r.x, b);
        assert_eq!(r.iterations, 2);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn jacobi_is_team_size_independent() {
        let sys = LinearSystem::generate(48, 7);
        let a = run_jacobi(&sys, 1000, 1e-10, RunOpts::new(1));
        let b = run_jacobi(&sys, 1000, 1e-10, RunOpts::new(4));
        assert_eq!(a, b);
        assert!(residual(&sys, &a.x) <= 1e-8);
    }

    #[test]
    fn generated_matrix_is_dominant() {
        let sys = LinearSystem::generate(16, 3);
        for i in 0..16 {
            let off: f64 = (0..16).filter(|j| *j != i).map(|j| sys.a[i * 16 + j].abs()).sum();
            assert!(sys.a[i * 16 + i] > off);
        }
    }

    #[test]
    fn fib_values() {
        assert_eq!(run_fib(0, RunOpts::new(2)), 0);
        assert_eq!(run_fib(1, RunOpts::new(2)), 1);
        for t in [1, 2, 8] {
            assert_eq!(run_fib(10, RunOpts::new(t)), 55);
        }
        assert_eq!(run_fib(20, RunOpts::new(3)), 6765);
    }

    #[test]
    fn wordcount_small_cases() {
        let m = run_wordcount(b"a b a", RunOpts::new(2));
        assert_eq!(m.len(), 2);
        assert_eq!(m[&b"a".to_vec()], 2);
        assert_eq!(m[&b"b".to_vec()], 1);
        assert!(run_wordcount(b"", RunOpts::new(4)).is_empty());
    }

    #[test]
    fn wordcount_matches_sequential() {
        let text = generate_text(20_000, 11);
        let want = seq_count(&text);
        for t in [1, 3, 4] {
            assert_eq!(run_wordcount(&text, RunOpts::new(t)), want);
        }
    }

    #[test]
    fn generated_text_shape() {
        let text = generate_text(10_000, 1);
        assert_eq!(text.len(), 10_000);
        let words: Vec<&[u8]> = text
            .split(|b| b.is_ascii_whitespace())
            .filter(|w| !w.is_empty())
            .collect();
        // only the final word can be cut short
        assert!(words[..words.len() - 1].iter().all(|w| (3..=10).contains(&w.len())));
        let newlines = text.iter().filter(|b| **b == b'\n').count() as f64;
        let frac = newlines / words.len() as f64;
        assert!((0.05..0.15).contains(&frac), "{frac}");
        assert_eq!(generate_text(500, 9), generate_text(500, 9));
    }
}
