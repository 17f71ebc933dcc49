use std::sync::OnceLock;
use std::thread;

use crate::schedule::ScheduleSpec;

/// Internal control variables of one initial thread's context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Icv {
    pub requested_num_threads: usize,
    pub nested_enabled: bool,
    pub runtime_schedule: ScheduleSpec,
}

impl Icv {
    pub fn defaults() -> Self {
        Icv {
            requested_num_threads: thread::available_parallelism().map_or(1, |n| n.get()),
            nested_enabled: false,
            runtime_schedule: ScheduleSpec::STATIC,
        }
    }

    /// Builds ICVs from `OMP_NUM_THREADS`, `OMP_NESTED` and `OMP_SCHEDULE` as
    /// returned by `lookup`. Malformed values keep their default and produce a warning.
    pub fn from_vars<F>(lookup: F) -> (Icv, Vec<String>)
    where
        F: Fn(&str) -> Option<String>,
    {
        let mut icv = Icv::defaults();
        let mut warnings = Vec::new();

        if let Some(raw) = lookup("OMP_NUM_THREADS") {
            match raw.trim().parse::<usize>() {
                Ok(n) if n >= 1 => icv.requested_num_threads = n,
                _ => warnings.push(format!("ignoring malformed OMP_NUM_THREADS={raw:?}")),
            }
        }
        if let Some(raw) = lookup("OMP_NESTED") {
            match raw.trim().to_ascii_lowercase().as_str() {
                "true" => icv.nested_enabled = true,
                "false" => icv.nested_enabled = false,
                _ => warnings.push(format!("ignoring malformed OMP_NESTED={raw:?}")),
            }
        }
        if let Some(raw) = lookup("OMP_SCHEDULE") {
            match raw.parse::<ScheduleSpec>() {
                Ok(spec) => icv.runtime_schedule = spec,
                Err(e) => warnings.push(format!("ignoring malformed OMP_SCHEDULE={raw:?}: {e}")),
            }
        }
        (icv, warnings)
    }

    /// Process environment, read once.
    pub fn from_process_env() -> Icv {
        static ENV: OnceLock<Icv> = OnceLock::new();
        ENV.get_or_init(|| {
            let (icv, warnings) = Icv::from_vars(|k| std::env::var(k).ok());
            for w in warnings {
                eprintln!("warning: {w}");
            }
            icv
        })
        .clone()
    }
}
