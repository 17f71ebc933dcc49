//! Named critical sections. Locks are process-wide and non-reentrant: a thread
//! that enters the same name twice without exiting deadlocks, as in OpenMP.

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread::{self, ThreadId};

use crate::error::{OmpError, Result};

const UNNAMED: &str = "<unnamed>";

#[derive(Default)]
struct CriticalLock {
    owner: Mutex<Option<ThreadId>>,
    cv: Condvar,
}

fn registry() -> &'static Mutex<HashMap<String, Arc<CriticalLock>>> {
    static LOCKS: OnceLock<Mutex<HashMap<String, Arc<CriticalLock>>>> = OnceLock::new();
    LOCKS.get_or_init(Default::default)
}

fn lock_for(name: Option<&str>) -> Arc<CriticalLock> {
    let key = name.unwrap_or(UNNAMED);
    let mut map = registry().lock().unwrap_or_else(|e| e.into_inner());
    map.entry(key.to_string()).or_default().clone()
}

pub fn critical_enter(name: Option<&str>) {
    let lock = lock_for(name);
    let me = thread::current().id();
    let mut owner = lock.owner.lock().unwrap_or_else(|e| e.into_inner());
    while owner.is_some() {
        owner = lock.cv.wait(owner).unwrap_or_else(|e| e.into_inner());
    }
    *owner = Some(me);
}

pub fn critical_exit(name: Option<&str>) -> Result<()> {
    let lock = lock_for(name);
    let me = thread::current().id();
    let mut owner = lock.owner.lock().unwrap_or_else(|e| e.into_inner());
    if *owner != Some(me) {
        return Err(OmpError::Logic(format!(
            "critical exit for `{}` without matching enter",
            name.unwrap_or(UNNAMED)
        )));
    }
    *owner = None;
    lock.cv.notify_one();
    Ok(())
}

/// Exits the critical section on drop, including during unwinding.
pub struct CriticalGuard<'a> {
    name: Option<&'a str>,
}

impl Drop for CriticalGuard<'_> {
    fn drop(&mut self) {
        let _ = critical_exit(self.name);
    }
}

pub fn critical_guard(name: Option<&str>) -> CriticalGuard<'_> {
    critical_enter(name);
    CriticalGuard { name }
}

/// Runs `f` under mutual exclusion with every other critical section of the same name.
pub fn critical<R>(name: Option<&str>, f: impl FnOnce() -> R) -> R {
    let _guard = critical_guard(name);
    f()
}
