//! Data-sharing helpers: private bindings, firstprivate copies, lastprivate
//! write-back, reductions and copyprivate broadcast.

use std::any::{type_name, Any};
use std::sync::{Arc, Mutex};

use crate::directive::ReductionOp;
use crate::error::{OmpError, Result};
use crate::runtime::with_top;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrivateMode {
    /// Reads before the first write see `T::default()`.
    #[default]
    Permissive,
    /// Reads before the first write are an error.
    Strict,
}

/// A per-thread binding that starts uninitialised.
#[derive(Debug, Clone)]
pub struct Private<T> {
    value: Option<T>,
    mode: PrivateMode,
}

pub fn make_private<T>(mode: PrivateMode) -> Private<T> {
    Private { value: None, mode }
}

impl<T: Default + Clone> Private<T> {
    pub fn get(&self) -> Result<T> {
        match (&self.value, self.mode) {
            (Some(v), _) => Ok(v.clone()),
            (None, PrivateMode::Permissive) => Ok(T::default()),
            (None, PrivateMode::Strict) => Err(OmpError::ReadBeforeWrite),
        }
    }
}

impl<T> Private<T> {
    pub fn set(&mut self, value: T) {
        self.value = Some(value);
    }

    pub fn is_initialized(&self) -> bool {
        self.value.is_some()
    }

    pub fn into_inner(self) -> Option<T> {
        self.value
    }
}

/// Top-level copy of `value`. Containers get a new identity; elements that are
/// themselves shared handles (`Arc`, references) stay shared.
pub fn make_firstprivate<T: Clone>(value: &T) -> T {
    value.clone()
}

/// Assigns `local` to `target` iff `is_last`.
pub fn lastprivate_writeback<T>(is_last: bool, local: T, target: &mut T) {
    if is_last {
        *target = local;
    }
}

/// Values that can take part in a reduction.
pub trait Reducible: Copy + Send + 'static {
    fn identity(op: ReductionOp) -> Result<Self>;

    /// `a op b`. Only called with ops for which `identity` succeeded.
    fn combine(op: ReductionOp, a: Self, b: Self) -> Self;
}

fn unsupported<T>(op: ReductionOp) -> OmpError {
    OmpError::UnsupportedReduction {
        op,
        ty: type_name::<T>(),
    }
}

macro_rules! int_reducible {
    ($($t:ty),*) => {$(
        impl Reducible for $t {
            fn identity(op: ReductionOp) -> Result<Self> {
                use ReductionOp::*;
                match op {
                    Add | Sub | BitOr | BitXor => Ok(0),
                    Mul => Ok(1),
                    Min => Ok(<$t>::MAX),
                    Max => Ok(<$t>::MIN),
                    BitAnd => Ok(!0),
                    LogicalAnd | LogicalOr => Err(unsupported::<$t>(op)),
                }
            }

            fn combine(op: ReductionOp, a: Self, b: Self) -> Self {
                use ReductionOp::*;
                match op {
                    Add | Sub => a.wrapping_add(b),
                    Mul => a.wrapping_mul(b),
                    Min => a.min(b),
                    Max => a.max(b),
                    BitAnd => a & b,
                    BitOr => a | b,
                    BitXor => a ^ b,
                    LogicalAnd | LogicalOr => unreachable!("rejected by identity"),
                }
            }
        }
    )*};
}

int_reducible!(i8, i16, i32, i64, i128, isize, u8, u16, u32, u64, u128, usize);

macro_rules! float_reducible {
    ($($t:ty),*) => {$(
        impl Reducible for $t {
            fn identity(op: ReductionOp) -> Result<Self> {
                use ReductionOp::*;
                match op {
                    Add | Sub => Ok(0.0),
                    Mul => Ok(1.0),
                    Min => Ok(<$t>::INFINITY),
                    Max => Ok(<$t>::NEG_INFINITY),
                    _ => Err(unsupported::<$t>(op)),
                }
            }

            fn combine(op: ReductionOp, a: Self, b: Self) -> Self {
                use ReductionOp::*;
                match op {
                    Add | Sub => a + b,
                    Mul => a * b,
                    Min => a.min(b),
                    Max => a.max(b),
                    _ => unreachable!("rejected by identity"),
                }
            }
        }
    )*};
}

float_reducible!(f32, f64);

impl Reducible for bool {
    fn identity(op: ReductionOp) -> Result<Self> {
        use ReductionOp::*;
        match op {
            LogicalAnd | BitAnd | Min => Ok(true),
            LogicalOr | BitOr | BitXor | Max => Ok(false),
            Add | Sub | Mul => Err(unsupported::<bool>(op)),
        }
    }

    fn combine(op: ReductionOp, a: Self, b: Self) -> Self {
        use ReductionOp::*;
        match op {
            LogicalAnd | BitAnd | Min => a && b,
            LogicalOr | BitOr | Max => a || b,
            BitXor => a ^ b,
            Add | Sub | Mul => unreachable!("rejected by identity"),
        }
    }
}

/// Sequential left fold of `values` under `op`, starting from the identity.
pub fn fold<T: Reducible>(op: ReductionOp, values: impl IntoIterator<Item = T>) -> Result<T> {
    let init = T::identity(op)?;
    Ok(values.into_iter().fold(init, |acc, v| T::combine(op, acc, v)))
}

/// A member's private accumulator for one reduction target.
#[must_use = "call reduction_end to combine the partial result"]
pub struct ReductionSlot<'t, T: Reducible> {
    op: ReductionOp,
    local: T,
    target: &'t Mutex<T>,
}

/// Opens a slot whose local value starts at the identity of `op`.
pub fn reduction_begin<T: Reducible>(op: ReductionOp, target: &Mutex<T>) -> Result<ReductionSlot<'_, T>> {
    Ok(ReductionSlot {
        op,
        local: T::identity(op)?,
        target,
    })
}

impl<T: Reducible> ReductionSlot<'_, T> {
    pub fn op(&self) -> ReductionOp {
        self.op
    }

    /// `local = local op value`.
    pub fn accumulate(&mut self, value: T) {
        self.local = T::combine(self.op, self.local, value);
    }

    pub fn local(&self) -> T {
        self.local
    }

    pub fn local_mut(&mut self) -> &mut T {
        &mut self.local
    }
}

/// Combines the slot's partial result into its target under the target's lock.
pub fn reduction_end<T: Reducible>(slot: ReductionSlot<'_, T>) {
    let mut target = slot.target.lock().unwrap_or_else(|e| e.into_inner());
    *target = T::combine(slot.op, *target, slot.local);
}

/// Publishes `value` from the member granted the most recent `single`.
pub fn copyprivate_publish<T>(value: T) -> Result<()>
where
    T: Any + Clone + Send + Sync,
{
    let state = with_top(|f| f.last_single.borrow().clone())
        .ok_or_else(|| OmpError::Logic("copyprivate outside of a single construct".into()))?;
    state.publish(Arc::new(value))
}

/// Returns the value published for the most recent `single`, blocking until it exists.
pub fn copyprivate_collect<T>() -> Result<T>
where
    T: Any + Clone + Send + Sync,
{
    let state = with_top(|f| f.last_single.borrow().clone())
        .ok_or_else(|| OmpError::Logic("copyprivate outside of a single construct".into()))?;
    let payload = state.wait_payload();
    payload.downcast_ref::<T>().cloned().ok_or(OmpError::PayloadType {
        expected: type_name::<T>(),
    })
}
