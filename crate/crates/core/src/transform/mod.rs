//! Rewrite planning: turns a directive plus a described block into captures and
//! an ordered lowering onto runtime calls, and renders that lowering as text.
//!
//! Host code is described with [`Stmt`] values (opaque statement text plus the
//! variables each statement reads and writes). A host binding that extracts
//! these from real source is outside this module.

mod block;
mod classify;
mod exec;
mod plan;
mod render;

use thiserror::Error;

pub use block::{Action, BlockDescriptor, BlockKind, Code, Construct, FunctionDescriptor, Loop, Stmt};
pub use classify::{classify_variables, Capture};
pub use exec::{eval, execute_function, run_sequential, Scope, Value};
pub use plan::{
    plan, plan_function, substitute, Binding, Callable, Finish, ForLowering, FunctionPlan, Init, Lowering, RewritePlan,
    SectionsLowering, SingleLowering, Step, TEMP_PREFIX,
};
pub use render::{render_function, render_plan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("`{directive}` needs {expected}, found {found}")]
    IncompatibleBlock {
        directive: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("`{directive}` needs {needed} perfectly nested loops, found {found}")]
    ImperfectNesting {
        directive: String,
        needed: usize,
        found: usize,
    },
    #[error("`{directive}`: inner loop bounds depend on outer loop variable `{var}`")]
    DependentBounds { directive: String, var: String },
    #[error("`{directive}`: statements outside the loop")]
    StrayStatements { directive: String },
    #[error("variable `{var}` is not classified under default(none)")]
    DefaultNone { var: String },
    #[error("variable `{var}` is both {first} and {second}")]
    ConflictingClauses { var: String, first: String, second: String },
    #[error("`{var}` in {clause} is not defined before the construct")]
    UndefinedVariable { var: String, clause: &'static str },
    #[error("`{0}` requires a block")]
    MissingBody(String),
    #[error("`{0}` is a stand-alone directive and takes no block")]
    UnexpectedBody(String),
    #[error("`section` outside of `sections`")]
    OrphanSection,
    #[error("execution failed: {0}")]
    Execution(String),
}
