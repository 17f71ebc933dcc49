use std::collections::BTreeMap;
use std::fmt;

use crate::directive::{Clause, DefaultKind, Directive, DirectiveName, ReductionOp};

use super::block::{BlockDescriptor, BlockKind, Stmt};
use super::TransformError;

/// Data-sharing class of one captured variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capture {
    Shared,
    Private,
    FirstPrivate,
    LastPrivate,
    Reduction(ReductionOp),
}

impl fmt::Display for Capture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capture::Shared => f.write_str("shared"),
            Capture::Private => f.write_str("private"),
            Capture::FirstPrivate => f.write_str("firstprivate"),
            Capture::LastPrivate => f.write_str("lastprivate"),
            Capture::Reduction(op) => write!(f, "reduction({})", op.symbol()),
        }
    }
}

/// Loop variables bound by a worksharing `for` (the collapsed levels).
pub(crate) fn worksharing_loop_vars(directive: &Directive, block: &BlockDescriptor) -> Vec<String> {
    if !directive.has(DirectiveName::For) {
        return Vec::new();
    }
    let mut vars = Vec::new();
    let mut level = block.body.first();
    for _ in 0..directive.collapse() {
        match level {
            Some(Stmt::Loop(l)) => {
                vars.push(l.var.clone());
                level = l.body.first();
            }
            _ => break,
        }
    }
    vars
}

/// Assigns a data-sharing class to every non-local variable of `block`, plus
/// every variable named in a clause. Loop variables of a worksharing loop and
/// names first assigned inside the block are not captured. Unlisted variables
/// are shared, except that a task without a `default` clause takes
/// firstprivate copies of the variables it reads.
pub fn classify_variables(
    directive: &Directive,
    block: &BlockDescriptor,
) -> Result<BTreeMap<String, Capture>, TransformError> {
    let mut captures = BTreeMap::new();
    for clause in directive.clauses() {
        let (class, vars) = match clause {
            Clause::Shared(v) => (Capture::Shared, v),
            Clause::Private(v) => (Capture::Private, v),
            Clause::FirstPrivate(v) => (Capture::FirstPrivate, v),
            Clause::LastPrivate(v) => (Capture::LastPrivate, v),
            Clause::Reduction(op, v) => (Capture::Reduction(*op), v),
            _ => continue,
        };
        for var in vars {
            match captures.get(var) {
                None => {
                    captures.insert(var.clone(), class);
                }
                // Both copies are kept: initialised on entry, written back on exit.
                Some(Capture::FirstPrivate) if class == Capture::LastPrivate => {
                    captures.insert(var.clone(), Capture::LastPrivate);
                }
                Some(Capture::LastPrivate) if class == Capture::FirstPrivate => {}
                Some(prev) => {
                    return Err(TransformError::ConflictingClauses {
                        var: var.clone(),
                        first: prev.to_string(),
                        second: class.to_string(),
                    })
                }
            }
        }
    }

    let own_loop_vars = worksharing_loop_vars(directive, block);
    let strict = directive.default_kind() == Some(DefaultKind::None);
    // Without default(shared), a task copies what it reads and shares what it only writes.
    let task_copies = directive.has(DirectiveName::Task) && directive.default_kind().is_none();
    for var in block.non_locals() {
        if captures.contains_key(&var) || own_loop_vars.contains(&var) {
            continue;
        }
        if strict {
            return Err(TransformError::DefaultNone { var });
        }
        let class = if task_copies && block.reads.contains(&var) {
            Capture::FirstPrivate
        } else {
            Capture::Shared
        };
        captures.insert(var, class);
    }
    Ok(captures)
}

/// Checks that the block has the shape the directive needs.
pub(crate) fn check_shape(directive: &Directive, block: &BlockDescriptor) -> Result<(), TransformError> {
    let what = directive.to_string();
    if directive.has(DirectiveName::For) {
        let loops = block.body.iter().filter(|s| matches!(s, Stmt::Loop(_))).count();
        return match block.kind() {
            BlockKind::CountedLoop { depth } => {
                let need = directive.collapse() as usize;
                if depth < need {
                    return Err(TransformError::ImperfectNesting {
                        directive: what,
                        needed: need,
                        found: depth,
                    });
                }
                check_independent_bounds(block, need, &what)
            }
            _ if loops > 0 => Err(TransformError::StrayStatements { directive: what }),
            found => Err(TransformError::IncompatibleBlock {
                directive: what,
                expected: "a counted loop",
                found: describe(found),
            }),
        };
    }
    if directive.has(DirectiveName::Sections) {
        return match block.kind() {
            BlockKind::SectionList { .. } => Ok(()),
            found => Err(TransformError::IncompatibleBlock {
                directive: what,
                expected: "a list of section blocks",
                found: describe(found),
            }),
        };
    }
    Ok(())
}

fn describe(kind: BlockKind) -> &'static str {
    match kind {
        BlockKind::Plain => "a plain block",
        BlockKind::CountedLoop { .. } => "a counted loop",
        BlockKind::SectionList { .. } => "a section list",
    }
}

/// Collapsed inner loops may not take their bounds from an outer loop variable.
fn check_independent_bounds(block: &BlockDescriptor, levels: usize, what: &str) -> Result<(), TransformError> {
    let mut outer: Vec<&str> = Vec::new();
    let mut stmt = block.body.first();
    for _ in 0..levels {
        let Some(Stmt::Loop(l)) = stmt else { break };
        if let Some(v) = l.bound_reads.iter().find(|r| outer.contains(&r.as_str())) {
            return Err(TransformError::DependentBounds {
                directive: what.to_string(),
                var: v.clone(),
            });
        }
        outer.push(&l.var);
        stmt = l.body.first();
    }
    Ok(())
}
