use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::directive::{Directive, DirectiveName};

use super::exec::Scope;

/// Executable meaning of an opaque statement, used by the plan executor and the
/// sequential oracle. Rendering never looks at it.
pub type Action = Arc<dyn Fn(&mut Scope) + Send + Sync>;

/// One host-language statement (possibly several lines) treated as opaque text
/// plus its variable usage.
#[derive(Clone)]
pub struct Code {
    pub text: String,
    pub reads: Vec<String>,
    pub writes: Vec<String>,
    pub action: Option<Action>,
}

impl fmt::Debug for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Code")
            .field("text", &self.text)
            .field("reads", &self.reads)
            .field("writes", &self.writes)
            .finish_non_exhaustive()
    }
}

/// A counted loop `for var in range(start, stop, step)`. Bound expressions are
/// opaque text evaluated once before the loop starts.
#[derive(Debug, Clone)]
pub struct Loop {
    pub var: String,
    pub start: String,
    pub stop: String,
    pub step: String,
    /// Variables read by the bound expressions.
    pub bound_reads: Vec<String>,
    pub body: Vec<Stmt>,
}

/// A directive together with the statements it applies to. Stand-alone
/// directives (`taskwait`, `barrier`) have no body.
#[derive(Debug, Clone)]
pub struct Construct {
    pub directive: Directive,
    pub body: Option<Vec<Stmt>>,
}

#[derive(Debug, Clone)]
pub enum Stmt {
    Code(Code),
    Loop(Loop),
    Construct(Construct),
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Stmt {
    pub fn code(text: &str, reads: &[&str], writes: &[&str]) -> Stmt {
        Stmt::Code(Code {
            text: text.to_string(),
            reads: names(reads),
            writes: names(writes),
            action: None,
        })
    }

    pub fn code_with<F>(text: &str, reads: &[&str], writes: &[&str], action: F) -> Stmt
    where
        F: Fn(&mut Scope) + Send + Sync + 'static,
    {
        Stmt::Code(Code {
            text: text.to_string(),
            reads: names(reads),
            writes: names(writes),
            action: Some(Arc::new(action)),
        })
    }

    /// `for var in range(start, stop, step)`.
    pub fn range_loop(var: &str, bounds: [&str; 3], bound_reads: &[&str], body: Vec<Stmt>) -> Stmt {
        Stmt::Loop(Loop {
            var: var.to_string(),
            start: bounds[0].to_string(),
            stop: bounds[1].to_string(),
            step: bounds[2].to_string(),
            bound_reads: names(bound_reads),
            body,
        })
    }

    /// Panics if `directive` does not parse; meant for literals.
    pub fn construct(directive: &str, body: Vec<Stmt>) -> Stmt {
        Stmt::Construct(Construct {
            directive: crate::directive::parse(directive)
                .unwrap_or_else(|e| panic!("bad directive {directive:?}: {e}")),
            body: Some(body),
        })
    }

    pub fn standalone(directive: &str) -> Stmt {
        Stmt::Construct(Construct {
            directive: crate::directive::parse(directive)
                .unwrap_or_else(|e| panic!("bad directive {directive:?}: {e}")),
            body: None,
        })
    }

    /// Adds every variable this statement reads or writes (recursively).
    pub(crate) fn collect_usage(&self, reads: &mut BTreeSet<String>, writes: &mut BTreeSet<String>) {
        match self {
            Stmt::Code(c) => {
                reads.extend(c.reads.iter().cloned());
                writes.extend(c.writes.iter().cloned());
            }
            Stmt::Loop(l) => {
                reads.extend(l.bound_reads.iter().cloned());
                writes.insert(l.var.clone());
                for s in &l.body {
                    s.collect_usage(reads, writes);
                }
            }
            Stmt::Construct(c) => {
                for v in clause_vars(&c.directive) {
                    reads.insert(v.clone());
                    writes.insert(v);
                }
                for s in c.body.iter().flatten() {
                    s.collect_usage(reads, writes);
                }
            }
        }
    }
}

/// Every variable named in a data-sharing, reduction or copyprivate clause.
pub(crate) fn clause_vars(d: &Directive) -> Vec<String> {
    d.clauses().iter().filter_map(|c| c.vars()).flatten().cloned().collect()
}

/// Shape of a block as seen by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Plain,
    /// A single loop statement; `depth` counts perfectly nested levels.
    CountedLoop {
        depth: usize,
    },
    /// Only `section` constructs.
    SectionList {
        count: usize,
    },
}

/// A structured block plus its usage sets.
#[derive(Debug, Clone)]
pub struct BlockDescriptor {
    pub body: Vec<Stmt>,
    pub reads: BTreeSet<String>,
    pub writes: BTreeSet<String>,
    /// Names first assigned inside the block.
    pub locals: BTreeSet<String>,
}

impl BlockDescriptor {
    /// Computes usage sets. A written name is local unless it is in
    /// `defined_before` or listed in a clause of `directive`.
    pub fn new(body: Vec<Stmt>, defined_before: &BTreeSet<String>, directive: Option<&Directive>) -> Self {
        let mut reads = BTreeSet::new();
        let mut writes = BTreeSet::new();
        for s in &body {
            s.collect_usage(&mut reads, &mut writes);
        }
        let listed: BTreeSet<String> = directive.map(clause_vars).unwrap_or_default().into_iter().collect();
        let locals = writes
            .iter()
            .filter(|w| !defined_before.contains(*w) && !listed.contains(*w))
            .cloned()
            .collect();
        BlockDescriptor {
            body,
            reads,
            writes,
            locals,
        }
    }

    pub fn kind(&self) -> BlockKind {
        if !self.body.is_empty()
            && self
                .body
                .iter()
                .all(|s| matches!(s, Stmt::Construct(c) if c.directive.names() == [DirectiveName::Section]))
        {
            return BlockKind::SectionList { count: self.body.len() };
        }
        match self.body.as_slice() {
            [Stmt::Loop(l)] => BlockKind::CountedLoop {
                depth: perfect_depth(l),
            },
            _ => BlockKind::Plain,
        }
    }

    /// Non-local variables: used in the block but not local to it.
    pub fn non_locals(&self) -> BTreeSet<String> {
        self.reads
            .union(&self.writes)
            .filter(|v| !self.locals.contains(*v))
            .cloned()
            .collect()
    }
}

/// Number of loops nested with nothing else between them.
pub fn perfect_depth(l: &Loop) -> usize {
    match l.body.as_slice() {
        [Stmt::Loop(inner)] => 1 + perfect_depth(inner),
        _ => 1,
    }
}

/// A function containing directives: the unit that gets rewritten.
#[derive(Debug, Clone)]
pub struct FunctionDescriptor {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

impl FunctionDescriptor {
    pub fn new(name: &str, params: &[&str], body: Vec<Stmt>) -> Self {
        FunctionDescriptor {
            name: name.to_string(),
            params: names(params),
            body,
        }
    }
}
