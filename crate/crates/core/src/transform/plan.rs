use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::directive::{Clause, ClauseKind, Directive, DirectiveName, ReductionOp};
use crate::schedule::ScheduleSpec;

use super::block::{BlockDescriptor, Code, FunctionDescriptor, Stmt};
use super::classify::{check_shape, classify_variables, worksharing_loop_vars, Capture};
use super::TransformError;

/// Prefix reserved for names introduced by the rewrite.
pub const TEMP_PREFIX: &str = "_omp_";

/// Lowering of one directive: its captures and the runtime operations that
/// replace it.
#[derive(Debug, Clone)]
pub struct RewritePlan {
    pub directive: Directive,
    pub captures: BTreeMap<String, Capture>,
    pub calls: Lowering,
}

#[derive(Debug, Clone)]
pub enum Lowering {
    /// Block wrapped in a callable and handed to `parallel_run`.
    Parallel {
        callable: Arc<Callable>,
        num_threads: Option<String>,
        if_expr: Option<String>,
    },
    /// Block wrapped in a callable and handed to `task_submit`.
    Task {
        callable: Arc<Callable>,
        if_expr: Option<String>,
    },
    For(ForLowering),
    Sections(SectionsLowering),
    Single(SingleLowering),
    Critical {
        name: Option<String>,
        body: Vec<Step>,
    },
    Taskwait,
    Barrier,
}

#[derive(Debug, Clone)]
pub struct Callable {
    pub name: String,
    /// Rendered names of outer variables the callable assigns or shares.
    pub nonlocal: Vec<String>,
    pub bindings: Vec<Binding>,
    pub body: Vec<Step>,
    pub finish: Vec<Finish>,
}

/// A fresh per-thread (or per-task) variable replacing `var` inside a construct.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub var: String,
    pub temp: String,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init {
    Uninit,
    /// Copy of the enclosing binding, rendered as `source`.
    Copy {
        source: String,
    },
    /// Identity of `op`; `source` gives the value's type.
    Identity {
        op: ReductionOp,
        source: String,
    },
}

/// Work done when a construct's block finishes, before its exit barrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finish {
    /// `target = target op temp` under the unnamed critical lock.
    Combine {
        var: String,
        target: String,
        temp: String,
        op: ReductionOp,
    },
    /// `target = temp` on the thread that ran the sequentially last iteration or section.
    WriteBack { var: String, target: String, temp: String },
}

#[derive(Debug, Clone)]
pub struct ForLowering {
    pub vars: Vec<String>,
    /// Rendered (start, stop, step) per collapsed level.
    pub bounds: Vec<[String; 3]>,
    /// The same expressions in terms of the original variable names.
    pub bounds_src: Vec<[String; 3]>,
    pub schedule: Option<ScheduleSpec>,
    pub nowait: bool,
    pub bindings: Vec<Binding>,
    pub body: Vec<Step>,
    pub finish: Vec<Finish>,
}

impl ForLowering {
    /// The loop itself skips the barrier when `finish` work has to happen first.
    pub fn range_nowait(&self) -> bool {
        self.nowait || !self.finish.is_empty()
    }

    pub fn barrier_after(&self) -> bool {
        !self.nowait && !self.finish.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SectionsLowering {
    pub nowait: bool,
    pub bindings: Vec<Binding>,
    pub sections: Vec<Vec<Step>>,
    pub finish: Vec<Finish>,
}

#[derive(Debug, Clone)]
pub struct SingleLowering {
    pub nowait: bool,
    pub flag: String,
    pub bindings: Vec<Binding>,
    pub body: Vec<Step>,
    /// (original name, rendered name) per copyprivate variable.
    pub copyprivate: Vec<(String, String)>,
}

#[derive(Debug, Clone)]
pub enum Step {
    Code {
        text: String,
        code: Code,
    },
    Loop {
        var: String,
        bounds: [String; 3],
        bounds_src: [String; 3],
        body: Vec<Step>,
    },
    Construct(Box<RewritePlan>),
}

/// A function with every directive replaced by its lowering.
#[derive(Debug, Clone)]
pub struct FunctionPlan {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Step>,
}

/// Replaces identifier tokens according to `renames`. Attribute names (after a
/// `.`) and string literals are left alone.
pub fn substitute(text: &str, renames: &BTreeMap<String, String>) -> String {
    if renames.is_empty() {
        return text.to_string();
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\'' || c == '"' {
            let start = i;
            i += 1;
            while i < chars.len() && chars[i] != c {
                if chars[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(chars.len());
            out.extend(&chars[start..i]);
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let after_dot = chars[..start].iter().rev().find(|c| !c.is_whitespace()) == Some(&'.');
            match renames.get(&word) {
                Some(new) if !after_dot => out.push_str(new),
                _ => out.push_str(&word),
            }
        } else if c.is_ascii_digit() {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                out.push(chars[i]);
                i += 1;
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

#[derive(Clone, Default)]
struct Env {
    renames: BTreeMap<String, String>,
    defined: BTreeSet<String>,
}

impl Env {
    fn rendered(&self, var: &str) -> String {
        self.renames.get(var).cloned().unwrap_or_else(|| var.to_string())
    }
}

struct Planner {
    counter: u64,
}

impl Planner {
    fn next(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }

    fn temp(&mut self, var: &str) -> String {
        format!("{TEMP_PREFIX}{var}_{}", self.next())
    }

    fn stmts(&mut self, stmts: &[Stmt], env: &mut Env) -> Result<Vec<Step>, TransformError> {
        stmts.iter().map(|s| self.stmt(s, env)).collect()
    }

    fn stmt(&mut self, stmt: &Stmt, env: &mut Env) -> Result<Step, TransformError> {
        match stmt {
            Stmt::Code(c) => {
                let step = Step::Code {
                    text: substitute(&c.text, &env.renames),
                    code: c.clone(),
                };
                env.defined.extend(c.writes.iter().cloned());
                Ok(step)
            }
            Stmt::Loop(l) => {
                let src = [l.start.clone(), l.stop.clone(), l.step.clone()];
                let bounds = src.clone().map(|e| substitute(&e, &env.renames));
                env.defined.insert(l.var.clone());
                let body = self.stmts(&l.body, env)?;
                Ok(Step::Loop {
                    var: l.var.clone(),
                    bounds,
                    bounds_src: src,
                    body,
                })
            }
            Stmt::Construct(c) => {
                let d = &c.directive;
                let body = match (&c.body, needs_body(d)) {
                    (Some(b), true) => b.as_slice(),
                    (None, false) => &[],
                    (Some(_), false) => return Err(TransformError::UnexpectedBody(d.to_string())),
                    (None, true) => return Err(TransformError::MissingBody(d.to_string())),
                };
                if d.names() == [DirectiveName::Section] {
                    return Err(TransformError::OrphanSection);
                }
                let block = BlockDescriptor::new(body.to_vec(), &env.defined, Some(d));
                let plan = self.construct(d, &block, env)?;
                if !matches!(plan.calls, Lowering::Parallel { .. } | Lowering::Task { .. }) {
                    env.defined.extend(block.writes.iter().cloned());
                }
                Ok(Step::Construct(Box::new(plan)))
            }
        }
    }

    fn construct(&mut self, d: &Directive, block: &BlockDescriptor, env: &Env) -> Result<RewritePlan, TransformError> {
        check_shape(d, block)?;
        let captures = classify_variables(d, block)?;
        for clause in d.clauses() {
            let needs_outer = matches!(
                clause.kind(),
                ClauseKind::FirstPrivate | ClauseKind::LastPrivate | ClauseKind::Reduction
            );
            for var in clause.vars().unwrap_or_default() {
                if needs_outer && !env.defined.contains(var) {
                    return Err(TransformError::UndefinedVariable {
                        var: var.clone(),
                        clause: clause.kind().as_str(),
                    });
                }
            }
        }

        let calls = if d.has(DirectiveName::Parallel) {
            self.parallel(d, block, env, &captures)?
        } else if d.has(DirectiveName::Task) {
            self.task(d, block, env, &captures)?
        } else if d.has(DirectiveName::For) {
            Lowering::For(self.for_loop(d, block, env, true)?)
        } else if d.has(DirectiveName::Sections) {
            Lowering::Sections(self.sections(d, block, env, true)?)
        } else if d.has(DirectiveName::Single) {
            self.single(d, block, env)?
        } else if d.has(DirectiveName::Critical) {
            let mut inner = env.clone();
            Lowering::Critical {
                name: d.critical_name().map(str::to_string),
                body: self.stmts(&block.body, &mut inner)?,
            }
        } else if d.has(DirectiveName::Taskwait) {
            Lowering::Taskwait
        } else {
            Lowering::Barrier
        };
        Ok(RewritePlan {
            directive: d.clone(),
            captures,
            calls,
        })
    }

    /// Bindings for the listed clause kinds, in clause order.
    fn bindings(&mut self, d: &Directive, kinds: &[ClauseKind], skip: &[&str], env: &Env) -> Vec<Binding> {
        let firstprivate = d.vars(ClauseKind::FirstPrivate);
        let mut out: Vec<Binding> = Vec::new();
        for clause in d.clauses() {
            if !kinds.contains(&clause.kind()) {
                continue;
            }
            for var in clause.vars().unwrap_or_default() {
                if skip.contains(&var.as_str()) || out.iter().any(|b| &b.var == var) {
                    continue;
                }
                let source = env.rendered(var);
                let init = match clause {
                    Clause::Private(_) => Init::Uninit,
                    Clause::FirstPrivate(_) => Init::Copy { source },
                    Clause::LastPrivate(_) if firstprivate.contains(&var.as_str()) => Init::Copy { source },
                    Clause::LastPrivate(_) => Init::Uninit,
                    Clause::Reduction(op, _) => Init::Identity { op: *op, source },
                    _ => continue,
                };
                let temp = self.temp(var);
                out.push(Binding {
                    var: var.clone(),
                    temp,
                    init,
                });
            }
        }
        out
    }

    fn finish(d: &Directive, bindings: &[Binding], env: &Env) -> Vec<Finish> {
        let lastprivate = d.vars(ClauseKind::LastPrivate);
        let mut out = Vec::new();
        for b in bindings {
            if lastprivate.contains(&b.var.as_str()) {
                out.push(Finish::WriteBack {
                    var: b.var.clone(),
                    target: env.rendered(&b.var),
                    temp: b.temp.clone(),
                });
            }
        }
        for b in bindings {
            if let Init::Identity { op, .. } = b.init {
                out.push(Finish::Combine {
                    var: b.var.clone(),
                    target: env.rendered(&b.var),
                    temp: b.temp.clone(),
                    op,
                });
            }
        }
        out
    }

    fn nonlocal(captures: &BTreeMap<String, Capture>, env: &Env) -> Vec<String> {
        let mut names: Vec<String> = captures
            .iter()
            .filter(|(_, c)| matches!(c, Capture::Shared | Capture::LastPrivate | Capture::Reduction(_)))
            .map(|(v, _)| env.rendered(v))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    fn inner_env(env: &Env, bindings: &[Binding]) -> Env {
        let mut inner = env.clone();
        for b in bindings {
            inner.renames.insert(b.var.clone(), b.temp.clone());
            inner.defined.insert(b.var.clone());
        }
        inner
    }

    fn parallel(
        &mut self,
        d: &Directive,
        block: &BlockDescriptor,
        env: &Env,
        captures: &BTreeMap<String, Capture>,
    ) -> Result<Lowering, TransformError> {
        let name = format!("{TEMP_PREFIX}parallel_{}", self.next());
        let lastprivate = d.vars(ClauseKind::LastPrivate);
        let bindings = self.bindings(
            d,
            &[ClauseKind::Private, ClauseKind::FirstPrivate, ClauseKind::Reduction],
            &lastprivate,
            env,
        );
        let mut inner = Self::inner_env(env, &bindings);
        let body = if d.has(DirectiveName::For) {
            let lowering = self.for_loop(d, block, &inner, false)?;
            vec![self.nested(d, DirectiveName::For, block, Lowering::For(lowering))?]
        } else if d.has(DirectiveName::Sections) {
            let lowering = self.sections(d, block, &inner, false)?;
            vec![self.nested(d, DirectiveName::Sections, block, Lowering::Sections(lowering))?]
        } else {
            self.stmts(&block.body, &mut inner)?
        };
        let finish = Self::finish(d, &bindings, env);
        Ok(Lowering::Parallel {
            callable: Arc::new(Callable {
                name,
                nonlocal: Self::nonlocal(captures, env),
                bindings,
                body,
                finish,
            }),
            num_threads: d.num_threads().map(str::to_string),
            if_expr: d.if_expr().map(str::to_string),
        })
    }

    /// The worksharing half of a combined directive, as its own plan entry.
    fn nested(
        &self,
        d: &Directive,
        name: DirectiveName,
        block: &BlockDescriptor,
        calls: Lowering,
    ) -> Result<Step, TransformError> {
        let keep: Vec<&Clause> = d
            .clauses()
            .iter()
            .filter(|c| {
                matches!(
                    c.kind(),
                    ClauseKind::LastPrivate | ClauseKind::Schedule | ClauseKind::Collapse
                )
            })
            .collect();
        let mut text = name.as_str().to_string();
        for c in keep {
            text.push(' ');
            text.push_str(&c.to_string());
        }
        let directive = crate::directive::parse(&text).expect("split of a valid combined directive");
        let captures = classify_variables(&directive, block)?;
        Ok(Step::Construct(Box::new(RewritePlan {
            directive,
            captures,
            calls,
        })))
    }

    fn task(
        &mut self,
        d: &Directive,
        block: &BlockDescriptor,
        env: &Env,
        captures: &BTreeMap<String, Capture>,
    ) -> Result<Lowering, TransformError> {
        let name = format!("{TEMP_PREFIX}task_{}", self.next());
        let mut bindings = self.bindings(d, &[ClauseKind::Private, ClauseKind::FirstPrivate], &[], env);
        // Implicit firstprivate captures are copied at submission like listed ones.
        for (var, class) in captures {
            if *class == Capture::FirstPrivate && !bindings.iter().any(|b| &b.var == var) {
                let source = env.rendered(var);
                bindings.push(Binding {
                    var: var.clone(),
                    temp: self.temp(var),
                    init: Init::Copy { source },
                });
            }
        }
        let mut inner = Self::inner_env(env, &bindings);
        let body = self.stmts(&block.body, &mut inner)?;
        Ok(Lowering::Task {
            callable: Arc::new(Callable {
                name,
                nonlocal: Self::nonlocal(captures, env),
                bindings,
                body,
                finish: Vec::new(),
            }),
            if_expr: d.if_expr().map(str::to_string),
        })
    }

    /// `own_clauses` is false for the loop half of `parallel for`, whose
    /// private/firstprivate/reduction clauses belong to the parallel part.
    fn for_loop(
        &mut self,
        d: &Directive,
        block: &BlockDescriptor,
        env: &Env,
        own_clauses: bool,
    ) -> Result<ForLowering, TransformError> {
        let kinds: &[ClauseKind] = if own_clauses {
            &[
                ClauseKind::Private,
                ClauseKind::FirstPrivate,
                ClauseKind::LastPrivate,
                ClauseKind::Reduction,
            ]
        } else {
            &[ClauseKind::LastPrivate]
        };
        let lastprivate = d.vars(ClauseKind::LastPrivate);
        let skip: Vec<&str> = if own_clauses {
            // firstprivate+lastprivate share one binding, created by the lastprivate entry.
            d.vars(ClauseKind::FirstPrivate)
                .into_iter()
                .filter(|v| lastprivate.contains(v))
                .collect()
        } else {
            Vec::new()
        };
        let bindings = self.bindings(d, kinds, &skip, env);
        let mut inner = Self::inner_env(env, &bindings);

        let vars = worksharing_loop_vars(d, block);
        let mut bounds = Vec::new();
        let mut bounds_src = Vec::new();
        let mut level = &block.body;
        for _ in 0..vars.len() {
            let Some(Stmt::Loop(l)) = level.first() else {
                unreachable!("shape checked")
            };
            let src = [l.start.clone(), l.stop.clone(), l.step.clone()];
            bounds.push(src.clone().map(|e| substitute(&e, &inner.renames)));
            bounds_src.push(src);
            level = &l.body;
        }
        inner.defined.extend(vars.iter().cloned());
        for v in &vars {
            inner.renames.remove(v);
        }
        let body = self.stmts(level, &mut inner)?;
        let finish = Self::finish(d, &bindings, env);
        Ok(ForLowering {
            vars,
            bounds,
            bounds_src,
            schedule: d.schedule(),
            nowait: d.nowait(),
            bindings,
            body,
            finish,
        })
    }

    fn sections(
        &mut self,
        d: &Directive,
        block: &BlockDescriptor,
        env: &Env,
        own_clauses: bool,
    ) -> Result<SectionsLowering, TransformError> {
        let kinds: &[ClauseKind] = if own_clauses {
            &[
                ClauseKind::Private,
                ClauseKind::FirstPrivate,
                ClauseKind::LastPrivate,
                ClauseKind::Reduction,
            ]
        } else {
            &[ClauseKind::LastPrivate]
        };
        let bindings = self.bindings(d, kinds, &[], env);
        let inner = Self::inner_env(env, &bindings);
        let mut sections = Vec::new();
        for stmt in &block.body {
            let Stmt::Construct(c) = stmt else {
                unreachable!("shape checked")
            };
            let mut section_env = inner.clone();
            sections.push(self.stmts(c.body.as_deref().unwrap_or_default(), &mut section_env)?);
        }
        let finish = Self::finish(d, &bindings, env);
        Ok(SectionsLowering {
            nowait: d.nowait(),
            bindings,
            sections,
            finish,
        })
    }

    fn single(&mut self, d: &Directive, block: &BlockDescriptor, env: &Env) -> Result<Lowering, TransformError> {
        let flag = format!("{TEMP_PREFIX}{}", self.next());
        let bindings = self.bindings(d, &[ClauseKind::Private, ClauseKind::FirstPrivate], &[], env);
        let mut inner = Self::inner_env(env, &bindings);
        let body = self.stmts(&block.body, &mut inner)?;
        let copyprivate = d
            .vars(ClauseKind::CopyPrivate)
            .into_iter()
            .map(|v| (v.to_string(), env.rendered(v)))
            .collect();
        Ok(Lowering::Single(SingleLowering {
            nowait: d.nowait(),
            flag,
            bindings,
            body,
            copyprivate,
        }))
    }
}

fn needs_body(d: &Directive) -> bool {
    !(d.has(DirectiveName::Taskwait) || d.has(DirectiveName::Barrier))
}

/// Plans one construct in isolation. Temporary numbering starts at 1.
pub fn plan(directive: &Directive, block: &BlockDescriptor) -> Result<RewritePlan, TransformError> {
    let env = Env {
        renames: BTreeMap::new(),
        defined: block.non_locals(),
    };
    Planner { counter: 0 }.construct(directive, block, &env)
}

/// Plans every construct in a function, numbering temporaries in source order.
pub fn plan_function(f: &FunctionDescriptor) -> Result<FunctionPlan, TransformError> {
    let mut env = Env {
        renames: BTreeMap::new(),
        defined: f.params.iter().cloned().collect(),
    };
    let body = Planner { counter: 0 }.stmts(&f.body, &mut env)?;
    Ok(FunctionPlan {
        name: f.name.clone(),
        params: f.params.clone(),
        body,
    })
}
