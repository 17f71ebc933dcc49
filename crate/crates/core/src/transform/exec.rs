//! Runs plans against the runtime, and runs the original statements
//! sequentially, so the two can be compared.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, MutexGuard};

use crate::data_env::{copyprivate_collect, copyprivate_publish, Reducible};
use crate::directive::{DirectiveName, ReductionOp};
use crate::runtime::{barrier, critical, parallel_run};
use crate::schedule::ScheduleSpec;
use crate::tasking::{task_submit, taskwait};
use crate::worksharing::{scheduled_range, sections_begin, single_begin, StepRange};

use super::block::{FunctionDescriptor, Stmt};
use super::plan::{Binding, Finish, FunctionPlan, Init, Lowering, RewritePlan, Step};
use super::TransformError;

#[derive(Debug, Clone, PartialEq, Default)]
pub enum Value {
    #[default]
    Undefined,
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

type Cell = Arc<Mutex<Value>>;

fn lock(c: &Cell) -> MutexGuard<'_, Value> {
    c.lock().unwrap_or_else(|e| e.into_inner())
}

/// Variable bindings seen by a statement. Cloning shares every cell, so a clone
/// sees (and makes) the same updates; `bind` gives a name a fresh cell.
#[derive(Clone, Default)]
pub struct Scope {
    cells: HashMap<String, Cell>,
    log: Arc<Mutex<Vec<String>>>,
}

impl Scope {
    pub fn new(vars: &[(&str, Value)]) -> Self {
        let mut s = Scope::default();
        for (k, v) in vars {
            s.bind(k, v.clone());
        }
        s
    }

    pub fn get(&self, name: &str) -> Value {
        self.cells.get(name).map(|c| lock(c).clone()).unwrap_or_default()
    }

    pub fn int(&self, name: &str) -> i64 {
        self.get(name)
            .as_int()
            .unwrap_or_else(|| panic!("`{name}` is not an integer"))
    }

    pub fn float(&self, name: &str) -> f64 {
        self.get(name)
            .as_float()
            .unwrap_or_else(|| panic!("`{name}` is not a number"))
    }

    /// Assigns through the existing binding, or creates a new one.
    pub fn set(&mut self, name: &str, value: Value) {
        match self.cells.get(name) {
            Some(c) => *lock(c) = value,
            None => self.bind(name, value),
        }
    }

    /// Read-modify-write holding the variable's lock throughout.
    pub fn update<R>(&mut self, name: &str, f: impl FnOnce(&mut Value) -> R) -> R {
        let cell = self.cells.entry(name.to_string()).or_default().clone();
        let mut guard = lock(&cell);
        f(&mut guard)
    }

    pub fn print(&self, line: impl Into<String>) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(line.into());
    }

    /// Printed lines, in the order they were produced.
    pub fn output(&self) -> Vec<String> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn values(&self) -> BTreeMap<String, Value> {
        self.cells.iter().map(|(k, c)| (k.clone(), lock(c).clone())).collect()
    }

    fn bind(&mut self, name: &str, value: Value) {
        self.cells.insert(name.to_string(), Arc::new(Mutex::new(value)));
    }

    /// Copies names first created inside `inner` back into `self`.
    fn adopt_new(&mut self, inner: &Scope, skip: &[Binding]) {
        for (k, c) in &inner.cells {
            if !self.cells.contains_key(k) && !skip.iter().any(|b| &b.var == k) {
                self.cells.insert(k.clone(), c.clone());
            }
        }
    }
}

fn fail(msg: impl Into<String>) -> TransformError {
    TransformError::Execution(msg.into())
}

/// Evaluates bound and clause expressions: integers, `True`/`False`, names,
/// `len(name)`, parentheses and `+ - *`.
pub fn eval(expr: &str, scope: &Scope) -> Result<Value, TransformError> {
    let toks = tokenize(expr)?;
    let mut p = ExprParser {
        toks: &toks,
        pos: 0,
        scope,
    };
    let v = p.sum()?;
    if p.pos != toks.len() {
        return Err(fail(format!("cannot evaluate `{expr}`")));
    }
    Ok(v)
}

fn tokenize(expr: &str) -> Result<Vec<String>, TransformError> {
    let chars: Vec<char> = expr.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(chars[start..i].iter().collect());
        } else if "+-*()".contains(c) {
            toks.push(c.to_string());
            i += 1;
        } else {
            return Err(fail(format!("cannot evaluate `{expr}`")));
        }
    }
    Ok(toks)
}

struct ExprParser<'a> {
    toks: &'a [String],
    pos: usize,
    scope: &'a Scope,
}

impl ExprParser<'_> {
    fn peek(&self) -> Option<&str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn int(v: Value) -> Result<i64, TransformError> {
        v.as_int().ok_or_else(|| fail("expected an integer operand"))
    }

    fn sum(&mut self) -> Result<Value, TransformError> {
        let mut acc = self.product()?;
        while let Some(op @ ("+" | "-")) = self.peek() {
            let plus = op == "+";
            self.pos += 1;
            let rhs = Self::int(self.product()?)?;
            let lhs = Self::int(acc)?;
            acc = Value::Int(if plus { lhs + rhs } else { lhs - rhs });
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Value, TransformError> {
        let mut acc = self.atom()?;
        while self.peek() == Some("*") {
            self.pos += 1;
            let rhs = Self::int(self.atom()?)?;
            acc = Value::Int(Self::int(acc)? * rhs);
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<Value, TransformError> {
        let tok = self
            .peek()
            .ok_or_else(|| fail("unexpected end of expression"))?
            .to_string();
        self.pos += 1;
        match tok.as_str() {
            "-" => Ok(Value::Int(-Self::int(self.atom()?)?)),
            "(" => {
                let v = self.sum()?;
                self.expect(")")?;
                Ok(v)
            }
            "True" => Ok(Value::Bool(true)),
            "False" => Ok(Value::Bool(false)),
            "len" if self.peek() == Some("(") => {
                self.pos += 1;
                let v = self.sum()?;
                self.expect(")")?;
                match v {
                    Value::List(l) => Ok(Value::Int(l.len() as i64)),
                    Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                    _ => Err(fail("len() of a value without length")),
                }
            }
            t if t.chars().all(|c| c.is_ascii_digit()) => t
                .parse()
                .map(Value::Int)
                .map_err(|_| fail(format!("bad integer `{t}`"))),
            t => match self.scope.get(t) {
                Value::Undefined => Err(fail(format!("`{t}` is undefined"))),
                v => Ok(v),
            },
        }
    }

    fn expect(&mut self, t: &str) -> Result<(), TransformError> {
        if self.peek() == Some(t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(fail(format!("expected `{t}`")))
        }
    }
}

fn range_of(bounds: &[String; 3], scope: &Scope) -> Result<StepRange, TransformError> {
    let v: Vec<i64> = bounds
        .iter()
        .map(|e| eval(e, scope).and_then(ExprParser::int))
        .collect::<Result<_, _>>()?;
    StepRange::new(v[0], v[1], v[2]).map_err(|e| fail(e.to_string()))
}

fn reduce_identity(op: ReductionOp, like: &Value) -> Result<Value, TransformError> {
    let err = |e: crate::error::OmpError| fail(e.to_string());
    match like {
        Value::Int(_) => Ok(Value::Int(i64::identity(op).map_err(err)?)),
        Value::Float(_) => Ok(Value::Float(f64::identity(op).map_err(err)?)),
        Value::Bool(_) => Ok(Value::Bool(bool::identity(op).map_err(err)?)),
        other => Err(fail(format!("cannot reduce {other:?}"))),
    }
}

fn reduce_combine(op: ReductionOp, a: &Value, b: &Value) -> Result<Value, TransformError> {
    match (a, b) {
        (Value::Int(a), Value::Int(b)) => Ok(Value::Int(i64::combine(op, *a, *b))),
        (Value::Float(a), Value::Float(b)) => Ok(Value::Float(f64::combine(op, *a, *b))),
        (Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(bool::combine(op, *a, *b))),
        _ => Err(fail(format!("cannot combine {a:?} and {b:?}"))),
    }
}

/// Scope for a construct body: `outer` plus a fresh cell per binding.
fn enter(outer: &Scope, bindings: &[Binding]) -> Result<Scope, TransformError> {
    let mut inner = outer.clone();
    for b in bindings {
        let value = match &b.init {
            Init::Uninit => Value::Undefined,
            Init::Copy { .. } => outer.get(&b.var),
            Init::Identity { op, .. } => reduce_identity(*op, &outer.get(&b.var))?,
        };
        inner.bind(&b.var, value);
    }
    Ok(inner)
}

fn finish(items: &[Finish], inner: &Scope, outer: &mut Scope, is_last: bool) -> Result<(), TransformError> {
    for f in items {
        match f {
            Finish::WriteBack { var, .. } => {
                if is_last {
                    outer.set(var, inner.get(var));
                }
            }
            Finish::Combine { var, op, .. } => {
                let partial = inner.get(var);
                critical(None, || {
                    outer.update(var, |t| {
                        *t = reduce_combine(*op, t, &partial)?;
                        Ok::<_, TransformError>(())
                    })
                })?;
            }
        }
    }
    Ok(())
}

fn exec_steps(steps: &[Step], scope: &mut Scope) -> Result<(), TransformError> {
    for s in steps {
        exec_step(s, scope)?;
    }
    Ok(())
}

fn exec_step(step: &Step, scope: &mut Scope) -> Result<(), TransformError> {
    match step {
        Step::Code { code, .. } => {
            if let Some(action) = &code.action {
                action(scope);
            }
            Ok(())
        }
        Step::Loop {
            var, bounds_src, body, ..
        } => {
            let r = range_of(bounds_src, scope)?;
            for k in 0..r.count() {
                scope.set(var, Value::Int(r.value_at(k)));
                exec_steps(body, scope)?;
            }
            Ok(())
        }
        Step::Construct(p) => exec_construct(p, scope),
    }
}

/// Members report failures by panicking, which the runtime contains.
fn or_panic(r: Result<(), TransformError>) {
    if let Err(e) = r {
        panic!("{e}");
    }
}

fn exec_construct(plan: &RewritePlan, scope: &mut Scope) -> Result<(), TransformError> {
    match &plan.calls {
        Lowering::Parallel {
            callable,
            num_threads,
            if_expr,
        } => {
            let n = match num_threads {
                Some(e) => Some(
                    eval(e, scope)?
                        .as_int()
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| fail("num_threads must be a positive integer"))? as usize,
                ),
                None => None,
            };
            let cond = match if_expr {
                Some(e) => Some(eval_bool(e, scope)?),
                None => None,
            };
            let outer = scope.clone();
            let outcome = parallel_run(n, cond, || {
                or_panic((|| {
                    let mut outer = outer.clone();
                    let mut inner = enter(&outer, &callable.bindings)?;
                    exec_steps(&callable.body, &mut inner)?;
                    finish(&callable.finish, &inner, &mut outer, true)
                })())
            })
            .map_err(|e| fail(e.to_string()))?;
            if let Some(e) = outcome.caught_errors.first() {
                return Err(fail(e.message.clone()));
            }
            Ok(())
        }
        Lowering::Task { callable, if_expr } => {
            let cond = match if_expr {
                Some(e) => Some(eval_bool(e, scope)?),
                None => None,
            };
            let mut inner = enter(scope, &callable.bindings)?;
            let callable = callable.clone();
            task_submit(move || or_panic(exec_steps(&callable.body, &mut inner)), cond);
            Ok(())
        }
        Lowering::For(f) => {
            let mut inner = enter(scope, &f.bindings)?;
            let levels: Vec<StepRange> = f
                .bounds_src
                .iter()
                .map(|b| range_of(b, &inner))
                .collect::<Result<_, _>>()?;
            let spec = f.schedule.unwrap_or(ScheduleSpec::STATIC);
            let mut range = scheduled_range(levels, spec, f.range_nowait());
            let mut result = Ok(());
            for idx in range.by_ref() {
                for (v, x) in f.vars.iter().zip(&idx) {
                    inner.set(v, Value::Int(*x));
                }
                result = exec_steps(&f.body, &mut inner);
                if result.is_err() {
                    break;
                }
            }
            let is_last = range.executed_last();
            drop(range);
            result?;
            finish(&f.finish, &inner, scope, is_last)?;
            if f.barrier_after() {
                barrier();
            }
            scope.adopt_new(&inner, &f.bindings);
            Ok(())
        }
        Lowering::Sections(s) => {
            let mut inner = enter(scope, &s.bindings)?;
            let mut secs = sections_begin(s.sections.len(), s.nowait);
            for (id, body) in s.sections.iter().enumerate() {
                if secs.section_try(id).map_err(|e| fail(e.to_string()))? {
                    exec_steps(body, &mut inner)?;
                }
            }
            finish(&s.finish, &inner, scope, secs.executed_last())?;
            secs.end();
            scope.adopt_new(&inner, &s.bindings);
            Ok(())
        }
        Lowering::Single(s) => {
            let single = single_begin(s.nowait);
            if single.is_granted() {
                let mut inner = enter(scope, &s.bindings)?;
                exec_steps(&s.body, &mut inner)?;
                if !s.copyprivate.is_empty() {
                    let vals: Vec<Value> = s.copyprivate.iter().map(|(v, _)| inner.get(v)).collect();
                    copyprivate_publish(vals).map_err(|e| fail(e.to_string()))?;
                }
                scope.adopt_new(&inner, &s.bindings);
            }
            single.end();
            if !s.copyprivate.is_empty() {
                let vals: Vec<Value> = copyprivate_collect().map_err(|e| fail(e.to_string()))?;
                for ((v, _), x) in s.copyprivate.iter().zip(vals) {
                    scope.set(v, x);
                }
            }
            Ok(())
        }
        Lowering::Critical { name, body } => critical(name.as_deref(), || exec_steps(body, scope)),
        Lowering::Taskwait => {
            taskwait();
            Ok(())
        }
        Lowering::Barrier => {
            barrier();
            Ok(())
        }
    }
}

fn eval_bool(expr: &str, scope: &Scope) -> Result<bool, TransformError> {
    match eval(expr, scope)? {
        Value::Bool(b) => Ok(b),
        Value::Int(i) => Ok(i != 0),
        other => Err(fail(format!("`{expr}` is not a condition: {other:?}"))),
    }
}

/// Runs a planned function with the given arguments and returns its final scope.
pub fn execute_function(plan: &FunctionPlan, args: &[(&str, Value)]) -> Result<Scope, TransformError> {
    let mut scope = Scope::new(args);
    exec_steps(&plan.body, &mut scope)?;
    // Tasks created outside any region run before the function returns.
    taskwait();
    Ok(scope)
}

/// Runs the original statements of `f` in order, ignoring every directive.
pub fn run_sequential(f: &FunctionDescriptor, args: &[(&str, Value)]) -> Result<Scope, TransformError> {
    let mut scope = Scope::new(args);
    seq_stmts(&f.body, &mut scope)?;
    Ok(scope)
}

fn seq_stmts(stmts: &[Stmt], scope: &mut Scope) -> Result<(), TransformError> {
    for s in stmts {
        match s {
            Stmt::Code(c) => {
                if let Some(a) = &c.action {
                    a(scope);
                }
            }
            Stmt::Loop(l) => {
                let r = range_of(&[l.start.clone(), l.stop.clone(), l.step.clone()], scope)?;
                for k in 0..r.count() {
                    scope.set(&l.var, Value::Int(r.value_at(k)));
                    seq_stmts(&l.body, scope)?;
                }
            }
            Stmt::Construct(c) => {
                let body = c.body.as_deref().unwrap_or_default();
                if c.directive.has(DirectiveName::Sections) {
                    for section in body {
                        let Stmt::Construct(sc) = section else {
                            return Err(fail("sections body must be section blocks"));
                        };
                        seq_stmts(sc.body.as_deref().unwrap_or_default(), scope)?;
                    }
                } else {
                    seq_stmts(body, scope)?;
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions() {
        let s = Scope::new(&[("n", Value::Int(7)), ("xs", Value::List(vec![Value::Int(0); 5]))]);
        assert_eq!(eval("len(xs)", &s).unwrap(), Value::Int(5));
        assert_eq!(eval("n - 1", &s).unwrap(), Value::Int(6));
        assert_eq!(eval("2 * (n + 1)", &s).unwrap(), Value::Int(16));
        assert_eq!(eval("-3", &s).unwrap(), Value::Int(-3));
        assert_eq!(eval("True", &s).unwrap(), Value::Bool(true));
        assert!(eval("m", &s).is_err());
        assert!(eval("n / 2", &s).is_err());
    }

    #[test]
    fn clones_share_cells_and_bind_does_not() {
        let mut a = Scope::new(&[("x", Value::Int(1))]);
        let mut b = a.clone();
        b.set("x", Value::Int(2));
        assert_eq!(a.get("x"), Value::Int(2));
        b.bind("x", Value::Int(3));
        assert_eq!(a.get("x"), Value::Int(2));
        a.update("x", |v| *v = Value::Int(9));
        assert_eq!(b.get("x"), Value::Int(3));
    }
}
