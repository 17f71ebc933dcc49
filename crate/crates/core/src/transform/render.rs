use std::fmt::Write;

use crate::directive::ReductionOp;
use crate::schedule::ScheduleSpec;

use super::plan::{Binding, Callable, Finish, FunctionPlan, Init, Lowering, RewritePlan, Step};

const INDENT: &str = "    ";

struct Out {
    text: String,
}

impl Out {
    fn line(&mut self, depth: usize, s: &str) {
        for _ in 0..depth {
            self.text.push_str(INDENT);
        }
        self.text.push_str(s);
        self.text.push('\n');
    }

    /// Multi-line statement text keeps its own relative indentation.
    fn block_text(&mut self, depth: usize, s: &str) {
        for l in s.lines() {
            self.line(depth, l);
        }
    }
}

/// Canonical Python-like text for one construct's lowering.
pub fn render_plan(plan: &RewritePlan) -> String {
    let mut out = Out { text: String::new() };
    construct(&mut out, 0, plan);
    out.text
}

/// Canonical text for a whole rewritten function.
pub fn render_function(f: &FunctionPlan) -> String {
    let mut out = Out { text: String::new() };
    out.line(0, &format!("def {}({}):", f.name, f.params.join(", ")));
    steps(&mut out, 1, &f.body);
    out.text
}

fn steps(out: &mut Out, depth: usize, body: &[Step]) {
    if body.is_empty() {
        out.line(depth, "pass");
    }
    for s in body {
        step(out, depth, s);
    }
}

fn step(out: &mut Out, depth: usize, s: &Step) {
    match s {
        Step::Code { text, .. } => out.block_text(depth, text),
        Step::Loop { var, bounds, body, .. } => {
            out.line(
                depth,
                &format!("for {var} in range({}, {}, {}):", bounds[0], bounds[1], bounds[2]),
            );
            steps(out, depth + 1, body);
        }
        Step::Construct(p) => construct(out, depth, p),
    }
}

fn binding(out: &mut Out, depth: usize, b: &Binding) {
    let rhs = match &b.init {
        Init::Uninit => "None".to_string(),
        Init::Copy { source } => format!("_omp_copy({source})"),
        Init::Identity { op, source } => format!("_omp_reduction_init('{}', {source})", op.symbol()),
    };
    out.line(depth, &format!("{} = {rhs}", b.temp));
}

fn combine(op: ReductionOp, target: &str, temp: &str) -> String {
    match op {
        ReductionOp::Add | ReductionOp::Sub => format!("{target} += {temp}"),
        ReductionOp::Mul => format!("{target} *= {temp}"),
        ReductionOp::BitAnd => format!("{target} &= {temp}"),
        ReductionOp::BitOr => format!("{target} |= {temp}"),
        ReductionOp::BitXor => format!("{target} ^= {temp}"),
        ReductionOp::Min => format!("{target} = min({target}, {temp})"),
        ReductionOp::Max => format!("{target} = max({target}, {temp})"),
        ReductionOp::LogicalAnd => format!("{target} = {target} and {temp}"),
        ReductionOp::LogicalOr => format!("{target} = {target} or {temp}"),
    }
}

/// `guard` renders the last-iteration test for write-backs.
fn finish(out: &mut Out, depth: usize, items: &[Finish], guard: &str) {
    let writebacks: Vec<_> = items
        .iter()
        .filter_map(|f| match f {
            Finish::WriteBack { target, temp, .. } => Some(format!("{target} = {temp}")),
            _ => None,
        })
        .collect();
    if !writebacks.is_empty() {
        out.line(depth, &format!("if {guard}:"));
        for w in &writebacks {
            out.line(depth + 1, w);
        }
    }
    let combines: Vec<_> = items
        .iter()
        .filter_map(|f| match f {
            Finish::Combine { target, temp, op, .. } => Some(combine(*op, target, temp)),
            _ => None,
        })
        .collect();
    if !combines.is_empty() {
        out.line(depth, "with _omp_critical():");
        for c in &combines {
            out.line(depth + 1, c);
        }
    }
}

fn callable(out: &mut Out, depth: usize, c: &Callable) {
    out.line(depth, &format!("def {}():", c.name));
    if !c.nonlocal.is_empty() {
        out.line(depth + 1, &format!("nonlocal {}", c.nonlocal.join(", ")));
    }
    for b in &c.bindings {
        binding(out, depth + 1, b);
    }
    if c.nonlocal.is_empty() && c.bindings.is_empty() && c.body.is_empty() && c.finish.is_empty() {
        out.line(depth + 1, "pass");
    }
    for s in &c.body {
        step(out, depth + 1, s);
    }
    finish(out, depth + 1, &c.finish, "True");
}

fn schedule_kwargs(spec: Option<ScheduleSpec>) -> String {
    match spec {
        None => String::new(),
        Some(s) => {
            let mut k = format!(", schedule='{}'", s.kind.as_str());
            if let Some(c) = s.chunk {
                let _ = write!(k, ", chunks={c}");
            }
            k
        }
    }
}

fn tuple(items: &[String]) -> String {
    format!("({})", items.join(", "))
}

fn construct(out: &mut Out, depth: usize, plan: &RewritePlan) {
    match &plan.calls {
        Lowering::Parallel {
            callable: c,
            num_threads,
            if_expr,
        } => {
            callable(out, depth, c);
            let mut call = format!("_omp_parallel_run({}", c.name);
            if let Some(n) = num_threads {
                let _ = write!(call, ", num_threads={n}");
            }
            if let Some(e) = if_expr {
                let _ = write!(call, ", if_={e}");
            }
            call.push(')');
            out.line(depth, &call);
        }
        Lowering::Task { callable: c, if_expr } => {
            callable(out, depth, c);
            match if_expr {
                Some(e) => out.line(depth, &format!("_omp_task_submit({}, if_={e})", c.name)),
                None => out.line(depth, &format!("_omp_task_submit({})", c.name)),
            }
        }
        Lowering::For(f) => {
            for b in &f.bindings {
                binding(out, depth, b);
            }
            let (vars, args) = if f.vars.len() == 1 {
                (f.vars[0].clone(), f.bounds[0].join(", "))
            } else {
                let col = |k: usize| tuple(&f.bounds.iter().map(|b| b[k].clone()).collect::<Vec<_>>());
                (f.vars.join(", "), format!("{}, {}, {}", col(0), col(1), col(2)))
            };
            let mut head = format!("for {vars} in _omp_range({args}{}", schedule_kwargs(f.schedule));
            if f.range_nowait() {
                head.push_str(", nowait=True");
            }
            head.push_str("):");
            out.line(depth, &head);
            steps(out, depth + 1, &f.body);
            finish(
                out,
                depth,
                &f.finish,
                &format!("_omp_lastprivate({})", f.vars.join(", ")),
            );
            if f.barrier_after() {
                out.line(depth, "_omp_barrier()");
            }
        }
        Lowering::Sections(s) => {
            out.line(
                depth,
                if s.nowait {
                    "with _omp_sections(nowait=True):"
                } else {
                    "with _omp_sections():"
                },
            );
            for b in &s.bindings {
                binding(out, depth + 1, b);
            }
            for (id, body) in s.sections.iter().enumerate() {
                out.line(depth + 1, &format!("if _omp_section({id}):"));
                steps(out, depth + 2, body);
            }
            let last = s.sections.len().saturating_sub(1);
            finish(out, depth + 1, &s.finish, &format!("_omp_lastprivate({last})"));
        }
        Lowering::Single(s) => {
            let open = if s.nowait {
                "_omp_single(nowait=True)"
            } else {
                "_omp_single()"
            };
            out.line(depth, &format!("with {open} as {}:", s.flag));
            out.line(depth + 1, &format!("if {}:", s.flag));
            for b in &s.bindings {
                binding(out, depth + 2, b);
            }
            steps(out, depth + 2, &s.body);
            if !s.copyprivate.is_empty() {
                let names: Vec<String> = s.copyprivate.iter().map(|(_, r)| r.clone()).collect();
                out.line(depth + 2, &format!("_omp_copyprivate_set({})", names.join(", ")));
            }
            if !s.copyprivate.is_empty() {
                let names: Vec<String> = s.copyprivate.iter().map(|(_, r)| r.clone()).collect();
                out.line(depth, &format!("{} = _omp_copyprivate_get()", names.join(", ")));
            }
        }
        Lowering::Critical { name, body } => {
            match name {
                Some(n) => out.line(depth, &format!("with _omp_critical('{n}'):")),
                None => out.line(depth, "with _omp_critical():"),
            }
            steps(out, depth + 1, body);
        }
        Lowering::Taskwait => out.line(depth, "_omp_taskwait()"),
        Lowering::Barrier => out.line(depth, "_omp_barrier()"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directive::parse;
    use crate::transform::block::{BlockDescriptor, Stmt};
    use crate::transform::plan::plan;
    use std::collections::BTreeSet;

    #[test]
    fn empty_parallel_is_minimal() {
        let d = parse("parallel").unwrap();
        let b = BlockDescriptor::new(vec![], &BTreeSet::new(), None);
        let text = render_plan(&plan(&d, &b).unwrap());
        assert_eq!(
            text,
            "def _omp_parallel_1():\n    pass\n_omp_parallel_run(_omp_parallel_1)\n"
        );
    }

    #[test]
    fn num_threads_is_passed() {
        let d = parse("parallel num_threads(4)").unwrap();
        let b = BlockDescriptor::new(vec![Stmt::code("work()", &[], &[])], &BTreeSet::new(), None);
        let text = render_plan(&plan(&d, &b).unwrap());
        assert!(
            text.ends_with("_omp_parallel_run(_omp_parallel_1, num_threads=4)\n"),
            "{text}"
        );
    }

    #[test]
    fn reduction_combines_under_critical() {
        let d = parse("parallel for reduction(+:PI)").unwrap();
        let body = vec![Stmt::range_loop(
            "i",
            ["0", "n", "1"],
            &["n"],
            vec![Stmt::code("PI += 4.0 / (1.0 + i * i)", &["PI", "i"], &["PI"])],
        )];
        let defined: BTreeSet<String> = ["PI", "n"].iter().map(|s| s.to_string()).collect();
        let b = BlockDescriptor::new(body, &defined, Some(&d));
        let text = render_plan(&plan(&d, &b).unwrap());
        let want = "\
def _omp_parallel_1():
    nonlocal PI, n
    _omp_PI_2 = _omp_reduction_init('+', PI)
    for i in _omp_range(0, n, 1):
        _omp_PI_2 += 4.0 / (1.0 + i * i)
    with _omp_critical():
        PI += _omp_PI_2
_omp_parallel_run(_omp_parallel_1)
";
        assert_eq!(text, want);
    }
}
