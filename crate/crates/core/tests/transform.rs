mod common;

use std::collections::BTreeSet;

use common::*;
use omprt::directive::parse;
use omprt::runtime::omp_set_num_threads;
use omprt::transform::{
    classify_variables, execute_function, plan_function, run_sequential, BlockDescriptor, Capture, Stmt, Value,
};
use proptest::prelude::*;

#[test]
fn lowerings_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for (stem, functions) in golden_programs() {
        let got = render_all(&functions);
        let path = golden_path(stem);
        if update {
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(got, want, "lowering of {stem} changed");
    }
}

#[test]
fn rendering_is_deterministic() {
    for (_, functions) in golden_programs() {
        assert_eq!(render_all(&functions), render_all(&functions));
    }
}

fn run_both(
    f: &omprt::transform::FunctionDescriptor,
    threads: usize,
) -> (omprt::transform::Scope, omprt::transform::Scope) {
    let plan = plan_function(f).unwrap();
    let seq = run_sequential(f, &[]).unwrap();
    let par = std::thread::spawn(move || {
        omp_set_num_threads(threads).unwrap();
        execute_function(&plan, &[]).unwrap()
    })
    .join()
    .unwrap();
    (seq, par)
}

#[test]
fn loop_plans_agree_with_sequential_runs() {
    for t in [1, 2, 3, 4] {
        let (seq, par) = run_both(&for_static(), t);
        assert_eq!(seq.get("xs"), par.get("xs"), "T={t}");

        let (seq, par) = run_both(&for_collapse_lastprivate(), t);
        assert_eq!(seq.get("xs"), par.get("xs"), "T={t}");
        assert_eq!(par.get("x"), Value::Int(3), "T={t}");
        assert_eq!(seq.get("x"), par.get("x"), "T={t}");
    }
}

#[test]
fn sections_run_each_block_once() {
    for t in [1, 2, 4] {
        let (seq, par) = run_both(&sections_three(), t);
        let mut out = par.output();
        out.sort();
        assert_eq!(out, seq.output(), "T={t}");
    }
}

#[test]
fn copyprivate_broadcasts_single_result() {
    for t in [1, 2, 4] {
        let (_, par) = run_both(&single_copyprivate(), t);
        assert_eq!(par.output(), vec!["Int(1)".to_string(); t], "T={t}");
        // firstprivate leaves the outer variable untouched
        assert_eq!(par.get("x"), Value::Int(0));
    }
}

#[test]
fn parallel_clauses_behave() {
    let f = parallel_clauses();
    let plan = plan_function(&f).unwrap();
    let scope = execute_function(&plan, &[("a", Value::Int(0))]).unwrap();
    assert_eq!(scope.get("a"), Value::Int(1));
    assert_eq!(scope.get("c"), Value::Int(-1));
    assert_eq!(scope.get("d"), ints(&[1, 2]));
    let out = scope.output();
    assert_eq!(out.len(), 5);
    let inner: BTreeSet<&String> = out[..4].iter().collect();
    let want: BTreeSet<String> = (0..4)
        .map(|k| format!("Str(\"1\") List([Int(1), Int(2), Int(3)]) Int({k})"))
        .collect();
    assert_eq!(inner, want.iter().collect());
    assert_eq!(out[4], "Int(1) Int(-1)");
}

#[test]
fn reduction_plan_matches_sequential_sum() {
    let f = pi_midpoint();
    let plan = plan_function(&f).unwrap();
    let seq = run_sequential(&f, &[("n", Value::Int(1000))]).unwrap().float("PI");
    for t in [1, 2, 4] {
        let p = plan.clone();
        let par = std::thread::spawn(move || {
            omp_set_num_threads(t).unwrap();
            execute_function(&p, &[("n", Value::Int(1000))]).unwrap().float("PI")
        })
        .join()
        .unwrap();
        assert!((par - seq).abs() <= 1e-12 * seq.abs(), "T={t}: {par} vs {seq}");
        assert!((par - std::f64::consts::PI).abs() < 1e-6);
    }
}

#[test]
fn tasks_in_plans_complete_before_use() {
    let body = vec![
        Stmt::code_with("a = 0", &[], &["a"], |s| s.set("a", Value::Int(0))),
        Stmt::code_with("b = 0", &[], &["b"], |s| s.set("b", Value::Int(0))),
        Stmt::code_with("c = 0", &[], &["c"], |s| s.set("c", Value::Int(0))),
        Stmt::construct(
            "parallel num_threads(3)",
            vec![Stmt::construct(
                "single",
                vec![
                    Stmt::construct(
                        "task",
                        vec![Stmt::code_with("a = 1", &[], &["a"], |s| s.set("a", Value::Int(1)))],
                    ),
                    Stmt::construct(
                        "task",
                        vec![Stmt::code_with("b = 2", &[], &["b"], |s| s.set("b", Value::Int(2)))],
                    ),
                    Stmt::standalone("taskwait"),
                    Stmt::code_with("c = a + b", &["a", "b"], &["c"], |s| {
                        let v = s.int("a") + s.int("b");
                        s.set("c", Value::Int(v))
                    }),
                ],
            )],
        ),
    ];
    let f = omprt::transform::FunctionDescriptor::new("f", &[], body);
    let (seq, par) = run_both(&f, 3);
    assert_eq!(seq.get("c"), Value::Int(3));
    assert_eq!(par.get("c"), Value::Int(3));
}

#[test]
fn task_reads_value_at_submission() {
    let body = vec![
        Stmt::code_with("v = 1", &[], &["v"], |s| s.set("v", Value::Int(1))),
        Stmt::code_with("out = 0", &[], &["out"], |s| s.set("out", Value::Int(0))),
        Stmt::construct(
            "parallel num_threads(2)",
            vec![Stmt::construct(
                "single",
                vec![
                    Stmt::construct(
                        "task",
                        vec![Stmt::code_with("out = v", &["v"], &["out"], |s| {
                            let v = s.get("v");
                            s.set("out", v)
                        })],
                    ),
                    Stmt::code_with("v = 2", &[], &["v"], |s| s.set("v", Value::Int(2))),
                    Stmt::standalone("taskwait"),
                ],
            )],
        ),
    ];
    let f = omprt::transform::FunctionDescriptor::new("f", &[], body);
    for t in [1, 2] {
        let (seq, par) = run_both(&f, t);
        assert_eq!(seq.get("out"), Value::Int(1));
        assert_eq!(par.get("out"), Value::Int(1), "T={t}");
        assert_eq!(par.get("v"), Value::Int(2), "T={t}");
    }
}

fn schedule_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        (1u64..5).prop_map(|c| format!("schedule(static, {c})")),
        Just("schedule(static)".to_string()),
        (1u64..5).prop_map(|c| format!("schedule(dynamic, {c})")),
        (1u64..4).prop_map(|c| format!("schedule(guided, {c})")),
        Just("schedule(auto)".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loop_plan_soundness(n in 0usize..40, sched in schedule_strategy(), t in 1usize..5) {
        let (seq, par) = run_both(&for_static_sized(n, &sched), t);
        prop_assert_eq!(seq.get("xs"), par.get("xs"));
    }

    #[test]
    fn classification_is_total(
        stmts in proptest::collection::vec(
            (proptest::collection::vec(0usize..8, 0..4), proptest::collection::vec(0usize..8, 0..3)),
            0..6,
        ),
        defined_mask in 0u32..256,
        private_mask in 0u32..256,
    ) {
        let name = |k: usize| format!("v{k}");
        let body: Vec<Stmt> = stmts
            .iter()
            .map(|(r, w)| {
                let r: Vec<String> = r.iter().map(|k| name(*k)).collect();
                let w: Vec<String> = w.iter().map(|k| name(*k)).collect();
                let r: Vec<&str> = r.iter().map(String::as_str).collect();
                let w: Vec<&str> = w.iter().map(String::as_str).collect();
                Stmt::code("stmt", &r, &w)
            })
            .collect();
        let defined: BTreeSet<String> = (0..8).filter(|k| defined_mask & (1 << k) != 0).map(name).collect();
        let private: Vec<String> = (0..8).filter(|k| private_mask & (1 << k) != 0).map(name).collect();
        let text = if private.is_empty() {
            "parallel".to_string()
        } else {
            format!("parallel private({})", private.join(", "))
        };
        let d = parse(&text).unwrap();
        let block = BlockDescriptor::new(body, &defined, Some(&d));
        let caps = classify_variables(&d, &block).unwrap();

        for v in block.non_locals() {
            prop_assert!(caps.contains_key(&v), "{} unclassified", v);
        }
        for v in &block.locals {
            prop_assert!(!caps.contains_key(v), "local {} captured", v);
        }
        for v in &private {
            prop_assert_eq!(caps.get(v), Some(&Capture::Private));
        }
        let listed: BTreeSet<&String> = private.iter().collect();
        for (v, c) in &caps {
            if !listed.contains(v) {
                prop_assert_eq!(*c, Capture::Shared);
            }
        }
    }
}
