#![allow(dead_code)]

use omprt::runtime::omp_get_thread_num;
use omprt::transform::{FunctionDescriptor, Scope, Stmt, Value};

pub fn ints(v: &[i64]) -> Value {
    Value::List(v.iter().map(|x| Value::Int(*x)).collect())
}

fn list_mut(v: &mut Value) -> &mut Vec<Value> {
    match v {
        Value::List(l) => l,
        other => panic!("not a list: {other:?}"),
    }
}

fn add_at(s: &mut Scope, list: &str, idx: i64, amount: i64) {
    s.update(list, |v| {
        let l = list_mut(v);
        let cur = l[idx as usize].as_int().unwrap();
        l[idx as usize] = Value::Int(cur + amount);
    });
}

/// Thread-count clause, clause-driven sharing, firstprivate copy.
pub fn parallel_clauses() -> FunctionDescriptor {
    FunctionDescriptor::new(
        "f",
        &["a"],
        vec![
            Stmt::code_with("b = \"1\"", &[], &["b"], |s| s.set("b", Value::Str("1".into()))),
            Stmt::code_with("c = -1", &[], &["c"], |s| s.set("c", Value::Int(-1))),
            Stmt::code_with("d = [1, 2]", &[], &["d"], |s| s.set("d", ints(&[1, 2]))),
            Stmt::code_with("e = True", &[], &["e"], |s| s.set("e", Value::Bool(true))),
            Stmt::construct(
                "parallel shared(b) private(c) firstprivate(d) num_threads(4)",
                vec![
                    Stmt::code_with("f = omp_get_thread_num()", &[], &["f"], |s| {
                        s.set("f", Value::Int(omp_get_thread_num() as i64))
                    }),
                    Stmt::code_with("a = 1", &[], &["a"], |s| s.set("a", Value::Int(1))),
                    Stmt::code_with("c = f", &["f"], &["c"], |s| {
                        let f = s.get("f");
                        s.set("c", f)
                    }),
                    Stmt::code_with("d.append(3)", &["d"], &[], |s| {
                        s.update("d", |v| list_mut(v).push(Value::Int(3)))
                    }),
                    Stmt::code_with("print(b, c, d, f)", &["b", "c", "d", "f"], &[], |s| {
                        let line = format!("{:?} {:?} {:?}", s.get("b"), s.get("d"), s.get("f"));
                        s.print(line)
                    }),
                ],
            ),
            Stmt::code_with("print(a, c)", &["a", "c"], &[], |s| {
                let line = format!("{:?} {:?}", s.get("a"), s.get("c"));
                s.print(line)
            }),
        ],
    )
}

/// A worksharing loop with a static schedule of chunk `chunk` over `n` elements.
pub fn for_static_sized(n: usize, schedule: &str) -> FunctionDescriptor {
    FunctionDescriptor::new(
        "f",
        &[],
        vec![
            Stmt::code_with(&format!("xs = [0] * {n}"), &[], &["xs"], move |s| {
                s.set("xs", ints(&vec![0; n]))
            }),
            Stmt::construct(
                "parallel",
                vec![Stmt::construct(
                    format!("for {schedule}").trim_end(),
                    vec![Stmt::range_loop(
                        "i",
                        ["0", "len(xs)", "1"],
                        &["xs"],
                        vec![Stmt::code_with("xs[i] = i", &["xs", "i"], &[], |s| {
                            let i = s.int("i");
                            s.update("xs", |v| list_mut(v)[i as usize] = Value::Int(i))
                        })],
                    )],
                )],
            ),
            Stmt::code_with("print(xs)", &["xs"], &[], |s| {
                let line = format!("{:?}", s.get("xs"));
                s.print(line)
            }),
        ],
    )
}

pub fn for_static() -> FunctionDescriptor {
    for_static_sized(20, "schedule(static, 2)")
}

/// Two collapsed loops with a lastprivate variable.
pub fn for_collapse_lastprivate() -> FunctionDescriptor {
    FunctionDescriptor::new(
        "f",
        &[],
        vec![
            Stmt::code_with("xs = [0] * 20", &[], &["xs"], |s| s.set("xs", ints(&[0; 20]))),
            Stmt::code_with("x = 0", &[], &["x"], |s| s.set("x", Value::Int(0))),
            Stmt::construct(
                "parallel",
                vec![Stmt::construct(
                    "for schedule(static, 2) collapse(2) lastprivate(x)",
                    vec![Stmt::range_loop(
                        "i",
                        ["0", "len(xs)", "1"],
                        &["xs"],
                        vec![Stmt::range_loop(
                            "j",
                            ["0", "4", "1"],
                            &[],
                            vec![
                                Stmt::code_with("x = j", &["j"], &["x"], |s| {
                                    let j = s.get("j");
                                    s.set("x", j)
                                }),
                                Stmt::code_with("xs[i] += x", &["xs", "i", "x"], &[], |s| {
                                    let (i, x) = (s.int("i"), s.int("x"));
                                    add_at(s, "xs", i, x)
                                }),
                            ],
                        )],
                    )],
                )],
            ),
            Stmt::code_with("print(x, xs)", &["x", "xs"], &[], |s| {
                let line = format!("{:?} {:?}", s.get("x"), s.get("xs"));
                s.print(line)
            }),
        ],
    )
}

/// Three sections, each printing its number.
pub fn sections_three() -> FunctionDescriptor {
    let section = |k: i64| {
        Stmt::construct(
            "section",
            vec![Stmt::code_with(&format!("print({k})"), &[], &[], move |s| {
                s.print(k.to_string())
            })],
        )
    };
    FunctionDescriptor::new(
        "f",
        &[],
        vec![Stmt::construct(
            "parallel",
            vec![Stmt::construct("sections", vec![section(1), section(2), section(3)])],
        )],
    )
}

/// A single block whose private result is broadcast with copyprivate.
pub fn single_copyprivate() -> FunctionDescriptor {
    FunctionDescriptor::new(
        "f",
        &[],
        vec![
            Stmt::code_with("x = 0", &[], &["x"], |s| s.set("x", Value::Int(0))),
            Stmt::construct(
                "parallel firstprivate(x)",
                vec![
                    Stmt::construct(
                        "single copyprivate(x)",
                        vec![Stmt::code_with("x += 1", &["x"], &["x"], |s| {
                            let x = s.int("x");
                            s.set("x", Value::Int(x + 1))
                        })],
                    ),
                    Stmt::code_with("print(x)", &["x"], &[], |s| {
                        let line = format!("{:?}", s.get("x"));
                        s.print(line)
                    }),
                ],
            ),
        ],
    )
}

/// Recursive Fibonacci with two tasks and a taskwait, plus its driver.
pub fn task_fib() -> (FunctionDescriptor, FunctionDescriptor) {
    let fib = FunctionDescriptor::new(
        "fib",
        &["n"],
        vec![
            Stmt::code("i = 0", &[], &["i"]),
            Stmt::code("j = 0", &[], &["j"]),
            Stmt::code("if n < 2:\n    return n", &["n"], &[]),
            Stmt::construct("task", vec![Stmt::code("i = fib(n - 1)", &["n"], &["i"])]),
            Stmt::construct("task", vec![Stmt::code("j = fib(n - 2)", &["n"], &["j"])]),
            Stmt::standalone("taskwait"),
            Stmt::code("return i + j", &["i", "j"], &[]),
        ],
    );
    let driver = FunctionDescriptor::new(
        "f",
        &["n"],
        vec![
            Stmt::code("x = 0", &[], &["x"]),
            Stmt::construct(
                "parallel",
                vec![Stmt::construct(
                    "single",
                    vec![Stmt::code("x = fib(n)", &["n"], &["x"])],
                )],
            ),
            Stmt::code("print(x)", &["x"], &[]),
        ],
    );
    (fib, driver)
}

/// Midpoint-rule pi with a combined parallel loop and a sum reduction.
pub fn pi_midpoint() -> FunctionDescriptor {
    FunctionDescriptor::new(
        "pi",
        &["n"],
        vec![
            Stmt::code_with("w = 1.0 / n", &["n"], &["w"], |s| {
                let n = s.float("n");
                s.set("w", Value::Float(1.0 / n))
            }),
            Stmt::code_with("PI = 0.0", &[], &["PI"], |s| s.set("PI", Value::Float(0.0))),
            Stmt::construct(
                "parallel for reduction(+:PI)",
                vec![Stmt::range_loop(
                    "i",
                    ["0", "n", "1"],
                    &["n"],
                    vec![
                        Stmt::code_with("local = (i + 0.5) * w", &["i", "w"], &["local"], |s| {
                            let v = (s.int("i") as f64 + 0.5) * s.float("w");
                            s.set("local", Value::Float(v))
                        }),
                        Stmt::code_with("PI += 4.0 / (1.0 + local * local)", &["PI", "local"], &["PI"], |s| {
                            let l = s.float("local");
                            let pi = s.float("PI");
                            s.set("PI", Value::Float(pi + 4.0 / (1.0 + l * l)))
                        }),
                    ],
                )],
            ),
            Stmt::code_with("PI = PI * w", &["PI", "w"], &["PI"], |s| {
                let v = s.float("PI") * s.float("w");
                s.set("PI", Value::Float(v))
            }),
        ],
    )
}

/// Word counting with per-thread tables merged under critical.
pub fn wordcount() -> FunctionDescriptor {
    FunctionDescriptor::new(
        "wordcount",
        &["lines"],
        vec![
            Stmt::code("count = {}", &[], &["count"]),
            Stmt::construct(
                "parallel",
                vec![
                    Stmt::code("local_count = {}", &[], &["local_count"]),
                    Stmt::construct(
                        "for",
                        vec![Stmt::range_loop(
                            "i",
                            ["0", "len(lines)", "1"],
                            &["lines"],
                            vec![Stmt::code(
                                "for word in lines[i].split():\n    local_count[word] = local_count.get(word, 0) + 1",
                                &["lines", "i", "local_count"],
                                &[],
                            )],
                        )],
                    ),
                    Stmt::construct(
                        "critical",
                        vec![Stmt::code("count.update(local_count)", &["count", "local_count"], &[])],
                    ),
                ],
            ),
            Stmt::code("return count", &["count"], &[]),
        ],
    )
}

/// Every checked-in lowering: (golden file stem, rendered text).
pub fn golden_programs() -> Vec<(&'static str, Vec<FunctionDescriptor>)> {
    let (fib, driver) = task_fib();
    vec![
        ("parallel_clauses", vec![parallel_clauses()]),
        ("for_static", vec![for_static()]),
        ("for_collapse_lastprivate", vec![for_collapse_lastprivate()]),
        ("sections_three", vec![sections_three()]),
        ("single_copyprivate", vec![single_copyprivate()]),
        ("task_fib", vec![fib, driver]),
        ("pi_midpoint", vec![pi_midpoint()]),
        ("wordcount", vec![wordcount()]),
    ]
}

pub fn render_all(functions: &[FunctionDescriptor]) -> String {
    functions
        .iter()
        .map(|f| omprt::transform::render_function(&omprt::transform::plan_function(f).unwrap()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn golden_path(stem: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("golden")
        .join(format!("{stem}.txt"))
}
