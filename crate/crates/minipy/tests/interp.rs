use std::time::{Duration, Instant};

use minipy::{Exception, Program, RunOptions};
use serde_json::{json, Value};

fn opts() -> RunOptions {
    RunOptions::default()
}

fn run(src: &str, entry: &str, args: &[Value]) -> Result<Value, Exception> {
    Program::compile(src)?.call(entry, args, &opts())
}

fn eval(expr: &str) -> Value {
    let src = format!("def f():\n    return {expr}\n");
    run(&src, "f", &[]).unwrap_or_else(|e| panic!("{expr}: {e}"))
}

fn err(src: &str, entry: &str, args: &[Value]) -> Exception {
    run(src, entry, args).expect_err("expected an exception")
}

#[test]
fn arithmetic_follows_python_semantics() {
    assert_eq!(eval("7 // 2"), json!(3));
    assert_eq!(eval("-7 // 2"), json!(-4));
    assert_eq!(eval("-7 % 3"), json!(2));
    assert_eq!(eval("7 % -3"), json!(-2));
    assert_eq!(eval("1 / 2"), json!(0.5));
    assert_eq!(eval("2 ** 10"), json!(1024));
    assert_eq!(eval("2 ** -1"), json!(0.5));
    assert_eq!(eval("True + 1"), json!(2));
    assert_eq!(eval("round(2.5)"), json!(2));
    assert_eq!(eval("round(3.5)"), json!(4));
    assert_eq!(eval("round(0.123456, 3)"), json!(0.123));
    assert_eq!(eval("abs(-3)"), json!(3));
    assert_eq!(eval("divmod(-7, 2)"), json!([-4, 1]));
    assert_eq!(eval("1 < 2 < 3"), json!(true));
    assert_eq!(eval("1 < 3 < 2"), json!(false));
}

#[test]
fn sequences_and_comprehensions() {
    assert_eq!(
        eval("[x * x for x in range(5) if x % 2 == 0]"),
        json!([0, 4, 16])
    );
    assert_eq!(
        eval("{k: v for k, v in zip(['a', 'b'], [1, 2])}"),
        json!({"a": 1, "b": 2})
    );
    assert_eq!(eval("[1, 2, 3][::-1]"), json!([3, 2, 1]));
    assert_eq!(eval("[1, 2, 3, 4][1:3]"), json!([2, 3]));
    assert_eq!(eval("(1, 2) + (3,)"), json!([1, 2, 3]));
    assert_eq!(eval("sorted([3, 1, 2], reverse=True)"), json!([3, 2, 1]));
    assert_eq!(
        eval("sorted(['bb', 'a', 'ccc'], key=len)"),
        json!(["a", "bb", "ccc"])
    );
    assert_eq!(eval("max([1, 5, 3])"), json!(5));
    assert_eq!(eval("min(4, 2, 8)"), json!(2));
    assert_eq!(eval("sum([0.5, 0.25])"), json!(0.75));
    assert_eq!(eval("list(enumerate('ab'))"), json!([[0, "a"], [1, "b"]]));
    assert_eq!(eval("any([0, 0, 1]) and not all([1, 0])"), json!(true));
    assert_eq!(eval("list(map(lambda v: v + 1, [1, 2]))"), json!([2, 3]));
    assert_eq!(eval("3 in [1, 2, 3] and 'x' not in 'abc'"), json!(true));
    assert_eq!(eval("len({'a': 1})"), json!(1));
    assert_eq!(eval("sum(x for x in [1, 2, 3])"), json!(6));
}

#[test]
fn strings_and_formatting() {
    assert_eq!(eval("f'{1.5:.2f}-{2}'"), json!("1.50-2"));
    assert_eq!(eval("'{} and {}'.format(1, 'b')"), json!("1 and b"));
    assert_eq!(eval("', '.join(['a', 'b'])"), json!("a, b"));
    assert_eq!(eval("str(0.1)"), json!("0.1"));
    assert_eq!(eval("str(1e20)"), json!("1e+20"));
    assert_eq!(eval("repr('x')"), json!("'x'"));
    assert_eq!(eval("'A-b'.lower().split('-')"), json!(["a", "b"]));
}

#[test]
fn math_and_random_modules() {
    let src = "import math\nimport random\n\ndef f():\n    random.seed(3)\n    a = random.uniform(0, 1)\n    random.seed(3)\n    b = random.uniform(0, 1)\n    return [math.sqrt(16), math.pi, a == b, 0 <= a <= 1, math.atan2(1, 1)]\n";
    let out = run(src, "f", &[]).unwrap();
    assert_eq!(out[0], json!(4.0));
    assert_eq!(out[1], json!(std::f64::consts::PI));
    assert_eq!(out[2], json!(true));
    assert_eq!(out[3], json!(true));
    assert_eq!(out[4], json!(std::f64::consts::FRAC_PI_4));
    let e = err(
        "import math\ndef f():\n    return math.sqrt(-1)\n",
        "f",
        &[],
    );
    assert_eq!(
        (e.etype.as_str(), e.message.as_str()),
        ("ValueError", "math domain error")
    );
}

#[test]
fn random_stream_depends_on_seed_option() {
    let prog = Program::compile("import random\ndef f():\n    return random.random()\n").unwrap();
    let a = prog
        .call("f", &[], &RunOptions { seed: 1, ..opts() })
        .unwrap();
    let b = prog
        .call("f", &[], &RunOptions { seed: 1, ..opts() })
        .unwrap();
    let c = prog
        .call("f", &[], &RunOptions { seed: 2, ..opts() })
        .unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn control_flow() {
    let src = r#"
def f(n):
    total = 0
    i = 0
    while True:
        i += 1
        if i > n:
            break
        if i % 2:
            continue
        total += i
    for a, b in [(1, 2), (3, 4)]:
        total += a * b
    else:
        total += 1000
    try:
        x = 1 / 0
    except ZeroDivisionError as e:
        total += 1
    finally:
        total += 10
    return total
"#;
    // evens up to 6: 12, products 14, else 1000, except 1, finally 10
    assert_eq!(run(src, "f", &[json!(6)]).unwrap(), json!(1037));
}

#[test]
fn closures_defaults_and_globals() {
    let src = r#"
OFFSET = 0.1
count = 0

def make(k):
    def inner(x, scale=2):
        return x * scale + k
    return inner

def bump():
    global count
    count += 1
    return count

def f():
    g = make(3)
    bump()
    return [g(1), g(1, scale=10), bump(), OFFSET]
"#;
    assert_eq!(run(src, "f", &[]).unwrap(), json!([5, 13, 2, 0.1]));
}

#[test]
fn each_call_gets_a_fresh_namespace() {
    let src = "state = []\ndef f():\n    state.append(1)\n    return len(state)\n";
    let prog = Program::compile(src).unwrap();
    assert_eq!(prog.call("f", &[], &opts()).unwrap(), json!(1));
    assert_eq!(prog.call("f", &[], &opts()).unwrap(), json!(1));
}

#[test]
fn load_lists_defined_functions() {
    let prog = Program::compile("X = 1\ndef b():\n    pass\ndef a(x):\n    return x\n").unwrap();
    assert_eq!(
        prog.load(&opts()).unwrap(),
        vec!["a".to_string(), "b".to_string()]
    );
}

#[test]
fn syntax_error_reports_line_without_function() {
    let e = Program::compile("def f(x):\n    return x +\n").unwrap_err();
    assert_eq!(e.etype, "SyntaxError");
    let frame = e.frame.expect("frame");
    assert_eq!(frame.line, 2);
    assert_eq!(frame.function, None);
    assert_eq!(frame.text, "return x +");
}

#[test]
fn missing_colon_and_bad_indent() {
    let e = Program::compile("def f(x)\n    return x\n").unwrap_err();
    assert_eq!(
        (e.etype.as_str(), e.message.as_str()),
        ("SyntaxError", "expected ':'")
    );
    let e = Program::compile("def f(x):\nreturn x\n").unwrap_err();
    assert_eq!(e.etype, "IndentationError");
    assert_eq!(e.frame.unwrap().line, 2);
    let e = Program::compile("x = (1,\n").unwrap_err();
    assert_eq!(e.etype, "SyntaxError");
}

#[test]
fn unsupported_constructs_are_syntax_errors() {
    for src in [
        "class A:\n    pass\n",
        "with open('x') as f:\n    pass\n",
        "@dec\ndef f():\n    pass\n",
    ] {
        let e = Program::compile(src).unwrap_err();
        assert_eq!(e.etype, "SyntaxError", "{src}");
        assert!(e.message.contains("not supported"), "{}", e.message);
    }
}

#[test]
fn name_error_frame_is_innermost() {
    let src = "def a():\n    return b()\n\ndef b():\n    return c()\n\ndef c():\n    return undefined_thing + 1\n";
    let e = err(src, "a", &[]);
    assert_eq!(e.etype, "NameError");
    assert_eq!(e.message, "name 'undefined_thing' is not defined");
    let frame = e.frame.unwrap();
    assert_eq!(frame.function.as_deref(), Some("c"));
    assert_eq!(frame.line, 8);
    assert_eq!(frame.text, "return undefined_thing + 1");
    assert_eq!(
        frame.to_string(),
        "File \"<generated>\", line 8, in c\n    return undefined_thing + 1"
    );
}

#[test]
fn runtime_error_messages_match_python() {
    let cases: &[(&str, &str, &str)] = &[
        ("1 / 0", "ZeroDivisionError", "division by zero"),
        ("1.0 / 0", "ZeroDivisionError", "float division by zero"),
        (
            "1 // 0",
            "ZeroDivisionError",
            "integer division or modulo by zero",
        ),
        ("[1, 2][5]", "IndexError", "list index out of range"),
        ("{'a': 1}['b']", "KeyError", "'b'"),
        (
            "'a' + 1",
            "TypeError",
            "can only concatenate str (not \"int\") to str",
        ),
        (
            "[1] + (2,)",
            "TypeError",
            "can only concatenate list (not \"tuple\") to list",
        ),
        (
            "None + 1",
            "TypeError",
            "unsupported operand type(s) for +: 'NoneType' and 'int'",
        ),
        ("len(5)", "TypeError", "object of type 'int' has no len()"),
        (
            "int('x')",
            "ValueError",
            "invalid literal for int() with base 10: 'x'",
        ),
        (
            "(1).foo",
            "AttributeError",
            "'int' object has no attribute 'foo'",
        ),
        ("max([])", "ValueError", "max() arg is an empty sequence"),
        (
            "[1, 'a'] < ['a', 1]",
            "TypeError",
            "'<' not supported between instances of 'int' and 'str'",
        ),
    ];
    for (expr, etype, message) in cases {
        let e = err(&format!("def f():\n    return {expr}\n"), "f", &[]);
        assert_eq!(
            (e.etype.as_str(), e.message.as_str()),
            (*etype, *message),
            "{expr}"
        );
    }
}

#[test]
fn call_arity_errors() {
    let e = err(
        "def g(a, b):\n    return a\ndef f():\n    return g(1)\n",
        "f",
        &[],
    );
    assert_eq!(e.etype, "TypeError");
    assert_eq!(e.message, "g() missing 1 required positional argument: 'b'");
    let e = err("def g(a):\n    return a\n", "g", &[json!(1), json!(2)]);
    assert_eq!(
        e.message,
        "g() takes 1 positional argument but 2 were given"
    );
}

#[test]
fn missing_module_and_entry() {
    let e = err("import numpy as np\ndef f():\n    return 1\n", "f", &[]);
    assert_eq!(
        (e.etype.as_str(), e.message.as_str()),
        ("ModuleNotFoundError", "No module named 'numpy'")
    );
    assert_eq!(e.frame.unwrap().function.as_deref(), Some("<module>"));
    let e = err("def f():\n    return 1\n", "g", &[]);
    assert_eq!(e.etype, "NameError");
}

#[test]
fn raise_assert_and_catch_by_parent() {
    let e = err("def f():\n    raise ValueError('bad goal')\n", "f", &[]);
    assert_eq!(
        (e.etype.as_str(), e.message.as_str()),
        ("ValueError", "bad goal")
    );
    let e = err("def f():\n    assert 1 == 2, 'mismatch'\n", "f", &[]);
    assert_eq!(
        (e.etype.as_str(), e.message.as_str()),
        ("AssertionError", "mismatch")
    );
    let src =
        "def f():\n    try:\n        [][0]\n    except LookupError:\n        return 'caught'\n";
    assert_eq!(run(src, "f", &[]).unwrap(), json!("caught"));
    let src =
        "def f():\n    try:\n        [][0]\n    except Exception as e:\n        return str(e)\n";
    assert_eq!(
        run(src, "f", &[]).unwrap(),
        json!("list index out of range")
    );
}

#[test]
fn recursion_is_bounded() {
    let e = err("def f(n):\n    return f(n + 1)\n", "f", &[json!(0)]);
    assert_eq!(e.etype, "RecursionError");
}

#[test]
fn infinite_loop_times_out() {
    let prog = Program::compile("def f():\n    while True:\n        pass\n").unwrap();
    let start = Instant::now();
    let e = prog
        .call(
            "f",
            &[],
            &RunOptions {
                timeout: Some(Duration::from_millis(100)),
                seed: 0,
            },
        )
        .unwrap_err();
    assert!(e.timeout);
    assert!(start.elapsed() < Duration::from_secs(2));
}

#[test]
fn timeout_cannot_be_swallowed() {
    let src = "def f():\n    try:\n        while True:\n            pass\n    except Exception:\n        return 1\n";
    let e = Program::compile(src)
        .unwrap()
        .call(
            "f",
            &[],
            &RunOptions {
                timeout: Some(Duration::from_millis(50)),
                seed: 0,
            },
        )
        .unwrap_err();
    assert!(e.timeout);
}

#[test]
fn sleep_respects_deadline() {
    let prog = Program::compile("import time\ndef f():\n    time.sleep(10)\n").unwrap();
    let start = Instant::now();
    let e = prog
        .call(
            "f",
            &[],
            &RunOptions {
                timeout: Some(Duration::from_millis(100)),
                seed: 0,
            },
        )
        .unwrap_err();
    assert!(e.timeout);
    assert!(start.elapsed() < Duration::from_secs(2));
}

#[test]
fn non_json_results_are_rejected() {
    let e = err("def f():\n    return float('nan')\n", "f", &[]);
    assert_eq!(e.etype, "ValueError");
    let e = err("def f():\n    return len\n", "f", &[]);
    assert_eq!(e.etype, "TypeError");
}

#[test]
fn check_treats_none_and_truthy_as_pass() {
    let prog = Program::compile(
        "def t_none():\n    pass\ndef t_false():\n    return False\ndef t_one():\n    return 1\n",
    )
    .unwrap();
    assert!(prog.call_check("t_none", &[], &opts()).unwrap());
    assert!(!prog.call_check("t_false", &[], &opts()).unwrap());
    assert!(prog.call_check("t_one", &[], &opts()).unwrap());
}

#[test]
fn typical_goal_function() {
    let src = r#"
import math
from typing import List

def generate_goal(cube_pose: List[float]) -> List[List[float]]:
    """Place the cube at the top left corner."""
    x, y, z = cube_pose[0], cube_pose[1], cube_pose[2]
    qw, qx, qy, qz = cube_pose[3:7]
    target = [0.1, 0.9, z]
    return [target + [qw, qx, qy, qz]]
"#;
    let out = run(
        src,
        "generate_goal",
        &[json!([0.5, 0.5, 0.805, 1.0, 0.0, 0.0, 0.0])],
    )
    .unwrap();
    assert_eq!(out, json!([[0.1, 0.9, 0.805, 1.0, 0.0, 0.0, 0.0]]));
}

#[test]
fn star_arguments_unpack_iterables() {
    let src = "def add(a, b, c):\n    return a + b * 10 + c * 100\n\ndef f(xs):\n    return add(*xs)\n\ndef g():\n    return add(1, *(2,), c=3)\n\ndef h():\n    return max(*[4, 9, 2])\n";
    assert_eq!(run(src, "f", &[json!([1, 2, 3])]).unwrap(), json!(321));
    assert_eq!(run(src, "g", &[]).unwrap(), json!(321));
    assert_eq!(run(src, "h", &[]).unwrap(), json!(9));
    assert_eq!(err(src, "f", &[json!(5)]).etype, "TypeError");
    let e = Program::compile("def f(d):\n    return g(**d)\n").unwrap_err();
    assert_eq!(e.etype, "SyntaxError");
}
