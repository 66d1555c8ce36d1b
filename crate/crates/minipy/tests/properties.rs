use minipy::{Program, RunOptions};
use proptest::prelude::*;
use serde_json::{json, Value};

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i32>().prop_map(|i| json!(i)),
        (-1e6f64..1e6).prop_map(|f| json!(f)),
        "[a-z ]{0,8}".prop_map(Value::String),
    ]
}

fn json_tree() -> impl Strategy<Value = Value> {
    json_leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,4}", inner, 0..4)
                .prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

proptest! {
    #[test]
    fn identity_round_trips_json(v in json_tree()) {
        let prog = Program::compile("def ident(x):\n    return x\n").unwrap();
        prop_assert_eq!(prog.call("ident", std::slice::from_ref(&v), &RunOptions::default()).unwrap(), v);
    }

    #[test]
    fn floor_division_and_modulo_agree(a in -10_000i64..10_000, b in -100i64..100) {
        prop_assume!(b != 0);
        let prog = Program::compile("def f(a, b):\n    return [a // b, a % b]\n").unwrap();
        let out = prog.call("f", &[json!(a), json!(b)], &RunOptions::default()).unwrap();
        let q = a.div_euclid(b) - if b < 0 && a.rem_euclid(b) != 0 { 1 } else { 0 };
        let r = a - q * b;
        prop_assert_eq!(out, json!([q, r]));
        // the remainder carries the divisor's sign
        prop_assert!(r == 0 || (r < 0) == (b < 0));
    }

    #[test]
    fn str_of_float_parses_back(f in any::<f64>().prop_filter("finite", |f| f.is_finite())) {
        let prog = Program::compile("def f(x):\n    return str(x)\n").unwrap();
        let out = prog.call("f", &[json!(f)], &RunOptions::default()).unwrap();
        let text = out.as_str().unwrap().to_string();
        prop_assert_eq!(text.parse::<f64>().unwrap(), f);
    }

    #[test]
    fn sorted_matches_rust_sort(mut xs in prop::collection::vec(any::<i32>(), 0..20)) {
        let prog = Program::compile("def f(xs):\n    return sorted(xs)\n").unwrap();
        let out = prog.call("f", &[json!(xs)], &RunOptions::default()).unwrap();
        xs.sort();
        prop_assert_eq!(out, json!(xs));
    }
}
