//! Builtin functions, methods, and the importable modules (`math`, `random`, `time`, `typing`).

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{type_error, value_error, Exception, EXCEPTION_NAMES};
use crate::interp::{binop, compare, Interp, MAX_SEQUENCE, R};
use crate::value::{float_repr, py_cmp, py_eq, repr, to_str, Value};

const BUILTINS: &[&str] = &[
    "print",
    "len",
    "range",
    "abs",
    "min",
    "max",
    "sum",
    "round",
    "zip",
    "enumerate",
    "all",
    "any",
    "sorted",
    "reversed",
    "isinstance",
    "pow",
    "map",
    "filter",
    "repr",
    "divmod",
];
const TYPES: &[&str] = &[
    "int", "float", "str", "bool", "list", "tuple", "dict", "type",
];

const MATH_FUNCS: &[&str] = &[
    "sqrt", "sin", "cos", "tan", "asin", "acos", "atan", "atan2", "hypot", "exp", "log", "log10",
    "log2", "pow", "fabs", "floor", "ceil", "trunc", "radians", "degrees", "isclose", "dist",
    "isfinite", "isnan", "isinf", "copysign", "fsum", "prod",
];
const MATH_CONSTS: &[&str] = &["pi", "e", "tau", "inf", "nan"];
const RANDOM_FUNCS: &[&str] = &[
    "seed", "random", "uniform", "randint", "choice", "gauss", "shuffle", "sample",
];
const TYPING_NAMES: &[&str] = &[
    "List", "Tuple", "Dict", "Optional", "Any", "Sequence", "Union", "Callable",
];

pub fn builtin(name: &str) -> Option<Value> {
    if let Some(n) = BUILTINS.iter().find(|n| **n == name) {
        return Some(Value::Builtin(n));
    }
    if let Some(n) = TYPES.iter().find(|n| **n == name) {
        return Some(Value::Type(n));
    }
    if let Some(n) = EXCEPTION_NAMES.iter().find(|n| **n == name) {
        return Some(Value::ExcType(n));
    }
    None
}

pub fn import_module(name: &str) -> R<Value> {
    match name {
        "math" => Ok(Value::Module("math")),
        "random" => Ok(Value::Module("random")),
        "time" => Ok(Value::Module("time")),
        "typing" => Ok(Value::Module("typing")),
        _ => Err(Exception::new(
            "ModuleNotFoundError",
            format!("No module named '{name}'"),
        )),
    }
}

pub fn module_names(name: &str) -> &'static [&'static str] {
    match name {
        "math" => MATH_FUNCS,
        "random" => RANDOM_FUNCS,
        "typing" => TYPING_NAMES,
        "time" => &["sleep"],
        _ => &[],
    }
}

fn qualified(module: &str, attr: &str) -> Option<&'static str> {
    const QUALIFIED: &[&str] = &[
        "math.sqrt",
        "math.sin",
        "math.cos",
        "math.tan",
        "math.asin",
        "math.acos",
        "math.atan",
        "math.atan2",
        "math.hypot",
        "math.exp",
        "math.log",
        "math.log10",
        "math.log2",
        "math.pow",
        "math.fabs",
        "math.floor",
        "math.ceil",
        "math.trunc",
        "math.radians",
        "math.degrees",
        "math.isclose",
        "math.dist",
        "math.isfinite",
        "math.isnan",
        "math.isinf",
        "math.copysign",
        "math.fsum",
        "math.prod",
        "random.seed",
        "random.random",
        "random.uniform",
        "random.randint",
        "random.choice",
        "random.gauss",
        "random.shuffle",
        "random.sample",
        "time.sleep",
    ];
    let full = format!("{module}.{attr}");
    QUALIFIED.iter().find(|q| **q == full).copied()
}

pub fn getattr(_it: &mut Interp, obj: &Value, name: &str) -> R<Value> {
    match obj {
        Value::Module(m) => {
            if *m == "math" && MATH_CONSTS.contains(&name) {
                return Ok(Value::Float(match name {
                    "pi" => std::f64::consts::PI,
                    "e" => std::f64::consts::E,
                    "tau" => std::f64::consts::TAU,
                    "inf" => f64::INFINITY,
                    _ => f64::NAN,
                }));
            }
            if *m == "typing" && TYPING_NAMES.contains(&name) {
                return Ok(Value::Typing);
            }
            qualified(m, name).map(Value::Builtin).ok_or_else(|| {
                Exception::new(
                    "AttributeError",
                    format!("module '{m}' has no attribute '{name}'"),
                )
            })
        }
        Value::Exc(e) if name == "args" => Ok(Value::tuple(vec![Value::str(&e.message)])),
        Value::Float(f) if name == "real" => Ok(Value::Float(*f)),
        Value::Float(_) if name == "imag" => Ok(Value::Float(0.0)),
        Value::Float(_) if name == "is_integer" => {
            Ok(Value::Method(Rc::new(obj.clone()), name.into()))
        }
        Value::List(_) | Value::Str(_) | Value::Dict(_) | Value::Tuple(_)
            if has_method(obj, name) =>
        {
            Ok(Value::Method(Rc::new(obj.clone()), name.into()))
        }
        _ => Err(Exception::new(
            "AttributeError",
            format!("'{}' object has no attribute '{name}'", obj.type_name()),
        )),
    }
}

fn has_method(obj: &Value, name: &str) -> bool {
    let methods: &[&str] = match obj {
        Value::List(_) => &[
            "append", "extend", "pop", "insert", "index", "count", "copy", "reverse", "sort",
            "clear", "remove",
        ],
        Value::Tuple(_) => &["index", "count"],
        Value::Str(_) => &[
            "upper",
            "lower",
            "strip",
            "lstrip",
            "rstrip",
            "split",
            "join",
            "startswith",
            "endswith",
            "replace",
            "format",
            "find",
        ],
        Value::Dict(_) => &["get", "keys", "values", "items", "copy", "pop", "update"],
        _ => &[],
    };
    methods.contains(&name)
}

fn arity(name: &str, args: &[Value], min: usize, max: usize) -> R<()> {
    if args.len() < min || args.len() > max {
        let expected = if min == max {
            format!("exactly {min}")
        } else if args.len() < min {
            format!("at least {min}")
        } else {
            format!("at most {max}")
        };
        return Err(type_error(format!(
            "{name}() takes {expected} argument{} ({} given)",
            if min == max && min == 1 { "" } else { "s" },
            args.len()
        )));
    }
    Ok(())
}

fn no_kwargs(name: &str, kwargs: &[(Arc<str>, Value)]) -> R<()> {
    if let Some((k, _)) = kwargs.first() {
        return Err(type_error(format!(
            "{name}() got an unexpected keyword argument '{k}'"
        )));
    }
    Ok(())
}

fn take_kw(kwargs: &mut Vec<(Arc<str>, Value)>, key: &str) -> Option<Value> {
    let pos = kwargs.iter().position(|(k, _)| &**k == key)?;
    Some(kwargs.remove(pos).1)
}

fn num(name: &str, v: &Value) -> R<f64> {
    v.as_f64().ok_or_else(|| {
        type_error(format!(
            "{name}() argument must be a real number, not '{}'",
            v.type_name()
        ))
    })
}

fn must_not_be_nan_domain(v: f64) -> R<Value> {
    if v.is_nan() {
        return Err(value_error("math domain error"));
    }
    Ok(Value::Float(v))
}

fn int_index(v: &Value, what: &str) -> R<i64> {
    v.as_int().ok_or_else(|| {
        type_error(format!(
            "{what} indices must be integers or slices, not {}",
            v.type_name()
        ))
    })
}

pub fn iterate(it: &mut Interp, v: &Value) -> R<Vec<Value>> {
    let _ = it;
    Ok(match v {
        Value::List(l) => l.borrow().clone(),
        Value::Tuple(t) => (**t).clone(),
        Value::Str(s) => s.chars().map(|c| Value::str(&c.to_string())).collect(),
        Value::Dict(d) => d.borrow().iter().map(|(k, _)| k.clone()).collect(),
        other => {
            return Err(type_error(format!(
                "'{}' object is not iterable",
                other.type_name()
            )))
        }
    })
}

fn slice_indices(len: usize, s: &(Value, Value, Value)) -> R<Vec<usize>> {
    let len = len as i64;
    let step = match &s.2 {
        Value::None => 1,
        v => v
            .as_int()
            .ok_or_else(|| type_error("slice indices must be integers or None"))?,
    };
    if step == 0 {
        return Err(value_error("slice step cannot be zero"));
    }
    let clamp = |v: &Value, default: i64| -> R<i64> {
        match v {
            Value::None => Ok(default),
            v => {
                let mut i = v
                    .as_int()
                    .ok_or_else(|| type_error("slice indices must be integers or None"))?;
                if i < 0 {
                    i += len;
                }
                Ok(if step > 0 {
                    i.clamp(0, len)
                } else {
                    i.clamp(-1, len - 1)
                })
            }
        }
    };
    let (start, stop) = if step > 0 {
        (clamp(&s.0, 0)?, clamp(&s.1, len)?)
    } else {
        (clamp(&s.0, len - 1)?, clamp(&s.1, -1)?)
    };
    let mut out = Vec::new();
    let mut i = start;
    while (step > 0 && i < stop) || (step < 0 && i > stop) {
        out.push(i as usize);
        i += step;
    }
    Ok(out)
}

fn norm_index(i: i64, len: usize) -> Option<usize> {
    let j = if i < 0 { i + len as i64 } else { i };
    (j >= 0 && (j as usize) < len).then_some(j as usize)
}

pub fn getitem(obj: &Value, idx: &Value) -> R<Value> {
    match obj {
        Value::List(l) => {
            let l = l.borrow();
            if let Value::Slice(s) = idx {
                return Ok(Value::list(
                    slice_indices(l.len(), s)?
                        .into_iter()
                        .map(|i| l[i].clone())
                        .collect(),
                ));
            }
            let i = int_index(idx, "list")?;
            norm_index(i, l.len())
                .map(|i| l[i].clone())
                .ok_or_else(|| Exception::new("IndexError", "list index out of range"))
        }
        Value::Tuple(t) => {
            if let Value::Slice(s) = idx {
                return Ok(Value::tuple(
                    slice_indices(t.len(), s)?
                        .into_iter()
                        .map(|i| t[i].clone())
                        .collect(),
                ));
            }
            let i = int_index(idx, "tuple")?;
            norm_index(i, t.len())
                .map(|i| t[i].clone())
                .ok_or_else(|| Exception::new("IndexError", "tuple index out of range"))
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            if let Value::Slice(sl) = idx {
                let out: String = slice_indices(chars.len(), sl)?
                    .into_iter()
                    .map(|i| chars[i])
                    .collect();
                return Ok(Value::str(&out));
            }
            let i = int_index(idx, "string")?;
            norm_index(i, chars.len())
                .map(|i| Value::str(&chars[i].to_string()))
                .ok_or_else(|| Exception::new("IndexError", "string index out of range"))
        }
        Value::Dict(d) => d
            .borrow()
            .iter()
            .find(|(k, _)| py_eq(k, idx))
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Exception::new("KeyError", repr(idx))),
        Value::Typing | Value::Type(_) => Ok(Value::Typing),
        other => Err(type_error(format!(
            "'{}' object is not subscriptable",
            other.type_name()
        ))),
    }
}

fn check_hashable(k: &Value) -> R<()> {
    match k {
        Value::List(_) | Value::Dict(_) => {
            Err(type_error(format!("unhashable type: '{}'", k.type_name())))
        }
        _ => Ok(()),
    }
}

pub fn dict_insert(items: &mut Vec<(Value, Value)>, k: Value, v: Value) -> R<()> {
    check_hashable(&k)?;
    match items.iter_mut().find(|(key, _)| py_eq(key, &k)) {
        Some(slot) => slot.1 = v,
        None => items.push((k, v)),
    }
    Ok(())
}

pub fn setitem(obj: &Value, idx: &Value, v: Value) -> R<()> {
    match obj {
        Value::List(l) => {
            let mut l = l.borrow_mut();
            if matches!(idx, Value::Slice(_)) {
                return Err(type_error(
                    "slice assignment is not supported in the sandbox",
                ));
            }
            let i = int_index(idx, "list")?;
            let len = l.len();
            let i = norm_index(i, len).ok_or_else(|| {
                Exception::new("IndexError", "list assignment index out of range")
            })?;
            l[i] = v;
            Ok(())
        }
        Value::Dict(d) => dict_insert(&mut d.borrow_mut(), idx.clone(), v),
        other => Err(type_error(format!(
            "'{}' object does not support item assignment",
            other.type_name()
        ))),
    }
}

pub fn delitem(obj: &Value, idx: &Value) -> R<()> {
    match obj {
        Value::List(l) => {
            let mut l = l.borrow_mut();
            let i = int_index(idx, "list")?;
            let len = l.len();
            let i = norm_index(i, len).ok_or_else(|| {
                Exception::new("IndexError", "list assignment index out of range")
            })?;
            l.remove(i);
            Ok(())
        }
        Value::Dict(d) => {
            let mut d = d.borrow_mut();
            let pos = d
                .iter()
                .position(|(k, _)| py_eq(k, idx))
                .ok_or_else(|| Exception::new("KeyError", repr(idx)))?;
            d.remove(pos);
            Ok(())
        }
        other => Err(type_error(format!(
            "'{}' object doesn't support item deletion",
            other.type_name()
        ))),
    }
}

fn min_max(
    it: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(Arc<str>, Value)>,
    want_max: bool,
) -> R<Value> {
    let key = take_kw(&mut kwargs, "key");
    let default = take_kw(&mut kwargs, "default");
    no_kwargs(name, &kwargs)?;
    let items = match args.len() {
        0 => {
            return Err(type_error(format!(
                "{name} expected at least 1 argument, got 0"
            )))
        }
        1 => iterate(it, &args[0])?,
        _ => args,
    };
    if items.is_empty() {
        return default.ok_or_else(|| value_error(format!("{name}() arg is an empty sequence")));
    }
    let mut best = items[0].clone();
    let mut best_key = match &key {
        Some(k) => it.call_value(k, vec![best.clone()], Vec::new())?,
        None => best.clone(),
    };
    for item in items.into_iter().skip(1) {
        let k = match &key {
            Some(kf) => it.call_value(kf, vec![item.clone()], Vec::new())?,
            None => item.clone(),
        };
        let better = if want_max {
            compare(crate::ast::CmpOp::Gt, &k, &best_key)?
        } else {
            compare(crate::ast::CmpOp::Lt, &k, &best_key)?
        };
        if better {
            best = item;
            best_key = k;
        }
    }
    Ok(best)
}

fn sort_values(
    it: &mut Interp,
    items: Vec<Value>,
    key: Option<Value>,
    reverse: bool,
) -> R<Vec<Value>> {
    let mut keyed = Vec::with_capacity(items.len());
    for item in items {
        let k = match &key {
            Some(kf) if !matches!(kf, Value::None) => {
                it.call_value(kf, vec![item.clone()], Vec::new())?
            }
            _ => item.clone(),
        };
        keyed.push((k, item));
    }
    let mut error = None;
    keyed.sort_by(|a, b| match py_cmp(&a.0, &b.0, "<") {
        Ok(o) => {
            if reverse {
                o.reverse()
            } else {
                o
            }
        }
        Err(e) => {
            error.get_or_insert(e);
            std::cmp::Ordering::Equal
        }
    });
    if let Some(e) = error {
        return Err(e);
    }
    Ok(keyed.into_iter().map(|(_, v)| v).collect())
}

fn to_int(v: &Value) -> R<Value> {
    Ok(match v {
        Value::Bool(b) => Value::Int(*b as i64),
        Value::Int(i) => Value::Int(*i),
        Value::Float(f) => {
            if f.is_nan() {
                return Err(value_error("cannot convert float NaN to integer"));
            }
            if f.is_infinite() {
                return Err(Exception::new(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            Value::Int(f.trunc() as i64)
        }
        Value::Str(s) => Value::Int(s.trim().parse().map_err(|_| {
            value_error(format!(
                "invalid literal for int() with base 10: {}",
                repr(v)
            ))
        })?),
        other => {
            return Err(type_error(format!(
                "int() argument must be a string, a bytes-like object or a real number, not '{}'",
                other.type_name()
            )))
        }
    })
}

fn to_float(v: &Value) -> R<Value> {
    Ok(match v {
        Value::Str(s) => {
            let t = s.trim().to_ascii_lowercase();
            let f = match t.as_str() {
                "inf" | "+inf" | "infinity" => f64::INFINITY,
                "-inf" | "-infinity" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                _ => t.parse().map_err(|_| {
                    value_error(format!("could not convert string to float: {}", repr(v)))
                })?,
            };
            Value::Float(f)
        }
        other => Value::Float(other.as_f64().ok_or_else(|| {
            type_error(format!(
                "float() argument must be a string or a real number, not '{}'",
                other.type_name()
            ))
        })?),
    })
}

fn round_value(args: &[Value]) -> R<Value> {
    arity("round", args, 1, 2)?;
    let digits = match args.get(1) {
        None | Some(Value::None) => None,
        Some(d) => Some(
            d.as_int()
                .ok_or_else(|| type_error("'float' object cannot be interpreted as an integer"))?,
        ),
    };
    match (&args[0], digits) {
        (Value::Int(i), _) => Ok(Value::Int(*i)),
        (Value::Bool(b), _) => Ok(Value::Int(*b as i64)),
        (Value::Float(f), None) => {
            if !f.is_finite() {
                return Err(Exception::new(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            Ok(Value::Int(f.round_ties_even() as i64))
        }
        (Value::Float(f), Some(d)) => {
            let scale = 10f64.powi(d as i32);
            Ok(Value::Float((f * scale).round_ties_even() / scale))
        }
        (other, _) => Err(type_error(format!(
            "type {} doesn't define __round__ method",
            other.type_name()
        ))),
    }
}

fn isinstance(v: &Value, t: &Value) -> R<bool> {
    Ok(match t {
        Value::Type(name) => match *name {
            "int" => matches!(v, Value::Int(_) | Value::Bool(_)),
            "float" => matches!(v, Value::Float(_)),
            "str" => matches!(v, Value::Str(_)),
            "bool" => matches!(v, Value::Bool(_)),
            "list" => matches!(v, Value::List(_)),
            "tuple" => matches!(v, Value::Tuple(_)),
            "dict" => matches!(v, Value::Dict(_)),
            _ => false,
        },
        Value::ExcType(name) => {
            matches!(v, Value::Exc(e) if crate::error::is_subclass(&e.etype, name))
        }
        Value::Tuple(items) => {
            for i in items.iter() {
                if isinstance(v, i)? {
                    return Ok(true);
                }
            }
            false
        }
        Value::Typing => true,
        _ => {
            return Err(type_error(
                "isinstance() arg 2 must be a type, a tuple of types, or a union",
            ))
        }
    })
}

pub fn call_builtin(
    it: &mut Interp,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(Arc<str>, Value)>,
) -> R<Value> {
    if let Some(rest) = name.strip_prefix("math.") {
        no_kwargs(name, if rest == "isclose" { &[] } else { &kwargs })?;
        return call_math(rest, &args, kwargs);
    }
    if let Some(rest) = name.strip_prefix("random.") {
        no_kwargs(name, &kwargs)?;
        return call_random(it, rest, args);
    }
    if name == "time.sleep" {
        no_kwargs(name, &kwargs)?;
        arity("sleep", &args, 1, 1)?;
        let secs = num("sleep", &args[0])?;
        if secs < 0.0 {
            return Err(value_error("sleep length must be non-negative"));
        }
        let wake = Instant::now() + Duration::from_secs_f64(secs.min(1e6));
        match it.deadline {
            Some(d) if wake > d => {
                std::thread::sleep(d.saturating_duration_since(Instant::now()));
                it.check_deadline()?;
                return Err(Exception::timeout());
            }
            _ => std::thread::sleep(wake.saturating_duration_since(Instant::now())),
        }
        return Ok(Value::None);
    }
    match name {
        "print" => Ok(Value::None),
        "len" => {
            no_kwargs(name, &kwargs)?;
            arity("len", &args, 1, 1)?;
            Ok(Value::Int(match &args[0] {
                Value::List(l) => l.borrow().len(),
                Value::Tuple(t) => t.len(),
                Value::Str(s) => s.chars().count(),
                Value::Dict(d) => d.borrow().len(),
                other => {
                    return Err(type_error(format!(
                        "object of type '{}' has no len()",
                        other.type_name()
                    )))
                }
            } as i64))
        }
        "range" => {
            no_kwargs(name, &kwargs)?;
            arity("range", &args, 1, 3)?;
            let ints: Vec<i64> = args
                .iter()
                .map(|a| {
                    a.as_int().ok_or_else(|| {
                        type_error(format!(
                            "'{}' object cannot be interpreted as an integer",
                            a.type_name()
                        ))
                    })
                })
                .collect::<R<_>>()?;
            let (start, stop, step) = match ints.len() {
                1 => (0, ints[0], 1),
                2 => (ints[0], ints[1], 1),
                _ => (ints[0], ints[1], ints[2]),
            };
            if step == 0 {
                return Err(value_error("range() arg 3 must not be zero"));
            }
            let count = if step > 0 {
                (stop - start + step - 1).max(0) / step
            } else {
                (start - stop - step - 1).max(0) / -step
            };
            if count as usize > MAX_SEQUENCE {
                return Err(Exception::new(
                    "MemoryError",
                    "range too large for the sandbox",
                ));
            }
            Ok(Value::list(
                (0..count).map(|k| Value::Int(start + k * step)).collect(),
            ))
        }
        "abs" => {
            arity("abs", &args, 1, 1)?;
            match &args[0] {
                Value::Int(i) => {
                    Ok(Value::Int(i.checked_abs().ok_or_else(|| {
                        Exception::new("OverflowError", "integer overflow")
                    })?))
                }
                Value::Bool(b) => Ok(Value::Int(*b as i64)),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                other => Err(type_error(format!(
                    "bad operand type for abs(): '{}'",
                    other.type_name()
                ))),
            }
        }
        "min" => min_max(it, "min", args, kwargs, false),
        "max" => min_max(it, "max", args, kwargs, true),
        "sum" => {
            let start = take_kw(&mut kwargs, "start");
            no_kwargs(name, &kwargs)?;
            arity("sum", &args, 1, 2)?;
            let mut acc = args.get(1).cloned().or(start).unwrap_or(Value::Int(0));
            if matches!(acc, Value::Str(_)) {
                return Err(type_error(
                    "sum() can't sum strings [use ''.join(seq) instead]",
                ));
            }
            for item in iterate(it, &args[0])? {
                acc = binop(crate::ast::BinOp::Add, &acc, &item)?;
            }
            Ok(acc)
        }
        "round" => {
            if let Some(n) = take_kw(&mut kwargs, "ndigits") {
                let mut a = args;
                a.push(n);
                return round_value(&a);
            }
            no_kwargs(name, &kwargs)?;
            round_value(&args)
        }
        "zip" => {
            no_kwargs(name, &kwargs)?;
            let seqs: Vec<Vec<Value>> = args.iter().map(|a| iterate(it, a)).collect::<R<_>>()?;
            let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
            Ok(Value::list(
                (0..n)
                    .map(|i| Value::tuple(seqs.iter().map(|s| s[i].clone()).collect()))
                    .collect(),
            ))
        }
        "enumerate" => {
            let start = take_kw(&mut kwargs, "start");
            no_kwargs(name, &kwargs)?;
            arity("enumerate", &args, 1, 2)?;
            let start = args
                .get(1)
                .cloned()
                .or(start)
                .map(|s| s.as_int().unwrap_or(0))
                .unwrap_or(0);
            let items = iterate(it, &args[0])?;
            Ok(Value::list(
                items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Value::tuple(vec![Value::Int(start + i as i64), v]))
                    .collect(),
            ))
        }
        "all" | "any" => {
            no_kwargs(name, &kwargs)?;
            arity(name, &args, 1, 1)?;
            let items = iterate(it, &args[0])?;
            Ok(Value::Bool(if name == "all" {
                items.iter().all(Value::truthy)
            } else {
                items.iter().any(Value::truthy)
            }))
        }
        "sorted" => {
            let key = take_kw(&mut kwargs, "key");
            let reverse = take_kw(&mut kwargs, "reverse")
                .map(|r| r.truthy())
                .unwrap_or(false);
            no_kwargs(name, &kwargs)?;
            arity("sorted", &args, 1, 1)?;
            let items = iterate(it, &args[0])?;
            Ok(Value::list(sort_values(it, items, key, reverse)?))
        }
        "reversed" => {
            arity("reversed", &args, 1, 1)?;
            let mut items = iterate(it, &args[0])?;
            items.reverse();
            Ok(Value::list(items))
        }
        "isinstance" => {
            arity("isinstance", &args, 2, 2)?;
            Ok(Value::Bool(isinstance(&args[0], &args[1])?))
        }
        "pow" => {
            arity("pow", &args, 2, 2)?;
            binop(crate::ast::BinOp::Pow, &args[0], &args[1])
        }
        "divmod" => {
            arity("divmod", &args, 2, 2)?;
            let q = binop(crate::ast::BinOp::FloorDiv, &args[0], &args[1])?;
            let r = binop(crate::ast::BinOp::Mod, &args[0], &args[1])?;
            Ok(Value::tuple(vec![q, r]))
        }
        "map" => {
            if args.len() < 2 {
                return Err(type_error("map() must have at least two arguments."));
            }
            let f = args[0].clone();
            let seqs: Vec<Vec<Value>> =
                args[1..].iter().map(|a| iterate(it, a)).collect::<R<_>>()?;
            let n = seqs.iter().map(|s| s.len()).min().unwrap_or(0);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                out.push(it.call_value(
                    &f,
                    seqs.iter().map(|s| s[i].clone()).collect(),
                    Vec::new(),
                )?);
            }
            Ok(Value::list(out))
        }
        "filter" => {
            arity("filter", &args, 2, 2)?;
            let mut out = Vec::new();
            for item in iterate(it, &args[1])? {
                let keep = match &args[0] {
                    Value::None => item.truthy(),
                    f => it.call_value(f, vec![item.clone()], Vec::new())?.truthy(),
                };
                if keep {
                    out.push(item);
                }
            }
            Ok(Value::list(out))
        }
        "repr" => {
            arity("repr", &args, 1, 1)?;
            Ok(Value::str(&repr(&args[0])))
        }
        "int" => {
            if args.is_empty() {
                return Ok(Value::Int(0));
            }
            to_int(&args[0])
        }
        "float" => {
            if args.is_empty() {
                return Ok(Value::Float(0.0));
            }
            to_float(&args[0])
        }
        "str" => Ok(Value::str(&args.first().map(to_str).unwrap_or_default())),
        "bool" => Ok(Value::Bool(args.first().is_some_and(Value::truthy))),
        "list" => Ok(Value::list(match args.first() {
            Some(a) => iterate(it, a)?,
            None => Vec::new(),
        })),
        "tuple" => Ok(Value::tuple(match args.first() {
            Some(a) => iterate(it, a)?,
            None => Vec::new(),
        })),
        "dict" => {
            let mut items: Vec<(Value, Value)> = Vec::new();
            if let Some(Value::Dict(d)) = args.first() {
                items = d.borrow().clone();
            }
            for (k, v) in kwargs {
                dict_insert(&mut items, Value::str(&k), v)?;
            }
            Ok(Value::Dict(Rc::new(RefCell::new(items))))
        }
        "type" => {
            arity("type", &args, 1, 1)?;
            Ok(match &args[0] {
                Value::Int(_) => Value::Type("int"),
                Value::Float(_) => Value::Type("float"),
                Value::Str(_) => Value::Type("str"),
                Value::Bool(_) => Value::Type("bool"),
                Value::List(_) => Value::Type("list"),
                Value::Tuple(_) => Value::Type("tuple"),
                Value::Dict(_) => Value::Type("dict"),
                _ => Value::Type("type"),
            })
        }
        other => Err(Exception::new(
            "NameError",
            format!("name '{other}' is not defined"),
        )),
    }
}

fn call_math(name: &str, args: &[Value], mut kwargs: Vec<(Arc<str>, Value)>) -> R<Value> {
    let one = |args: &[Value]| -> R<f64> {
        arity(name, args, 1, 1)?;
        num(name, &args[0])
    };
    let two = |args: &[Value]| -> R<(f64, f64)> {
        arity(name, args, 2, 2)?;
        Ok((num(name, &args[0])?, num(name, &args[1])?))
    };
    match name {
        "sqrt" => {
            let x = one(args)?;
            if x < 0.0 {
                return Err(value_error("math domain error"));
            }
            Ok(Value::Float(x.sqrt()))
        }
        "sin" => Ok(Value::Float(one(args)?.sin())),
        "cos" => Ok(Value::Float(one(args)?.cos())),
        "tan" => Ok(Value::Float(one(args)?.tan())),
        "asin" => {
            let x = one(args)?;
            if !(-1.0..=1.0).contains(&x) {
                return Err(value_error("math domain error"));
            }
            Ok(Value::Float(x.asin()))
        }
        "acos" => {
            let x = one(args)?;
            if !(-1.0..=1.0).contains(&x) {
                return Err(value_error("math domain error"));
            }
            Ok(Value::Float(x.acos()))
        }
        "atan" => Ok(Value::Float(one(args)?.atan())),
        "atan2" => {
            let (y, x) = two(args)?;
            Ok(Value::Float(y.atan2(x)))
        }
        "hypot" => {
            let mut acc = 0.0f64;
            for a in args {
                let v = num(name, a)?;
                acc = acc.hypot(v);
            }
            Ok(Value::Float(acc))
        }
        "exp" => {
            let r = one(args)?.exp();
            if r.is_infinite() {
                return Err(Exception::new("OverflowError", "math range error"));
            }
            Ok(Value::Float(r))
        }
        "log" => {
            arity(name, args, 1, 2)?;
            let x = num(name, &args[0])?;
            if x <= 0.0 {
                return Err(value_error("math domain error"));
            }
            match args.get(1) {
                Some(b) => {
                    let b = num(name, b)?;
                    if b <= 0.0 || b == 1.0 {
                        return Err(if b == 1.0 {
                            Exception::new("ZeroDivisionError", "float division by zero")
                        } else {
                            value_error("math domain error")
                        });
                    }
                    Ok(Value::Float(x.ln() / b.ln()))
                }
                None => Ok(Value::Float(x.ln())),
            }
        }
        "log10" | "log2" => {
            let x = one(args)?;
            if x <= 0.0 {
                return Err(value_error("math domain error"));
            }
            Ok(Value::Float(if name == "log10" {
                x.log10()
            } else {
                x.log2()
            }))
        }
        "pow" => {
            let (x, y) = two(args)?;
            must_not_be_nan_domain(x.powf(y))
        }
        "fabs" => Ok(Value::Float(one(args)?.abs())),
        "floor" | "ceil" | "trunc" => {
            arity(name, args, 1, 1)?;
            if let Some(i) = args[0].as_int() {
                return Ok(Value::Int(i));
            }
            let x = num(name, &args[0])?;
            if !x.is_finite() {
                return Err(Exception::new(
                    "OverflowError",
                    "cannot convert float infinity to integer",
                ));
            }
            Ok(Value::Int(match name {
                "floor" => x.floor(),
                "ceil" => x.ceil(),
                _ => x.trunc(),
            } as i64))
        }
        "radians" => Ok(Value::Float(one(args)?.to_radians())),
        "degrees" => Ok(Value::Float(one(args)?.to_degrees())),
        "isclose" => {
            let rel = take_kw(&mut kwargs, "rel_tol")
                .map(|v| num(name, &v))
                .transpose()?
                .unwrap_or(1e-9);
            let abs_tol = take_kw(&mut kwargs, "abs_tol")
                .map(|v| num(name, &v))
                .transpose()?
                .unwrap_or(0.0);
            no_kwargs(name, &kwargs)?;
            let (a, b) = two(args)?;
            if a == b {
                return Ok(Value::Bool(true));
            }
            if a.is_infinite() || b.is_infinite() {
                return Ok(Value::Bool(false));
            }
            let diff = (a - b).abs();
            Ok(Value::Bool(
                diff <= (rel * b.abs()).max(rel * a.abs()) || diff <= abs_tol,
            ))
        }
        "dist" => {
            arity(name, args, 2, 2)?;
            let p = seq_f64(name, &args[0])?;
            let q = seq_f64(name, &args[1])?;
            if p.len() != q.len() {
                return Err(value_error(
                    "both points must have the same number of dimensions",
                ));
            }
            Ok(Value::Float(
                p.iter()
                    .zip(q.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
            ))
        }
        "isfinite" => Ok(Value::Bool(one(args)?.is_finite())),
        "isnan" => Ok(Value::Bool(one(args)?.is_nan())),
        "isinf" => Ok(Value::Bool(one(args)?.is_infinite())),
        "copysign" => {
            let (x, y) = two(args)?;
            Ok(Value::Float(x.copysign(y)))
        }
        "fsum" => {
            arity(name, args, 1, 1)?;
            Ok(Value::Float(seq_f64(name, &args[0])?.iter().sum()))
        }
        "prod" => {
            arity(name, args, 1, 1)?;
            let items = match &args[0] {
                Value::List(l) => l.borrow().clone(),
                Value::Tuple(t) => (**t).clone(),
                other => {
                    return Err(type_error(format!(
                        "'{}' object is not iterable",
                        other.type_name()
                    )))
                }
            };
            let mut acc = Value::Int(1);
            for i in items {
                acc = binop(crate::ast::BinOp::Mul, &acc, &i)?;
            }
            Ok(acc)
        }
        _ => Err(Exception::new(
            "AttributeError",
            format!("module 'math' has no attribute '{name}'"),
        )),
    }
}

fn seq_f64(name: &str, v: &Value) -> R<Vec<f64>> {
    let items = match v {
        Value::List(l) => l.borrow().clone(),
        Value::Tuple(t) => (**t).clone(),
        other => {
            return Err(type_error(format!(
                "'{}' object is not iterable",
                other.type_name()
            )))
        }
    };
    items.iter().map(|i| num(name, i)).collect()
}

fn call_random(it: &mut Interp, name: &str, args: Vec<Value>) -> R<Value> {
    match name {
        "seed" => {
            arity("seed", &args, 0, 1)?;
            let s = match args.first() {
                None | Some(Value::None) => 0,
                Some(v) => match v {
                    Value::Float(f) => f.to_bits(),
                    Value::Str(s) => s.bytes().fold(0xcbf29ce484222325u64, |h, b| {
                        (h ^ b as u64).wrapping_mul(0x100000001b3)
                    }),
                    other => other.as_int().ok_or_else(|| {
                        type_error("The only supported seed types are: None, int, float, str")
                    })? as u64,
                },
            };
            it.rng = ChaCha8Rng::seed_from_u64(s);
            Ok(Value::None)
        }
        "random" => {
            arity("random", &args, 0, 0)?;
            Ok(Value::Float(it.rng.random::<f64>()))
        }
        "uniform" => {
            arity("uniform", &args, 2, 2)?;
            let a = num("uniform", &args[0])?;
            let b = num("uniform", &args[1])?;
            let u = it.rng.random::<f64>();
            Ok(Value::Float(a + (b - a) * u))
        }
        "randint" => {
            arity("randint", &args, 2, 2)?;
            let a = args[0]
                .as_int()
                .ok_or_else(|| type_error("randint() arguments must be integers"))?;
            let b = args[1]
                .as_int()
                .ok_or_else(|| type_error("randint() arguments must be integers"))?;
            if b < a {
                return Err(value_error(format!(
                    "empty range in randrange({a}, {})",
                    b + 1
                )));
            }
            Ok(Value::Int(it.rng.random_range(a..=b)))
        }
        "choice" => {
            arity("choice", &args, 1, 1)?;
            let items = iterate(it, &args[0])?;
            if items.is_empty() {
                return Err(Exception::new(
                    "IndexError",
                    "Cannot choose from an empty sequence",
                ));
            }
            let i = it.rng.random_range(0..items.len());
            Ok(items[i].clone())
        }
        "gauss" => {
            arity("gauss", &args, 0, 2)?;
            let mu = args
                .first()
                .map(|v| num("gauss", v))
                .transpose()?
                .unwrap_or(0.0);
            let sigma = args
                .get(1)
                .map(|v| num("gauss", v))
                .transpose()?
                .unwrap_or(1.0);
            let u1: f64 = 1.0 - it.rng.random::<f64>();
            let u2: f64 = it.rng.random::<f64>();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            Ok(Value::Float(mu + sigma * z))
        }
        "shuffle" => {
            arity("shuffle", &args, 1, 1)?;
            let Value::List(l) = &args[0] else {
                return Err(type_error(format!(
                    "'{}' object does not support item assignment",
                    args[0].type_name()
                )));
            };
            let mut l = l.borrow_mut();
            for i in (1..l.len()).rev() {
                let j = it.rng.random_range(0..=i);
                l.swap(i, j);
            }
            Ok(Value::None)
        }
        "sample" => {
            arity("sample", &args, 2, 2)?;
            let mut items = iterate(it, &args[0])?;
            let k = args[1]
                .as_int()
                .ok_or_else(|| type_error("sample() k must be an integer"))?;
            if k < 0 || k as usize > items.len() {
                return Err(value_error("Sample larger than population or is negative"));
            }
            let mut out = Vec::with_capacity(k as usize);
            for _ in 0..k {
                let i = it.rng.random_range(0..items.len());
                out.push(items.remove(i));
            }
            Ok(Value::list(out))
        }
        _ => Err(Exception::new(
            "AttributeError",
            format!("module 'random' has no attribute '{name}'"),
        )),
    }
}

pub fn call_method(
    it: &mut Interp,
    recv: &Value,
    name: &str,
    args: Vec<Value>,
    mut kwargs: Vec<(Arc<str>, Value)>,
) -> R<Value> {
    match recv {
        Value::List(l) => {
            match name {
                "sort" => {
                    let key = take_kw(&mut kwargs, "key");
                    let reverse = take_kw(&mut kwargs, "reverse")
                        .map(|r| r.truthy())
                        .unwrap_or(false);
                    no_kwargs(name, &kwargs)?;
                    let items = l.borrow().clone();
                    let sorted = sort_values(it, items, key, reverse)?;
                    *l.borrow_mut() = sorted;
                    return Ok(Value::None);
                }
                "extend" => {
                    arity(name, &args, 1, 1)?;
                    let items = iterate(it, &args[0])?;
                    l.borrow_mut().extend(items);
                    return Ok(Value::None);
                }
                _ => {}
            }
            no_kwargs(name, &kwargs)?;
            let mut l = l.borrow_mut();
            match name {
                "append" => {
                    arity(name, &args, 1, 1)?;
                    if l.len() >= MAX_SEQUENCE {
                        return Err(Exception::new(
                            "MemoryError",
                            "list too large for the sandbox",
                        ));
                    }
                    l.push(args[0].clone());
                    Ok(Value::None)
                }
                "pop" => {
                    arity(name, &args, 0, 1)?;
                    if l.is_empty() {
                        return Err(Exception::new("IndexError", "pop from empty list"));
                    }
                    let i = match args.first() {
                        Some(i) => norm_index(int_index(i, "list")?, l.len()).ok_or_else(|| {
                            Exception::new("IndexError", "pop index out of range")
                        })?,
                        None => l.len() - 1,
                    };
                    Ok(l.remove(i))
                }
                "insert" => {
                    arity(name, &args, 2, 2)?;
                    let len = l.len() as i64;
                    let mut i = int_index(&args[0], "list")?;
                    if i < 0 {
                        i = (i + len).max(0);
                    }
                    l.insert(i.min(len) as usize, args[1].clone());
                    Ok(Value::None)
                }
                "index" => {
                    arity(name, &args, 1, 1)?;
                    l.iter()
                        .position(|x| py_eq(x, &args[0]))
                        .map(|i| Value::Int(i as i64))
                        .ok_or_else(|| value_error(format!("{} is not in list", repr(&args[0]))))
                }
                "count" => {
                    arity(name, &args, 1, 1)?;
                    Ok(Value::Int(
                        l.iter().filter(|x| py_eq(x, &args[0])).count() as i64
                    ))
                }
                "copy" => Ok(Value::list(l.clone())),
                "reverse" => {
                    l.reverse();
                    Ok(Value::None)
                }
                "clear" => {
                    l.clear();
                    Ok(Value::None)
                }
                "remove" => {
                    arity(name, &args, 1, 1)?;
                    let pos = l
                        .iter()
                        .position(|x| py_eq(x, &args[0]))
                        .ok_or_else(|| value_error("list.remove(x): x not in list"))?;
                    l.remove(pos);
                    Ok(Value::None)
                }
                _ => Err(Exception::new(
                    "AttributeError",
                    format!("'list' object has no attribute '{name}'"),
                )),
            }
        }
        Value::Tuple(t) => match name {
            "index" => {
                arity(name, &args, 1, 1)?;
                t.iter()
                    .position(|x| py_eq(x, &args[0]))
                    .map(|i| Value::Int(i as i64))
                    .ok_or_else(|| value_error("tuple.index(x): x not in tuple"))
            }
            _ => {
                arity(name, &args, 1, 1)?;
                Ok(Value::Int(
                    t.iter().filter(|x| py_eq(x, &args[0])).count() as i64
                ))
            }
        },
        Value::Float(f) => Ok(Value::Bool(f.fract() == 0.0)),
        Value::Str(s) => str_method(it, s, name, args, kwargs),
        Value::Dict(d) => {
            no_kwargs(name, &kwargs)?;
            match name {
                "get" => {
                    arity(name, &args, 1, 2)?;
                    let found = d
                        .borrow()
                        .iter()
                        .find(|(k, _)| py_eq(k, &args[0]))
                        .map(|(_, v)| v.clone());
                    Ok(found.unwrap_or_else(|| args.get(1).cloned().unwrap_or(Value::None)))
                }
                "keys" => Ok(Value::list(
                    d.borrow().iter().map(|(k, _)| k.clone()).collect(),
                )),
                "values" => Ok(Value::list(
                    d.borrow().iter().map(|(_, v)| v.clone()).collect(),
                )),
                "items" => Ok(Value::list(
                    d.borrow()
                        .iter()
                        .map(|(k, v)| Value::tuple(vec![k.clone(), v.clone()]))
                        .collect(),
                )),
                "copy" => Ok(Value::Dict(Rc::new(RefCell::new(d.borrow().clone())))),
                "pop" => {
                    arity(name, &args, 1, 2)?;
                    let mut d = d.borrow_mut();
                    match d.iter().position(|(k, _)| py_eq(k, &args[0])) {
                        Some(p) => Ok(d.remove(p).1),
                        None => args
                            .get(1)
                            .cloned()
                            .ok_or_else(|| Exception::new("KeyError", repr(&args[0]))),
                    }
                }
                _ => {
                    arity(name, &args, 1, 1)?;
                    let Value::Dict(other) = &args[0] else {
                        return Err(type_error("dict.update() argument must be a dict"));
                    };
                    let other = other.borrow().clone();
                    let mut d = d.borrow_mut();
                    for (k, v) in other {
                        dict_insert(&mut d, k, v)?;
                    }
                    Ok(Value::None)
                }
            }
        }
        other => Err(Exception::new(
            "AttributeError",
            format!("'{}' object has no attribute '{name}'", other.type_name()),
        )),
    }
}

fn str_method(
    it: &mut Interp,
    s: &str,
    name: &str,
    args: Vec<Value>,
    kwargs: Vec<(Arc<str>, Value)>,
) -> R<Value> {
    if name != "format" {
        no_kwargs(name, &kwargs)?;
    }
    let arg_str = |i: usize| -> R<String> {
        match args.get(i) {
            Some(Value::Str(x)) => Ok(x.to_string()),
            Some(other) => Err(type_error(format!(
                "must be str, not {}",
                other.type_name()
            ))),
            None => Err(type_error(format!(
                "{name}() takes at least {} argument",
                i + 1
            ))),
        }
    };
    Ok(match name {
        "upper" => Value::str(&s.to_uppercase()),
        "lower" => Value::str(&s.to_lowercase()),
        "strip" => Value::str(s.trim()),
        "lstrip" => Value::str(s.trim_start()),
        "rstrip" => Value::str(s.trim_end()),
        "split" => {
            let parts: Vec<Value> = match args.first() {
                None | Some(Value::None) => s.split_whitespace().map(Value::str).collect(),
                Some(_) => {
                    let sep = arg_str(0)?;
                    if sep.is_empty() {
                        return Err(value_error("empty separator"));
                    }
                    s.split(sep.as_str()).map(Value::str).collect()
                }
            };
            Value::list(parts)
        }
        "join" => {
            arity(name, &args, 1, 1)?;
            let items = iterate(it, &args[0])?;
            let mut parts = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::Str(x) => parts.push(x.to_string()),
                    other => {
                        return Err(type_error(format!(
                            "sequence item {i}: expected str instance, {} found",
                            other.type_name()
                        )))
                    }
                }
            }
            Value::str(&parts.join(s))
        }
        "startswith" => Value::Bool(s.starts_with(arg_str(0)?.as_str())),
        "endswith" => Value::Bool(s.ends_with(arg_str(0)?.as_str())),
        "find" => {
            let sub = arg_str(0)?;
            Value::Int(
                s.find(sub.as_str())
                    .map(|b| s[..b].chars().count() as i64)
                    .unwrap_or(-1),
            )
        }
        "replace" => Value::str(&s.replace(arg_str(0)?.as_str(), arg_str(1)?.as_str())),
        _ => {
            // str.format with positional `{}` / `{0}` and named fields
            let mut out = String::new();
            let chars: Vec<char> = s.chars().collect();
            let mut auto = 0usize;
            let mut i = 0;
            while i < chars.len() {
                match chars[i] {
                    '{' if chars.get(i + 1) == Some(&'{') => {
                        out.push('{');
                        i += 2;
                    }
                    '}' if chars.get(i + 1) == Some(&'}') => {
                        out.push('}');
                        i += 2;
                    }
                    '{' => {
                        let end = chars[i..]
                            .iter()
                            .position(|c| *c == '}')
                            .map(|p| p + i)
                            .ok_or_else(|| {
                                value_error("Single '{' encountered in format string")
                            })?;
                        let field: String = chars[i + 1..end].iter().collect();
                        let (fname, spec) = match field.split_once(':') {
                            Some((a, b)) => (a.to_string(), Some(b.to_string())),
                            None => (field.clone(), None),
                        };
                        let v = if fname.is_empty() {
                            let v = args.get(auto).cloned().ok_or_else(|| Exception::new("IndexError", format!("Replacement index {auto} out of range for positional args tuple")))?;
                            auto += 1;
                            v
                        } else if let Ok(n) = fname.parse::<usize>() {
                            args.get(n).cloned().ok_or_else(|| Exception::new("IndexError", format!("Replacement index {n} out of range for positional args tuple")))?
                        } else {
                            kwargs
                                .iter()
                                .find(|(k, _)| **k == *fname)
                                .map(|(_, v)| v.clone())
                                .ok_or_else(|| Exception::new("KeyError", format!("'{fname}'")))?
                        };
                        match spec {
                            Some(sp) => out.push_str(&format_spec(&v, &sp)?),
                            None => out.push_str(&to_str(&v)),
                        }
                        i = end + 1;
                    }
                    c => {
                        out.push(c);
                        i += 1;
                    }
                }
            }
            Value::str(&out)
        }
    })
}

/// Subset of the format-spec mini-language: `[width][,][.precision][type]` with types `f e g d % s`.
pub fn format_spec(v: &Value, spec: &str) -> R<String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(to_str(v));
    }
    let (body, ty) = match spec.chars().last() {
        Some(c) if "fFeEgGd%s".contains(c) => (&spec[..spec.len() - 1], Some(c)),
        _ => (spec, None),
    };
    let body = body.trim_start_matches(['<', '>', '^', '+', ' ']);
    let (width, precision) = match body.split_once('.') {
        Some((w, p)) => (
            w,
            Some(
                p.parse::<usize>()
                    .map_err(|_| value_error("Format specifier missing precision"))?,
            ),
        ),
        None => (body, None),
    };
    let width: usize = width
        .trim_start_matches('0')
        .trim_end_matches(',')
        .parse()
        .unwrap_or(0);
    let text = match ty {
        Some('f' | 'F') => format!("{:.*}", precision.unwrap_or(6), num_for_format(v)?),
        Some('e' | 'E') => {
            let s = format!("{:.*e}", precision.unwrap_or(6), num_for_format(v)?);
            let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
            let e: i32 = e.parse().unwrap_or(0);
            format!("{m}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
        }
        Some('g' | 'G') => float_repr(num_for_format(v)?),
        Some('%') => format!("{:.*}%", precision.unwrap_or(6), num_for_format(v)? * 100.0),
        Some('d') => match v.as_int() {
            Some(i) => i.to_string(),
            None => {
                return Err(value_error(format!(
                    "Unknown format code 'd' for object of type '{}'",
                    v.type_name()
                )))
            }
        },
        _ => match (precision, v) {
            (Some(p), x) if x.is_number() => format!("{:.*}", p, num_for_format(x)?),
            _ => to_str(v),
        },
    };
    Ok(if text.chars().count() < width {
        format!("{text:>width$}")
    } else {
        text
    })
}

fn num_for_format(v: &Value) -> R<f64> {
    v.as_f64().ok_or_else(|| {
        value_error(format!(
            "Unknown format code 'f' for object of type '{}'",
            v.type_name()
        ))
    })
}
