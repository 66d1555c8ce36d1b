//! Tree-walking evaluator.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::*;
use crate::builtins;
use crate::error::{is_subclass, type_error, value_error, Exception, MODULE_SCOPE};
use crate::value::{py_cmp, py_eq, to_str, Closure, Scope, Value};

/// Longest sequence the interpreter will materialize.
pub const MAX_SEQUENCE: usize = 10_000_000;
const MAX_DEPTH: usize = 100;

pub(crate) type R<T> = Result<T, Exception>;

pub(crate) enum Flow {
    Normal,
    Return(Value),
    Break,
    Continue,
}

pub(crate) struct Ctx<'d> {
    pub func: &'d str,
    pub scope: Option<Scope>,
    pub env: Vec<Scope>,
    pub globals_decl: &'d [Arc<str>],
}

pub struct Interp<'p> {
    pub(crate) lines: &'p [String],
    pub(crate) globals: HashMap<Arc<str>, Value>,
    pub(crate) deadline: Option<Instant>,
    pub(crate) rng: ChaCha8Rng,
    ticks: u32,
    depth: usize,
    handling: Vec<Exception>,
}

impl<'p> Interp<'p> {
    pub fn new(lines: &'p [String], deadline: Option<Instant>, seed: u64) -> Self {
        Interp {
            lines,
            globals: HashMap::new(),
            deadline,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ticks: 0,
            depth: 0,
            handling: Vec::new(),
        }
    }

    pub(crate) fn tick(&mut self) -> R<()> {
        self.ticks = self.ticks.wrapping_add(1);
        if self.ticks.is_multiple_of(256) {
            self.check_deadline()?;
        }
        Ok(())
    }

    pub(crate) fn check_deadline(&self) -> R<()> {
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                return Err(Exception::timeout());
            }
        }
        Ok(())
    }

    pub fn run_module(&mut self, body: &[Stmt]) -> R<()> {
        let ctx = Ctx {
            func: MODULE_SCOPE,
            scope: None,
            env: Vec::new(),
            globals_decl: &[],
        };
        match self.exec_block(body, &ctx)? {
            Flow::Normal => Ok(()),
            Flow::Return(_) => Err(Exception::new("SyntaxError", "'return' outside function")),
            Flow::Break | Flow::Continue => {
                Err(Exception::new("SyntaxError", "'break' outside loop"))
            }
        }
    }

    fn exec_block(&mut self, body: &[Stmt], ctx: &Ctx) -> R<Flow> {
        for stmt in body {
            let flow = self
                .exec_stmt(stmt, ctx)
                .map_err(|e| e.at(ctx.func, stmt.line, self.lines))?;
            if !matches!(flow, Flow::Normal) {
                return Ok(flow);
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(&mut self, stmt: &Stmt, ctx: &Ctx) -> R<Flow> {
        match &stmt.kind {
            StmtKind::Expr(e) => {
                self.eval(e, ctx)?;
            }
            StmtKind::Assign(targets, value) => {
                let v = self.eval(value, ctx)?;
                for t in targets {
                    self.assign(t, v.clone(), ctx)?;
                }
            }
            StmtKind::AugAssign(target, op, value) => {
                let current = match target {
                    Target::Name(n) => self.lookup(n, ctx)?,
                    Target::Subscript(obj, idx) => {
                        let o = self.eval(obj, ctx)?;
                        let i = self.eval(idx, ctx)?;
                        builtins::getitem(&o, &i)?
                    }
                    Target::Attr(obj, name) => {
                        let o = self.eval(obj, ctx)?;
                        builtins::getattr(self, &o, name)?
                    }
                    Target::Tuple(_) => {
                        return Err(Exception::new(
                            "SyntaxError",
                            "illegal augmented assignment",
                        ))
                    }
                };
                let rhs = self.eval(value, ctx)?;
                let result = match (&current, op) {
                    (Value::List(l), BinOp::Add) => {
                        let items = builtins::iterate(self, &rhs)?;
                        l.borrow_mut().extend(items);
                        current.clone()
                    }
                    _ => binop(*op, &current, &rhs)?,
                };
                self.assign(target, result, ctx)?;
            }
            StmtKind::Declare | StmtKind::Pass | StmtKind::Global => {}
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e, ctx)?,
                    None => Value::None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::If(branches, orelse) => {
                for (cond, body) in branches {
                    if self.eval(cond, ctx)?.truthy() {
                        return self.exec_block(body, ctx);
                    }
                }
                return self.exec_block(orelse, ctx);
            }
            StmtKind::While(cond, body, orelse) => {
                loop {
                    self.tick()?;
                    if !self.eval(cond, ctx)?.truthy() {
                        return self.exec_block(orelse, ctx);
                    }
                    match self.exec_block(body, ctx)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
            }
            StmtKind::For(target, iter, body, orelse) => {
                let it = self.eval(iter, ctx)?;
                let items = builtins::iterate(self, &it)?;
                for item in items {
                    self.tick()?;
                    self.assign(target, item, ctx)?;
                    match self.exec_block(body, ctx)? {
                        Flow::Break => return Ok(Flow::Normal),
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                return self.exec_block(orelse, ctx);
            }
            StmtKind::Def(def) => {
                let f = self.make_closure(def, ctx)?;
                self.bind(&def.name, f, ctx);
            }
            StmtKind::Import(names) => {
                for (module, alias) in names {
                    let m = builtins::import_module(module)?;
                    let bind_as: Arc<str> = match alias {
                        Some(a) => a.clone(),
                        None => module.split('.').next().unwrap_or(module).into(),
                    };
                    self.bind(&bind_as, m, ctx);
                }
            }
            StmtKind::FromImport(module, names) => {
                let m = builtins::import_module(module)?;
                for (name, alias) in names {
                    if &**name == "*" {
                        for n in builtins::module_names(module) {
                            let v = builtins::getattr(self, &m, n)?;
                            self.bind(&Arc::from(*n), v, ctx);
                        }
                        continue;
                    }
                    let v = builtins::getattr(self, &m, name).map_err(|_| {
                        Exception::new(
                            "ImportError",
                            format!("cannot import name '{name}' from '{module}'"),
                        )
                    })?;
                    self.bind(alias.as_ref().unwrap_or(name), v, ctx);
                }
            }
            StmtKind::Assert(cond, msg) => {
                if !self.eval(cond, ctx)?.truthy() {
                    let message = match msg {
                        Some(m) => to_str(&self.eval(m, ctx)?),
                        None => String::new(),
                    };
                    return Err(Exception::new("AssertionError", message));
                }
            }
            StmtKind::Raise(value) => {
                let Some(value) = value else {
                    return Err(self.handling.last().cloned().unwrap_or_else(|| {
                        Exception::new("RuntimeError", "No active exception to reraise")
                    }));
                };
                let v = self.eval(value, ctx)?;
                return Err(match v {
                    Value::Exc(e) => (*e).clone(),
                    Value::ExcType(name) => Exception::new(name, ""),
                    other => type_error(format!(
                        "exceptions must derive from BaseException, not {}",
                        other.type_name()
                    )),
                });
            }
            StmtKind::Try(body, handlers, orelse, finally) => {
                let result = self.exec_block(body, ctx);
                let result = match result {
                    Err(e) if !e.timeout && !handlers.is_empty() => {
                        let mut handled = None;
                        for h in handlers {
                            let matches = match &h.types {
                                None => true,
                                Some(t) => {
                                    let t = self.eval(t, ctx)?;
                                    exception_matches(&e, &t)?
                                }
                            };
                            if matches {
                                if let Some(name) = &h.name {
                                    self.bind(name, Value::Exc(Rc::new(e.clone())), ctx);
                                }
                                self.handling.push(e.clone());
                                let r = self
                                    .exec_block(&h.body, ctx)
                                    .map_err(|err| err.at(ctx.func, h.line, self.lines));
                                self.handling.pop();
                                handled = Some(r);
                                break;
                            }
                        }
                        handled.unwrap_or(Err(e))
                    }
                    Ok(Flow::Normal) => self.exec_block(orelse, ctx),
                    other => other,
                };
                if !finally.is_empty() {
                    if let Err(e) = &result {
                        if e.timeout {
                            return result;
                        }
                    }
                    match self.exec_block(finally, ctx)? {
                        Flow::Normal => {}
                        other => return Ok(other),
                    }
                }
                return result;
            }
            StmtKind::Del(targets) => {
                for t in targets {
                    match t {
                        Target::Name(n) => {
                            let removed = match &ctx.scope {
                                Some(s) if !ctx.globals_decl.contains(n) => {
                                    s.borrow_mut().remove(n).is_some()
                                }
                                _ => self.globals.remove(n).is_some(),
                            };
                            if !removed {
                                return Err(Exception::new(
                                    "NameError",
                                    format!("name '{n}' is not defined"),
                                ));
                            }
                        }
                        Target::Subscript(obj, idx) => {
                            let o = self.eval(obj, ctx)?;
                            let i = self.eval(idx, ctx)?;
                            builtins::delitem(&o, &i)?;
                        }
                        _ => return Err(Exception::new("SyntaxError", "cannot delete expression")),
                    }
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn make_closure(&mut self, def: &Arc<FunctionDef>, ctx: &Ctx) -> R<Value> {
        let mut defaults = Vec::with_capacity(def.params.len());
        for p in &def.params {
            defaults.push(match &p.default {
                Some(d) => Some(self.eval(d, ctx)?),
                None => None,
            });
        }
        let mut env = Vec::new();
        if let Some(s) = &ctx.scope {
            env.push(s.clone());
        }
        env.extend(ctx.env.iter().cloned());
        Ok(Value::Func(Rc::new(Closure {
            def: def.clone(),
            defaults,
            env,
        })))
    }

    fn bind(&mut self, name: &Arc<str>, v: Value, ctx: &Ctx) {
        match &ctx.scope {
            Some(s) if !ctx.globals_decl.contains(name) => {
                s.borrow_mut().insert(name.clone(), v);
            }
            _ => {
                self.globals.insert(name.clone(), v);
            }
        }
    }

    fn assign(&mut self, target: &Target, v: Value, ctx: &Ctx) -> R<()> {
        match target {
            Target::Name(n) => self.bind(n, v, ctx),
            Target::Tuple(targets) => {
                let items = builtins::iterate(self, &v)?;
                if items.len() != targets.len() {
                    return Err(if items.len() > targets.len() {
                        value_error(format!(
                            "too many values to unpack (expected {})",
                            targets.len()
                        ))
                    } else {
                        value_error(format!(
                            "not enough values to unpack (expected {}, got {})",
                            targets.len(),
                            items.len()
                        ))
                    });
                }
                for (t, item) in targets.iter().zip(items) {
                    self.assign(t, item, ctx)?;
                }
            }
            Target::Subscript(obj, idx) => {
                let o = self.eval(obj, ctx)?;
                let i = self.eval(idx, ctx)?;
                builtins::setitem(&o, &i, v)?;
            }
            Target::Attr(obj, name) => {
                let o = self.eval(obj, ctx)?;
                return Err(Exception::new(
                    "AttributeError",
                    format!("'{}' object attribute '{name}' is read-only", o.type_name()),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn lookup(&self, name: &Arc<str>, ctx: &Ctx) -> R<Value> {
        if let Some(s) = &ctx.scope {
            if !ctx.globals_decl.contains(name) {
                if let Some(v) = s.borrow().get(name) {
                    return Ok(v.clone());
                }
            }
        }
        for s in &ctx.env {
            if let Some(v) = s.borrow().get(name) {
                return Ok(v.clone());
            }
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        builtins::builtin(name)
            .ok_or_else(|| Exception::new("NameError", format!("name '{name}' is not defined")))
    }

    pub fn global(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    pub(crate) fn eval(&mut self, e: &Expr, ctx: &Ctx) -> R<Value> {
        Ok(match e {
            Expr::Const(c) => match c {
                Const::None => Value::None,
                Const::Bool(b) => Value::Bool(*b),
                Const::Int(i) => Value::Int(*i),
                Const::Float(f) => Value::Float(*f),
                Const::Str(s) => Value::str(s),
            },
            Expr::FStr(parts) => {
                let mut out = String::new();
                for p in parts {
                    match p {
                        FStrPart::Lit(s) => out.push_str(s),
                        FStrPart::Expr(e, spec) => {
                            let v = self.eval(e, ctx)?;
                            match spec {
                                Some(spec) => out.push_str(&builtins::format_spec(&v, spec)?),
                                None => out.push_str(&to_str(&v)),
                            }
                        }
                    }
                }
                Value::str(&out)
            }
            Expr::Name(n) => self.lookup(n, ctx)?,
            Expr::List(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i, ctx)?);
                }
                Value::list(out)
            }
            Expr::Tuple(items) => {
                let mut out = Vec::with_capacity(items.len());
                for i in items {
                    out.push(self.eval(i, ctx)?);
                }
                Value::tuple(out)
            }
            Expr::Dict(items) => {
                let mut out: Vec<(Value, Value)> = Vec::with_capacity(items.len());
                for (k, v) in items {
                    let k = self.eval(k, ctx)?;
                    let v = self.eval(v, ctx)?;
                    builtins::dict_insert(&mut out, k, v)?;
                }
                Value::Dict(Rc::new(RefCell::new(out)))
            }
            Expr::Attr(obj, name) => {
                let o = self.eval(obj, ctx)?;
                builtins::getattr(self, &o, name)?
            }
            Expr::Subscript(obj, idx) => {
                let o = self.eval(obj, ctx)?;
                let i = self.eval(idx, ctx)?;
                builtins::getitem(&o, &i)?
            }
            Expr::Slice(lo, hi, step) => {
                let mut part = |x: &Option<Box<Expr>>| -> R<Value> {
                    match x {
                        Some(e) => self.eval(e, ctx),
                        None => Ok(Value::None),
                    }
                };
                let l = part(lo)?;
                let h = part(hi)?;
                let s = part(step)?;
                Value::Slice(Rc::new((l, h, s)))
            }
            Expr::Call(func, args, kwargs) => {
                let f = self.eval(func, ctx)?;
                let mut a = Vec::with_capacity(args.len());
                for arg in args {
                    match arg {
                        Expr::Starred(inner) => {
                            let v = self.eval(inner, ctx)?;
                            a.extend(builtins::iterate(self, &v)?);
                        }
                        _ => a.push(self.eval(arg, ctx)?),
                    }
                }
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, v) in kwargs {
                    kw.push((k.clone(), self.eval(v, ctx)?));
                }
                self.call_value(&f, a, kw)?
            }
            Expr::Bin(op, l, r) => {
                let a = self.eval(l, ctx)?;
                let b = self.eval(r, ctx)?;
                binop(*op, &a, &b)?
            }
            Expr::Unary(op, x) => {
                let v = self.eval(x, ctx)?;
                match op {
                    UnaryOp::Not => Value::Bool(!v.truthy()),
                    UnaryOp::Neg => match v {
                        Value::Int(i) => Value::Int(i.checked_neg().ok_or_else(overflow)?),
                        Value::Bool(b) => Value::Int(-(b as i64)),
                        Value::Float(f) => Value::Float(-f),
                        other => {
                            return Err(type_error(format!(
                                "bad operand type for unary -: '{}'",
                                other.type_name()
                            )))
                        }
                    },
                    UnaryOp::Pos => match v {
                        Value::Bool(b) => Value::Int(b as i64),
                        Value::Int(_) | Value::Float(_) => v,
                        other => {
                            return Err(type_error(format!(
                                "bad operand type for unary +: '{}'",
                                other.type_name()
                            )))
                        }
                    },
                    UnaryOp::Invert => match v.as_int() {
                        Some(i) => Value::Int(!i),
                        None => {
                            return Err(type_error(format!(
                                "bad operand type for unary ~: '{}'",
                                v.type_name()
                            )))
                        }
                    },
                }
            }
            Expr::And(l, r) => {
                let a = self.eval(l, ctx)?;
                if !a.truthy() {
                    a
                } else {
                    self.eval(r, ctx)?
                }
            }
            Expr::Or(l, r) => {
                let a = self.eval(l, ctx)?;
                if a.truthy() {
                    a
                } else {
                    self.eval(r, ctx)?
                }
            }
            Expr::Compare(first, rest) => {
                let mut left = self.eval(first, ctx)?;
                for (op, e) in rest {
                    let right = self.eval(e, ctx)?;
                    if !compare(*op, &left, &right)? {
                        return Ok(Value::Bool(false));
                    }
                    left = right;
                }
                Value::Bool(true)
            }
            Expr::IfExp(cond, body, orelse) => {
                if self.eval(cond, ctx)?.truthy() {
                    self.eval(body, ctx)?
                } else {
                    self.eval(orelse, ctx)?
                }
            }
            Expr::ListComp(elt, comps) => {
                let mut out = Vec::new();
                let scope = self.comp_scope(ctx);
                let inner = Ctx {
                    func: ctx.func,
                    scope: Some(scope),
                    env: comp_env(ctx),
                    globals_decl: &[],
                };
                self.comprehend(comps, 0, &inner, &mut |this, c| {
                    out.push(this.eval(elt, c)?);
                    Ok(())
                })?;
                Value::list(out)
            }
            Expr::DictComp(k, v, comps) => {
                let mut out: Vec<(Value, Value)> = Vec::new();
                let scope = self.comp_scope(ctx);
                let inner = Ctx {
                    func: ctx.func,
                    scope: Some(scope),
                    env: comp_env(ctx),
                    globals_decl: &[],
                };
                self.comprehend(comps, 0, &inner, &mut |this, c| {
                    let key = this.eval(k, c)?;
                    let val = this.eval(v, c)?;
                    builtins::dict_insert(&mut out, key, val)
                })?;
                Value::Dict(Rc::new(RefCell::new(out)))
            }
            Expr::Lambda(def) => self.make_closure(def, ctx)?,
            Expr::Starred(_) => return Err(type_error("can't use starred expression here".to_string())),
        })
    }

    fn comp_scope(&self, _ctx: &Ctx) -> Scope {
        Rc::new(RefCell::new(HashMap::new()))
    }

    fn comprehend(
        &mut self,
        comps: &[Comprehension],
        i: usize,
        ctx: &Ctx,
        emit: &mut dyn FnMut(&mut Self, &Ctx) -> R<()>,
    ) -> R<()> {
        if i == comps.len() {
            return emit(self, ctx);
        }
        let c = &comps[i];
        let it = self.eval(&c.iter, ctx)?;
        let items = builtins::iterate(self, &it)?;
        'outer: for item in items {
            self.tick()?;
            self.assign(&c.target, item, ctx)?;
            for cond in &c.conds {
                if !self.eval(cond, ctx)?.truthy() {
                    continue 'outer;
                }
            }
            self.comprehend(comps, i + 1, ctx, emit)?;
        }
        Ok(())
    }

    pub(crate) fn call_value(
        &mut self,
        f: &Value,
        args: Vec<Value>,
        kwargs: Vec<(Arc<str>, Value)>,
    ) -> R<Value> {
        self.tick()?;
        match f {
            Value::Func(c) => self.call_closure(c, args, kwargs),
            Value::Builtin(name) => builtins::call_builtin(self, name, args, kwargs),
            Value::Method(recv, name) => builtins::call_method(self, recv, name, args, kwargs),
            Value::Type(name) => builtins::call_builtin(self, name, args, kwargs),
            Value::ExcType(name) => {
                let message = match args.len() {
                    0 => String::new(),
                    1 => to_str(&args[0]),
                    _ => to_str(&Value::tuple(args)),
                };
                Ok(Value::Exc(Rc::new(Exception::new(*name, message))))
            }
            other => Err(type_error(format!(
                "'{}' object is not callable",
                other.type_name()
            ))),
        }
    }

    pub fn call_closure(
        &mut self,
        c: &Rc<Closure>,
        args: Vec<Value>,
        kwargs: Vec<(Arc<str>, Value)>,
    ) -> R<Value> {
        let def = &c.def;
        let name = &def.name;
        let nparams = def.params.len();
        if args.len() > nparams {
            let required = c.defaults.iter().filter(|d| d.is_none()).count();
            let takes = if required == nparams {
                format!(
                    "{nparams} positional argument{}",
                    if nparams == 1 { "" } else { "s" }
                )
            } else {
                format!("from {required} to {nparams} positional arguments")
            };
            return Err(type_error(format!(
                "{name}() takes {takes} but {} {} given",
                args.len(),
                if args.len() == 1 { "was" } else { "were" }
            )));
        }
        let mut slots: Vec<Option<Value>> = vec![None; nparams];
        for (i, a) in args.into_iter().enumerate() {
            slots[i] = Some(a);
        }
        for (k, v) in kwargs {
            let Some(pos) = def.params.iter().position(|p| p.name == k) else {
                return Err(type_error(format!(
                    "{name}() got an unexpected keyword argument '{k}'"
                )));
            };
            if slots[pos].is_some() {
                return Err(type_error(format!(
                    "{name}() got multiple values for argument '{k}'"
                )));
            }
            slots[pos] = Some(v);
        }
        let mut missing = Vec::new();
        let mut locals = HashMap::new();
        for (i, p) in def.params.iter().enumerate() {
            match slots[i].take().or_else(|| c.defaults[i].clone()) {
                Some(v) => {
                    locals.insert(p.name.clone(), v);
                }
                None => missing.push(format!("'{}'", p.name)),
            }
        }
        if !missing.is_empty() {
            let list = match missing.len() {
                1 => missing[0].clone(),
                n => format!("{} and {}", missing[..n - 1].join(", "), missing[n - 1]),
            };
            return Err(type_error(format!(
                "{name}() missing {} required positional argument{}: {list}",
                missing.len(),
                if missing.len() == 1 { "" } else { "s" }
            )));
        }
        if self.depth >= MAX_DEPTH {
            return Err(Exception::new(
                "RecursionError",
                "maximum recursion depth exceeded",
            ));
        }
        self.depth += 1;
        let ctx = Ctx {
            func: name,
            scope: Some(Rc::new(RefCell::new(locals))),
            env: c.env.clone(),
            globals_decl: &def.globals,
        };
        let result = self.exec_block(&def.body, &ctx);
        self.depth -= 1;
        match result? {
            Flow::Return(v) => Ok(v),
            _ => Ok(Value::None),
        }
    }
}

fn comp_env(ctx: &Ctx) -> Vec<Scope> {
    let mut env = Vec::new();
    if let Some(s) = &ctx.scope {
        env.push(s.clone());
    }
    env.extend(ctx.env.iter().cloned());
    env
}

fn exception_matches(e: &Exception, t: &Value) -> R<bool> {
    match t {
        Value::ExcType(name) => Ok(is_subclass(&e.etype, name)),
        Value::Tuple(items) => {
            for i in items.iter() {
                if exception_matches(e, i)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        _ => Err(type_error(
            "catching classes that do not inherit from BaseException is not allowed",
        )),
    }
}

fn overflow() -> Exception {
    Exception::new("OverflowError", "integer result too large for the sandbox")
}

fn unsupported(op: BinOp, a: &Value, b: &Value) -> Exception {
    type_error(format!(
        "unsupported operand type(s) for {}: '{}' and '{}'",
        op.symbol(),
        a.type_name(),
        b.type_name()
    ))
}

fn repeat(items: &[Value], n: i64) -> R<Vec<Value>> {
    let n = n.max(0) as usize;
    if items.len().saturating_mul(n) > MAX_SEQUENCE {
        return Err(Exception::new(
            "MemoryError",
            "sequence too large for the sandbox",
        ));
    }
    let mut out = Vec::with_capacity(items.len() * n);
    for _ in 0..n {
        out.extend(items.iter().cloned());
    }
    Ok(out)
}

pub(crate) fn binop(op: BinOp, a: &Value, b: &Value) -> R<Value> {
    use BinOp::*;
    if let (Some(x), Some(y)) = (a.as_int(), b.as_int()) {
        return Ok(match op {
            Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
            Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
            Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
            Div => {
                if y == 0 {
                    return Err(Exception::new("ZeroDivisionError", "division by zero"));
                }
                Value::Float(x as f64 / y as f64)
            }
            FloorDiv => {
                if y == 0 {
                    return Err(Exception::new(
                        "ZeroDivisionError",
                        "integer division or modulo by zero",
                    ));
                }
                Value::Int(
                    x.div_euclid(y)
                        - if (x.rem_euclid(y) != 0) && (y < 0) {
                            1
                        } else {
                            0
                        },
                )
            }
            Mod => {
                if y == 0 {
                    return Err(Exception::new(
                        "ZeroDivisionError",
                        "integer division or modulo by zero",
                    ));
                }
                let r = x % y;
                Value::Int(if r != 0 && ((r < 0) != (y < 0)) {
                    r + y
                } else {
                    r
                })
            }
            Pow => {
                if y < 0 {
                    if x == 0 {
                        return Err(Exception::new(
                            "ZeroDivisionError",
                            "0.0 cannot be raised to a negative power",
                        ));
                    }
                    Value::Float((x as f64).powf(y as f64))
                } else {
                    let e = u32::try_from(y).map_err(|_| overflow())?;
                    Value::Int(x.checked_pow(e).ok_or_else(overflow)?)
                }
            }
            BitAnd => Value::Int(x & y),
            BitOr => Value::Int(x | y),
            BitXor => Value::Int(x ^ y),
        });
    }
    if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
        return Ok(Value::Float(match op {
            Add => x + y,
            Sub => x - y,
            Mul => x * y,
            Div => {
                if y == 0.0 {
                    return Err(Exception::new(
                        "ZeroDivisionError",
                        "float division by zero",
                    ));
                }
                x / y
            }
            FloorDiv => {
                if y == 0.0 {
                    return Err(Exception::new(
                        "ZeroDivisionError",
                        "float floor division by zero",
                    ));
                }
                (x / y).floor()
            }
            Mod => {
                if y == 0.0 {
                    return Err(Exception::new("ZeroDivisionError", "float modulo"));
                }
                let r = x % y;
                if r != 0.0 && ((r < 0.0) != (y < 0.0)) {
                    r + y
                } else {
                    r
                }
            }
            Pow => {
                if x == 0.0 && y < 0.0 {
                    return Err(Exception::new(
                        "ZeroDivisionError",
                        "0.0 cannot be raised to a negative power",
                    ));
                }
                if x < 0.0 && y.fract() != 0.0 {
                    return Err(value_error(
                        "negative number cannot be raised to a fractional power",
                    ));
                }
                let r = x.powf(y);
                if r.is_infinite() && x.is_finite() && y.is_finite() {
                    return Err(Exception::new(
                        "OverflowError",
                        "(34, 'Numerical result out of range')",
                    ));
                }
                r
            }
            _ => return Err(unsupported(op, a, b)),
        }));
    }
    match (op, a, b) {
        (Add, Value::Str(x), Value::Str(y)) => Ok(Value::str(&format!("{x}{y}"))),
        (Add, Value::List(x), Value::List(y)) => {
            let mut out = x.borrow().clone();
            out.extend(y.borrow().iter().cloned());
            Ok(Value::list(out))
        }
        (Add, Value::Tuple(x), Value::Tuple(y)) => {
            let mut out = (**x).clone();
            out.extend(y.iter().cloned());
            Ok(Value::tuple(out))
        }
        (Add, Value::List(_), other) => Err(type_error(format!(
            "can only concatenate list (not \"{}\") to list",
            other.type_name()
        ))),
        (Add, Value::Tuple(_), other) => Err(type_error(format!(
            "can only concatenate tuple (not \"{}\") to tuple",
            other.type_name()
        ))),
        (Add, Value::Str(_), other) => Err(type_error(format!(
            "can only concatenate str (not \"{}\") to str",
            other.type_name()
        ))),
        (Mul, Value::List(x), n) | (Mul, n, Value::List(x)) if n.as_int().is_some() => {
            Ok(Value::list(repeat(&x.borrow(), n.as_int().unwrap())?))
        }
        (Mul, Value::Tuple(x), n) | (Mul, n, Value::Tuple(x)) if n.as_int().is_some() => {
            Ok(Value::tuple(repeat(x, n.as_int().unwrap())?))
        }
        (Mul, Value::Str(s), n) | (Mul, n, Value::Str(s)) if n.as_int().is_some() => {
            let n = n.as_int().unwrap().max(0) as usize;
            if s.len().saturating_mul(n) > MAX_SEQUENCE {
                return Err(Exception::new(
                    "MemoryError",
                    "sequence too large for the sandbox",
                ));
            }
            Ok(Value::str(&s.repeat(n)))
        }
        (Mul, Value::List(_) | Value::Tuple(_) | Value::Str(_), other)
        | (Mul, other, Value::List(_) | Value::Tuple(_) | Value::Str(_)) => {
            Err(type_error(format!(
                "can't multiply sequence by non-int of type '{}'",
                other.type_name()
            )))
        }
        (Mod, Value::Str(_), _) => Err(type_error(
            "printf-style string formatting is not supported in the sandbox",
        )),
        _ => Err(unsupported(op, a, b)),
    }
}

pub(crate) fn compare(op: CmpOp, a: &Value, b: &Value) -> R<bool> {
    use std::cmp::Ordering::*;
    Ok(match op {
        CmpOp::Eq => py_eq(a, b),
        CmpOp::Ne => !py_eq(a, b),
        CmpOp::Is => match (a, b) {
            (Value::None, Value::None) => true,
            (Value::Bool(x), Value::Bool(y)) => x == y,
            (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
            (Value::Func(x), Value::Func(y)) => Rc::ptr_eq(x, y),
            (Value::Type(x), Value::Type(y)) => x == y,
            _ => false,
        },
        CmpOp::IsNot => !compare(CmpOp::Is, a, b)?,
        CmpOp::In => contains(b, a)?,
        CmpOp::NotIn => !contains(b, a)?,
        CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
            let sym = match op {
                CmpOp::Lt => "<",
                CmpOp::Le => "<=",
                CmpOp::Gt => ">",
                _ => ">=",
            };
            if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
                if x.is_nan() || y.is_nan() {
                    return Ok(false);
                }
            }
            let ord = py_cmp(a, b, sym)?;
            match op {
                CmpOp::Lt => ord == Less,
                CmpOp::Le => ord != Greater,
                CmpOp::Gt => ord == Greater,
                _ => ord != Less,
            }
        }
    })
}

fn contains(container: &Value, item: &Value) -> R<bool> {
    Ok(match container {
        Value::List(l) => l.borrow().iter().any(|x| py_eq(x, item)),
        Value::Tuple(t) => t.iter().any(|x| py_eq(x, item)),
        Value::Dict(d) => d.borrow().iter().any(|(k, _)| py_eq(k, item)),
        Value::Str(s) => match item {
            Value::Str(sub) => s.contains(&**sub),
            other => {
                return Err(type_error(format!(
                    "'in <string>' requires string as left operand, not {}",
                    other.type_name()
                )))
            }
        },
        other => {
            return Err(type_error(format!(
                "argument of type '{}' is not iterable",
                other.type_name()
            )))
        }
    })
}
