//! Recursive-descent parser for the supported Python subset.

use std::sync::Arc;

use crate::ast::*;
use crate::error::Exception;
use crate::lexer::{tokenize, Tok, Token};

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

pub fn parse(src: &str) -> Result<Vec<Stmt>, Exception> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        src,
        globals: Vec::new(),
    };
    let mut body = Vec::new();
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Newline => p.pos += 1,
            Tok::Indent => return Err(p.indent_err("unexpected indent")),
            _ => body.push(p.statement()?),
        }
    }
    Ok(body)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    src: &'a str,
    globals: Vec<Vec<Arc<str>>>,
}

type PResult<T> = Result<T, Exception>;
type CallArgs = (Vec<Expr>, Vec<(Arc<str>, Expr)>);

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> usize {
        self.toks[self.pos].line
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> Exception {
        Exception::syntax("SyntaxError", msg, self.line(), self.src)
    }

    fn indent_err(&self, msg: impl Into<String>) -> Exception {
        Exception::syntax("IndentationError", msg, self.line(), self.src)
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else if op == ":" {
            Err(self.err("expected ':'"))
        } else {
            Err(self.err("invalid syntax"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.err("invalid syntax"))
        }
    }

    fn ident(&mut self) -> PResult<Arc<str>> {
        match self.peek().clone() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                self.pos += 1;
                Ok(n.into())
            }
            _ => Err(self.err("invalid syntax")),
        }
    }

    fn end_of_simple(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::Eof) || self.is_op(";")
    }

    // ---- statements ----

    fn statement(&mut self) -> PResult<Stmt> {
        let line = self.line();
        if let Tok::Name(n) = self.peek().clone() {
            match n.as_str() {
                "def" => return self.funcdef(),
                "if" => return self.if_stmt(),
                "while" => {
                    self.pos += 1;
                    let cond = self.test()?;
                    let body = self.block("while", line)?;
                    let orelse = self.else_block()?;
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::While(cond, body, orelse),
                    });
                }
                "for" => {
                    self.pos += 1;
                    let target = self.target_list()?;
                    self.expect_kw("in")?;
                    let iter = self.exprlist()?;
                    let body = self.block("for", line)?;
                    let orelse = self.else_block()?;
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::For(target, iter, body, orelse),
                    });
                }
                "try" => return self.try_stmt(),
                "class" => {
                    return Err(self.err("class definitions are not supported in the sandbox"))
                }
                "with" => {
                    return Err(self.err("'with' statements are not supported in the sandbox"))
                }
                "async" | "await" | "yield" | "nonlocal" => {
                    return Err(self.err(format!("'{n}' is not supported in the sandbox")))
                }
                "elif" | "else" | "except" | "finally" => return Err(self.err("invalid syntax")),
                _ => {}
            }
        }
        if self.is_op("@") {
            return Err(self.err("decorators are not supported in the sandbox"));
        }
        // One or more simple statements on one line. Only the first is returned
        // directly; the rest are wrapped in an always-true `if`.
        let mut stmts = vec![self.simple_stmt()?];
        while self.eat_op(";") {
            if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                break;
            }
            stmts.push(self.simple_stmt()?);
        }
        self.expect_newline()?;
        if stmts.len() == 1 {
            Ok(stmts.pop().unwrap())
        } else {
            Ok(Stmt {
                line,
                kind: StmtKind::If(vec![(Expr::Const(Const::Bool(true)), stmts)], Vec::new()),
            })
        }
    }

    fn expect_newline(&mut self) -> PResult<()> {
        match self.peek() {
            Tok::Newline => {
                self.pos += 1;
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.err("invalid syntax")),
        }
    }

    fn else_block(&mut self) -> PResult<Vec<Stmt>> {
        let l = self.line();
        if self.eat_kw("else") {
            self.block("else", l)
        } else {
            Ok(Vec::new())
        }
    }

    fn block(&mut self, what: &str, header_line: usize) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if !matches!(self.peek(), Tok::Newline) {
            let mut stmts = vec![self.simple_stmt()?];
            while self.eat_op(";") {
                if matches!(self.peek(), Tok::Newline | Tok::Eof) {
                    break;
                }
                stmts.push(self.simple_stmt()?);
            }
            self.expect_newline()?;
            return Ok(stmts);
        }
        self.pos += 1;
        if !matches!(self.peek(), Tok::Indent) {
            return Err(self.indent_err(format!(
                "expected an indented block after '{what}' statement on line {header_line}"
            )));
        }
        self.pos += 1;
        let mut body = Vec::new();
        loop {
            match self.peek() {
                Tok::Dedent => {
                    self.pos += 1;
                    break;
                }
                Tok::Eof => break,
                Tok::Newline => self.pos += 1,
                Tok::Indent => return Err(self.indent_err("unexpected indent")),
                _ => body.push(self.statement()?),
            }
        }
        Ok(body)
    }

    fn funcdef(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.expect_kw("def")?;
        let name = self.ident()?;
        self.expect_op("(")?;
        let params = self.params(")", true)?;
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.test()?;
        }
        self.globals.push(Vec::new());
        let body = self.block("function definition", line);
        let globals = self.globals.pop().unwrap_or_default();
        let body = body?;
        Ok(Stmt {
            line,
            kind: StmtKind::Def(Arc::new(FunctionDef {
                name,
                params,
                body,
                globals,
            })),
        })
    }

    fn params(&mut self, close: &str, annotations: bool) -> PResult<Vec<Param>> {
        let mut params: Vec<Param> = Vec::new();
        while !self.is_op(close) {
            if self.is_op("*") || self.is_op("**") {
                return Err(self.err("variadic parameters are not supported in the sandbox"));
            }
            let name = self.ident()?;
            if annotations && self.eat_op(":") {
                self.test()?;
            }
            let default = if self.eat_op("=") {
                Some(self.test()?)
            } else {
                None
            };
            if default.is_none() && params.iter().any(|p| p.default.is_some()) {
                return Err(self.err("non-default argument follows default argument"));
            }
            if params.iter().any(|p| p.name == name) {
                return Err(self.err(format!(
                    "duplicate argument '{name}' in function definition"
                )));
            }
            params.push(Param { name, default });
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(params)
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.expect_kw("if")?;
        let mut branches = Vec::new();
        let cond = self.test()?;
        let body = self.block("if", line)?;
        branches.push((cond, body));
        let mut orelse = Vec::new();
        loop {
            let l = self.line();
            if self.eat_kw("elif") {
                let cond = self.test()?;
                let body = self.block("elif", l)?;
                branches.push((cond, body));
            } else if self.eat_kw("else") {
                orelse = self.block("else", l)?;
                break;
            } else {
                break;
            }
        }
        Ok(Stmt {
            line,
            kind: StmtKind::If(branches, orelse),
        })
    }

    fn try_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        self.expect_kw("try")?;
        let body = self.block("try", line)?;
        let mut handlers = Vec::new();
        let mut orelse = Vec::new();
        let mut finally = Vec::new();
        loop {
            let l = self.line();
            if self.eat_kw("except") {
                let mut types = None;
                let mut name = None;
                if !self.is_op(":") {
                    types = Some(self.test()?);
                    if self.eat_kw("as") {
                        name = Some(self.ident()?);
                    }
                }
                let body = self.block("except", l)?;
                handlers.push(ExceptClause {
                    types,
                    name,
                    body,
                    line: l,
                });
            } else {
                break;
            }
        }
        let l = self.line();
        if self.eat_kw("else") {
            if handlers.is_empty() {
                return Err(self.err("invalid syntax"));
            }
            orelse = self.block("else", l)?;
        }
        let l = self.line();
        if self.eat_kw("finally") {
            finally = self.block("finally", l)?;
        }
        if handlers.is_empty() && finally.is_empty() {
            return Err(self.err("expected 'except' or 'finally' block"));
        }
        Ok(Stmt {
            line,
            kind: StmtKind::Try(body, handlers, orelse, finally),
        })
    }

    fn simple_stmt(&mut self) -> PResult<Stmt> {
        let line = self.line();
        if let Tok::Name(n) = self.peek().clone() {
            match n.as_str() {
                "pass" => {
                    self.pos += 1;
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Pass,
                    });
                }
                "break" => {
                    self.pos += 1;
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Break,
                    });
                }
                "continue" => {
                    self.pos += 1;
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Continue,
                    });
                }
                "return" => {
                    self.pos += 1;
                    let value = if self.end_of_simple() {
                        None
                    } else {
                        Some(self.exprlist()?)
                    };
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Return(value),
                    });
                }
                "import" => {
                    self.pos += 1;
                    let mut names = Vec::new();
                    loop {
                        let module = self.dotted_name()?;
                        let alias = if self.eat_kw("as") {
                            Some(self.ident()?)
                        } else {
                            None
                        };
                        names.push((module, alias));
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Import(names),
                    });
                }
                "from" => {
                    self.pos += 1;
                    let module = self.dotted_name()?;
                    self.expect_kw("import")?;
                    let mut names = Vec::new();
                    if self.eat_op("*") {
                        names.push(("*".into(), None));
                    } else {
                        let paren = self.eat_op("(");
                        loop {
                            if paren && self.is_op(")") {
                                break;
                            }
                            let name = self.ident()?;
                            let alias = if self.eat_kw("as") {
                                Some(self.ident()?)
                            } else {
                                None
                            };
                            names.push((name, alias));
                            if !self.eat_op(",") {
                                break;
                            }
                        }
                        if paren {
                            self.expect_op(")")?;
                        }
                    }
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::FromImport(module, names),
                    });
                }
                "assert" => {
                    self.pos += 1;
                    let cond = self.test()?;
                    let msg = if self.eat_op(",") {
                        Some(self.test()?)
                    } else {
                        None
                    };
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Assert(cond, msg),
                    });
                }
                "raise" => {
                    self.pos += 1;
                    let value = if self.end_of_simple() {
                        None
                    } else {
                        Some(self.test()?)
                    };
                    if self.eat_kw("from") {
                        self.test()?;
                    }
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Raise(value),
                    });
                }
                "global" => {
                    self.pos += 1;
                    loop {
                        let name = self.ident()?;
                        if let Some(g) = self.globals.last_mut() {
                            g.push(name);
                        }
                        if !self.eat_op(",") {
                            break;
                        }
                    }
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Global,
                    });
                }
                "del" => {
                    self.pos += 1;
                    let e = self.exprlist()?;
                    let targets = match e {
                        Expr::Tuple(items) => items
                            .into_iter()
                            .map(|i| self.to_target(i))
                            .collect::<PResult<_>>()?,
                        other => vec![self.to_target(other)?],
                    };
                    return Ok(Stmt {
                        line,
                        kind: StmtKind::Del(targets),
                    });
                }
                _ => {}
            }
        }
        let first = self.exprlist()?;
        if self.is_op(":") {
            // annotated assignment
            if !matches!(first, Expr::Name(_) | Expr::Attr(..) | Expr::Subscript(..)) {
                return Err(self.err("illegal target for annotation"));
            }
            self.pos += 1;
            self.test()?;
            if self.eat_op("=") {
                let value = self.exprlist()?;
                let target = self.to_target(first)?;
                return Ok(Stmt {
                    line,
                    kind: StmtKind::Assign(vec![target], value),
                });
            }
            return Ok(Stmt {
                line,
                kind: StmtKind::Declare,
            });
        }
        let aug = match self.peek() {
            Tok::Op("+=") => Some(BinOp::Add),
            Tok::Op("-=") => Some(BinOp::Sub),
            Tok::Op("*=") => Some(BinOp::Mul),
            Tok::Op("/=") => Some(BinOp::Div),
            Tok::Op("//=") => Some(BinOp::FloorDiv),
            Tok::Op("%=") => Some(BinOp::Mod),
            Tok::Op("**=") => Some(BinOp::Pow),
            _ => None,
        };
        if let Some(op) = aug {
            self.pos += 1;
            let target = self.to_target(first)?;
            if matches!(target, Target::Tuple(_)) {
                return Err(self.err("'tuple' is an illegal expression for augmented assignment"));
            }
            let value = self.exprlist()?;
            return Ok(Stmt {
                line,
                kind: StmtKind::AugAssign(target, op, value),
            });
        }
        if self.is_op("=") {
            let mut exprs = vec![first];
            while self.eat_op("=") {
                exprs.push(self.exprlist()?);
            }
            let value = exprs.pop().unwrap();
            let targets = exprs
                .into_iter()
                .map(|e| self.to_target(e))
                .collect::<PResult<Vec<_>>>()?;
            return Ok(Stmt {
                line,
                kind: StmtKind::Assign(targets, value),
            });
        }
        Ok(Stmt {
            line,
            kind: StmtKind::Expr(first),
        })
    }

    fn dotted_name(&mut self) -> PResult<Arc<str>> {
        let mut name = self.ident()?.to_string();
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name.into())
    }

    fn to_target(&self, e: Expr) -> PResult<Target> {
        Ok(match e {
            Expr::Name(n) => Target::Name(n),
            Expr::Tuple(items) | Expr::List(items) => Target::Tuple(
                items
                    .into_iter()
                    .map(|i| self.to_target(i))
                    .collect::<PResult<_>>()?,
            ),
            Expr::Subscript(obj, idx) => Target::Subscript(*obj, *idx),
            Expr::Attr(obj, name) => Target::Attr(*obj, name),
            Expr::Call(..) => return Err(self.err("cannot assign to function call here")),
            Expr::Const(_) => return Err(self.err("cannot assign to literal here")),
            _ => return Err(self.err("cannot assign to expression here")),
        })
    }

    /// Loop targets: parsed below the comparison level so `in` is not consumed.
    fn target_list(&mut self) -> PResult<Target> {
        let mut items = vec![self.bitor()?];
        let mut tuple = false;
        while self.eat_op(",") {
            tuple = true;
            if self.is_kw("in") {
                break;
            }
            items.push(self.bitor()?);
        }
        let e = if tuple {
            Expr::Tuple(items)
        } else {
            items.pop().unwrap()
        };
        self.to_target(e)
    }

    // ---- expressions ----

    fn exprlist(&mut self) -> PResult<Expr> {
        let first = self.test()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.end_of_simple() || self.is_op("=") || self.is_op(")") || self.is_op(":") {
                break;
            }
            items.push(self.test()?);
        }
        Ok(Expr::Tuple(items))
    }

    fn test(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let body = self.or_test()?;
        if self.is_kw("if") {
            // Ternary; a bare `if` after an expression inside a comprehension is handled by the caller.
            let save = self.pos;
            self.pos += 1;
            let cond = self.or_test()?;
            if !self.eat_kw("else") {
                self.pos = save;
                return Err(self.err("expected 'else' after 'if' expression"));
            }
            let orelse = self.test()?;
            return Ok(Expr::IfExp(
                Box::new(cond),
                Box::new(body),
                Box::new(orelse),
            ));
        }
        Ok(body)
    }

    fn test_no_cond(&mut self) -> PResult<Expr> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn lambda(&mut self) -> PResult<Expr> {
        let line = self.line();
        self.expect_kw("lambda")?;
        let params = self.params(":", false)?;
        self.expect_op(":")?;
        let body = self.test()?;
        let ret = Stmt {
            line,
            kind: StmtKind::Return(Some(body)),
        };
        Ok(Expr::Lambda(Arc::new(FunctionDef {
            name: "<lambda>".into(),
            params,
            body: vec![ret],
            globals: Vec::new(),
        })))
    }

    fn or_test(&mut self) -> PResult<Expr> {
        let mut left = self.and_test()?;
        while self.eat_kw("or") {
            let right = self.and_test()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_test(&mut self) -> PResult<Expr> {
        let mut left = self.not_test()?;
        while self.eat_kw("and") {
            let right = self.not_test()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_test(&mut self) -> PResult<Expr> {
        if self.eat_kw("not") {
            let e = self.not_test()?;
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(e)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let left = self.bitor()?;
        let mut ops = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Op("==") => CmpOp::Eq,
                Tok::Op("!=") => CmpOp::Ne,
                Tok::Op("<") => CmpOp::Lt,
                Tok::Op("<=") => CmpOp::Le,
                Tok::Op(">") => CmpOp::Gt,
                Tok::Op(">=") => CmpOp::Ge,
                Tok::Name(n) if n == "in" => CmpOp::In,
                Tok::Name(n) if n == "is" => {
                    if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                        self.pos += 1;
                        CmpOp::IsNot
                    } else {
                        CmpOp::Is
                    }
                }
                Tok::Name(n)
                    if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") =>
                {
                    self.pos += 1;
                    CmpOp::NotIn
                }
                _ => break,
            };
            self.pos += 1;
            ops.push((op, self.bitor()?));
        }
        if ops.is_empty() {
            Ok(left)
        } else {
            Ok(Expr::Compare(Box::new(left), ops))
        }
    }

    fn bitor(&mut self) -> PResult<Expr> {
        let mut left = self.bitxor()?;
        while self.eat_op("|") {
            let right = self.bitxor()?;
            left = Expr::Bin(BinOp::BitOr, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn bitxor(&mut self) -> PResult<Expr> {
        let mut left = self.bitand()?;
        while self.eat_op("^") {
            let right = self.bitand()?;
            left = Expr::Bin(BinOp::BitXor, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn bitand(&mut self) -> PResult<Expr> {
        let mut left = self.arith()?;
        while self.eat_op("&") {
            let right = self.arith()?;
            left = Expr::Bin(BinOp::BitAnd, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut left = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                break;
            };
            let right = self.term()?;
            left = Expr::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut left = self.factor()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else if self.eat_op("//") {
                BinOp::FloorDiv
            } else if self.eat_op("%") {
                BinOp::Mod
            } else if self.is_op("@") {
                return Err(self.err("matrix multiplication is not supported in the sandbox"));
            } else {
                break;
            };
            let right = self.factor()?;
            left = Expr::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let op = if self.eat_op("-") {
            UnaryOp::Neg
        } else if self.eat_op("+") {
            UnaryOp::Pos
        } else if self.eat_op("~") {
            UnaryOp::Invert
        } else {
            return self.power();
        };
        let e = self.factor()?;
        Ok(Expr::Unary(op, Box::new(e)))
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                self.expect_op(")")?;
                e = Expr::Call(Box::new(e), args, kwargs);
            } else if self.eat_op("[") {
                let idx = self.subscript()?;
                self.expect_op("]")?;
                e = Expr::Subscript(Box::new(e), Box::new(idx));
            } else if self.eat_op(".") {
                let name = self.ident()?;
                e = Expr::Attr(Box::new(e), name);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn call_args(&mut self) -> PResult<CallArgs> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(Arc<str>, Expr)> = Vec::new();
        while !self.is_op(")") {
            if self.is_op("**") {
                return Err(self.err("keyword argument unpacking is not supported in the sandbox"));
            }
            if self.eat_op("*") {
                if !kwargs.is_empty() {
                    return Err(self.err("iterable argument unpacking follows keyword argument unpacking"));
                }
                let v = self.test()?;
                args.push(Expr::Starred(Box::new(v)));
                if !self.eat_op(",") {
                    break;
                }
                continue;
            }
            if let (Tok::Name(n), Tok::Op("=")) = (self.peek().clone(), self.peek_at(1).clone()) {
                if !KEYWORDS.contains(&n.as_str()) {
                    self.pos += 2;
                    let v = self.test()?;
                    kwargs.push((n.into(), v));
                    if !self.eat_op(",") {
                        break;
                    }
                    continue;
                }
            }
            if !kwargs.is_empty() {
                return Err(self.err("positional argument follows keyword argument"));
            }
            let v = self.test()?;
            if self.is_kw("for") {
                let comps = self.comprehensions()?;
                args.push(Expr::ListComp(Box::new(v), comps));
            } else {
                args.push(v);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok((args, kwargs))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let first = self.slice_item()?;
        if self.is_op(",") {
            let mut items = vec![first];
            while self.eat_op(",") {
                if self.is_op("]") {
                    break;
                }
                items.push(self.slice_item()?);
            }
            return Ok(Expr::Tuple(items));
        }
        Ok(first)
    }

    fn slice_item(&mut self) -> PResult<Expr> {
        let lo = if self.is_op(":") {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        if !self.eat_op(":") {
            return Ok(*lo.expect("index expression"));
        }
        let hi = if self.is_op(":") || self.is_op("]") || self.is_op(",") {
            None
        } else {
            Some(Box::new(self.test()?))
        };
        let step = if self.eat_op(":") {
            if self.is_op("]") || self.is_op(",") {
                None
            } else {
                Some(Box::new(self.test()?))
            }
        } else {
            None
        };
        Ok(Expr::Slice(lo, hi, step))
    }

    fn comprehensions(&mut self) -> PResult<Vec<Comprehension>> {
        let mut comps = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut conds = Vec::new();
            while self.eat_kw("if") {
                conds.push(self.test_no_cond()?);
            }
            comps.push(Comprehension {
                target,
                iter,
                conds,
            });
        }
        Ok(comps)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let line = self.line();
        match self.next() {
            Tok::Int(v) => Ok(Expr::Const(Const::Int(v))),
            Tok::Float(v) => Ok(Expr::Const(Const::Float(v))),
            Tok::Str(s) => {
                let mut s = s;
                let mut parts: Option<Vec<FStrPart>> = None;
                loop {
                    match self.peek().clone() {
                        Tok::Str(more) => {
                            self.pos += 1;
                            match &mut parts {
                                Some(p) => p.push(FStrPart::Lit(more)),
                                None => s.push_str(&more),
                            }
                        }
                        Tok::FStr(raw) => {
                            self.pos += 1;
                            let p = parts
                                .get_or_insert_with(|| vec![FStrPart::Lit(std::mem::take(&mut s))]);
                            p.extend(self.fstring(&raw, line)?);
                        }
                        _ => break,
                    }
                }
                match parts {
                    Some(p) => Ok(Expr::FStr(p)),
                    None => Ok(Expr::Const(Const::Str(s.into()))),
                }
            }
            Tok::FStr(raw) => {
                let mut parts = self.fstring(&raw, line)?;
                loop {
                    match self.peek().clone() {
                        Tok::Str(more) => {
                            self.pos += 1;
                            parts.push(FStrPart::Lit(more));
                        }
                        Tok::FStr(raw) => {
                            self.pos += 1;
                            parts.extend(self.fstring(&raw, line)?);
                        }
                        _ => break,
                    }
                }
                Ok(Expr::FStr(parts))
            }
            Tok::Name(n) => match n.as_str() {
                "None" => Ok(Expr::Const(Const::None)),
                "True" => Ok(Expr::Const(Const::Bool(true))),
                "False" => Ok(Expr::Const(Const::Bool(false))),
                k if KEYWORDS.contains(&k) => {
                    self.pos -= 1;
                    Err(self.err("invalid syntax"))
                }
                _ => Ok(Expr::Name(n.into())),
            },
            Tok::Op("(") => {
                if self.eat_op(")") {
                    return Ok(Expr::Tuple(Vec::new()));
                }
                let first = self.test()?;
                if self.is_kw("for") {
                    let comps = self.comprehensions()?;
                    self.expect_op(")")?;
                    return Ok(Expr::ListComp(Box::new(first), comps));
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    items.push(self.test()?);
                }
                self.expect_op(")")?;
                Ok(Expr::Tuple(items))
            }
            Tok::Op("[") => {
                if self.eat_op("]") {
                    return Ok(Expr::List(Vec::new()));
                }
                let first = self.test()?;
                if self.is_kw("for") {
                    let comps = self.comprehensions()?;
                    self.expect_op("]")?;
                    return Ok(Expr::ListComp(Box::new(first), comps));
                }
                let mut items = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    items.push(self.test()?);
                }
                self.expect_op("]")?;
                Ok(Expr::List(items))
            }
            Tok::Op("{") => {
                if self.eat_op("}") {
                    return Ok(Expr::Dict(Vec::new()));
                }
                let key = self.test()?;
                if !self.eat_op(":") {
                    return Err(self.err("set literals are not supported in the sandbox"));
                }
                let value = self.test()?;
                if self.is_kw("for") {
                    let comps = self.comprehensions()?;
                    self.expect_op("}")?;
                    return Ok(Expr::DictComp(Box::new(key), Box::new(value), comps));
                }
                let mut items = vec![(key, value)];
                while self.eat_op(",") {
                    if self.is_op("}") {
                        break;
                    }
                    let k = self.test()?;
                    self.expect_op(":")?;
                    let v = self.test()?;
                    items.push((k, v));
                }
                self.expect_op("}")?;
                Ok(Expr::Dict(items))
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                if matches!(
                    self.peek(),
                    Tok::Newline | Tok::Eof | Tok::Indent | Tok::Dedent
                ) {
                    if self.pos > 0 {
                        self.pos -= 1;
                    }
                    return Err(self.err("invalid syntax"));
                }
                Err(self.err("invalid syntax"))
            }
        }
    }

    fn fstring(&self, raw: &str, line: usize) -> PResult<Vec<FStrPart>> {
        let chars: Vec<char> = raw.chars().collect();
        let mut parts = Vec::new();
        let mut lit = String::new();
        let mut i = 0;
        let bad =
            |m: &str| Exception::syntax("SyntaxError", format!("f-string: {m}"), line, self.src);
        while i < chars.len() {
            let c = chars[i];
            if c == '{' {
                if chars.get(i + 1) == Some(&'{') {
                    lit.push('{');
                    i += 2;
                    continue;
                }
                let mut depth = 0usize;
                let mut j = i + 1;
                let mut quote: Option<char> = None;
                let mut split: Option<usize> = None;
                while j < chars.len() {
                    let d = chars[j];
                    if let Some(q) = quote {
                        if d == q {
                            quote = None;
                        }
                    } else if d == '\'' || d == '"' {
                        quote = Some(d);
                    } else if d == '(' || d == '[' || d == '{' {
                        depth += 1;
                    } else if d == ')' || d == ']' || (d == '}' && depth > 0) {
                        depth = depth.saturating_sub(1);
                    } else if d == '}' {
                        break;
                    } else if d == ':' && depth == 0 && split.is_none() {
                        split = Some(j);
                    }
                    j += 1;
                }
                if j >= chars.len() {
                    return Err(bad("expecting '}'"));
                }
                let expr_end = split.unwrap_or(j);
                let mut expr_text: String = chars[i + 1..expr_end].iter().collect();
                for conv in ["!r", "!s", "!a"] {
                    if expr_text.trim_end().ends_with(conv) {
                        let t = expr_text.trim_end().len() - 2;
                        expr_text.truncate(t);
                    }
                }
                if expr_text.trim().is_empty() {
                    return Err(bad("valid expression required before '}'"));
                }
                let spec = split.map(|s| chars[s + 1..j].iter().collect::<String>());
                let toks = tokenize(&format!("({})", expr_text.trim()))
                    .map_err(|_| bad("invalid expression"))?;
                let mut sub = Parser {
                    toks,
                    pos: 0,
                    src: self.src,
                    globals: Vec::new(),
                };
                let expr = sub.test().map_err(|_| bad("invalid expression"))?;
                if !lit.is_empty() {
                    parts.push(FStrPart::Lit(std::mem::take(&mut lit)));
                }
                parts.push(FStrPart::Expr(expr, spec));
                i = j + 1;
            } else if c == '}' {
                if chars.get(i + 1) == Some(&'}') {
                    lit.push('}');
                    i += 2;
                    continue;
                }
                return Err(bad("single '}' is not allowed"));
            } else {
                lit.push(c);
                i += 1;
            }
        }
        if !lit.is_empty() {
            parts.push(FStrPart::Lit(lit));
        }
        Ok(parts)
    }
}
