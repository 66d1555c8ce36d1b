//! Tokenizer with Python-style indentation tracking.

use crate::error::Exception;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// Raw body of an f-string literal, parsed later by the parser.
    FStr(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
}

const OPS: &[&str] = &[
    "**=", "//=", "->", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "+", "-",
    "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "@", "&", "|",
    "^", "~",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, Exception> {
    Lexer::new(src).run()
}

struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    depth: usize,
    open_stack: Vec<(char, usize)>,
    indents: Vec<usize>,
    out: Vec<Token>,
    src: &'a str,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            chars: src.chars().collect(),
            pos: 0,
            line: 1,
            depth: 0,
            open_stack: Vec::new(),
            indents: vec![0],
            out: Vec::new(),
            src,
        }
    }

    fn err(&self, msg: impl Into<String>, line: usize) -> Exception {
        Exception::syntax("SyntaxError", msg, line, self.src)
    }

    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn push(&mut self, tok: Tok, line: usize) {
        self.out.push(Token { tok, line });
    }

    fn run(mut self) -> Result<Vec<Token>, Exception> {
        let mut at_line_start = true;
        while self.pos < self.chars.len() {
            if at_line_start && self.depth == 0 {
                if self.handle_indent()? {
                    continue;
                }
                at_line_start = false;
            }
            let c = self.chars[self.pos];
            match c {
                '\n' => {
                    self.pos += 1;
                    if self.depth == 0 {
                        self.push(Tok::Newline, self.line);
                        at_line_start = true;
                    }
                    self.line += 1;
                }
                ' ' | '\t' | '\r' | '\x0c' => self.pos += 1,
                '#' => {
                    while self.pos < self.chars.len() && self.chars[self.pos] != '\n' {
                        self.pos += 1;
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.pos += 2;
                    self.line += 1;
                }
                '\\' if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') => {
                    self.pos += 3;
                    self.line += 1;
                }
                c if c.is_ascii_digit()
                    || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) =>
                {
                    self.number()?
                }
                c if c == '_' || c.is_alphabetic() => self.name_or_string()?,
                '"' | '\'' => {
                    let line = self.line;
                    let s = self.string_body(false)?;
                    self.push(Tok::Str(s), line);
                }
                _ => self.op()?,
            }
        }
        if let Some(&(open, line)) = self.open_stack.last() {
            return Err(self.err(format!("'{open}' was never closed"), line));
        }
        let line = self.line;
        if !matches!(self.out.last().map(|t| &t.tok), Some(Tok::Newline) | None) {
            self.push(Tok::Newline, line);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, line);
        }
        self.push(Tok::Eof, line);
        Ok(self.out)
    }

    /// Returns true when the line was blank or comment-only and has been consumed.
    fn handle_indent(&mut self) -> Result<bool, Exception> {
        let mut width = 0usize;
        let mut p = self.pos;
        while p < self.chars.len() {
            match self.chars[p] {
                ' ' => width += 1,
                '\t' => width = (width / 8 + 1) * 8,
                '\x0c' => width = 0,
                _ => break,
            }
            p += 1;
        }
        match self.chars.get(p) {
            None => {
                self.pos = p;
                return Ok(true);
            }
            Some('\n') => {
                self.pos = p + 1;
                self.line += 1;
                return Ok(true);
            }
            Some('\r') if self.chars.get(p + 1) == Some(&'\n') => {
                self.pos = p + 2;
                self.line += 1;
                return Ok(true);
            }
            Some('#') => {
                while p < self.chars.len() && self.chars[p] != '\n' {
                    p += 1;
                }
                self.pos = p;
                if p < self.chars.len() {
                    self.pos += 1;
                    self.line += 1;
                }
                return Ok(true);
            }
            _ => {}
        }
        self.pos = p;
        let current = *self.indents.last().unwrap();
        if width > current {
            if self.out.is_empty() {
                return Err(Exception::syntax(
                    "IndentationError",
                    "unexpected indent",
                    self.line,
                    self.src,
                ));
            }
            self.indents.push(width);
            self.push(Tok::Indent, self.line);
        } else if width < current {
            while width < *self.indents.last().unwrap() {
                self.indents.pop();
                self.push(Tok::Dedent, self.line);
            }
            if width != *self.indents.last().unwrap() {
                return Err(Exception::syntax(
                    "IndentationError",
                    "unindent does not match any outer indentation level",
                    self.line,
                    self.src,
                ));
            }
        }
        Ok(false)
    }

    fn number(&mut self) -> Result<(), Exception> {
        let start = self.pos;
        let line = self.line;
        let mut is_float = false;
        if self.chars[self.pos] == '0' && matches!(self.peek(1), Some('x' | 'X')) {
            self.pos += 2;
            let s = self.pos;
            while self
                .peek(0)
                .is_some_and(|c| c.is_ascii_hexdigit() || c == '_')
            {
                self.pos += 1;
            }
            let digits: String = self.chars[s..self.pos]
                .iter()
                .filter(|c| **c != '_')
                .collect();
            let v = i64::from_str_radix(&digits, 16)
                .map_err(|_| self.err("invalid hexadecimal literal", line))?;
            self.push(Tok::Int(v), line);
            return Ok(());
        }
        while let Some(c) = self.peek(0) {
            if c.is_ascii_digit() || c == '_' {
                self.pos += 1;
            } else if c == '.' && !is_float {
                is_float = true;
                self.pos += 1;
            } else if c == 'e' || c == 'E' {
                let next = self.peek(1);
                let ok = next.is_some_and(|d| d.is_ascii_digit())
                    || (matches!(next, Some('+' | '-'))
                        && self.peek(2).is_some_and(|d| d.is_ascii_digit()));
                if !ok {
                    break;
                }
                is_float = true;
                self.pos += 2;
            } else {
                break;
            }
        }
        if self.peek(0).is_some_and(|c| c.is_alphabetic() || c == '_') {
            return Err(self.err("invalid decimal literal", line));
        }
        let text: String = self.chars[start..self.pos]
            .iter()
            .filter(|c| **c != '_')
            .collect();
        if is_float {
            let v: f64 = text
                .parse()
                .map_err(|_| self.err("invalid decimal literal", line))?;
            self.push(Tok::Float(v), line);
        } else {
            match text.parse::<i64>() {
                Ok(v) => self.push(Tok::Int(v), line),
                Err(_) => {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| self.err("invalid decimal literal", line))?;
                    self.push(Tok::Float(v), line);
                }
            }
        }
        Ok(())
    }

    fn name_or_string(&mut self) -> Result<(), Exception> {
        let start = self.pos;
        let line = self.line;
        while self
            .peek(0)
            .is_some_and(|c| c == '_' || c.is_alphanumeric())
        {
            self.pos += 1;
        }
        let name: String = self.chars[start..self.pos].iter().collect();
        if matches!(self.peek(0), Some('"' | '\'')) {
            let lower = name.to_ascii_lowercase();
            match lower.as_str() {
                "r" => {
                    let s = self.string_body(true)?;
                    self.push(Tok::Str(s), line);
                    return Ok(());
                }
                "f" | "rf" | "fr" => {
                    let s = self.string_body(lower.contains('r'))?;
                    self.push(Tok::FStr(s), line);
                    return Ok(());
                }
                "u" => {
                    let s = self.string_body(false)?;
                    self.push(Tok::Str(s), line);
                    return Ok(());
                }
                "b" | "rb" | "br" => {
                    return Err(self.err("bytes literals are not supported", line));
                }
                _ => {}
            }
        }
        self.push(Tok::Name(name), line);
        Ok(())
    }

    fn string_body(&mut self, raw: bool) -> Result<String, Exception> {
        let line = self.line;
        let quote = self.chars[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        self.pos += if triple { 3 } else { 1 };
        let mut out = String::new();
        loop {
            let Some(c) = self.peek(0) else {
                return Err(if triple {
                    self.err(
                        format!(
                            "unterminated triple-quoted string literal (detected at line {})",
                            self.line
                        ),
                        line,
                    )
                } else {
                    self.err(
                        format!("unterminated string literal (detected at line {line})"),
                        line,
                    )
                });
            };
            if c == quote {
                if !triple {
                    self.pos += 1;
                    break;
                }
                if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                    self.pos += 3;
                    break;
                }
                out.push(c);
                self.pos += 1;
                continue;
            }
            if c == '\n' {
                if !triple {
                    return Err(self.err(
                        format!("unterminated string literal (detected at line {line})"),
                        line,
                    ));
                }
                self.line += 1;
                out.push(c);
                self.pos += 1;
                continue;
            }
            if c == '\\' {
                let Some(n) = self.peek(1) else {
                    self.pos += 1;
                    continue;
                };
                if raw {
                    out.push('\\');
                    out.push(n);
                    if n == '\n' {
                        self.line += 1;
                    }
                    self.pos += 2;
                    continue;
                }
                self.pos += 2;
                match n {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '0' => out.push('\0'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    '\n' => self.line += 1,
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
                continue;
            }
            out.push(c);
            self.pos += 1;
        }
        Ok(out)
    }

    fn op(&mut self) -> Result<(), Exception> {
        let line = self.line;
        for op in OPS {
            let n = op.chars().count();
            if self.pos + n <= self.chars.len()
                && self.chars[self.pos..self.pos + n]
                    .iter()
                    .copied()
                    .eq(op.chars())
            {
                self.pos += n;
                match *op {
                    "(" | "[" | "{" => {
                        self.depth += 1;
                        self.open_stack.push((op.chars().next().unwrap(), line));
                    }
                    ")" | "]" | "}" => {
                        let close = op.chars().next().unwrap();
                        match self.open_stack.pop() {
                            None => return Err(self.err(format!("unmatched '{close}'"), line)),
                            Some((open, _)) => {
                                let expected = match open {
                                    '(' => ')',
                                    '[' => ']',
                                    _ => '}',
                                };
                                if expected != close {
                                    return Err(self.err(
                                        format!("closing parenthesis '{close}' does not match opening parenthesis '{open}'"),
                                        line,
                                    ));
                                }
                            }
                        }
                        self.depth = self.depth.saturating_sub(1);
                    }
                    _ => {}
                }
                self.push(Tok::Op(op), line);
                return Ok(());
            }
        }
        let c = self.chars[self.pos];
        Err(self.err(
            format!("invalid character '{c}' (U+{:04X})", c as u32),
            line,
        ))
    }
}
