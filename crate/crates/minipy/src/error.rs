use std::fmt;

/// Name reported for code that runs at module level.
pub const MODULE_SCOPE: &str = "<module>";
/// File name reported in frames.
pub const SOURCE_NAME: &str = "<generated>";

/// Location of the innermost frame that was executing when an exception was raised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    /// Function name, or `None` for syntax errors which have no executing scope.
    pub function: Option<String>,
    pub line: usize,
    /// Source line, stripped of surrounding whitespace.
    pub text: String,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.function {
            Some(func) => write!(f, "File \"{SOURCE_NAME}\", line {}, in {func}", self.line)?,
            None => write!(f, "File \"{SOURCE_NAME}\", line {}", self.line)?,
        }
        if !self.text.is_empty() {
            write!(f, "\n    {}", self.text)?;
        }
        Ok(())
    }
}

/// A raised exception. Only the innermost frame is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Exception {
    pub etype: String,
    pub message: String,
    pub frame: Option<Frame>,
    /// Set when the execution deadline elapsed. Timeouts cannot be caught by `try`.
    pub timeout: bool,
}

impl Exception {
    pub fn new(etype: impl Into<String>, message: impl Into<String>) -> Self {
        Exception {
            etype: etype.into(),
            message: message.into(),
            frame: None,
            timeout: false,
        }
    }

    pub(crate) fn syntax(etype: &str, message: impl Into<String>, line: usize, src: &str) -> Self {
        let text = src
            .lines()
            .nth(line.saturating_sub(1))
            .unwrap_or("")
            .trim()
            .to_string();
        Exception {
            etype: etype.to_string(),
            message: message.into(),
            frame: Some(Frame {
                function: None,
                line,
                text,
            }),
            timeout: false,
        }
    }

    pub(crate) fn timeout() -> Self {
        Exception {
            timeout: true,
            ..Exception::new("TimeoutError", "execution deadline exceeded")
        }
    }

    pub fn is_syntax_error(&self) -> bool {
        matches!(
            self.etype.as_str(),
            "SyntaxError" | "IndentationError" | "TabError"
        )
    }

    pub(crate) fn at(mut self, function: &str, line: usize, lines: &[String]) -> Self {
        if self.frame.is_none() {
            let text = lines
                .get(line.saturating_sub(1))
                .map(|l| l.trim().to_string())
                .unwrap_or_default();
            self.frame = Some(Frame {
                function: Some(function.to_string()),
                line,
                text,
            });
        }
        self
    }
}

impl fmt::Display for Exception {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.message.is_empty() {
            write!(f, "{}", self.etype)
        } else {
            write!(f, "{}: {}", self.etype, self.message)
        }
    }
}

impl std::error::Error for Exception {}

pub(crate) fn type_error(msg: impl Into<String>) -> Exception {
    Exception::new("TypeError", msg)
}

pub(crate) fn value_error(msg: impl Into<String>) -> Exception {
    Exception::new("ValueError", msg)
}

/// Parent class in the builtin exception hierarchy, used by `except` matching.
pub(crate) fn parent_class(name: &str) -> Option<&'static str> {
    Some(match name {
        "BaseException" => return None,
        "Exception" => "BaseException",
        "ZeroDivisionError" | "OverflowError" | "FloatingPointError" => "ArithmeticError",
        "IndexError" | "KeyError" => "LookupError",
        "UnboundLocalError" => "NameError",
        "ModuleNotFoundError" => "ImportError",
        "RecursionError" | "NotImplementedError" => "RuntimeError",
        "IndentationError" => "SyntaxError",
        "TabError" => "IndentationError",
        "TimeoutError" => "OSError",
        _ => "Exception",
    })
}

pub(crate) fn is_subclass(name: &str, of: &str) -> bool {
    let mut cur = Some(name);
    while let Some(c) = cur {
        if c == of {
            return true;
        }
        cur = parent_class(c);
    }
    false
}

pub(crate) const EXCEPTION_NAMES: &[&str] = &[
    "BaseException",
    "Exception",
    "ArithmeticError",
    "ZeroDivisionError",
    "OverflowError",
    "LookupError",
    "IndexError",
    "KeyError",
    "NameError",
    "UnboundLocalError",
    "ImportError",
    "ModuleNotFoundError",
    "RuntimeError",
    "RecursionError",
    "NotImplementedError",
    "TypeError",
    "ValueError",
    "AssertionError",
    "AttributeError",
    "StopIteration",
    "OSError",
    "TimeoutError",
];
