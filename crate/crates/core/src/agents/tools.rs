//! Tools an agent can list in its profile. Only the calculator is live; the
//! rest are named stubs.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalcError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("division by zero")]
    DivisionByZero,
    #[error("result is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolKind {
    Calculator,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    pub name: &'static str,
    pub description: &'static str,
    pub kind: ToolKind,
}

pub const TOOL_UNAVAILABLE: &str = "tool unavailable in this deployment";

pub const TOOLS: [ToolSpec; 3] = [
    ToolSpec {
        name: "calculator",
        description: "Computes an arithmetic expression (+ - * / and parentheses) and returns the number.",
        kind: ToolKind::Calculator,
    },
    ToolSpec {
        name: "python",
        description: "Runs a Python script and returns what it prints.",
        kind: ToolKind::Stub,
    },
    ToolSpec {
        name: "search",
        description: "Looks a topic up in a reference corpus and returns matching passages.",
        kind: ToolKind::Stub,
    },
];

pub fn find_tool(name: &str) -> Option<&'static ToolSpec> {
    TOOLS.iter().find(|t| t.name == name)
}

impl ToolSpec {
    pub fn invoke(&self, input: &str) -> String {
        match self.kind {
            ToolKind::Calculator => calculator_tool(input).unwrap_or_else(|e| format!("error: {e}")),
            ToolKind::Stub => TOOL_UNAVAILABLE.to_owned(),
        }
    }
}

/// Evaluates infix arithmetic and renders the result. Integral results print
/// without a fractional part.
pub fn calculator_tool(expression: &str) -> Result<String, CalcError> {
    let value = evaluate(expression)?;
    Ok(render_number(value))
}

pub fn evaluate(expression: &str) -> Result<f64, CalcError> {
    let mut parser = Parser {
        chars: expression.char_indices().collect(),
        pos: 0,
        len: expression.len(),
    };
    let value = parser.expr()?;
    parser.skip_ws();
    if let Some(&(offset, c)) = parser.chars.get(parser.pos) {
        return Err(CalcError::Parse {
            offset,
            message: format!("unexpected '{c}'"),
        });
    }
    if !value.is_finite() {
        return Err(CalcError::NonFinite);
    }
    Ok(value)
}

pub fn render_number(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|(_, c)| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.len, |&(o, _)| o)
    }

    fn error(&self, message: impl Into<String>) -> CalcError {
        CalcError::Parse {
            offset: self.offset(),
            message: message.into(),
        }
    }

    // expr := term (('+' | '-') term)*
    fn expr(&mut self) -> Result<f64, CalcError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some('-' | '−') => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    // term := unary (('*' | '/') unary)*
    fn term(&mut self) -> Result<f64, CalcError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some('*' | '×') => {
                    self.pos += 1;
                    acc *= self.unary()?;
                }
                Some('/' | '÷') => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    if rhs == 0.0 {
                        return Err(CalcError::DivisionByZero);
                    }
                    acc /= rhs;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<f64, CalcError> {
        match self.peek() {
            Some('-' | '−') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<f64, CalcError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<f64, CalcError> {
        let start = self.pos;
        let mut text = String::new();
        while let Some(&(_, c)) = self.chars.get(self.pos) {
            if c.is_ascii_digit() || c == '.' {
                text.push(c);
                self.pos += 1;
            } else {
                break;
            }
        }
        text.parse::<f64>().map_err(|_| CalcError::Parse {
            offset: self.chars[start].0,
            message: format!("bad number '{text}'"),
        })
    }
}
