//! A small arithmetic expression language for field components.
//!
//! Expressions are written over named variables (chart coordinates, sample
//! variables, declared parameters) with the operators `+ - * / ^`, unary
//! minus, parentheses, numeric literals, the constant `pi`, and the functions
//! `exp`, `log`, `sin`, `cos`, `sqrt`, `tanh`, `abs`.
//!
//! Parsing resolves variable names to slice indices once; evaluation is a
//! stack machine over `&[f64]` with no allocation, so it is cheap enough to
//! sit inside finite-difference stencils and quadrature loops.

use crate::error::{Error, Result};
use std::fmt;

const MAX_STACK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Instr {
    Const(f64),
    Var(u16),
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Pow,
    /// Integer exponent fast path (`x^3` and friends).
    PowI(i32),
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Tanh,
    Abs,
}

/// A parsed, compiled expression over a fixed ordered variable list.
#[derive(Debug, Clone)]
pub struct Program {
    source: String,
    vars: Vec<String>,
    code: Vec<Instr>,
    max_depth: usize,
}

impl Program {
    /// Parse `source` against the ordered variable names `vars`.
    pub fn parse(source: &str, vars: &[&str]) -> Result<Program> {
        let tokens = lex(source)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            vars,
            code: Vec::new(),
        };
        parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Parse {
                pos: parser.tokens[parser.pos].1,
                msg: format!("unexpected trailing input `{}`", parser.tokens[parser.pos].0),
            });
        }
        let code = parser.code;
        let max_depth = stack_depth(&code);
        if max_depth > MAX_STACK {
            return Err(Error::Parse {
                pos: 0,
                msg: format!("expression too deep (stack {max_depth})"),
            });
        }
        Ok(Program {
            source: source.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            code,
            max_depth,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Peak operand-stack depth needed by `eval`.
    pub fn stack_depth(&self) -> usize {
        self.max_depth
    }

    /// Evaluate at `vals`, which must match the declared variable order.
    /// Domain violations surface as NaN/inf in the result; callers that
    /// need hard errors check finiteness at their boundary.
    pub fn eval(&self, vals: &[f64]) -> f64 {
        debug_assert_eq!(vals.len(), self.vars.len());
        let mut stack = [0.0f64; MAX_STACK];
        let mut top = 0usize;
        for instr in &self.code {
            match *instr {
                Instr::Const(c) => {
                    stack[top] = c;
                    top += 1;
                }
                Instr::Var(i) => {
                    stack[top] = vals[i as usize];
                    top += 1;
                }
                Instr::Add => {
                    top -= 1;
                    stack[top - 1] += stack[top];
                }
                Instr::Sub => {
                    top -= 1;
                    stack[top - 1] -= stack[top];
                }
                Instr::Mul => {
                    top -= 1;
                    stack[top - 1] *= stack[top];
                }
                Instr::Div => {
                    top -= 1;
                    stack[top - 1] /= stack[top];
                }
                Instr::Neg => stack[top - 1] = -stack[top - 1],
                Instr::Pow => {
                    top -= 1;
                    stack[top - 1] = stack[top - 1].powf(stack[top]);
                }
                Instr::PowI(k) => stack[top - 1] = stack[top - 1].powi(k),
                Instr::Exp => stack[top - 1] = stack[top - 1].exp(),
                Instr::Log => stack[top - 1] = stack[top - 1].ln(),
                Instr::Sin => stack[top - 1] = stack[top - 1].sin(),
                Instr::Cos => stack[top - 1] = stack[top - 1].cos(),
                Instr::Sqrt => stack[top - 1] = stack[top - 1].sqrt(),
                Instr::Tanh => stack[top - 1] = stack[top - 1].tanh(),
                Instr::Abs => stack[top - 1] = stack[top - 1].abs(),
            }
        }
        debug_assert_eq!(top, 1);
        stack[0]
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)
    }
}

fn stack_depth(code: &[Instr]) -> usize {
    let mut depth = 0usize;
    let mut max = 0usize;
    for instr in code {
        match instr {
            Instr::Const(_) | Instr::Var(_) => {
                depth += 1;
                max = max.max(depth);
            }
            Instr::Add | Instr::Sub | Instr::Mul | Instr::Div | Instr::Pow => depth -= 1,
            _ => {}
        }
    }
    max
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::Slash => write!(f, "/"),
            Tok::Caret => write!(f, "^"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push((Tok::Plus, i));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, i));
                i += 1;
            }
            '*' => {
                out.push((Tok::Star, i));
                i += 1;
            }
            '/' => {
                out.push((Tok::Slash, i));
                i += 1;
            }
            '^' => {
                out.push((Tok::Caret, i));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, i));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // scientific notation
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    pos: start,
                    msg: format!("bad numeric literal `{text}`"),
                })?;
                out.push((Tok::Num(v), start));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '0'..='9' | '_')
                {
                    i += 1;
                }
                out.push((Tok::Ident(src[start..i].to_string()), start));
            }
            other => {
                return Err(Error::Parse {
                    pos: i,
                    msg: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [&'a str],
    code: Vec<Instr>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|(_, p)| *p)
            .unwrap_or(0)
    }

    fn expr(&mut self) -> Result<()> {
        self.term()?;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Plus => {
                    self.bump();
                    self.term()?;
                    self.code.push(Instr::Add);
                }
                Tok::Minus => {
                    self.bump();
                    self.term()?;
                    self.code.push(Instr::Sub);
                }
                _ => break,
            }
        }
        Ok(())
    }

    fn term(&mut self) -> Result<()> {
        self.unary()?;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Star => {
                    self.bump();
                    self.unary()?;
                    self.code.push(Instr::Mul);
                }
                Tok::Slash => {
                    self.bump();
                    self.unary()?;
                    self.code.push(Instr::Div);
                }
                _ => break,
            }
        }
        Ok(())
    }

    fn unary(&mut self) -> Result<()> {
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            self.unary()?;
            self.code.push(Instr::Neg);
            return Ok(());
        }
        self.power()
    }

    fn power(&mut self) -> Result<()> {
        self.atom()?;
        if matches!(self.peek(), Some(Tok::Caret)) {
            self.bump();
            // right associative; `-` in the exponent is allowed
            self.unary()?;
            // integer exponent fast path
            if let Some(Instr::Const(c)) = self.code.last().copied() {
                if c.fract() == 0.0 && c.abs() <= i32::MAX as f64 {
                    self.code.pop();
                    self.code.push(Instr::PowI(c as i32));
                    return Ok(());
                }
            }
            self.code.push(Instr::Pow);
        }
        Ok(())
    }

    fn atom(&mut self) -> Result<()> {
        let pos = self.here();
        match self.bump() {
            Some(Tok::Num(v)) => {
                self.code.push(Instr::Const(v));
                Ok(())
            }
            Some(Tok::LParen) => {
                self.expr()?;
                match self.bump() {
                    Some(Tok::RParen) => Ok(()),
                    _ => Err(Error::Parse {
                        pos: self.here(),
                        msg: "expected `)`".into(),
                    }),
                }
            }
            Some(Tok::Ident(name)) => {
                if matches!(self.peek(), Some(Tok::LParen)) {
                    let f = match name.as_str() {
                        "exp" => Instr::Exp,
                        "log" => Instr::Log,
                        "sin" => Instr::Sin,
                        "cos" => Instr::Cos,
                        "sqrt" => Instr::Sqrt,
                        "tanh" => Instr::Tanh,
                        "abs" => Instr::Abs,
                        other => {
                            return Err(Error::Parse {
                                pos,
                                msg: format!("unknown function `{other}`"),
                            })
                        }
                    };
                    self.bump(); // (
                    self.expr()?;
                    match self.bump() {
                        Some(Tok::RParen) => {
                            self.code.push(f);
                            Ok(())
                        }
                        _ => Err(Error::Parse {
                            pos: self.here(),
                            msg: format!("expected `)` closing `{name}(`"),
                        }),
                    }
                } else if name == "pi" {
                    self.code.push(Instr::Const(std::f64::consts::PI));
                    Ok(())
                } else if let Some(idx) = self.vars.iter().position(|v| *v == name) {
                    self.code.push(Instr::Var(idx as u16));
                    Ok(())
                } else {
                    Err(Error::Parse {
                        pos,
                        msg: format!("unknown variable `{name}` (known: {})", self.vars.join(", ")),
                    })
                }
            }
            Some(other) => Err(Error::Parse {
                pos,
                msg: format!("unexpected token `{other}`"),
            }),
            None => Err(Error::Parse {
                pos,
                msg: "unexpected end of expression".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval1(src: &str, x: f64) -> f64 {
        Program::parse(src, &["x"]).unwrap().eval(&[x])
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval1("1+2*3", 0.0), 7.0);
        assert_eq!(eval1("(1+2)*3", 0.0), 9.0);
        assert_eq!(eval1("2^3^2", 0.0), 512.0);
        assert_eq!(eval1("-x^2", 3.0), -9.0);
        assert_eq!(eval1("4/2/2", 0.0), 1.0);
        assert_eq!(eval1("x^-2", 2.0), 0.25);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval1("exp(log(x))", 2.5) - 2.5).abs() < 1e-15);
        assert!((eval1("sin(x)^2 + cos(x)^2", 0.7) - 1.0).abs() < 1e-15);
        assert!((eval1("sqrt(x^2)", -3.0) - 3.0).abs() < 1e-15);
        assert!((eval1("tanh(x)", 0.0)).abs() < 1e-15);
        assert!((eval1("abs(-x)", 2.0) - 2.0).abs() < 1e-15);
        let p = Program::parse("2*pi", &[]).unwrap();
        assert!((p.eval(&[]) - std::f64::consts::TAU).abs() < 1e-15);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(eval1("1e-3 + x", 0.0), 1e-3);
        assert_eq!(eval1("2.5E2", 0.0), 250.0);
    }

    #[test]
    fn multiple_variables_resolve_by_position() {
        let p = Program::parse("u*v - v", &["u", "v"]).unwrap();
        assert_eq!(p.eval(&[3.0, 2.0]), 4.0);
        assert_eq!(p.arity(), 2);
    }

    #[test]
    fn domain_violations_yield_non_finite() {
        assert!(eval1("log(x)", -1.0).is_nan());
        assert!(eval1("1/x", 0.0).is_infinite());
        assert!(eval1("sqrt(x)", -1.0).is_nan());
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = Program::parse("u + w", &["u"]).unwrap_err();
        match err {
            Error::Parse { pos, msg } => {
                assert_eq!(pos, 4);
                assert!(msg.contains("unknown variable"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Program::parse("sin(u", &["u"]).is_err());
        assert!(Program::parse("u +", &["u"]).is_err());
        assert!(Program::parse("u ? 1", &["u"]).is_err());
        assert!(Program::parse("foo(u)", &["u"]).is_err());
    }
}
