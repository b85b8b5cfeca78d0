//! A small closed-form expression language for kernels and test functions.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | 'pi' | variable | call | '(' expr ')'
//! call    := ('sin' | 'cos' | 'exp' | 'abs') '(' expr ')'
//!          | ('min' | 'max') '(' expr ',' expr ')'
//!          | 'ind' '(' expr '<=' expr ')'
//! ```
//!
//! `ind(a <= b)` is 1 when `a <= b` and 0 otherwise. Variables are resolved
//! against a caller-supplied list of names when the expression is parsed.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression `{source_text}`: {message} (at byte {position})")]
pub struct ExprError {
    pub source_text: String,
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func1 {
    Sin,
    Cos,
    Exp,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Call(Func1, Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Ind(Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Call(f, a) => {
                let x = a.eval(vars);
                match f {
                    Func1::Sin => x.sin(),
                    Func1::Cos => x.cos(),
                    Func1::Exp => x.exp(),
                    Func1::Abs => x.abs(),
                }
            }
            Node::Bin(op, a, b) => {
                let (x, y) = (a.eval(vars), b.eval(vars));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Min => x.min(y),
                    BinOp::Max => x.max(y),
                }
            }
            Node::Ind(a, b) => {
                if a.eval(vars) <= b.eval(vars) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Neg(a) | Node::Call(_, a) => a.is_constant(),
            Node::Bin(_, a, b) | Node::Ind(a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// A parsed expression with variables bound to argument slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    source: String,
    vars: Vec<String>,
    root: Node,
}

impl Expr {
    /// Parse `source`, binding each name in `vars` to the slot of the same
    /// index in the argument slice passed to [`Expr::eval`].
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source,
            bytes: source.as_bytes(),
            pos: 0,
            vars,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            vars: vars.iter().map(|s| s.to_string()).collect(),
            root,
        })
    }

    /// Evaluate with `args[i]` bound to the i-th variable name.
    ///
    /// # Panics
    ///
    /// If `args` is shorter than the variable list.
    pub fn eval(&self, args: &[f64]) -> f64 {
        assert!(
            args.len() >= self.vars.len(),
            "expression `{}` needs {} arguments, got {}",
            self.source,
            self.vars.len(),
            args.len()
        );
        self.root.eval(args)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn variables(&self) -> &[String] {
        &self.vars
    }

    /// True when the expression does not reference any variable.
    pub fn is_constant(&self) -> bool {
        self.root.is_constant()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    vars: &'a [&'a str],
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError {
            source_text: self.src.to_string(),
            position: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>().map(Node::Const).map_err(|_| {
            self.pos = start;
            self.error(format!("invalid number `{text}`"))
        })
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func1 = match name {
            "sin" => Some(Func1::Sin),
            "cos" => Some(Func1::Cos),
            "exp" => Some(Func1::Exp),
            "abs" => Some(Func1::Abs),
            _ => None,
        };
        if let Some(f) = func1 {
            self.expect(b'(')?;
            let a = self.expr()?;
            self.expect(b')')?;
            return Ok(Node::Call(f, Box::new(a)));
        }
        match name {
            "min" | "max" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b',')?;
                let b = self.expr()?;
                self.expect(b')')?;
                let op = if name == "min" { BinOp::Min } else { BinOp::Max };
                Ok(Node::Bin(op, Box::new(a), Box::new(b)))
            }
            "ind" => {
                self.expect(b'(')?;
                let a = self.expr()?;
                self.expect(b'<')?;
                if self.bytes.get(self.pos) != Some(&b'=') {
                    return Err(self.error("expected `<=` inside ind(..)"));
                }
                self.pos += 1;
                let b = self.expr()?;
                self.expect(b')')?;
                Ok(Node::Ind(Box::new(a), Box::new(b)))
            }
            "pi" => Ok(Node::Const(std::f64::consts::PI)),
            _ => match self.vars.iter().position(|v| *v == name) {
                Some(i) => Ok(Node::Var(i)),
                None => {
                    self.pos = start;
                    Err(self.error(format!("unknown identifier `{name}`")))
                }
            },
        }
    }
}
