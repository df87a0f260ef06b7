//! Boundary and initial data fields: a small closed-form expression grammar
//! plus gridded lookup tables with multilinear interpolation.
//!
//! Expression grammar (documented here, the single source of truth):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | name | name '(' expr ')' | '(' expr ')'
//! ```
//!
//! Names resolve to the constants `pi`, `e`, the coordinates of the active
//! mode (`x`, `z`, `t` in 2D; `r`, `theta`, `phi`, `t` in 3D), or one of the
//! functions `sin cos tan tanh exp sqrt abs log`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Var;
use crate::oracle::TaylorGreenParams;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Unary(Func, Box<Node>),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Tanh,
    Exp,
    Sqrt,
    Abs,
    Log,
}

impl Func {
    fn parse(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "tanh" => Func::Tanh,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "log" => Func::Log,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Tanh => v.tanh(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Log => v.ln(),
        }
    }
}

/// A parsed closed-form expression over named coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CompiledExpr {
    src: String,
    root: Node,
    /// Variable names in first-occurrence order; `Node::Var` indexes this.
    vars: Vec<String>,
}

impl TryFrom<String> for CompiledExpr {
    type Error = Error;
    fn try_from(src: String) -> Result<Self> {
        parse_expr(&src)
    }
}

impl From<CompiledExpr> for String {
    fn from(e: CompiledExpr) -> String {
        e.src
    }
}

pub fn parse_expr(src: &str) -> Result<CompiledExpr> {
    let mut p = Parser { src, pos: 0, vars: Vec::new() };
    let root = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(CompiledExpr { src: src.to_string(), root, vars: p.vars })
}

impl CompiledExpr {
    pub fn source(&self) -> &str {
        &self.src
    }

    /// Check that every variable is one of `allowed`.
    pub fn validate_vars(&self, allowed: &[&str]) -> Result<()> {
        for v in &self.vars {
            if !allowed.contains(&v.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "expression `{}` uses `{v}`; allowed: {allowed:?}",
                    self.src
                )));
            }
        }
        Ok(())
    }

    /// Evaluate with coordinates bound by name.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64> {
        let mut values = Vec::with_capacity(self.vars.len());
        for v in &self.vars {
            match bindings.iter().find(|(n, _)| n == v) {
                Some((_, val)) => values.push(*val),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "expression `{}`: unbound variable `{v}`",
                        self.src
                    )))
                }
            }
        }
        Ok(eval_node(&self.root, &values))
    }
}

fn eval_node(n: &Node, vars: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => vars[*i],
        Node::Neg(a) => -eval_node(a, vars),
        Node::Unary(f, a) => f.apply(eval_node(a, vars)),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval_node(a, vars), eval_node(b, vars));
            match op {
                Op::Add => x + y,
                Op::Sub => x - y,
                Op::Mul => x * y,
                Op::Div => x / y,
                Op::Pow => x.powf(y),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    vars: Vec<String>,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: &str) -> Error {
        Error::InvalidArgument(format!("expression `{}` at byte {}: {msg}", self.src, self.pos))
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(' ') {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Bin(Op::Add, Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Bin(Op::Sub, Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Bin(Op::Mul, Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Bin(Op::Div, Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == '_' => self.name(),
            _ => Err(self.error("expected a number, name, or `(`")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // scientific notation
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut probe = self.pos + 1;
            if probe < bytes.len() && (bytes[probe] == b'+' || bytes[probe] == b'-') {
                probe += 1;
            }
            if probe < bytes.len() && bytes[probe].is_ascii_digit() {
                self.pos = probe;
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error("malformed number"))
    }

    fn name(&mut self) -> Result<Node> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len()
            && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        match name {
            "pi" => return Ok(Node::Num(std::f64::consts::PI)),
            "e" => return Ok(Node::Num(std::f64::consts::E)),
            _ => {}
        }
        if self.eat('(') {
            let func = Func::parse(name).ok_or_else(|| self.error("unknown function"))?;
            let arg = self.expr()?;
            if !self.eat(')') {
                return Err(self.error("expected `)`"));
            }
            return Ok(Node::Unary(func, Box::new(arg)));
        }
        let idx = match self.vars.iter().position(|v| v == name) {
            Some(i) => i,
            None => {
                self.vars.push(name.to_string());
                self.vars.len() - 1
            }
        };
        Ok(Node::Var(idx))
    }
}

/// Gridded lookup table with multilinear interpolation, clamped at the edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    /// Strictly increasing sample coordinates per axis.
    pub axes: Vec<Vec<f64>>,
    /// Row-major values; length is the product of axis lengths.
    pub values: Vec<f64>,
}

impl GridTable {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 4 {
            return Err(Error::InvalidArgument("grid table needs 1 to 4 axes".into()));
        }
        let mut n = 1usize;
        for (i, axis) in self.axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::InvalidArgument(format!("grid axis {i} is empty")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!(
                    "grid axis {i} is not strictly increasing"
                )));
            }
            n *= axis.len();
        }
        if self.values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "grid has {} values, expected {n}",
                self.values.len()
            )));
        }
        Ok(())
    }

    pub fn interpolate(&self, coords: &[f64]) -> f64 {
        debug_assert_eq!(coords.len(), self.axes.len());
        let d = self.axes.len();
        // per-axis lower index and interpolation weight, clamped
        let mut idx = [0usize; 4];
        let mut frac = [0.0f64; 4];
        for (k, axis) in self.axes.iter().enumerate() {
            let c = coords[k];
            if axis.len() == 1 || c <= axis[0] {
                idx[k] = 0;
                frac[k] = 0.0;
            } else if c >= *axis.last().unwrap() {
                idx[k] = axis.len().saturating_sub(2);
                frac[k] = 1.0;
            } else {
                let i = axis.partition_point(|&a| a <= c) - 1;
                idx[k] = i;
                frac[k] = (c - axis[i]) / (axis[i + 1] - axis[i]);
            }
        }
        let strides = {
            let mut s = [1usize; 4];
            for k in (0..d.saturating_sub(1)).rev() {
                s[k] = s[k + 1] * self.axes[k + 1].len();
            }
            s
        };
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            let mut offset = 0usize;
            for k in 0..d {
                let hi = (corner >> k) & 1 == 1;
                let len = self.axes[k].len();
                let i = if hi { (idx[k] + 1).min(len - 1) } else { idx[k] };
                weight *= if hi { frac[k] } else { 1.0 - frac[k] };
                offset += i * strides[k];
            }
            if weight != 0.0 {
                acc += weight * self.values[offset];
            }
        }
        acc
    }
}

/// One boundary or initial data field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSource {
    Constant(f64),
    Expr(CompiledExpr),
    Grid {
        /// Coordinate names feeding the table axes, in axis order.
        coords: Vec<String>,
        table: GridTable,
    },
    /// The closed-form vortex solution; the natural data source for the
    /// simulation study's initial and boundary conditions.
    TaylorGreen { var: Var, params: TaylorGreenParams },
}

impl FieldSource {
    pub fn validate(&self, allowed: &[&str]) -> Result<()> {
        match self {
            FieldSource::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("non-finite constant field".into()));
                }
                Ok(())
            }
            FieldSource::Expr(e) => e.validate_vars(allowed),
            FieldSource::Grid { coords, table } => {
                table.validate()?;
                if coords.len() != table.axes.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} coordinate names for {} grid axes",
                        coords.len(),
                        table.axes.len()
                    )));
                }
                for c in coords {
                    if !allowed.contains(&c.as_str()) {
                        return Err(Error::InvalidArgument(format!(
                            "grid coordinate `{c}`; allowed: {allowed:?}"
                        )));
                    }
                }
                Ok(())
            }
            FieldSource::TaylorGreen { var, .. } => {
                if !Var::ORDER_2D.contains(var) {
                    return Err(Error::InvalidArgument(format!(
                        "taylor_green source for non-2D variable {var}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64> {
        match self {
            FieldSource::Constant(v) => Ok(*v),
            FieldSource::Expr(e) => e.eval(bindings),
            FieldSource::Grid { coords, table } => {
                let mut c = [0.0; 4];
                for (k, name) in coords.iter().enumerate() {
                    c[k] = bindings
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!("grid: unbound coordinate `{name}`"))
                        })?;
                }
                Ok(table.interpolate(&c[..coords.len()]))
            }
            FieldSource::TaylorGreen { var, params } => {
                let get = |name: &str| {
                    bindings
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "taylor_green source: missing coordinate `{name}`"
                            ))
                        })
                };
                let f = crate::oracle::exact(get("x")?, get("z")?, get("t")?, params);
                f.get(*var).ok_or_else(|| {
                    Error::InvalidArgument(format!("taylor_green source for {var}"))
                })
            }
        }
    }
}
