//! Scalar expressions over phase-space coordinates `q1..qn`, `p1..pn` and the
//! homotopy parameter `sigma`.
//!
//! Expressions are parsed from text (grammar in `docs/expression-grammar.md`),
//! printed back in a fully parenthesised canonical form, and evaluated over any
//! [`Scalar`], which is how exact gradients and Hessians are obtained.

mod parse;
pub mod scalar;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
pub use scalar::{seed, seed_prefix, Dual, Scalar};

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Which half of the phase vector `norm2(..)` squares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slice {
    Q,
    P,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
    Norm2(Slice),
}

/// Named sub-expressions that later sources may refer to as `NAME` or `NAME(x)`.
pub type Bindings = BTreeMap<String, Node>;

/// Parsed expression together with the half-dimension of its variable space.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    n: usize,
}

/// Variable layout: `q1..qn` are `0..n`, `p1..pn` are `n..2n`, `sigma` is `2n`.
pub fn var_name(index: usize, n: usize) -> String {
    if index < n {
        format!("q{}", index + 1)
    } else if index < 2 * n {
        format!("p{}", index - n + 1)
    } else {
        "sigma".to_string()
    }
}

pub fn var_index(name: &str, n: usize) -> Option<usize> {
    if name == "sigma" {
        return Some(2 * n);
    }
    let (head, tail) = name.split_at(1);
    let k: usize = tail.parse().ok()?;
    if k == 0 || k > n || tail.starts_with('0') {
        return None;
    }
    match head {
        "q" => Some(k - 1),
        "p" => Some(n + k - 1),
        _ => None,
    }
}

impl Expr {
    pub fn parse(source: &str, n: usize) -> Result<Self> {
        Self::parse_with(source, n, &Bindings::new())
    }

    pub fn parse_with(source: &str, n: usize, bindings: &Bindings) -> Result<Self> {
        let root = parse::Parser::new(source, n, bindings).parse()?;
        Ok(Expr { root, n })
    }

    pub fn constant(v: f64, n: usize) -> Self {
        Expr { root: Node::Num(v), n }
    }

    pub fn from_node(root: Node, n: usize) -> Self {
        Expr { root, n }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn half_dim(&self) -> usize {
        self.n
    }

    /// Number of variables a point must supply: `2n + 1`.
    pub fn arity(&self) -> usize {
        2 * self.n + 1
    }

    pub fn free_vars(&self) -> BTreeSet<usize> {
        fn walk(node: &Node, n: usize, out: &mut BTreeSet<usize>) {
            match node {
                Node::Num(_) => {}
                Node::Var(i) => {
                    out.insert(*i);
                }
                Node::Neg(a) | Node::Call(_, a) => walk(a, n, out),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(a, n, out);
                    walk(b, n, out);
                }
                Node::Norm2(Slice::Q) => out.extend(0..n),
                Node::Norm2(Slice::P) => out.extend(n..2 * n),
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.root, self.n, &mut out);
        out
    }

    pub fn free_var_names(&self) -> Vec<String> {
        self.free_vars().into_iter().map(|i| var_name(i, self.n)).collect()
    }

    /// True when the expression only reads configuration variables `q`.
    pub fn depends_only_on_q(&self) -> bool {
        self.free_vars().iter().all(|&i| i < self.n)
    }

    pub fn depends_on_sigma(&self) -> bool {
        self.free_vars().contains(&(2 * self.n))
    }

    /// Evaluate at a point; missing trailing variables (e.g. `sigma`) read as 0.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.eval_generic(point)
    }

    pub fn eval_generic<S: Scalar>(&self, point: &[S]) -> Result<S> {
        let v = eval_node(&self.root, point, self.n)?;
        if !v.value().is_finite() {
            return Err(Error::NonFinite(format!("expression `{self}` evaluated to {}", v.value())));
        }
        Ok(v)
    }

    /// Exact gradient with respect to the variables listed in `active`.
    pub fn grad(&self, point: &[f64], active: &[usize]) -> Result<Vec<f64>> {
        let lifted: Vec<Dual<f64>> = point
            .iter()
            .enumerate()
            .map(|(i, &v)| match active.iter().position(|&a| a == i) {
                Some(k) => Dual::variable(v, k, active.len()),
                None => Dual::constant_of(v),
            })
            .collect();
        let d = self.eval_generic(&lifted)?;
        let g: Vec<f64> = (0..active.len()).map(|k| d.partial(k)).collect();
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of `{self}`")));
        }
        Ok(g)
    }
}

fn read_var<S: Scalar>(point: &[S], i: usize) -> S {
    point.get(i).cloned().unwrap_or_else(S::zero)
}

fn eval_node<S: Scalar>(node: &Node, x: &[S], n: usize) -> Result<S> {
    Ok(match node {
        Node::Num(v) => S::constant(*v),
        Node::Var(i) => read_var(x, *i),
        Node::Neg(a) => -eval_node(a, x, n)?,
        Node::Add(a, b) => eval_node(a, x, n)? + eval_node(b, x, n)?,
        Node::Sub(a, b) => eval_node(a, x, n)? - eval_node(b, x, n)?,
        Node::Mul(a, b) => eval_node(a, x, n)? * eval_node(b, x, n)?,
        Node::Div(a, b) => {
            let den = eval_node(b, x, n)?;
            if den.value() == 0.0 {
                return Err(Error::Domain { op: "division", arg: 0.0 });
            }
            eval_node(a, x, n)? / den
        }
        Node::Pow(a, b) => {
            let base = eval_node(a, x, n)?;
            match b.as_ref() {
                Node::Num(k) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => {
                    if *k < 0.0 && base.value() == 0.0 {
                        return Err(Error::Domain { op: "negative power", arg: 0.0 });
                    }
                    base.powi(*k as i32)
                }
                Node::Num(k) => {
                    if base.value() < 0.0 || (base.value() == 0.0 && *k < 1.0) {
                        return Err(Error::Domain { op: "fractional power", arg: base.value() });
                    }
                    base.powf(*k)
                }
                _ => {
                    if base.value() <= 0.0 {
                        return Err(Error::Domain { op: "variable power", arg: base.value() });
                    }
                    (eval_node(b, x, n)? * base.ln()).exp()
                }
            }
        }
        Node::Call(f, a) => {
            let v = eval_node(a, x, n)?;
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Tan => {
                    let c = v.cos();
                    if c.value() == 0.0 {
                        return Err(Error::Domain { op: "tan", arg: v.value() });
                    }
                    v.sin() / c
                }
                Func::Exp => v.exp(),
                Func::Log => {
                    if v.value() <= 0.0 {
                        return Err(Error::Domain { op: "log", arg: v.value() });
                    }
                    v.ln()
                }
                Func::Sqrt => {
                    if v.value() < 0.0 {
                        return Err(Error::Domain { op: "sqrt", arg: v.value() });
                    }
                    v.sqrt()
                }
            }
        }
        Node::Norm2(slice) => {
            let range = match slice {
                Slice::Q => 0..n,
                Slice::P => n..2 * n,
            };
            let mut acc = S::zero();
            for i in range {
                let v = read_var(x, i);
                acc = acc + v.clone() * v;
            }
            acc
        }
    })
}

struct Printer<'a> {
    node: &'a Node,
    n: usize,
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |node| Printer { node, n: self.n };
        match self.node {
            Node::Num(v) if v.is_sign_negative() => write!(f, "({v})"),
            Node::Num(v) => write!(f, "{v}"),
            Node::Var(i) => write!(f, "{}", var_name(*i, self.n)),
            Node::Neg(a) => write!(f, "(-{})", sub(a)),
            Node::Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Node::Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Node::Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Node::Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Node::Pow(a, b) => write!(f, "({} ^ {})", sub(a), sub(b)),
            Node::Call(func, a) => write!(f, "{}({})", func.name(), sub(a)),
            Node::Norm2(Slice::Q) => write!(f, "norm2(q)"),
            Node::Norm2(Slice::P) => write!(f, "norm2(p)"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer { node: &self.root, n: self.n }.fmt(f)
    }
}
