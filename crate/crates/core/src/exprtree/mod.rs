//! Expression trees: the shared representation for candidate and ground-truth
//! equations.
//!
//! Trees are immutable once built. Evaluation uses protected operator
//! semantics so that every candidate produces a finite number; candidates that
//! still blow up are flagged as degenerate instead of returning NaN or ±∞.

mod parser;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parser::{parse, parse_with_cap, ParseError};
pub use render::{format_number, render};

/// Default cap on tree height (a leaf has height 0).
pub const DEFAULT_DEPTH_CAP: usize = 8;

/// Denominators with magnitude at or below this are treated as zero by `div`.
pub const EPS_DIV: f64 = 1e-9;
/// Arguments with magnitude at or below this are treated as zero by `log`.
pub const EPS_LOG: f64 = 1e-9;
/// Magnitude ceiling applied to the result of `pow`.
pub const POW_CLAMP: f64 = 1e12;

/// Value reported in place of a non-finite result.
pub const DEGENERATE_SENTINEL: f64 = 0.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("constant {0} is not finite")]
    NonFiniteConstant(f64),
    #[error("tree height {height} exceeds the cap of {cap}")]
    DepthExceeded { height: usize, cap: usize },
    #[error("variable index {index} is outside a schema of {len} names")]
    VariableOutOfRange { index: usize, len: usize },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [Self::Add, Self::Sub, Self::Mul, Self::Div, Self::Pow];

    pub fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Div => "div",
            Self::Pow => "pow",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Add => "+",
            Self::Sub => "-",
            Self::Mul => "*",
            Self::Div => "/",
            Self::Pow => "^",
        }
    }

    /// `add` and `mul` may have their children swapped freely.
    pub fn is_commutative(self) -> bool {
        matches!(self, Self::Add | Self::Mul)
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Self::Add => a + b,
            Self::Sub => a - b,
            Self::Mul => a * b,
            Self::Div => protected_div(a, b),
            Self::Pow => clamped_pow(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [Self::Neg, Self::Exp, Self::Log, Self::Sin, Self::Cos];

    pub fn name(self) -> &'static str {
        match self {
            Self::Neg => "neg",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Sin => "sin",
            Self::Cos => "cos",
        }
    }

    pub fn apply(self, a: f64) -> f64 {
        match self {
            Self::Neg => -a,
            Self::Exp => a.exp(),
            Self::Log => protected_log(a),
            Self::Sin => a.sin(),
            Self::Cos => a.cos(),
        }
    }

    /// Function-call form used by the infix grammar (`neg` is written as a
    /// prefix minus instead).
    pub(crate) fn from_function_name(name: &str) -> Option<Self> {
        match name {
            "exp" => Some(Self::Exp),
            "log" => Some(Self::Log),
            "sin" => Some(Self::Sin),
            "cos" => Some(Self::Cos),
            _ => None,
        }
    }
}

/// One member of the operator universe, used to describe operator sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Operator {
    Binary(BinaryOp),
    Unary(UnaryOp),
}

impl Operator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Binary(op) => op.name(),
            Self::Unary(op) => op.name(),
        }
    }

    pub fn universe() -> Vec<Operator> {
        BinaryOp::ALL
            .iter()
            .map(|&op| Operator::Binary(op))
            .chain(UnaryOp::ALL.iter().map(|&op| Operator::Unary(op)))
            .collect()
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::universe()
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| ExprError::UnknownOperator(s.to_string()))
    }
}

impl Serialize for Operator {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Protected division: `a / b`, or `1.0` when the denominator is near zero.
pub fn protected_div(a: f64, b: f64) -> f64 {
    if b.abs() > EPS_DIV {
        a / b
    } else {
        1.0
    }
}

/// Protected logarithm: `ln|a|`, or `0.0` when the argument is near zero.
pub fn protected_log(a: f64) -> f64 {
    if a.abs() > EPS_LOG {
        a.abs().ln()
    } else {
        0.0
    }
}

/// `a^b` with the result magnitude clamped to [`POW_CLAMP`]. NaN passes
/// through so the caller can flag it.
pub fn clamped_pow(a: f64, b: f64) -> f64 {
    let r = a.powf(b);
    if r.is_nan() {
        r
    } else if r.abs() > POW_CLAMP {
        POW_CLAMP.copysign(r)
    } else {
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Constant(f64),
    Variable(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn constant(value: f64) -> Self {
        Node::Constant(value)
    }

    pub fn var(index: usize) -> Self {
        Node::Variable(index)
    }

    pub fn unary(op: UnaryOp, child: Node) -> Self {
        Node::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, left: Node, right: Node) -> Self {
        Node::Binary(op, Box::new(left), Box::new(right))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Constant(_) | Node::Variable(_))
    }

    /// Ordered children (empty for leaves).
    pub fn children(&self) -> Vec<&Node> {
        match self {
            Node::Constant(_) | Node::Variable(_) => Vec::new(),
            Node::Unary(_, c) => vec![c],
            Node::Binary(_, l, r) => vec![l, r],
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Node::Constant(_) | Node::Variable(_) => 1,
            Node::Unary(_, c) => 1 + c.size(),
            Node::Binary(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Height of the subtree; a leaf has height 0.
    pub fn height(&self) -> usize {
        match self {
            Node::Constant(_) | Node::Variable(_) => 0,
            Node::Unary(_, c) => 1 + c.height(),
            Node::Binary(_, l, r) => 1 + l.height().max(r.height()),
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var_index(&self) -> Option<usize> {
        match self {
            Node::Constant(_) => None,
            Node::Variable(i) => Some(*i),
            Node::Unary(_, c) => c.max_var_index(),
            Node::Binary(_, l, r) => match (l.max_var_index(), r.max_var_index()) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
        }
    }

    fn check_constants(&self) -> Result<(), ExprError> {
        match self {
            Node::Constant(v) if !v.is_finite() => Err(ExprError::NonFiniteConstant(*v)),
            Node::Constant(_) | Node::Variable(_) => Ok(()),
            Node::Unary(_, c) => c.check_constants(),
            Node::Binary(_, l, r) => {
                l.check_constants()?;
                r.check_constants()
            }
        }
    }

    /// Raw (unflagged) evaluation with protected operators.
    fn eval_raw(&self, row: &[f64]) -> f64 {
        match self {
            Node::Constant(v) => *v,
            Node::Variable(i) => row.get(*i).copied().unwrap_or(f64::NAN),
            Node::Unary(op, c) => op.apply(c.eval_raw(row)),
            Node::Binary(op, l, r) => op.apply(l.eval_raw(row), r.eval_raw(row)),
        }
    }

    fn eval_columns(&self, columns: &[Vec<f64>], n: usize) -> Vec<f64> {
        match self {
            Node::Constant(v) => vec![*v; n],
            Node::Variable(i) => match columns.get(*i) {
                Some(col) => col[..n].to_vec(),
                None => vec![f64::NAN; n],
            },
            Node::Unary(op, c) => {
                let mut v = c.eval_columns(columns, n);
                v.iter_mut().for_each(|x| *x = op.apply(*x));
                v
            }
            Node::Binary(op, l, r) => {
                let mut a = l.eval_columns(columns, n);
                let b = r.eval_columns(columns, n);
                a.iter_mut()
                    .zip(&b)
                    .for_each(|(x, &y)| *x = op.apply(*x, y));
                a
            }
        }
    }

    /// Pre-order traversal.
    pub fn preorder(&self) -> Vec<&Node> {
        let mut out = Vec::with_capacity(self.size());
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            match n {
                Node::Unary(_, c) => stack.push(c),
                Node::Binary(_, l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => {}
            }
        }
        out
    }

    /// Mutable access to the `index`-th node in pre-order.
    pub fn nth_mut(&mut self, index: usize) -> Option<&mut Node> {
        let mut remaining = index;
        nth_mut_inner(self, &mut remaining)
    }

    pub fn nth(&self, index: usize) -> Option<&Node> {
        self.preorder().get(index).copied()
    }

    /// Depth (distance from the root) of the `index`-th node in pre-order.
    pub fn depth_of(&self, index: usize) -> Option<usize> {
        let mut stack = vec![(self, 0usize)];
        let mut seen = 0;
        while let Some((n, d)) = stack.pop() {
            if seen == index {
                return Some(d);
            }
            seen += 1;
            match n {
                Node::Unary(_, c) => stack.push((c, d + 1)),
                Node::Binary(_, l, r) => {
                    stack.push((r, d + 1));
                    stack.push((l, d + 1));
                }
                _ => {}
            }
        }
        None
    }

    fn canonical_key_into(&self, out: &mut String) {
        match self {
            Node::Constant(v) => {
                // 12 significant digits.
                let v = if *v == 0.0 { 0.0 } else { *v };
                out.push_str(&format!("{v:.11e}"));
            }
            Node::Variable(i) => {
                out.push('x');
                out.push_str(&i.to_string());
            }
            Node::Unary(op, c) => {
                out.push_str(op.name());
                out.push('(');
                c.canonical_key_into(out);
                out.push(')');
            }
            Node::Binary(op, l, r) => {
                let mut a = String::new();
                let mut b = String::new();
                l.canonical_key_into(&mut a);
                r.canonical_key_into(&mut b);
                if op.is_commutative() && b < a {
                    std::mem::swap(&mut a, &mut b);
                }
                out.push_str(op.name());
                out.push('(');
                out.push_str(&a);
                out.push(',');
                out.push_str(&b);
                out.push(')');
            }
        }
    }
}

fn nth_mut_inner<'a>(node: &'a mut Node, remaining: &mut usize) -> Option<&'a mut Node> {
    if *remaining == 0 {
        return Some(node);
    }
    *remaining -= 1;
    match node {
        Node::Constant(_) | Node::Variable(_) => None,
        Node::Unary(_, c) => nth_mut_inner(c, remaining),
        Node::Binary(_, l, r) => {
            let left_size = l.size();
            if *remaining < left_size {
                nth_mut_inner(l, remaining)
            } else {
                *remaining -= left_size;
                nth_mut_inner(r, remaining)
            }
        }
    }
}

/// Result of evaluating a tree on one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Always finite; equals [`DEGENERATE_SENTINEL`] when `degenerate` is set.
    pub value: f64,
    pub degenerate: bool,
}

/// Result of evaluating a tree on many rows.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchEvaluation {
    pub values: Vec<f64>,
    /// Set when any row produced a non-finite value.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionTree {
    root: Node,
}

impl ExpressionTree {
    /// Builds a tree checked against [`DEFAULT_DEPTH_CAP`].
    pub fn new(root: Node) -> Result<Self, ExprError> {
        Self::with_depth_cap(root, DEFAULT_DEPTH_CAP)
    }

    pub fn with_depth_cap(root: Node, cap: usize) -> Result<Self, ExprError> {
        root.check_constants()?;
        let height = root.height();
        if height > cap {
            return Err(ExprError::DepthExceeded { height, cap });
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn evaluate(&self, row: &[f64]) -> Evaluation {
        let v = self.root.eval_raw(row);
        if v.is_finite() {
            Evaluation {
                value: v,
                degenerate: false,
            }
        } else {
            Evaluation {
                value: DEGENERATE_SENTINEL,
                degenerate: true,
            }
        }
    }

    /// Column-major evaluation over the first `n` entries of each column.
    /// Produces exactly the values [`Self::evaluate`] would on each row.
    pub fn evaluate_columns(&self, columns: &[Vec<f64>], n: usize) -> BatchEvaluation {
        let mut values = self.root.eval_columns(columns, n);
        let mut degenerate = false;
        for v in &mut values {
            if !v.is_finite() {
                *v = DEGENERATE_SENTINEL;
                degenerate = true;
            }
        }
        BatchEvaluation { values, degenerate }
    }

    /// Key shared by trees that are equal up to reordering the children of
    /// `add` and `mul`. Constants are rounded to 12 significant digits.
    pub fn canonical_key(&self) -> String {
        let mut out = String::new();
        self.root.canonical_key_into(&mut out);
        out
    }

    /// Checks that every variable index is inside `schema`.
    pub fn check_schema(&self, schema: &VariableSchema) -> Result<(), ExprError> {
        match self.root.max_var_index() {
            Some(i) if i >= schema.len() => Err(ExprError::VariableOutOfRange {
                index: i,
                len: schema.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Ordered column names with SI units and human-readable descriptions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSchema {
    names: Vec<String>,
    units: Vec<String>,
    descriptions: Vec<String>,
}

impl VariableSchema {
    pub fn new(
        names: Vec<String>,
        units: Vec<String>,
        descriptions: Vec<String>,
    ) -> Result<Self, ExprError> {
        if names.len() != units.len() || names.len() != descriptions.len() {
            return Err(ExprError::Schema(format!(
                "{} names, {} units, {} descriptions",
                names.len(),
                units.len(),
                descriptions.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if !parser::is_identifier(name) {
                return Err(ExprError::Schema(format!("`{name}` is not an identifier")));
            }
            if UnaryOp::from_function_name(name).is_some() {
                return Err(ExprError::Schema(format!("`{name}` is a function name")));
            }
            if names[..i].contains(name) {
                return Err(ExprError::Schema(format!("duplicate name `{name}`")));
            }
        }
        Ok(Self {
            names,
            units,
            descriptions,
        })
    }

    /// Schema with the given names and empty units/descriptions.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, ExprError> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let n = names.len();
        Self::new(names, vec![String::new(); n], vec![String::new(); n])
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn descriptions(&self) -> &[String] {
        &self.descriptions
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Node {
        Node::var(0)
    }
    fn y() -> Node {
        Node::var(1)
    }
    fn c(v: f64) -> Node {
        Node::constant(v)
    }
    fn tree(n: Node) -> ExpressionTree {
        ExpressionTree::new(n).unwrap()
    }

    #[test]
    fn evaluates_constant_and_identity() {
        assert_eq!(tree(c(3.5)).evaluate(&[]).value, 3.5);
        let t = tree(Node::binary(BinaryOp::Add, x(), c(1.0)));
        assert_eq!(t.evaluate(&[2.0]).value, 3.0);
    }

    #[test]
    fn protected_division_by_zero_yields_one() {
        let t = tree(Node::binary(BinaryOp::Div, c(1.0), c(0.0)));
        let e = t.evaluate(&[]);
        assert_eq!(e.value, 1.0);
        assert!(!e.degenerate);
        assert_eq!(protected_div(3.0, 1e-10), 1.0);
        assert_eq!(protected_div(3.0, 2.0), 1.5);
    }

    #[test]
    fn protected_log_rules() {
        assert_eq!(protected_log(0.0), 0.0);
        assert_eq!(protected_log(-1e-12), 0.0);
        assert_eq!(protected_log(-std::f64::consts::E), 1.0);
    }

    #[test]
    fn pow_is_clamped() {
        assert_eq!(clamped_pow(10.0, 20.0), 1e12);
        assert_eq!(clamped_pow(-10.0, 21.0), -1e12);
        assert_eq!(clamped_pow(f64::INFINITY, 1.0), 1e12);
        assert!(clamped_pow(-2.0, 0.5).is_nan());
    }

    #[test]
    fn overflow_is_flagged_not_returned() {
        let t = tree(Node::unary(UnaryOp::Exp, c(1000.0)));
        let e = t.evaluate(&[]);
        assert!(e.degenerate);
        assert_eq!(e.value, DEGENERATE_SENTINEL);

        let t = tree(Node::binary(BinaryOp::Pow, c(-2.0), c(0.5)));
        assert!(t.evaluate(&[]).degenerate);
    }

    #[test]
    fn batch_matches_rowwise() {
        let t = tree(Node::binary(
            BinaryOp::Div,
            Node::unary(UnaryOp::Log, x()),
            Node::binary(BinaryOp::Sub, y(), c(1.0)),
        ));
        let rows = [[0.0, 1.0], [2.0, 3.0], [-4.0, 1.0 + 1e-12], [5.0, -2.0]];
        let cols = vec![
            rows.iter().map(|r| r[0]).collect::<Vec<_>>(),
            rows.iter().map(|r| r[1]).collect::<Vec<_>>(),
        ];
        let batch = t.evaluate_columns(&cols, rows.len());
        for (r, v) in rows.iter().zip(&batch.values) {
            assert_eq!(t.evaluate(r).value, *v);
        }
        assert!(!batch.degenerate);
    }

    #[test]
    fn sizes() {
        assert_eq!(tree(c(2.0)).size(), 1);
        assert_eq!(tree(Node::binary(BinaryOp::Add, x(), c(1.0))).size(), 3);
        let t = Node::binary(BinaryOp::Mul, c(0.5), Node::binary(BinaryOp::Mul, x(), x()));
        assert_eq!(tree(t).size(), 5);
    }

    #[test]
    fn rejects_non_finite_and_deep_trees() {
        assert!(matches!(
            ExpressionTree::new(c(f64::NAN)),
            Err(ExprError::NonFiniteConstant(_))
        ));
        let mut n = x();
        for _ in 0..9 {
            n = Node::unary(UnaryOp::Sin, n);
        }
        assert!(matches!(
            ExpressionTree::new(n.clone()),
            Err(ExprError::DepthExceeded { height: 9, cap: 8 })
        ));
        assert!(ExpressionTree::with_depth_cap(n, 9).is_ok());
    }

    #[test]
    fn canonical_key_respects_commutativity_only() {
        let add_xy = tree(Node::binary(BinaryOp::Add, x(), y()));
        let add_yx = tree(Node::binary(BinaryOp::Add, y(), x()));
        assert_eq!(add_xy.canonical_key(), add_yx.canonical_key());

        let sub_xy = tree(Node::binary(BinaryOp::Sub, x(), y()));
        let sub_yx = tree(Node::binary(BinaryOp::Sub, y(), x()));
        assert_ne!(sub_xy.canonical_key(), sub_yx.canonical_key());

        let (a, b, cc) = (Node::var(0), Node::var(1), Node::var(2));
        let lhs = Node::binary(
            BinaryOp::Mul,
            Node::binary(BinaryOp::Add, b.clone(), a.clone()),
            cc.clone(),
        );
        let rhs = Node::binary(BinaryOp::Mul, cc, Node::binary(BinaryOp::Add, a, b));
        assert_eq!(tree(lhs).canonical_key(), tree(rhs).canonical_key());
    }

    #[test]
    fn canonical_key_rounds_constants() {
        let a = tree(c(0.1 + 0.2));
        let b = tree(c(0.3));
        assert_eq!(a.canonical_key(), b.canonical_key());
        assert_ne!(a.canonical_key(), tree(c(0.3001)).canonical_key());
    }

    #[test]
    fn schema_validation() {
        assert!(VariableSchema::from_names(&["x", "x"]).is_err());
        assert!(VariableSchema::from_names(&["cos"]).is_err());
        assert!(VariableSchema::from_names(&["2x"]).is_err());
        assert!(VariableSchema::new(vec!["x".into()], vec![], vec![]).is_err());
        let s = VariableSchema::from_names(&["g", "h"]).unwrap();
        assert_eq!(s.index_of("h"), Some(1));
        let t = tree(Node::var(2));
        assert!(matches!(
            t.check_schema(&s),
            Err(ExprError::VariableOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn nth_mut_follows_preorder() {
        let mut n = Node::binary(
            BinaryOp::Add,
            Node::unary(UnaryOp::Cos, x()),
            Node::binary(BinaryOp::Mul, y(), c(2.0)),
        );
        let order: Vec<Node> = n.preorder().into_iter().cloned().collect();
        for (i, expected) in order.iter().enumerate() {
            assert_eq!(n.nth_mut(i).unwrap(), expected);
            assert_eq!(n.nth(i).unwrap(), expected);
        }
        assert!(n.nth_mut(order.len()).is_none());
        assert_eq!(n.depth_of(0), Some(0));
        assert_eq!(n.depth_of(2), Some(2));
        assert_eq!(n.depth_of(5), Some(2));
    }

    #[test]
    fn operator_names_round_trip() {
        for op in Operator::universe() {
            assert_eq!(op.name().parse::<Operator>().unwrap(), op);
        }
        assert!("sqrt".parse::<Operator>().is_err());
    }
}
