//! SI dimension algebra used by the mock critic.

use std::fmt;
use std::ops::{Div, Mul};

use crate::exprtree::{BinaryOp, ExpressionTree, Node, UnaryOp, VariableSchema};

const BASE: [&str; 7] = ["kg", "m", "s", "A", "K", "mol", "cd"];

/// Exponents over the seven SI base units, in `kg m s A K mol cd` order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dimension(pub [f64; 7]);

const TOL: f64 = 1e-9;

impl Dimension {
    pub const NONE: Dimension = Dimension([0.0; 7]);

    fn base(i: usize) -> Self {
        let mut d = [0.0; 7];
        d[i] = 1.0;
        Self(d)
    }

    pub fn is_dimensionless(&self) -> bool {
        self.0.iter().all(|e| e.abs() < TOL)
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .all(|(a, b)| (a - b).abs() < TOL)
    }

    pub fn powf(self, p: f64) -> Self {
        Self(self.0.map(|e| e * p))
    }
}

impl Mul for Dimension {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl Div for Dimension {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dimensionless() {
            return f.write_str("1");
        }
        let parts: Vec<String> = BASE
            .iter()
            .zip(self.0)
            .filter(|(_, e)| e.abs() >= TOL)
            .map(|(u, e)| {
                if (e - 1.0).abs() < TOL {
                    u.to_string()
                } else {
                    format!("{u}^{e}")
                }
            })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

fn symbol(s: &str) -> Option<Dimension> {
    let [kg, m, sec] = [0, 1, 2].map(Dimension::base);
    let newton = kg.mul(m).div(sec.powf(2.0));
    Some(match s {
        "1" | "rad" | "sr" => Dimension::NONE,
        "N" => newton,
        "J" => newton.mul(m),
        "W" => newton.mul(m).div(sec),
        "Pa" => newton.div(m.powf(2.0)),
        "Hz" => sec.powf(-1.0),
        "C" => Dimension::base(3).mul(sec),
        "V" => newton.mul(m).div(sec).div(Dimension::base(3)),
        _ => Dimension::base(BASE.iter().position(|b| *b == s)?),
    })
}

/// Parses unit strings such as `kg`, `m/s`, `kg/s^2`, `kg*m^2/s^2`, `1/s`,
/// `rad`, or `1`. Each `/` applies to the single factor that follows it.
pub fn parse_unit(text: &str) -> Result<Dimension, String> {
    let text = text.trim();
    if text.is_empty() {
        return Ok(Dimension::NONE);
    }
    let mut dim = Dimension::NONE;
    let mut sign = 1.0;
    let mut rest = text;
    loop {
        let end = rest.find(['*', '/', ' ']).unwrap_or(rest.len());
        let factor = &rest[..end];
        let (name, exp) = match factor.split_once('^') {
            Some((n, e)) => (
                n,
                e.trim_matches(|c| c == '(' || c == ')')
                    .parse::<f64>()
                    .map_err(|_| format!("bad exponent in unit `{text}`"))?,
            ),
            None => (factor, 1.0),
        };
        let d = symbol(name).ok_or_else(|| format!("unknown unit `{name}` in `{text}`"))?;
        dim = dim.mul(d.powf(sign * exp));
        if end == rest.len() {
            return Ok(dim);
        }
        sign = if rest.as_bytes()[end] == b'/' {
            -1.0
        } else {
            1.0
        };
        rest = rest[end + 1..].trim_start();
    }
}

/// Result of propagating units through a subtree. Constants carry no unit
/// and adapt to whatever they combine with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Signature {
    Known(Dimension),
    Any,
}

impl Signature {
    fn compatible_with_none(self) -> bool {
        match self {
            Signature::Any => true,
            Signature::Known(d) => d.is_dimensionless(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitCheck {
    pub signature: Signature,
    pub violations: usize,
}

/// Constant-valued subtree (no variables): its value, if finite.
fn constant_value(node: &Node) -> Option<f64> {
    if node.max_var_index().is_some() {
        return None;
    }
    let v = ExpressionTree::with_depth_cap(node.clone(), usize::MAX)
        .ok()?
        .evaluate(&[]);
    (!v.degenerate).then_some(v.value)
}

fn walk(node: &Node, dims: &[Dimension], violations: &mut usize) -> Signature {
    use Signature::{Any, Known};
    match node {
        Node::Constant(_) => Any,
        Node::Variable(i) => Known(dims[*i]),
        Node::Unary(op, c) => {
            let s = walk(c, dims, violations);
            match op {
                UnaryOp::Neg => s,
                UnaryOp::Exp | UnaryOp::Log | UnaryOp::Sin | UnaryOp::Cos => {
                    if !s.compatible_with_none() {
                        *violations += 1;
                    }
                    Known(Dimension::NONE)
                }
            }
        }
        Node::Binary(op, l, r) => {
            let a = walk(l, dims, violations);
            let b = walk(r, dims, violations);
            match op {
                BinaryOp::Add | BinaryOp::Sub => match (a, b) {
                    (Any, x) | (x, Any) => x,
                    (Known(x), Known(y)) => {
                        if !x.approx_eq(&y) {
                            *violations += 1;
                        }
                        Known(x)
                    }
                },
                BinaryOp::Mul | BinaryOp::Div => match (a, b) {
                    (Known(x), Known(y)) => Known(if *op == BinaryOp::Mul { x * y } else { x / y }),
                    _ => Any,
                },
                BinaryOp::Pow => {
                    if let Some(p) = constant_value(r) {
                        return match a {
                            Known(x) => Known(x.powf(p)),
                            Any => Any,
                        };
                    }
                    if !b.compatible_with_none() {
                        *violations += 1;
                    }
                    if !a.compatible_with_none() {
                        *violations += 1;
                    }
                    match a {
                        Any => Any,
                        Known(_) => Known(Dimension::NONE),
                    }
                }
            }
        }
    }
}

/// Propagates schema units through `tree` and counts violations: mismatched
/// addends, non-dimensionless transcendental arguments, non-constant powers
/// of dimensioned bases, and a final mismatch against `target` (if given).
pub fn check_units(
    tree: &ExpressionTree,
    schema: &VariableSchema,
    target: Option<&str>,
) -> Result<UnitCheck, String> {
    let dims = schema
        .units()
        .iter()
        .map(|u| parse_unit(u))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(i) = tree.root().max_var_index() {
        if i >= dims.len() {
            return Err(format!("variable x{i} is not in the schema"));
        }
    }
    let mut violations = 0;
    let signature = walk(tree.root(), &dims, &mut violations);
    if let (Some(t), Signature::Known(d)) = (target, signature) {
        if !d.approx_eq(&parse_unit(t)?) {
            violations += 1;
        }
    }
    Ok(UnitCheck {
        signature,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprtree::parse;

    #[test]
    fn parses_compound_units() {
        let [kg, m, s] = [0, 1, 2].map(Dimension::base);
        assert!(parse_unit("kg/s^2")
            .unwrap()
            .approx_eq(&kg.div(s.powf(2.0))));
        assert!(parse_unit("m/s").unwrap().approx_eq(&m.div(s)));
        assert!(parse_unit("1/s").unwrap().approx_eq(&s.powf(-1.0)));
        assert!(parse_unit("J")
            .unwrap()
            .approx_eq(&parse_unit("kg*m^2/s^2").unwrap()));
        assert!(parse_unit("rad").unwrap().is_dimensionless());
        assert!(parse_unit("1").unwrap().is_dimensionless());
        assert!(parse_unit("furlong").is_err());
        assert_eq!(parse_unit("kg/s^2").unwrap().to_string(), "kg*s^-2");
    }

    fn schema() -> VariableSchema {
        VariableSchema::new(
            vec!["m".into(), "v".into(), "h".into(), "t".into(), "x".into()],
            vec![
                "kg".into(),
                "m/s".into(),
                "m".into(),
                "s".into(),
                "1".into(),
            ],
            vec![String::new(); 5],
        )
        .unwrap()
    }

    fn violations(src: &str, target: Option<&str>) -> usize {
        let s = schema();
        check_units(&parse(src, &s).unwrap(), &s, target)
            .unwrap()
            .violations
    }

    #[test]
    fn counts_violations() {
        assert_eq!(violations("m + v", None), 1);
        assert_eq!(violations("h / t + v", Some("m/s")), 0);
        assert_eq!(violations("sin(t)", None), 1);
        assert_eq!(violations("sin(sin(x))", Some("1")), 0);
        // the constant factor could carry m/s^2, so no verdict is possible
        assert_eq!(violations("(2 * 9.81 * h) ^ 0.5", Some("m/s")), 0);
        assert_eq!(violations("h ^ 0.5", Some("m/s")), 1);
        assert_eq!(violations("h ^ t", None), 2);
        assert_eq!(violations("h", Some("kg")), 1);
        assert_eq!(violations("3 * h + 2", Some("m")), 0);
        assert_eq!(violations("h ^ (1 + 1)", Some("m^2")), 0);
    }
}
