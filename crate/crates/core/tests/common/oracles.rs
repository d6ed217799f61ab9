//! Independent reference implementations used to cross-check the library.

use pisr::exprtree::{BinaryOp, Node};

/// Tree over the restricted grammar {add, mul, x, constants}.
#[derive(Clone, Debug, PartialEq)]
pub enum T {
    X,
    C(f64),
    Add(Box<T>, Box<T>),
    Mul(Box<T>, Box<T>),
}

impl T {
    pub fn size(&self) -> usize {
        match self {
            T::X | T::C(_) => 1,
            T::Add(l, r) | T::Mul(l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn to_node(&self) -> Node {
        match self {
            T::X => Node::var(0),
            T::C(v) => Node::constant(*v),
            T::Add(l, r) => Node::binary(BinaryOp::Add, l.to_node(), r.to_node()),
            T::Mul(l, r) => Node::binary(BinaryOp::Mul, l.to_node(), r.to_node()),
        }
    }

    fn parts(&self) -> Option<(&'static str, &T, &T)> {
        match self {
            T::Add(l, r) => Some(("add", l, r)),
            T::Mul(l, r) => Some(("mul", l, r)),
            _ => None,
        }
    }
}

/// Every tree with exactly `size` nodes.
pub fn trees_of_size(size: usize) -> Vec<T> {
    if size == 1 {
        return vec![T::X, T::C(1.0), T::C(2.0)];
    }
    let mut out = Vec::new();
    if size < 3 || size % 2 == 0 {
        return out;
    }
    for left in (1..size - 1).step_by(2) {
        let right = size - 1 - left;
        for l in trees_of_size(left) {
            for r in trees_of_size(right) {
                out.push(T::Add(Box::new(l.clone()), Box::new(r.clone())));
                out.push(T::Mul(Box::new(l.clone()), Box::new(r.clone())));
            }
        }
    }
    out
}

pub fn trees_up_to(max_size: usize) -> Vec<T> {
    (1..=max_size).flat_map(trees_of_size).collect()
}

/// Total cost of every complete child pairing between `a` and `b`. Add and
/// mul are both commutative, so each internal pair may match directly or
/// crosswise, regardless of whether the operators agree.
pub fn all_pairing_costs(a: &T, b: &T, alpha: f64) -> Vec<f64> {
    match (a.parts(), b.parts()) {
        (None, None) => vec![match (a, b) {
            (T::X, T::X) => 0.0,
            (T::C(u), T::C(v)) if u == v => 0.0,
            (T::C(u), T::C(v)) => (alpha * (u - v).abs()).min(1.0),
            _ => 1.0,
        }],
        // The unmatched node counts 1, plus 1 per node below it.
        (None, Some(_)) => vec![1.0 + (b.size() - 1) as f64],
        (Some(_), None) => vec![1.0 + (a.size() - 1) as f64],
        (Some((op1, l1, r1)), Some((op2, l2, r2))) => {
            let own = if op1 == op2 { 0.0 } else { 1.0 };
            let mut out = Vec::new();
            for (p, q) in [((l1, l2), (r1, r2)), ((l1, r2), (r1, l2))] {
                for x in all_pairing_costs(p.0, p.1, alpha) {
                    for y in all_pairing_costs(q.0, q.1, alpha) {
                        out.push(own + (x + y));
                    }
                }
            }
            out
        }
    }
}

pub fn oracle_distance(a: &T, b: &T, alpha: f64) -> f64 {
    all_pairing_costs(a, b, alpha)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// (mae, mse, r2) by direct summation.
pub fn oracle_fit_metrics(pred: &[f64], truth: &[f64]) -> (f64, f64, f64) {
    let n = truth.len();
    let mut abs = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        abs += (pred[i] - truth[i]).abs();
        sq += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    }
    let mean = truth.iter().sum::<f64>() / n as f64;
    let tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    (abs / n as f64, sq / n as f64, 1.0 - sq / tot)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
