//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod oracles;
pub mod stub;

use pisr::exprtree::{BinaryOp, ExpressionTree, Node, UnaryOp, VariableSchema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const VAR_NAMES: [&str; 3] = ["x", "y", "z"];

pub fn schema() -> VariableSchema {
    VariableSchema::from_names(&VAR_NAMES).unwrap()
}

fn random_leaf(rng: &mut ChaCha8Rng) -> Node {
    if rng.random_bool(0.6) {
        Node::var(rng.random_range(0..VAR_NAMES.len()))
    } else {
        // Mix of short decimals and full-precision values.
        let v: f64 = rng.random_range(-10.0..10.0);
        Node::constant(if rng.random_bool(0.5) {
            (v * 10.0).round() / 10.0
        } else {
            v
        })
    }
}

/// Random tree over the full operator universe with height at most `height`.
pub fn random_node(rng: &mut ChaCha8Rng, height: usize) -> Node {
    if height == 0 || rng.random_bool(0.3) {
        return random_leaf(rng);
    }
    if rng.random_bool(0.25) {
        let op = UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())];
        Node::unary(op, random_node(rng, height - 1))
    } else {
        let op = BinaryOp::ALL[rng.random_range(0..BinaryOp::ALL.len())];
        Node::binary(
            op,
            random_node(rng, height - 1),
            random_node(rng, height - 1),
        )
    }
}

/// Random tree whose internal nodes include at least one add or mul.
pub fn random_commutative_node(rng: &mut ChaCha8Rng, height: usize) -> Node {
    loop {
        let n = random_node(rng, height);
        if has_commutative(&n) {
            return n;
        }
    }
}

pub fn has_commutative(n: &Node) -> bool {
    match n {
        Node::Binary(op, l, r) => op.is_commutative() || has_commutative(l) || has_commutative(r),
        Node::Unary(_, c) => has_commutative(c),
        _ => false,
    }
}

/// Swaps the children of each add/mul node with probability one half, recursively.
pub fn random_swap(n: &Node, rng: &mut ChaCha8Rng) -> Node {
    match n {
        Node::Binary(op, l, r) => {
            let (l, r) = (random_swap(l, rng), random_swap(r, rng));
            if op.is_commutative() && rng.random_bool(0.5) {
                Node::binary(*op, r, l)
            } else {
                Node::binary(*op, l, r)
            }
        }
        Node::Unary(op, c) => Node::unary(*op, random_swap(c, rng)),
        leaf => leaf.clone(),
    }
}

/// Swaps the children of every add/mul node.
pub fn swap_all(n: &Node) -> Node {
    match n {
        Node::Binary(op, l, r) if op.is_commutative() => {
            Node::binary(*op, swap_all(r), swap_all(l))
        }
        Node::Binary(op, l, r) => Node::binary(*op, swap_all(l), swap_all(r)),
        Node::Unary(op, c) => Node::unary(*op, swap_all(c)),
        leaf => leaf.clone(),
    }
}

pub fn tree(n: Node) -> ExpressionTree {
    ExpressionTree::new(n).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Population variance, computed the long way.
pub fn naive_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mut sum = 0.0;
    for x in xs {
        sum += x;
    }
    let mean = sum / n;
    let mut acc = 0.0;
    for x in xs {
        acc += (x - mean) * (x - mean);
    }
    acc / n
}
