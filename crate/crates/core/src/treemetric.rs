//! Structural distance between expression trees, and the derived similarity
//! score in `[0, 1]` used to grade recovered equations against ground truth.
//!
//! The two trees are walked together from the root:
//!
//! * equal leaves cost 0; different variables, or a variable against a
//!   constant, cost 1; different constants cost `min(alpha * |a - b|, 1)`;
//! * a leaf against an internal node costs the size of the internal subtree
//!   (1 for the mismatch plus 1 for every node left unmatched);
//! * internal nodes with different operators cost 1, plus their children;
//! * children of `add`/`mul` are paired directly or crosswise, whichever is
//!   cheaper; other operators pair children strictly by position.
//!
//! When either of two mismatched binary operators is commutative, the cheaper
//! pairing is taken as well, so reordering the children of any `add`/`mul`
//! never changes a distance. A unary node against a binary node pairs its
//! child with one of the binary children and counts the other as unmatched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exprtree::{BinaryOp, ExpressionTree, Node};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("alpha must lie in [0, 1], got {0}")]
pub struct InvalidAlpha(pub f64);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeDistanceConfig {
    alpha: f64,
    pub normalize: bool,
}

impl TreeDistanceConfig {
    pub const DEFAULT_ALPHA: f64 = 0.5;

    pub fn new(alpha: f64, normalize: bool) -> Result<Self, InvalidAlpha> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(InvalidAlpha(alpha));
        }
        Ok(Self { alpha, normalize })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for TreeDistanceConfig {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            normalize: true,
        }
    }
}

pub fn tree_distance(a: &ExpressionTree, b: &ExpressionTree, cfg: &TreeDistanceConfig) -> f64 {
    node_distance(a.root(), b.root(), cfg.alpha)
}

/// `1 - d / max(size)` (or `1 - d` without normalisation), clamped at 0.
pub fn tree_score(a: &ExpressionTree, b: &ExpressionTree, cfg: &TreeDistanceConfig) -> f64 {
    let d = tree_distance(a, b, cfg);
    let scaled = if cfg.normalize {
        d / a.size().max(b.size()) as f64
    } else {
        d
    };
    (1.0 - scaled).max(0.0)
}

pub fn node_distance(a: &Node, b: &Node, alpha: f64) -> f64 {
    use Node::*;
    match (a, b) {
        (Constant(x), Constant(y)) => {
            if x == y {
                0.0
            } else {
                (alpha * (x - y).abs()).min(1.0)
            }
        }
        (Variable(i), Variable(j)) => {
            if i == j {
                0.0
            } else {
                1.0
            }
        }
        (Constant(_), Variable(_)) | (Variable(_), Constant(_)) => 1.0,
        (leaf, inner) | (inner, leaf) if leaf.is_leaf() => inner.size() as f64,
        (Unary(op1, c1), Unary(op2, c2)) => mismatch(op1 != op2) + node_distance(c1, c2, alpha),
        (Binary(op1, l1, r1), Binary(op2, l2, r2)) => {
            let direct = node_distance(l1, l2, alpha) + node_distance(r1, r2, alpha);
            let pairing = if op1.is_commutative() || op2.is_commutative() {
                let cross = node_distance(l1, r2, alpha) + node_distance(r1, l2, alpha);
                direct.min(cross)
            } else {
                direct
            };
            mismatch(op1 != op2) + pairing
        }
        (Unary(_, c), Binary(op, l, r)) | (Binary(op, l, r), Unary(_, c)) => {
            1.0 + unary_vs_binary(c, *op, l, r, alpha)
        }
        // Leaf cases are exhausted by the guarded arm above.
        _ => unreachable!("leaf pairs handled above"),
    }
}

fn mismatch(differs: bool) -> f64 {
    if differs {
        1.0
    } else {
        0.0
    }
}

fn unary_vs_binary(child: &Node, op: BinaryOp, l: &Node, r: &Node, alpha: f64) -> f64 {
    let left = node_distance(child, l, alpha) + r.size() as f64;
    if op.is_commutative() {
        let right = node_distance(child, r, alpha) + l.size() as f64;
        left.min(right)
    } else {
        left
    }
}
