//! Tree generation and the genetic operators.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::exprtree::{BinaryOp, Node, UnaryOp};

/// Everything needed to grow random trees.
pub(crate) struct Primitives {
    pub binary: Vec<BinaryOp>,
    pub unary: Vec<UnaryOp>,
    pub n_vars: usize,
    pub constant_range: f64,
    pub max_depth: usize,
}

/// Share of terminals that are variables rather than constants.
const VARIABLE_SHARE: f64 = 0.75;
/// Attempts before a size-violating crossover falls back to the parent.
const CROSSOVER_TRIES: usize = 8;
/// Probability of cutting at an internal node when one exists.
const INTERNAL_CUT_BIAS: f64 = 0.9;
/// Largest subtree grown by subtree mutation.
const MUTATION_SUBTREE_HEIGHT: usize = 4;

impl Primitives {
    fn n_ops(&self) -> usize {
        self.binary.len() + self.unary.len()
    }

    fn terminal<R: Rng>(&self, rng: &mut R) -> Node {
        if self.n_vars > 0 && (self.constant_range == 0.0 || rng.random_bool(VARIABLE_SHARE)) {
            Node::var(rng.random_range(0..self.n_vars))
        } else {
            self.constant(rng)
        }
    }

    fn constant<R: Rng>(&self, rng: &mut R) -> Node {
        if self.constant_range == 0.0 {
            return Node::constant(1.0);
        }
        // One decimal place keeps rendered constants readable.
        let v: f64 = rng.random_range(-self.constant_range..=self.constant_range);
        Node::constant((v * 10.0).round() / 10.0)
    }

    fn operator_node<R: Rng>(&self, rng: &mut R, mut child: impl FnMut(&mut R) -> Node) -> Node {
        let k = rng.random_range(0..self.n_ops());
        if k < self.binary.len() {
            let l = child(rng);
            let r = child(rng);
            Node::binary(self.binary[k], l, r)
        } else {
            Node::unary(self.unary[k - self.binary.len()], child(rng))
        }
    }

    /// Every leaf at exactly `height` ("full") or leaves anywhere up to
    /// `height` ("grow").
    pub fn random_tree<R: Rng>(&self, rng: &mut R, height: usize, full: bool) -> Node {
        if height == 0 || self.n_ops() == 0 {
            return self.terminal(rng);
        }
        if !full {
            let n_term = self.n_vars + 1;
            let p_term = n_term as f64 / (n_term + self.n_ops()) as f64;
            if rng.random_bool(p_term) {
                return self.terminal(rng);
            }
        }
        self.operator_node(rng, |r| self.random_tree(r, height - 1, full))
    }

    /// Picks a pre-order index, preferring internal nodes.
    fn cut_point<R: Rng>(&self, rng: &mut R, tree: &Node) -> usize {
        let nodes = tree.preorder();
        let internal: Vec<usize> = (0..nodes.len()).filter(|&i| !nodes[i].is_leaf()).collect();
        if !internal.is_empty() && rng.random_bool(INTERNAL_CUT_BIAS) {
            internal[rng.random_range(0..internal.len())]
        } else {
            let leaves: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_leaf()).collect();
            leaves[rng.random_range(0..leaves.len())]
        }
    }

    /// Replaces a subtree of `a` with a subtree of `b`; falls back to `a`
    /// when every attempt exceeds the depth cap.
    pub fn crossover<R: Rng>(&self, rng: &mut R, a: &Node, b: &Node) -> Node {
        for _ in 0..CROSSOVER_TRIES {
            let i = self.cut_point(rng, a);
            let j = self.cut_point(rng, b);
            let donor = b.nth(j).expect("index within tree").clone();
            let mut child = a.clone();
            *child.nth_mut(i).expect("index within tree") = donor;
            if child.height() <= self.max_depth {
                return child;
            }
        }
        a.clone()
    }

    /// Replaces a random subtree with a freshly grown one.
    pub fn subtree_mutation<R: Rng>(&self, rng: &mut R, a: &Node) -> Node {
        let i = rng.random_range(0..a.size());
        let depth = a.depth_of(i).expect("index within tree");
        let room = self
            .max_depth
            .saturating_sub(depth)
            .min(MUTATION_SUBTREE_HEIGHT);
        let height = rng.random_range(0..=room);
        let mut child = a.clone();
        *child.nth_mut(i).expect("index within tree") = self.random_tree(rng, height, false);
        child
    }

    /// Swaps one node for another of the same arity; constants are nudged.
    pub fn point_mutation<R: Rng>(&self, rng: &mut R, a: &Node) -> Node {
        let i = rng.random_range(0..a.size());
        let mut child = a.clone();
        let node = child.nth_mut(i).expect("index within tree");
        match node {
            Node::Constant(c) => {
                if rng.random_bool(0.5) {
                    let sd = 0.1 * (c.abs() + 1.0);
                    let v = *c + Normal::new(0.0, sd).expect("positive sd").sample(rng);
                    if v.is_finite() {
                        *c = v;
                    }
                } else {
                    *node = self.terminal(rng);
                }
            }
            Node::Variable(_) => *node = self.terminal(rng),
            Node::Unary(op, _) => {
                if !self.unary.is_empty() {
                    *op = self.unary[rng.random_range(0..self.unary.len())];
                }
            }
            Node::Binary(op, _, _) => {
                if !self.binary.is_empty() {
                    *op = self.binary[rng.random_range(0..self.binary.len())];
                }
            }
        }
        child
    }

    pub fn mutate<R: Rng>(&self, rng: &mut R, a: &Node) -> Node {
        if rng.random_bool(0.5) {
            self.subtree_mutation(rng, a)
        } else {
            self.point_mutation(rng, a)
        }
    }
}
