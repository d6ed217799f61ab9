//! Physics-informed symbolic regression.
//!
//! A genetic-programming search over expression trees scored by a composite
//! loss (data fit, size, and a plausibility score from a knowledge critic),
//! plus synthetic physics datasets and a structural tree metric for grading
//! recovered equations against ground truth.

pub mod benchharness;
pub mod cli;
pub mod critic;
pub mod exprtree;
pub mod gpengine;
pub mod physlab;
pub mod treemetric;
