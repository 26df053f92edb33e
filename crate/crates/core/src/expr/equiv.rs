use std::collections::BTreeSet;

use super::Expr;
use crate::sampling;

/// Number of random assignments used to decide expression equality.
pub const EQUIVALENCE_POINTS: usize = 32;

const SAMPLE_SEED: u64 = 0x5eed_e0e0;

/// Outcome of comparing two expressions at random points of `[-2, 2]^vars`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    /// Largest `|a - b| / max(1, |a|, |b|)` over the compared points.
    pub max_deviation: f64,
    /// Points where both sides were defined.
    pub compared: usize,
}

impl Equivalence {
    pub fn holds(&self, tol: f64) -> bool {
        self.compared > 0 && self.max_deviation <= tol
    }
}

/// Randomized-evaluation comparison over the union of free variables.
/// Points where either side is undefined are skipped.
pub fn equivalence(a: &Expr, b: &Expr) -> Equivalence {
    let vars: BTreeSet<String> = a.free_vars().union(&b.free_vars()).cloned().collect();
    let points = sampling::uniform_assignments(&vars, EQUIVALENCE_POINTS, -2.0, 2.0, SAMPLE_SEED);
    let mut max_deviation: f64 = 0.0;
    let mut compared = 0;
    for at in &points {
        if let (Ok(x), Ok(y)) = (a.evaluate(at), b.evaluate(at)) {
            let scale = x.abs().max(y.abs()).max(1.0);
            max_deviation = max_deviation.max((x - y).abs() / scale);
            compared += 1;
        }
    }
    Equivalence {
        max_deviation,
        compared,
    }
}
