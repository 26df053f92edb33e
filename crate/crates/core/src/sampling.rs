//! Deterministic point sets: seeded uniform assignments and Halton-based
//! ball samples.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::expr::Assignment;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_assignments(
    vars: &BTreeSet<String>,
    count: usize,
    lo: f64,
    hi: f64,
    seed: u64,
) -> Vec<Assignment> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            vars.iter()
                .map(|v| (v.clone(), rng.gen_range(lo..=hi)))
                .collect()
        })
        .collect()
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv_base = 1.0 / base as f64;
    let mut result = 0.0;
    while index > 0 {
        result += (index % base) as f64 * inv_base;
        index /= base;
        inv_base /= base as f64;
    }
    result
}

/// `count` points strictly inside the unit ball of `dim` dimensions, closed
/// under negation (`count` is rounded up to even). Drawn from the Halton
/// sequence by rejection, so the set is the same on every call.
pub fn unit_ball_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    assert!(
        (1..=PRIMES.len()).contains(&dim),
        "ball sampling supports 1..={} dimensions",
        PRIMES.len()
    );
    let half = count.div_ceil(2);
    let mut out = Vec::with_capacity(2 * half);
    let mut index = 1u64;
    while out.len() < 2 * half {
        let p: Vec<f64> = PRIMES[..dim]
            .iter()
            .map(|&b| 2.0 * radical_inverse(index, b) - 1.0)
            .collect();
        index += 1;
        let norm2: f64 = p.iter().map(|x| x * x).sum();
        if norm2 > 0.0 && norm2 < 1.0 {
            out.push(p.iter().map(|x| -x).collect());
            out.push(p);
        }
    }
    out
}
