//! Exhaustive reference solver for small problems.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::graph::WordRelationLabel as L;
use crate::ilp::bnb::IlpSolution;
use crate::ilp::problem::{IlpProblem, LABELS};

pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Enumerates all `6^pairs` single-label assignments and returns the
/// cheapest one that satisfies every row. Ties keep the first assignment in
/// lexicographic label order.
pub fn brute_force(problem: &IlpProblem) -> Result<IlpSolution> {
    if problem.n_pairs > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            pairs: problem.n_pairs,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let start = Instant::now();
    let n = problem.n_pairs;
    let mut digits = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut x = vec![false; problem.n_columns()];
    let mut visited = 0usize;
    loop {
        visited += 1;
        x.iter_mut().for_each(|v| *v = false);
        for (p, &z) in digits.iter().enumerate() {
            x[p * LABELS + z] = true;
        }
        if problem.rows.iter().all(|r| r.is_satisfied(&x)) {
            let obj: f64 = digits
                .iter()
                .enumerate()
                .map(|(p, &z)| problem.costs[p * LABELS + z])
                .sum();
            if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                best = Some((digits.clone(), obj));
            }
        }
        // Mixed-radix increment, last pair fastest.
        let mut k = n;
        loop {
            if k == 0 {
                let (labels, objective) = best.ok_or_else(|| Error::Infeasible(Vec::new()))?;
                return Ok(IlpSolution {
                    labels: labels.into_iter().map(|z| L::ALL[z]).collect(),
                    objective,
                    nodes: visited,
                    optimal: true,
                    wall_seconds: start.elapsed().as_secs_f64(),
                });
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < LABELS {
                break;
            }
            digits[k] = 0;
        }
    }
}
