//! Brute-force reference computations.
//!
//! These enumerate the outcome distribution of a single round directly from
//! the urn contents. They share no code with the closed forms in
//! [`crate::game`] and exist to check them.

use crate::game::PayoffMatrix;

/// Potential of a raw row-major count grid, `sum V_ij^2 / (R_i C_j)`.
fn potential_of_counts(m1: usize, m2: usize, counts: &[u64]) -> f64 {
    let rows: Vec<f64> = (0..m1)
        .map(|i| counts[i * m2..(i + 1) * m2].iter().sum::<u64>() as f64)
        .collect();
    let cols: Vec<f64> = (0..m2)
        .map(|j| (0..m1).map(|i| counts[i * m2 + j]).sum::<u64>() as f64)
        .collect();
    let mut h = 0.0;
    for i in 0..m1 {
        for j in 0..m2 {
            let v = counts[i * m2 + j] as f64;
            if v > 0.0 {
                h += v * v / (rows[i] * cols[j]);
            }
        }
    }
    h
}

/// Every `(state, signal, act)` triple with its probability.
pub fn outcome_distribution(game: &PayoffMatrix) -> Vec<((usize, usize, usize), f64)> {
    let (m1, m2) = (game.num_states(), game.num_signals());
    let counts = game.counts();
    let mut out = Vec::with_capacity(m1 * m1 * m2);
    for s in 0..m1 {
        let row: u64 = counts[s * m2..(s + 1) * m2].iter().sum();
        for j in 0..m2 {
            let col: u64 = (0..m1).map(|i| counts[i * m2 + j]).sum();
            let p_signal = counts[s * m2 + j] as f64 / row as f64;
            for a in 0..m1 {
                let p_act = counts[a * m2 + j] as f64 / col as f64;
                out.push(((s, j, a), p_signal * p_act / m1 as f64));
            }
        }
    }
    out
}

/// Probability that the next round succeeds, by enumeration.
pub fn success_probability(game: &PayoffMatrix) -> f64 {
    outcome_distribution(game)
        .into_iter()
        .filter(|((s, _, a), _)| s == a)
        .map(|(_, p)| p)
        .sum()
}

/// `E[H(x_{n+1}) - H(x_n) | F_n]` by summing over every successful outcome;
/// failures leave the state, and hence `H`, unchanged.
pub fn expected_potential_increment(game: &PayoffMatrix) -> f64 {
    let (m1, m2) = (game.num_states(), game.num_signals());
    let h0 = potential_of_counts(m1, m2, game.counts());
    let mut next = game.counts().to_vec();
    let mut expectation = 0.0;
    for ((s, j, a), p) in outcome_distribution(game) {
        if s != a {
            continue;
        }
        next[s * m2 + j] += 1;
        expectation += p * (potential_of_counts(m1, m2, &next) - h0);
        next[s * m2 + j] -= 1;
    }
    expectation
}
