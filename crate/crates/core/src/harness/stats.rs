use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::rng::SeedMaterial;

/// Fewest traces the submartingale test accepts.
pub const MIN_TRACES: usize = 50;
/// A window is flagged when its mean increment lies this many standard
/// errors below zero.
pub const DRIFT_Z: f64 = 3.0;
/// Largest fraction of flagged windows that still passes.
pub const MAX_NEGATIVE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDrift {
    pub window: usize,
    pub mean: f64,
    pub standard_error: f64,
    pub significantly_negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmartingaleReport {
    pub traces: usize,
    pub windows: Vec<WindowDrift>,
    pub negative_windows: usize,
    pub negative_fraction: f64,
    pub passed: bool,
}

/// Checks traces sampled on a common grid for significantly negative mean
/// increments between consecutive samples.
pub fn submartingale_test(traces: &[Vec<f64>]) -> Result<SubmartingaleReport> {
    if traces.len() < MIN_TRACES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_TRACES} traces, got {}",
            traces.len()
        )));
    }
    let len = traces[0].len();
    if traces.iter().any(|t| t.len() != len) {
        return Err(Error::DimensionMismatch("traces must share one sample grid".into()));
    }
    if len < 2 {
        return Err(Error::InsufficientData("traces need at least two samples".into()));
    }
    let r = traces.len() as f64;
    let windows: Vec<WindowDrift> = (0..len - 1)
        .map(|w| {
            let d: Vec<f64> = traces.iter().map(|t| t[w + 1] - t[w]).collect();
            let mean = d.iter().sum::<f64>() / r;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let standard_error = (var / r).sqrt();
            WindowDrift {
                window: w,
                mean,
                standard_error,
                significantly_negative: mean < -DRIFT_Z * standard_error,
            }
        })
        .collect();
    let negative_windows = windows.iter().filter(|w| w.significantly_negative).count();
    let negative_fraction = negative_windows as f64 / windows.len() as f64;
    Ok(SubmartingaleReport {
        traces: traces.len(),
        windows,
        negative_windows,
        negative_fraction,
        passed: negative_fraction <= MAX_NEGATIVE_FRACTION,
    })
}

/// `exp(-lambda^2 / (2 sum gamma_k^2))`, the tail bound for the running
/// maximum of a martingale with increments bounded by `gamma_k`.
pub fn azuma_bound(increment_bounds: &[f64], lambda: f64) -> Result<f64> {
    if increment_bounds.is_empty() {
        return Err(Error::InvalidInput("increment bounds must not be empty".into()));
    }
    if increment_bounds.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidInput("increment bounds must be positive and finite".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let s: f64 = increment_bounds.iter().map(|g| g * g).sum();
    if s == 0.0 {
        return Err(Error::InvalidInput("sum of squared bounds is zero".into()));
    }
    Ok((-lambda * lambda / (2.0 * s)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaCheck {
    pub lambda: f64,
    pub terms: usize,
    pub trials: usize,
    pub bound: f64,
    pub exceedance: f64,
    pub standard_error: f64,
    /// Exceedance at most the bound plus two standard errors.
    pub within: bool,
}

/// Simulates `sum_k s_k gamma_k` with fair signs `s_k` and records how
/// often its running maximum reaches `lambda`.
pub fn azuma_check(increment_bounds: &[f64], lambda: f64, trials: usize, seed: SeedMaterial) -> Result<AzumaCheck> {
    let bound = azuma_bound(increment_bounds, lambda)?;
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let mut hits = 0usize;
    for _ in 0..trials {
        let mut m = 0.0;
        for &g in increment_bounds {
            m += if rng.random::<bool>() { g } else { -g };
            if m >= lambda {
                hits += 1;
                break;
            }
        }
    }
    let exceedance = hits as f64 / trials as f64;
    let standard_error = (exceedance * (1.0 - exceedance) / trials as f64).sqrt();
    Ok(AzumaCheck {
        lambda,
        terms: increment_bounds.len(),
        trials,
        bound,
        exceedance,
        standard_error,
        within: exceedance <= bound + 2.0 * standard_error,
    })
}

/// Success frequency of `rounds` plays of a fixed game state, with no
/// reinforcement between them.
pub fn frozen_replay_success(game: &PayoffMatrix, rounds: usize, seed: SeedMaterial) -> f64 {
    let mut rng = seed.rng();
    let wins = (0..rounds).filter(|_| game.sample_round(&mut rng).success).count();
    wins as f64 / rounds.max(1) as f64
}

/// One-sided Wilson score lower bound for `k` successes in `n` trials.
pub fn wilson_lower_bound(k: usize, n: usize, z: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).max(0.0)
}
