use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::harness::census::{limit_graph_census, Census};
use crate::harness::replication::{run_replication_with, ReplicationOptions, ReplicationResult};
use crate::harness::thread_pool;
use crate::rng::SeedMaterial;

/// Per-sample means across replications, plus terminal statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub sample_steps: Vec<u64>,
    pub mean_potential: Vec<f64>,
    pub sd_potential: Vec<f64>,
    pub mean_tn_over_n: Vec<f64>,
    pub terminal_mean_potential: f64,
    pub terminal_mean_tn_over_n: f64,
    /// Largest `|T_n/n - H(x_n)/M1|` at termination.
    pub terminal_max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    /// Replications whose mid-run graph had the star property.
    pub started: usize,
    pub retained: usize,
    pub retention_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub config: GameConfig,
    pub steps: u64,
    pub replications: usize,
    pub master_seed: u64,
    pub census: Census,
    pub traces: TraceSummary,
    pub monitor: MonitorSummary,
    #[serde(skip)]
    pub results: Vec<ReplicationResult>,
}

impl EnsembleStats {
    pub fn from_results(config: GameConfig, steps: u64, master_seed: u64, results: Vec<ReplicationResult>) -> Self {
        let m1 = config.num_states as f64;
        let r = results.len() as f64;
        let sample_steps = results.first().map(|x| x.sample_steps.clone()).unwrap_or_default();
        let k = sample_steps.len();
        let mut mean_potential = vec![0.0; k];
        let mut mean_tn_over_n = vec![0.0; k];
        for res in &results {
            for s in 0..k {
                mean_potential[s] += res.potential_trace[s] / r;
                mean_tn_over_n[s] += res.tn_over_n_trace[s] / r;
            }
        }
        let sd_potential = (0..k)
            .map(|s| {
                let ss: f64 = results.iter().map(|x| (x.potential_trace[s] - mean_potential[s]).powi(2)).sum();
                if results.len() > 1 {
                    (ss / (r - 1.0)).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let terminal_max_gap = results
            .iter()
            .map(|x| (x.terminal_tn_over_n() - x.terminal_potential() / m1).abs())
            .fold(0.0, f64::max);
        let started = results.iter().filter(|x| x.monitor.is_some()).count();
        let retained = results
            .iter()
            .filter(|x| x.monitor.as_ref().is_some_and(|m| m.retained))
            .count();
        Self {
            config,
            steps,
            replications: results.len(),
            master_seed,
            census: limit_graph_census(&results),
            traces: TraceSummary {
                terminal_mean_potential: mean_potential.last().copied().unwrap_or(0.0),
                terminal_mean_tn_over_n: mean_tn_over_n.last().copied().unwrap_or(0.0),
                sample_steps,
                mean_potential,
                sd_potential,
                mean_tn_over_n,
                terminal_max_gap,
            },
            monitor: MonitorSummary {
                started,
                retained,
                retention_rate: (started > 0).then(|| retained as f64 / started as f64),
            },
            results,
        }
    }

    pub fn potential_traces(&self) -> Vec<Vec<f64>> {
        self.results.iter().map(|r| r.potential_trace.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Runs replications `0..replications` on streams of `master_seed`. The
/// output does not depend on `parallelism`.
pub fn run_ensemble(
    config: GameConfig,
    steps: u64,
    replications: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<EnsembleStats> {
    run_ensemble_with(config, steps, replications, master_seed, parallelism, ReplicationOptions::default())
}

pub fn run_ensemble_with(
    config: GameConfig,
    steps: u64,
    replications: usize,
    master_seed: u64,
    parallelism: usize,
    options: ReplicationOptions,
) -> Result<EnsembleStats> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    let pool = thread_pool(parallelism)?;
    let results = pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|r| run_replication_with(config, steps, SeedMaterial::new(master_seed, r as u64), options))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EnsembleStats::from_results(config, steps, master_seed, results))
}

/// Writes one replication's trace as CSV with columns
/// `n, x_0_0, ..., H, Tn_over_n`.
pub fn write_trace_csv<W: Write>(result: &ReplicationResult, mut out: W) -> std::io::Result<()> {
    let (m1, m2) = (result.config.num_states, result.config.num_signals);
    let mut header = vec!["n".to_string()];
    for i in 0..m1 {
        for j in 0..m2 {
            header.push(format!("x_{i}_{j}"));
        }
    }
    header.push("H".into());
    header.push("Tn_over_n".into());
    writeln!(out, "{}", header.join(","))?;
    for k in 0..result.sample_steps.len() {
        let counts = &result.count_trace[k];
        let total: u64 = counts.iter().sum();
        write!(out, "{}", result.sample_steps[k])?;
        for &c in counts {
            write!(out, ",{}", c as f64 / total as f64)?;
        }
        writeln!(out, ",{},{}", result.potential_trace[k], result.tn_over_n_trace[k])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ensemble_independent_of_parallelism() {
        let cfg = GameConfig::new(2, 2);
        let a = run_ensemble(cfg, 5_000, 16, 11, 1).unwrap();
        let b = run_ensemble(cfg, 5_000, 16, 11, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.census.classes.iter().map(|c| c.count).sum::<usize>(), 16);
    }

    #[test]
    fn json_round_trip_drops_results() {
        let s = run_ensemble(GameConfig::new(2, 2), 2_000, 4, 1, 1).unwrap();
        let json = s.to_json().unwrap();
        let back: EnsembleStats = serde_json::from_str(&json).unwrap();
        assert_eq!(back.census, s.census);
        assert!(back.results.is_empty());
    }

    #[test]
    fn trace_csv_has_one_row_per_sample() {
        let s = run_ensemble(GameConfig::new(2, 2), 1_000, 1, 1, 1).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&s.results[0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.results[0].sample_steps.len() + 1);
        assert!(text.starts_with("n,x_0_0,x_0_1,x_1_0,x_1_1,H,Tn_over_n\n"));
    }

    #[test]
    fn zero_replications_rejected() {
        assert!(run_ensemble(GameConfig::new(2, 2), 10, 0, 1, 1).is_err());
    }
}
