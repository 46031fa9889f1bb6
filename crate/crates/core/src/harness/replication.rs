use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::game::{GameConfig, OccupationMeasure, PayoffMatrix};
use crate::graph::{BipartiteGraph, WeightMode};
use crate::harness::monitor::{MonitorOutcome, StableConfigMonitor};
use crate::rng::SeedMaterial;

/// Occupation below this is not a limit edge.
pub const LIMIT_EDGE_THRESHOLD: f64 = 1e-3;
/// Trailing fraction of the run in which a limit edge must still grow.
pub const GROWTH_WINDOW: f64 = 0.1;
/// Ratio of the geometric sampling grid.
pub const SAMPLE_RATIO: f64 = 1.5;

/// Steps `ceil(1.5^k)` up to `steps`, always ending at `steps`.
pub fn sample_grid(steps: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut k = 0;
    loop {
        let n = SAMPLE_RATIO.powi(k).ceil() as u64;
        if n >= steps {
            break;
        }
        if grid.last() != Some(&n) {
            grid.push(n);
        }
        k += 1;
    }
    if steps > 0 {
        grid.push(steps);
    }
    grid
}

/// Options beyond the game itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOptions {
    /// Epsilon of the stable-configuration monitor started at mid-run;
    /// `None` disables it.
    pub monitor_epsilon: Option<f64>,
}

impl Default for ReplicationOptions {
    fn default() -> Self {
        Self {
            monitor_epsilon: Some(0.1),
        }
    }
}

/// One seeded run of the urn process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub seed: SeedMaterial,
    pub config: GameConfig,
    pub steps: u64,
    pub sample_steps: Vec<u64>,
    pub potential_trace: Vec<f64>,
    pub tn_over_n_trace: Vec<f64>,
    /// Row-major counts at every sample step.
    pub count_trace: Vec<Vec<u64>>,
    pub terminal: PayoffMatrix,
    /// Pairs above [`LIMIT_EDGE_THRESHOLD`] that were still reinforced in the
    /// final [`GROWTH_WINDOW`] of the run.
    pub limit_graph: BipartiteGraph,
    pub property_p: bool,
    /// Some pair below the edge threshold was still reinforced at the end,
    /// so the limit graph is not settled.
    pub unresolved: bool,
    /// Pairs whose count did not change during the second half of the run.
    pub frozen_pairs: Vec<(usize, usize)>,
    /// Stable-configuration monitor started at mid-run on the graph seen
    /// there, when that graph satisfies the star condition.
    pub monitor: Option<MonitorOutcome>,
}

impl ReplicationResult {
    pub fn terminal_measure(&self) -> OccupationMeasure {
        self.terminal.occupation_measure()
    }

    pub fn terminal_potential(&self) -> f64 {
        *self.potential_trace.last().unwrap_or(&self.terminal.potential())
    }

    pub fn terminal_tn_over_n(&self) -> f64 {
        self.terminal.grand_total() as f64 / self.steps as f64
    }
}

pub fn run_replication(config: GameConfig, steps: u64, seed: SeedMaterial) -> Result<ReplicationResult> {
    run_replication_with(config, steps, seed, ReplicationOptions::default())
}

pub fn run_replication_with(
    config: GameConfig,
    steps: u64,
    seed: SeedMaterial,
    options: ReplicationOptions,
) -> Result<ReplicationResult> {
    if steps == 0 {
        return Err(crate::Error::InvalidConfig("a replication needs at least one step".into()));
    }
    let mut game = PayoffMatrix::new(config)?;
    let mut rng = seed.rng();
    let grid = sample_grid(steps);
    let half = steps / 2;
    let window_start = steps - ((steps as f64 * GROWTH_WINDOW).ceil() as u64).max(1);

    let mut potential_trace = Vec::with_capacity(grid.len());
    let mut tn_over_n_trace = Vec::with_capacity(grid.len());
    let mut count_trace = Vec::with_capacity(grid.len());
    let mut half_counts = game.counts().to_vec();
    let mut window_counts = game.counts().to_vec();
    let mut monitor: Option<StableConfigMonitor> = None;
    let mut next_sample = 0;

    for n in 1..=steps {
        let out = game.step(&mut rng);
        if let Some(m) = monitor.as_mut() {
            m.observe(&game, &out, n);
        }
        if n == half {
            half_counts.copy_from_slice(game.counts());
            if let Some(eps) = options.monitor_epsilon {
                let g = BipartiteGraph::from_measure(&game.occupation_measure(), LIMIT_EDGE_THRESHOLD, WeightMode::Efficiency);
                if g.satisfies_property_p() {
                    monitor = StableConfigMonitor::start(&game, n, &g, eps).ok();
                }
            }
        }
        if n == window_start {
            window_counts.copy_from_slice(game.counts());
        }
        if grid.get(next_sample) == Some(&n) {
            potential_trace.push(game.potential());
            tn_over_n_trace.push(game.grand_total() as f64 / n as f64);
            count_trace.push(game.counts().to_vec());
            next_sample += 1;
        }
    }

    let (m1, m2) = (config.num_states, config.num_signals);
    let x = game.occupation_measure();
    let mut edges = Vec::new();
    let mut unresolved = false;
    let mut frozen_pairs = Vec::new();
    for i in 0..m1 {
        for j in 0..m2 {
            let idx = i * m2 + j;
            let grew = game.counts()[idx] > window_counts[idx];
            if grew && x.get(i, j) > LIMIT_EDGE_THRESHOLD {
                edges.push((i, j));
            } else if grew {
                unresolved = true;
            }
            if game.counts()[idx] == half_counts[idx] {
                frozen_pairs.push((i, j));
            }
        }
    }
    let limit_graph = BipartiteGraph::from_edges(m1, m2, &edges);
    Ok(ReplicationResult {
        seed,
        config,
        steps,
        sample_steps: grid,
        potential_trace,
        tn_over_n_trace,
        count_trace,
        property_p: limit_graph.satisfies_property_p(),
        limit_graph,
        unresolved,
        frozen_pairs,
        monitor: monitor.map(|m| m.outcome()),
        terminal: game,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_geometric_and_ends_at_steps() {
        assert_eq!(sample_grid(20), vec![1, 2, 3, 4, 6, 8, 12, 18, 20]);
        assert_eq!(sample_grid(1), vec![1]);
        let g = sample_grid(1_000_000);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 1_000_000);
    }

    #[test]
    fn replication_is_deterministic() {
        let cfg = GameConfig::new(2, 2);
        let a = run_replication(cfg, 20_000, SeedMaterial::new(42, 3)).unwrap();
        let b = run_replication(cfg, 20_000, SeedMaterial::new(42, 3)).unwrap();
        assert_eq!(a, b);
        let c = run_replication(cfg, 20_000, SeedMaterial::new(42, 4)).unwrap();
        assert_ne!(a.terminal, c.terminal);
    }

    #[test]
    fn traces_are_aligned_with_grid() {
        let r = run_replication(GameConfig::new(3, 2), 5_000, SeedMaterial::new(1, 0)).unwrap();
        assert_eq!(r.sample_steps.len(), r.potential_trace.len());
        assert_eq!(r.sample_steps.len(), r.tn_over_n_trace.len());
        assert!((r.terminal_potential() - r.terminal.potential()).abs() < 1e-15);
        for h in &r.potential_trace {
            assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(h));
        }
    }

    #[test]
    fn frozen_pairs_are_not_limit_edges() {
        let r = run_replication(GameConfig::new(2, 2), 200_000, SeedMaterial::new(9, 0)).unwrap();
        let m2 = 2;
        let late: Vec<usize> = (0..r.sample_steps.len()).filter(|&k| r.sample_steps[k] >= r.steps / 2).collect();
        for &(i, j) in &r.frozen_pairs {
            assert!(!r.limit_graph.has_edge(i, j));
            // Count fixed while the total grows, so the share strictly falls.
            let share: Vec<f64> = late
                .iter()
                .map(|&k| {
                    let c = &r.count_trace[k];
                    c[i * m2 + j] as f64 / c.iter().sum::<u64>() as f64
                })
                .collect();
            assert!(share.windows(2).all(|w| w[1] < w[0]));
        }
        assert!(r.limit_graph.edge_count() >= 2);
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(run_replication(GameConfig::new(2, 2), 0, SeedMaterial::new(0, 0)).is_err());
    }
}
