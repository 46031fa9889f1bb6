use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{PayoffMatrix, StepOutcome, Vertex};
use crate::graph::BipartiteGraph;
use crate::harness::stats::wilson_lower_bound;
use crate::harness::thread_pool;
use crate::rng::SeedMaterial;

/// Events and ratios of the stable-configuration monitor at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSnapshot {
    pub step: u64,
    pub epsilon: f64,
    /// Every representative has `V_i >= 2 eps n`.
    pub h1: bool,
    /// Every vertex has `alpha_i >= eps`.
    pub h2: bool,
    /// Every pair across components has `V_ij <= sqrt(n)`.
    pub h3: bool,
    /// `alpha_i = V_i / V_pi(i)`, states first then signals.
    pub alpha: Vec<f64>,
    /// Representative of every vertex, states first then signals.
    pub projection: Vec<Vertex>,
}

impl MonitorSnapshot {
    pub fn all_hold(&self) -> bool {
        self.h1 && self.h2 && self.h3
    }
}

/// What happened to a monitored configuration after it was started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorOutcome {
    pub start: MonitorSnapshot,
    /// Cross-component counts never changed and every alpha ratio stayed
    /// within `(1 - eps, 1 + eps)` of its starting value.
    pub retained: bool,
    pub cross_component_changed: bool,
    pub alpha_drifted: bool,
    /// Some representative fell below `eps k` at a later step `k`.
    pub hub_fell_behind: bool,
    /// First step at which retention was lost.
    pub broken_at: Option<u64>,
    pub last_step: u64,
}

fn vertex_index(v: Vertex, m1: usize) -> usize {
    match v {
        Vertex::State(i) => i,
        Vertex::Signal(j) => m1 + j,
    }
}

fn projection(target: &BipartiteGraph) -> Result<Vec<Vertex>> {
    if !target.satisfies_property_p() {
        return Err(Error::InvalidInput(
            "target graph must give every component a single state or signal and leave no vertex isolated".into(),
        ));
    }
    let (m1, m2) = (target.num_states, target.num_signals);
    let mut pi = vec![Vertex::State(0); m1 + m2];
    for c in target.components() {
        let hub = c.hub().expect("star condition checked above");
        for &i in &c.states {
            pi[i] = hub;
        }
        for &j in &c.signals {
            pi[m1 + j] = hub;
        }
    }
    Ok(pi)
}

fn check_inputs(game: &PayoffMatrix, target: &BipartiteGraph, epsilon: f64) -> Result<()> {
    let (m1, m2) = (game.num_states(), game.num_signals());
    if target.num_states != m1 || target.num_signals != m2 {
        return Err(Error::DimensionMismatch(format!(
            "game is {m1}x{m2} but target graph is {}x{}",
            target.num_states, target.num_signals
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0 / m1 as f64) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0, 1/{m1}), got {epsilon}")));
    }
    Ok(())
}

fn vertices(m1: usize, m2: usize) -> impl Iterator<Item = Vertex> {
    (0..m1).map(Vertex::State).chain((0..m2).map(Vertex::Signal))
}

fn alphas(game: &PayoffMatrix, pi: &[Vertex]) -> Vec<f64> {
    let m1 = game.num_states();
    vertices(m1, game.num_signals())
        .map(|v| game.vertex_total(v) as f64 / game.vertex_total(pi[vertex_index(v, m1)]) as f64)
        .collect()
}

fn snapshot(game: &PayoffMatrix, pi: &[Vertex], epsilon: f64, n: u64) -> MonitorSnapshot {
    let (m1, m2) = (game.num_states(), game.num_signals());
    let nf = n as f64;
    let h1 = vertices(m1, m2)
        .filter(|&v| pi[vertex_index(v, m1)] == v)
        .all(|v| game.vertex_total(v) as f64 >= 2.0 * epsilon * nf);
    let alpha = alphas(game, pi);
    let h2 = alpha.iter().all(|&a| a >= epsilon);
    let mut h3 = true;
    for i in 0..m1 {
        for j in 0..m2 {
            if pi[i] != pi[m1 + j] && game.count(i, j) as f64 > nf.sqrt() {
                h3 = false;
            }
        }
    }
    MonitorSnapshot {
        step: n,
        epsilon,
        h1,
        h2,
        h3,
        alpha,
        projection: pi.to_vec(),
    }
}

/// Evaluates the three events and all alpha ratios at step `n`.
pub fn monitor_stable_config(
    game: &PayoffMatrix,
    target: &BipartiteGraph,
    epsilon: f64,
    n: u64,
) -> Result<MonitorSnapshot> {
    check_inputs(game, target, epsilon)?;
    let pi = projection(target)?;
    Ok(snapshot(game, &pi, epsilon, n))
}

/// First step `n` with `2 eps n >= max_i V_i`, where monitoring a freshly
/// built game stops being vacuous.
pub fn first_monitor_step(game: &PayoffMatrix, epsilon: f64) -> u64 {
    let (m1, m2) = (game.num_states(), game.num_signals());
    let max_v = vertices(m1, m2).map(|v| game.vertex_total(v)).max().unwrap_or(0);
    (max_v as f64 / (2.0 * epsilon)).ceil() as u64
}

/// Tracks retention of a configuration from a starting step onward. Feed it
/// every round through [`StableConfigMonitor::observe`].
#[derive(Debug, Clone)]
pub struct StableConfigMonitor {
    epsilon: f64,
    projection: Vec<Vertex>,
    start: MonitorSnapshot,
    cross_component_changed: bool,
    alpha_drifted: bool,
    hub_fell_behind: bool,
    broken_at: Option<u64>,
    last_step: u64,
}

impl StableConfigMonitor {
    pub fn start(game: &PayoffMatrix, n: u64, target: &BipartiteGraph, epsilon: f64) -> Result<Self> {
        check_inputs(game, target, epsilon)?;
        let projection = projection(target)?;
        let start = snapshot(game, &projection, epsilon, n);
        Ok(Self {
            epsilon,
            projection,
            start,
            cross_component_changed: false,
            alpha_drifted: false,
            hub_fell_behind: false,
            broken_at: None,
            last_step: n,
        })
    }

    pub fn start_snapshot(&self) -> &MonitorSnapshot {
        &self.start
    }

    /// Records round `n`, already applied to `game`. Counts only move on
    /// success, so failed rounds cost nothing beyond the hub check.
    pub fn observe(&mut self, game: &PayoffMatrix, outcome: &StepOutcome, n: u64) {
        self.last_step = n;
        let m1 = game.num_states();
        let mut broken = false;
        if outcome.success {
            let a = self.projection[outcome.state];
            let b = self.projection[m1 + outcome.signal];
            if a != b && !self.cross_component_changed {
                self.cross_component_changed = true;
                broken = true;
            }
            if !self.alpha_drifted {
                let now = alphas(game, &self.projection);
                let drifted = now.iter().zip(&self.start.alpha).any(|(&a, &a0)| {
                    let r = a / a0;
                    r <= 1.0 - self.epsilon || r >= 1.0 + self.epsilon
                });
                if drifted {
                    self.alpha_drifted = true;
                    broken = true;
                }
            }
        }
        if !self.hub_fell_behind {
            let threshold = self.epsilon * n as f64;
            let behind = self
                .projection
                .iter()
                .enumerate()
                .filter(|&(k, &hub)| vertex_index(hub, m1) == k)
                .any(|(_, &hub)| (game.vertex_total(hub) as f64) < threshold);
            self.hub_fell_behind = behind;
        }
        if broken && self.broken_at.is_none() {
            self.broken_at = Some(n);
        }
    }

    pub fn retained(&self) -> bool {
        !self.cross_component_changed && !self.alpha_drifted
    }

    pub fn outcome(&self) -> MonitorOutcome {
        MonitorOutcome {
            start: self.start.clone(),
            retained: self.retained(),
            cross_component_changed: self.cross_component_changed,
            alpha_drifted: self.alpha_drifted,
            hub_fell_behind: self.hub_fell_behind,
            broken_at: self.broken_at,
            last_step: self.last_step,
        }
    }
}

/// Retention frequency over replications that all start from one game state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionStats {
    pub start_step: u64,
    pub epsilon: f64,
    pub steps: u64,
    pub replications: usize,
    pub master_seed: u64,
    pub start: MonitorSnapshot,
    pub retained: usize,
    pub frequency: f64,
    /// One-sided 95% Wilson lower bound on the retention probability.
    pub lower_bound_95: f64,
}

/// Plays `steps` further rounds from `start` in each replication, with the
/// monitor started at step `start_step`.
#[allow(clippy::too_many_arguments)]
pub fn run_retention_ensemble(
    start: &PayoffMatrix,
    target: &BipartiteGraph,
    epsilon: f64,
    start_step: u64,
    steps: u64,
    replications: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<RetentionStats> {
    if replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    let probe = StableConfigMonitor::start(start, start_step, target, epsilon)?;
    let pool = thread_pool(parallelism)?;
    let kept: Vec<bool> = pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = SeedMaterial::new(master_seed, r as u64).rng();
                let mut game = start.clone();
                let mut monitor = probe.clone();
                for k in 1..=steps {
                    let out = game.step(&mut rng);
                    monitor.observe(&game, &out, start_step + k);
                    if !monitor.retained() {
                        break;
                    }
                }
                monitor.retained()
            })
            .collect()
    });
    let retained = kept.iter().filter(|&&k| k).count();
    Ok(RetentionStats {
        start_step,
        epsilon,
        steps,
        replications,
        master_seed,
        start: probe.start,
        retained,
        frequency: retained as f64 / replications as f64,
        lower_bound_95: wilson_lower_bound(retained, replications, 1.645),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameConfig;

    fn diagonal() -> BipartiteGraph {
        BipartiteGraph::from_edges(2, 2, &[(0, 0), (1, 1)])
    }

    #[test]
    fn locked_game_satisfies_all_events() {
        let game = PayoffMatrix::from_rows(&[vec![1000, 1], vec![1, 1000]], 1).unwrap();
        let s = monitor_stable_config(&game, &diagonal(), 0.1, 2002).unwrap();
        assert!(s.h1 && s.h2 && s.h3);
        assert_eq!(s.projection[2], Vertex::State(0));
        assert_eq!(s.projection[3], Vertex::State(1));
        assert!(s.alpha.iter().all(|&a| (a - 1.0).abs() < 1e-12));
    }

    #[test]
    fn fresh_game_fails_hub_event() {
        let game = PayoffMatrix::new(GameConfig::new(2, 2)).unwrap();
        assert_eq!(first_monitor_step(&game, 0.1), 10);
        let at_start = monitor_stable_config(&game, &diagonal(), 0.1, 10).unwrap();
        assert!(at_start.h1);
        let later = monitor_stable_config(&game, &diagonal(), 0.1, 20).unwrap();
        assert!(!later.h1);
        assert!(later.h2 && later.h3);
    }

    #[test]
    fn cross_event_counts_only_cross_pairs() {
        let game = PayoffMatrix::from_rows(&[vec![1000, 50], vec![1, 1000]], 1).unwrap();
        let s = monitor_stable_config(&game, &diagonal(), 0.1, 2051).unwrap();
        assert!(!s.h3);
        let game = PayoffMatrix::from_rows(&[vec![1000, 1], vec![1, 1000]], 1).unwrap();
        let star = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 1)]);
        assert!(monitor_stable_config(&game, &star, 0.1, 2002).is_err());
    }

    #[test]
    fn rejects_bad_epsilon_and_dimensions() {
        let game = PayoffMatrix::new(GameConfig::new(2, 2)).unwrap();
        assert!(monitor_stable_config(&game, &diagonal(), 0.5, 10).is_err());
        assert!(monitor_stable_config(&game, &diagonal(), 0.0, 10).is_err());
        let g = BipartiteGraph::from_edges(3, 2, &[(0, 0), (1, 1), (2, 1)]);
        assert!(monitor_stable_config(&game, &g, 0.1, 10).is_err());
    }

    #[test]
    fn star_hub_is_signal_when_shared() {
        let game = PayoffMatrix::from_rows(&[vec![500, 1], vec![500, 1], vec![1, 1000]], 1).unwrap();
        let g = BipartiteGraph::from_edges(3, 2, &[(0, 0), (1, 0), (2, 1)]);
        let s = monitor_stable_config(&game, &g, 0.1, 2004).unwrap();
        assert_eq!(s.projection[0], Vertex::Signal(0));
        assert_eq!(s.projection[1], Vertex::Signal(0));
        assert_eq!(s.projection[2], Vertex::State(2));
        assert!(s.all_hold());
    }

    #[test]
    fn locked_start_is_usually_retained() {
        let game = PayoffMatrix::from_rows(&[vec![1000, 1], vec![1, 1000]], 1).unwrap();
        let stats = run_retention_ensemble(&game, &diagonal(), 0.1, 2002, 20_000, 40, 7, 2).unwrap();
        assert!(stats.frequency > 0.9);
        assert!(stats.lower_bound_95 > 0.0);
        let again = run_retention_ensemble(&game, &diagonal(), 0.1, 2002, 20_000, 40, 7, 1).unwrap();
        assert_eq!(stats, again);
    }
}
