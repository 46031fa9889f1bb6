//! Exact state of the urn process and the pointwise functionals on the simplex.
//!
//! The accumulated payoffs are kept as integers; every real-valued quantity
//! is recomputed from them on demand so that long runs do not drift.
//!
//! Vertices of the state/signal graph are addressed through [`Vertex`]. Many
//! sums below run over the symmetrized index set, where a state and a signal
//! play the same role: `x_{ij} = x_{ji}` and the marginal of a vertex is the
//! sum of its incident weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions and initial urn contents of a game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub num_states: usize,
    pub num_signals: usize,
    /// Initial count of every state/signal pair. Rewards are always 1.
    pub initial_weight: u64,
}

impl GameConfig {
    pub fn new(num_states: usize, num_signals: usize) -> Self {
        Self {
            num_states,
            num_signals,
            initial_weight: 1,
        }
    }

    pub fn with_initial_weight(mut self, weight: u64) -> Self {
        self.initial_weight = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_signals == 0 {
            return Err(Error::InvalidConfig(format!(
                "game needs at least one state and one signal, got {}x{}",
                self.num_states, self.num_signals
            )));
        }
        if self.initial_weight == 0 {
            return Err(Error::InvalidConfig(
                "initial weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A vertex of the bipartite state/signal graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Vertex {
    State(usize),
    Signal(usize),
}

impl std::fmt::Display for Vertex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Vertex::State(i) => write!(f, "state {i}"),
            Vertex::Signal(j) => write!(f, "signal {j}"),
        }
    }
}

/// Result of one round of play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub state: usize,
    pub signal: usize,
    pub act: usize,
    pub success: bool,
}

/// Accumulated rewards `V(n, i, j)` of every state/signal pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PayoffMatrixRepr", into = "PayoffMatrixRepr")]
pub struct PayoffMatrix {
    num_states: usize,
    num_signals: usize,
    initial_weight: u64,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
    col_sums: Vec<u64>,
    total: u64,
    rounds: u64,
}

#[derive(Serialize, Deserialize)]
struct PayoffMatrixRepr {
    num_states: usize,
    num_signals: usize,
    initial_weight: u64,
    #[serde(default)]
    rounds: u64,
    counts: Vec<Vec<u64>>,
}

impl TryFrom<PayoffMatrixRepr> for PayoffMatrix {
    type Error = Error;

    fn try_from(r: PayoffMatrixRepr) -> Result<Self> {
        if r.counts.len() != r.num_states || r.counts.iter().any(|row| row.len() != r.num_signals)
        {
            return Err(Error::DimensionMismatch(format!(
                "counts must be {}x{}",
                r.num_states, r.num_signals
            )));
        }
        let flat = r.counts.into_iter().flatten().collect();
        let mut game = PayoffMatrix::from_counts(r.num_states, r.num_signals, flat, r.initial_weight)?;
        game.rounds = r.rounds;
        Ok(game)
    }
}

impl From<PayoffMatrix> for PayoffMatrixRepr {
    fn from(g: PayoffMatrix) -> Self {
        PayoffMatrixRepr {
            num_states: g.num_states,
            num_signals: g.num_signals,
            initial_weight: g.initial_weight,
            rounds: g.rounds,
            counts: g.counts.chunks(g.num_signals).map(<[u64]>::to_vec).collect(),
        }
    }
}

/// Draws an index with probability proportional to `weights`, given their sum.
fn draw_weighted<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = u64>, sum: u64) -> usize {
    let mut ticket = rng.random_range(0..sum);
    let mut last = 0;
    for (idx, w) in weights.enumerate() {
        if ticket < w {
            return idx;
        }
        ticket -= w;
        last = idx;
    }
    last
}

impl PayoffMatrix {
    pub fn new(config: GameConfig) -> Result<Self> {
        config.validate()?;
        let GameConfig {
            num_states: m1,
            num_signals: m2,
            initial_weight: w,
        } = config;
        Self::from_counts(m1, m2, vec![w; m1 * m2], w)
    }

    /// Builds a game from explicit row-major counts. Every count must be at
    /// least `initial_weight`.
    pub fn from_counts(
        num_states: usize,
        num_signals: usize,
        counts: Vec<u64>,
        initial_weight: u64,
    ) -> Result<Self> {
        GameConfig {
            num_states,
            num_signals,
            initial_weight,
        }
        .validate()?;
        if counts.len() != num_states * num_signals {
            return Err(Error::DimensionMismatch(format!(
                "expected {} counts, got {}",
                num_states * num_signals,
                counts.len()
            )));
        }
        if let Some(c) = counts.iter().find(|&&c| c < initial_weight) {
            return Err(Error::InvalidInput(format!(
                "count {c} is below the initial weight {initial_weight}"
            )));
        }
        let mut row_sums = vec![0; num_states];
        let mut col_sums = vec![0; num_signals];
        for i in 0..num_states {
            for j in 0..num_signals {
                let c = counts[i * num_signals + j];
                row_sums[i] += c;
                col_sums[j] += c;
            }
        }
        let total = row_sums.iter().sum();
        Ok(Self {
            num_states,
            num_signals,
            initial_weight,
            counts,
            row_sums,
            col_sums,
            total,
            rounds: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<u64>], initial_weight: u64) -> Result<Self> {
        let m1 = rows.len();
        let m2 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m2) {
            return Err(Error::DimensionMismatch("ragged count rows".into()));
        }
        Self::from_counts(m1, m2, rows.concat(), initial_weight)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    pub fn initial_weight(&self) -> u64 {
        self.initial_weight
    }

    pub fn config(&self) -> GameConfig {
        GameConfig {
            num_states: self.num_states,
            num_signals: self.num_signals,
            initial_weight: self.initial_weight,
        }
    }

    pub fn count(&self, state: usize, signal: usize) -> u64 {
        self.counts[state * self.num_signals + signal]
    }

    /// Row-major counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn row_sum(&self, state: usize) -> u64 {
        self.row_sums[state]
    }

    pub fn col_sum(&self, signal: usize) -> u64 {
        self.col_sums[signal]
    }

    /// Total success count of a vertex in the symmetrized notation.
    pub fn vertex_total(&self, v: Vertex) -> u64 {
        match v {
            Vertex::State(i) => self.row_sums[i],
            Vertex::Signal(j) => self.col_sums[j],
        }
    }

    pub fn grand_total(&self) -> u64 {
        self.total
    }

    /// Number of rounds played through [`PayoffMatrix::step`].
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Plays one round without reinforcing anything.
    pub fn sample_round<R: Rng + ?Sized>(&self, rng: &mut R) -> StepOutcome {
        let m2 = self.num_signals;
        let state = rng.random_range(0..self.num_states);
        let row = &self.counts[state * m2..(state + 1) * m2];
        let signal = draw_weighted(rng, row.iter().copied(), self.row_sums[state]);
        let column = (0..self.num_states).map(|i| self.counts[i * m2 + signal]);
        let act = draw_weighted(rng, column, self.col_sums[signal]);
        StepOutcome {
            state,
            signal,
            act,
            success: act == state,
        }
    }

    /// Plays one round and reinforces the used pair on success.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> StepOutcome {
        let outcome = self.sample_round(rng);
        self.apply(&outcome);
        outcome
    }

    /// Applies the reinforcement of an outcome and advances the round counter.
    pub fn apply(&mut self, outcome: &StepOutcome) {
        self.rounds += 1;
        if outcome.success {
            self.counts[outcome.state * self.num_signals + outcome.signal] += 1;
            self.row_sums[outcome.state] += 1;
            self.col_sums[outcome.signal] += 1;
            self.total += 1;
        }
    }

    pub fn occupation_measure(&self) -> OccupationMeasure {
        let t = self.total as f64;
        let weights = self.counts.iter().map(|&c| c as f64 / t).collect();
        OccupationMeasure::from_normalized(self.num_states, self.num_signals, weights)
    }

    /// `H(x_n)` evaluated from the counts; the potential is invariant under
    /// scaling so no normalization is needed.
    pub fn potential(&self) -> f64 {
        let mut h = 0.0;
        for i in 0..self.num_states {
            for j in 0..self.num_signals {
                let v = self.count(i, j) as f64;
                if v > 0.0 {
                    h += v * v / (self.row_sums[i] as f64 * self.col_sums[j] as f64);
                }
            }
        }
        h
    }

    /// Probability that the next round succeeds. Equals `H(x_n) / M1`.
    pub fn success_probability(&self) -> f64 {
        self.potential() / self.num_states as f64
    }

    /// Closed form of `E[H(x_{n+1}) - H(x_n) | F_n]`, split into its
    /// dissipative part and its boundary-correction part.
    pub fn expected_potential_increment(&self) -> PotentialIncrement {
        let m1 = self.num_states;
        let m2 = self.num_signals;
        let total_of = |v: Vertex| self.vertex_total(v) as f64;
        let count = |a: Vertex, b: Vertex| -> f64 {
            match (a, b) {
                (Vertex::State(i), Vertex::Signal(j)) | (Vertex::Signal(j), Vertex::State(i)) => {
                    self.count(i, j) as f64
                }
                _ => 0.0,
            }
        };

        let mut p = 0.0;
        for v in vertices(m1, m2) {
            let tv = total_of(v);
            let nbrs: Vec<Vertex> = neighbours(v, m1, m2).collect();
            for &a in &nbrs {
                let va = count(v, a);
                let ya = va / (tv * total_of(a));
                for &b in &nbrs {
                    let vb = count(v, b);
                    let yb = vb / (tv * total_of(b));
                    p += va * vb / (tv + 1.0) * (ya - yb).powi(2);
                }
            }
        }
        p *= 0.5;

        let mut q = 0.0;
        for i in 0..m1 {
            let ri = self.row_sums[i] as f64;
            for j in 0..m2 {
                let cj = self.col_sums[j] as f64;
                let v = self.count(i, j) as f64;
                q += v * v / (ri * cj * (ri + 1.0) * (cj + 1.0)) * (1.0 - v / ri) * (1.0 - v / cj);
            }
        }

        let scale = 1.0 / m1 as f64;
        let p_term = p * scale;
        let q_term = q * scale;
        PotentialIncrement {
            total: p_term + q_term,
            p_term,
            q_term,
        }
    }
}

/// Decomposition of the expected one-step change of the potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialIncrement {
    pub total: f64,
    pub p_term: f64,
    pub q_term: f64,
}

pub(crate) fn vertices(m1: usize, m2: usize) -> impl Iterator<Item = Vertex> {
    (0..m1).map(Vertex::State).chain((0..m2).map(Vertex::Signal))
}

pub(crate) fn neighbours(v: Vertex, m1: usize, m2: usize) -> Box<dyn Iterator<Item = Vertex>> {
    match v {
        Vertex::State(_) => Box::new((0..m2).map(Vertex::Signal)),
        Vertex::Signal(_) => Box::new((0..m1).map(Vertex::State)),
    }
}

/// A point of the simplex: normalized weights of the state/signal pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OccupationRepr", into = "OccupationRepr")]
pub struct OccupationMeasure {
    num_states: usize,
    num_signals: usize,
    weights: Vec<f64>,
    state_marginals: Vec<f64>,
    signal_marginals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct OccupationRepr {
    num_states: usize,
    num_signals: usize,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<OccupationRepr> for OccupationMeasure {
    type Error = Error;

    fn try_from(r: OccupationRepr) -> Result<Self> {
        if r.weights.len() != r.num_states || r.weights.iter().any(|row| row.len() != r.num_signals)
        {
            return Err(Error::DimensionMismatch(format!(
                "weights must be {}x{}",
                r.num_states, r.num_signals
            )));
        }
        OccupationMeasure::new(r.num_states, r.num_signals, r.weights.concat())
    }
}

impl From<OccupationMeasure> for OccupationRepr {
    fn from(x: OccupationMeasure) -> Self {
        OccupationRepr {
            num_states: x.num_states,
            num_signals: x.num_signals,
            weights: x.rows(),
        }
    }
}

/// Input weights may deviate from unit mass by this much before they are
/// rejected; accepted inputs are renormalized exactly.
pub const MASS_TOLERANCE: f64 = 1e-9;

impl OccupationMeasure {
    /// Validates and renormalizes row-major weights.
    pub fn new(num_states: usize, num_signals: usize, weights: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_signals == 0 {
            return Err(Error::InvalidInput("empty simplex".into()));
        }
        if weights.len() != num_states * num_signals {
            return Err(Error::DimensionMismatch(format!(
                "expected {} weights, got {}",
                num_states * num_signals,
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidInput(format!("weight {w} is negative or not finite")));
        }
        let mass: f64 = weights.iter().sum();
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidInput(format!("weights sum to {mass}, not 1")));
        }
        let weights = weights.into_iter().map(|w| w / mass).collect();
        Ok(Self::from_normalized(num_states, num_signals, weights))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m1 = rows.len();
        let m2 = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m2) {
            return Err(Error::DimensionMismatch("ragged weight rows".into()));
        }
        Self::new(m1, m2, rows.concat())
    }

    /// Normalizes arbitrary nonnegative counts (zeros allowed).
    pub fn from_counts(num_states: usize, num_signals: usize, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidInput("all counts are zero".into()));
        }
        if counts.len() != num_states * num_signals {
            return Err(Error::DimensionMismatch("count grid has the wrong size".into()));
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self::from_normalized(num_states, num_signals, weights))
    }

    pub fn uniform(num_states: usize, num_signals: usize) -> Self {
        let w = 1.0 / (num_states * num_signals) as f64;
        Self::from_normalized(num_states, num_signals, vec![w; num_states * num_signals])
    }

    pub(crate) fn from_normalized(num_states: usize, num_signals: usize, weights: Vec<f64>) -> Self {
        let mut state_marginals = vec![0.0; num_states];
        let mut signal_marginals = vec![0.0; num_signals];
        for i in 0..num_states {
            for j in 0..num_signals {
                let w = weights[i * num_signals + j];
                state_marginals[i] += w;
                signal_marginals[j] += w;
            }
        }
        Self {
            num_states,
            num_signals,
            weights,
            state_marginals,
            signal_marginals,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    pub fn get(&self, state: usize, signal: usize) -> f64 {
        self.weights[state * self.num_signals + signal]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.num_signals).map(<[f64]>::to_vec).collect()
    }

    pub fn state_marginal(&self, state: usize) -> f64 {
        self.state_marginals[state]
    }

    pub fn signal_marginal(&self, signal: usize) -> f64 {
        self.signal_marginals[signal]
    }

    pub fn marginal(&self, v: Vertex) -> f64 {
        match v {
            Vertex::State(i) => self.state_marginals[i],
            Vertex::Signal(j) => self.signal_marginals[j],
        }
    }

    /// Symmetrized weight `x_{ab}`; zero for two states or two signals.
    pub fn pair_weight(&self, a: Vertex, b: Vertex) -> f64 {
        match (a, b) {
            (Vertex::State(i), Vertex::Signal(j)) | (Vertex::Signal(j), Vertex::State(i)) => {
                self.get(i, j)
            }
            _ => 0.0,
        }
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> {
        vertices(self.num_states, self.num_signals)
    }

    /// Neighbours `k` of `v` with `x_{vk} > 0`, paired with that weight.
    pub fn support_of(&self, v: Vertex) -> Vec<(Vertex, f64)> {
        neighbours(v, self.num_states, self.num_signals)
            .map(|k| (k, self.pair_weight(v, k)))
            .filter(|&(_, w)| w > 0.0)
            .collect()
    }

    /// True when every state and signal has positive marginal.
    pub fn is_interior(&self) -> bool {
        self.state_marginals.iter().chain(&self.signal_marginals).all(|&m| m > 0.0)
    }

    pub(crate) fn require_interior(&self, what: &str) -> Result<()> {
        match self.vertices().find(|&v| self.marginal(v) <= 0.0) {
            Some(v) => Err(Error::Domain(format!("{what} is undefined: {v} has zero marginal"))),
            None => Ok(()),
        }
    }

    /// `y_{ij} = x_{ij} / (x_i x_j)`.
    pub fn efficiency(&self, state: usize, signal: usize) -> Result<f64> {
        let (xi, xj) = (self.state_marginals[state], self.signal_marginals[signal]);
        if xi <= 0.0 || xj <= 0.0 {
            return Err(Error::Domain(format!(
                "efficiency of ({state}, {signal}) needs positive marginals, got {xi} and {xj}"
            )));
        }
        Ok(self.get(state, signal) / (xi * xj))
    }

    /// Efficiency of a symmetrized pair; caller guarantees positive marginals.
    pub(crate) fn pair_efficiency(&self, a: Vertex, b: Vertex) -> f64 {
        self.pair_weight(a, b) / (self.marginal(a) * self.marginal(b))
    }

    /// `N_v = sum_k (x_{vk}/x_v) y_{vk}`, the weighted mean efficiency at `v`.
    pub fn vertex_efficiency(&self, v: Vertex) -> Result<f64> {
        let xv = self.marginal(v);
        if xv <= 0.0 {
            return Err(Error::Domain(format!("vertex efficiency of {v} needs a positive marginal")));
        }
        Ok(self
            .support_of(v)
            .into_iter()
            .map(|(k, w)| w / xv * self.pair_efficiency(v, k))
            .sum())
    }

    /// Communication potential `H(x)`, summing only over supported pairs.
    pub fn potential(&self) -> f64 {
        let mut h = 0.0;
        for i in 0..self.num_states {
            for j in 0..self.num_signals {
                let w = self.get(i, j);
                if w > 0.0 {
                    h += w * w / (self.state_marginals[i] * self.signal_marginals[j]);
                }
            }
        }
        h
    }

    /// Dissipation `p(x)`, the rate of increase of `H` along the mean-field
    /// flow, as the triple sum over the symmetrized index set.
    pub fn dissipation(&self) -> Result<f64> {
        self.require_interior("dissipation")?;
        let mut p = 0.0;
        for v in self.vertices() {
            let xv = self.marginal(v);
            let support = self.support_of(v);
            for &(a, wa) in &support {
                let ya = self.pair_efficiency(v, a);
                for &(b, wb) in &support {
                    let yb = self.pair_efficiency(v, b);
                    p += wa * wb / xv * (ya - yb).powi(2);
                }
            }
        }
        Ok(0.5 * p)
    }
}
