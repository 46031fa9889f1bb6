//! Static symmetrized sender/receiver game and its link to the simplex.
//!
//! A strategy is a pair `(P, Q)`: `P` is the `M1 x M2` sender matrix (state
//! to signal) and `Q` the `M2 x M1` receiver matrix (signal to act). The map
//! [`psi`] sends an interior point `x` to the conditional frequencies
//! `p_ij = x_ij / x_i`, `q_ji = x_ij / x_j`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::OccupationMeasure;

/// Default pattern tolerance for exact (analytic) inputs.
pub const ANALYTIC_TOL: f64 = 1e-9;
/// Default pattern tolerance for inputs estimated from simulations.
pub const EMPIRICAL_TOL: f64 = 1e-2;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrategyRepr", into = "StrategyRepr")]
pub struct StrategyPair {
    num_states: usize,
    num_signals: usize,
    sender: Vec<f64>,
    receiver: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StrategyRepr {
    sender: Vec<Vec<f64>>,
    receiver: Vec<Vec<f64>>,
}

impl TryFrom<StrategyRepr> for StrategyPair {
    type Error = Error;

    fn try_from(r: StrategyRepr) -> Result<Self> {
        StrategyPair::from_rows(&r.sender, &r.receiver)
    }
}

impl From<StrategyPair> for StrategyRepr {
    fn from(s: StrategyPair) -> Self {
        StrategyRepr {
            sender: s.sender_rows(),
            receiver: s.receiver_rows(),
        }
    }
}

fn check_stochastic(name: &str, rows: usize, cols: usize, m: &[f64]) -> Result<()> {
    if m.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!("{name} must be {rows}x{cols}")));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidInput(format!("{name} has entry {v}")));
    }
    for (r, row) in m.chunks(cols).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidInput(format!("{name} row {r} sums to {s}")));
        }
    }
    Ok(())
}

impl StrategyPair {
    /// Row-major `sender` (`M1 x M2`) and `receiver` (`M2 x M1`).
    pub fn new(num_states: usize, num_signals: usize, sender: Vec<f64>, receiver: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_signals == 0 {
            return Err(Error::InvalidInput("empty strategy".into()));
        }
        check_stochastic("sender", num_states, num_signals, &sender)?;
        check_stochastic("receiver", num_signals, num_states, &receiver)?;
        Ok(Self {
            num_states,
            num_signals,
            sender,
            receiver,
        })
    }

    pub fn from_rows(sender: &[Vec<f64>], receiver: &[Vec<f64>]) -> Result<Self> {
        let m1 = sender.len();
        let m2 = sender.first().map_or(0, Vec::len);
        if sender.iter().any(|r| r.len() != m2) || receiver.len() != m2 || receiver.iter().any(|r| r.len() != m1) {
            return Err(Error::DimensionMismatch(format!(
                "sender must be {m1}x{m2} and receiver {m2}x{m1}"
            )));
        }
        Self::new(m1, m2, sender.concat(), receiver.concat())
    }

    /// Uniformly random row-stochastic pair (Dirichlet(1) rows).
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_signals: usize, rng: &mut R) -> Self {
        let mut row = |len: usize| -> Vec<f64> {
            let e: Vec<f64> = (0..len).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        };
        let sender = (0..num_states).flat_map(|_| row(num_signals)).collect();
        let receiver = (0..num_signals).flat_map(|_| row(num_states)).collect();
        Self {
            num_states,
            num_signals,
            sender,
            receiver,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_signals(&self) -> usize {
        self.num_signals
    }

    /// `p_ij`: probability of sending signal `j` in state `i`.
    pub fn p(&self, state: usize, signal: usize) -> f64 {
        self.sender[state * self.num_signals + signal]
    }

    /// `q_ji`: probability of choosing act `i` on signal `j`.
    pub fn q(&self, signal: usize, act: usize) -> f64 {
        self.receiver[signal * self.num_states + act]
    }

    pub fn sender_rows(&self) -> Vec<Vec<f64>> {
        self.sender.chunks(self.num_signals).map(<[f64]>::to_vec).collect()
    }

    pub fn receiver_rows(&self) -> Vec<Vec<f64>> {
        self.receiver.chunks(self.num_states).map(<[f64]>::to_vec).collect()
    }

    /// Sender column `j` (over states) or receiver column `i` (over signals).
    fn sender_column(&self, j: usize) -> Vec<f64> {
        (0..self.num_states).map(|i| self.p(i, j)).collect()
    }

    fn receiver_column(&self, i: usize) -> Vec<f64> {
        (0..self.num_signals).map(|j| self.q(j, i)).collect()
    }

    fn columns(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.num_signals)
            .map(|j| self.sender_column(j))
            .chain((0..self.num_states).map(|i| self.receiver_column(i)))
    }

    /// Neither matrix has a column of zeros (no signal or act out of use).
    pub fn has_no_zero_column(&self, tol: f64) -> bool {
        self.columns().all(|c| c.iter().any(|&v| v > tol))
    }
}

pub fn psi(x: &OccupationMeasure) -> Result<StrategyPair> {
    x.require_interior("the strategy map")?;
    let (m1, m2) = (x.num_states(), x.num_signals());
    let mut sender = vec![0.0; m1 * m2];
    let mut receiver = vec![0.0; m2 * m1];
    for i in 0..m1 {
        for j in 0..m2 {
            sender[i * m2 + j] = x.get(i, j) / x.state_marginal(i);
            receiver[j * m1 + i] = x.get(i, j) / x.signal_marginal(j);
        }
    }
    Ok(StrategyPair {
        num_states: m1,
        num_signals: m2,
        sender,
        receiver,
    })
}

/// `x_ij = p_ij q_ji / Z`, the preimage of a Nash strategy under [`psi`].
pub fn psi_inverse(s: &StrategyPair) -> Result<OccupationMeasure> {
    if !s.has_no_zero_column(0.0) {
        return Err(Error::NotCharacterized);
    }
    let (m1, m2) = (s.num_states, s.num_signals);
    let mut w = vec![0.0; m1 * m2];
    for i in 0..m1 {
        for j in 0..m2 {
            w[i * m2 + j] = s.p(i, j) * s.q(j, i);
        }
    }
    let z: f64 = w.iter().sum();
    if z <= 0.0 {
        return Err(Error::InvalidInput("sender and receiver supports are disjoint".into()));
    }
    OccupationMeasure::new(m1, m2, w.into_iter().map(|v| v / z).collect())
}

/// Symmetrized payoff `(tr(P Q') + tr(P' Q)) / 2`.
pub fn payoff(a: &StrategyPair, b: &StrategyPair) -> Result<f64> {
    if a.num_states != b.num_states || a.num_signals != b.num_signals {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} against {}x{}",
            a.num_states, a.num_signals, b.num_states, b.num_signals
        )));
    }
    let trace = |s: &StrategyPair, r: &StrategyPair| -> f64 {
        let mut t = 0.0;
        for i in 0..s.num_states {
            for j in 0..s.num_signals {
                t += s.p(i, j) * r.q(j, i);
            }
        }
        t
    };
    Ok(0.5 * trace(a, b) + 0.5 * trace(b, a))
}

/// Positive entries of the column agree within `tol`.
fn single_positive_level(col: &[f64], tol: f64) -> bool {
    let positive = col.iter().copied().filter(|&v| v > tol);
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    lo > hi || hi - lo <= tol
}

/// Nash test through the column-pattern characterization. Requires that no
/// column of either matrix vanishes.
pub fn is_nash(s: &StrategyPair, tol: f64) -> Result<bool> {
    if !s.has_no_zero_column(tol) {
        return Err(Error::NotCharacterized);
    }
    if !s.columns().all(|c| single_positive_level(&c, tol)) {
        return Ok(false);
    }
    for i in 0..s.num_states {
        for j in 0..s.num_signals {
            if (s.p(i, j) > tol) != (s.q(j, i) > tol) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Neutral stability: Nash, and every column with two or more positive
/// entries is `{0, 1}`-valued.
pub fn is_nss(s: &StrategyPair, tol: f64) -> Result<bool> {
    if !is_nash(s, tol)? {
        return Ok(false);
    }
    Ok(s.columns().all(|c| {
        let positive = c.iter().filter(|&&v| v > tol).count();
        positive < 2 || c.iter().all(|&v| v <= tol || (v - 1.0).abs() <= tol)
    }))
}

/// Evolutionary stability: `P` is a permutation matrix and `Q = P^T`.
pub fn is_ess(s: &StrategyPair, tol: f64) -> bool {
    let m = s.num_states;
    if m != s.num_signals {
        return false;
    }
    let is_unit = |v: f64| (v - 1.0).abs() <= tol;
    let is_zero = |v: f64| v.abs() <= tol;
    let mut col_used = vec![false; m];
    for i in 0..m {
        let ones: Vec<usize> = (0..m).filter(|&j| is_unit(s.p(i, j))).collect();
        if ones.len() != 1 || col_used[ones[0]] {
            return false;
        }
        col_used[ones[0]] = true;
        if !(0..m).all(|j| j == ones[0] || is_zero(s.p(i, j))) {
            return false;
        }
    }
    (0..m).all(|i| (0..m).all(|j| (s.q(j, i) - s.p(i, j)).abs() <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(p: &[&[f64]], q: &[&[f64]]) -> StrategyPair {
        let p: Vec<Vec<f64>> = p.iter().map(|r| r.to_vec()).collect();
        let q: Vec<Vec<f64>> = q.iter().map(|r| r.to_vec()).collect();
        StrategyPair::from_rows(&p, &q).unwrap()
    }

    fn identity() -> StrategyPair {
        pair(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.0, 1.0]])
    }

    fn swap() -> StrategyPair {
        pair(&[&[0.0, 1.0], &[1.0, 0.0]], &[&[0.0, 1.0], &[1.0, 0.0]])
    }

    fn halves() -> StrategyPair {
        pair(&[&[0.5, 0.5], &[0.5, 0.5]], &[&[0.5, 0.5], &[0.5, 0.5]])
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&OccupationMeasure::uniform(2, 2)).unwrap(), halves());
        let d = OccupationMeasure::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert_eq!(psi(&d).unwrap(), identity());
        let x = OccupationMeasure::from_rows(&[vec![0.5, 0.25], vec![0.0, 0.25]]).unwrap();
        let s = psi(&x).unwrap();
        let expect = [[2.0 / 3.0, 1.0 / 3.0], [0.0, 1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.p(i, j) - expect[i][j]).abs() < 1e-15);
            }
        }
        assert_eq!(s.receiver_rows(), vec![vec![1.0, 0.0], vec![0.5, 0.5]]);
        let pooled = OccupationMeasure::from_rows(&[vec![0.5, 0.0], vec![0.5, 0.0]]).unwrap();
        assert!(psi(&pooled).is_err());
    }

    #[test]
    fn psi_inverse_examples() {
        let x = psi_inverse(&identity()).unwrap();
        assert_eq!(x.rows(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        let u = psi_inverse(&halves()).unwrap();
        assert!(u.weights().iter().all(|&w| (w - 0.25).abs() < 1e-15));
        let dead = pair(&[&[1.0, 0.0], &[1.0, 0.0]], &[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(matches!(psi_inverse(&dead), Err(Error::NotCharacterized)));
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(payoff(&identity(), &identity()).unwrap(), 2.0);
        assert_eq!(payoff(&identity(), &swap()).unwrap(), 0.0);
        let one = pair(&[&[1.0]], &[&[1.0]]);
        assert!(payoff(&identity(), &one).is_err());
    }

    #[test]
    fn nash_examples() {
        assert!(is_nash(&identity(), ANALYTIC_TOL).unwrap());
        assert!(is_nash(&halves(), ANALYTIC_TOL).unwrap());
        let s = pair(&[&[2.0 / 3.0, 1.0 / 3.0], &[0.0, 1.0]], &[&[1.0, 0.0], &[0.5, 0.5]]);
        assert!(!is_nash(&s, ANALYTIC_TOL).unwrap());
        let dead = pair(&[&[1.0, 0.0], &[1.0, 0.0]], &[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(matches!(is_nash(&dead, ANALYTIC_TOL), Err(Error::NotCharacterized)));
    }

    #[test]
    fn nss_examples() {
        assert!(is_nss(&identity(), ANALYTIC_TOL).unwrap());
        assert!(!is_nss(&halves(), ANALYTIC_TOL).unwrap());
        // Two states pooled on signal 0, state 2 alone on signal 1.
        let pooled = pair(
            &[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[&[0.4, 0.6, 0.0], &[0.0, 0.0, 1.0]],
        );
        assert!(is_nash(&pooled, ANALYTIC_TOL).unwrap());
        assert!(is_nss(&pooled, ANALYTIC_TOL).unwrap());
    }

    #[test]
    fn ess_examples() {
        assert!(is_ess(&identity(), ANALYTIC_TOL));
        assert!(is_ess(&swap(), ANALYTIC_TOL));
        assert!(!is_ess(&halves(), ANALYTIC_TOL));
        let mismatched = pair(&[&[1.0, 0.0], &[0.0, 1.0]], &[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(!is_ess(&mismatched, ANALYTIC_TOL));
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_value(identity()).unwrap();
        assert_eq!(s["sender"][1][1], 1.0);
        let bad = r#"{"sender":[[0.5,0.4]],"receiver":[[1.0],[1.0]]}"#;
        assert!(serde_json::from_str::<StrategyPair>(bad).is_err());
    }
}
