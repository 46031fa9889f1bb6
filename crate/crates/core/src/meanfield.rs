//! Mean-field ODE `dx/dt = F(x)` with `F_ij = x_ij (y_ij - H(x))`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::OccupationMeasure;

/// Default RK4 step.
pub const DEFAULT_DT: f64 = 0.01;
/// Default number of RK4 steps.
pub const DEFAULT_STEPS: usize = 100_000;
/// `max |F| <= EQUILIBRIUM_TOL` counts as a rest point.
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// How far outside the simplex an RK4 step may land before clamping.
pub const SIMPLEX_SLACK: f64 = 1e-6;

/// Values of `F` on the state/signal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub num_states: usize,
    pub num_signals: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn get(&self, state: usize, signal: usize) -> f64 {
        self.values[state * self.num_signals + signal]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn marginals(m1: usize, m2: usize, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; m1];
    let mut cols = vec![0.0; m2];
    for i in 0..m1 {
        for j in 0..m2 {
            let v = w[i * m2 + j].max(0.0);
            rows[i] += v;
            cols[j] += v;
        }
    }
    (rows, cols)
}

/// Potential of unnormalized nonnegative weights. `H` is invariant under
/// scaling, so this agrees with [`OccupationMeasure::potential`] on the
/// normalized point.
pub(crate) fn potential_raw(m1: usize, m2: usize, w: &[f64]) -> f64 {
    let (rows, cols) = marginals(m1, m2, w);
    let mut h = 0.0;
    for i in 0..m1 {
        for j in 0..m2 {
            let v = w[i * m2 + j];
            if v > 0.0 {
                h += v * v / (rows[i] * cols[j]);
            }
        }
    }
    h
}

/// `F` on a raw grid of weights summing to (about) one; nonpositive entries
/// are unsupported and get a zero component.
fn field_raw(m1: usize, m2: usize, w: &[f64]) -> Vec<f64> {
    let (rows, cols) = marginals(m1, m2, w);
    let h = potential_raw(m1, m2, w);
    let mut out = vec![0.0; m1 * m2];
    for i in 0..m1 {
        for j in 0..m2 {
            let v = w[i * m2 + j];
            if v > 0.0 {
                out[i * m2 + j] = v * (v / (rows[i] * cols[j]) - h);
            }
        }
    }
    out
}

pub fn vector_field(x: &OccupationMeasure) -> VectorField {
    VectorField {
        num_states: x.num_states(),
        num_signals: x.num_signals(),
        values: field_raw(x.num_states(), x.num_signals(), x.weights()),
    }
}

/// Sampled solution of the mean-field ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<OccupationMeasure>,
    pub potentials: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &OccupationMeasure {
        self.points.last().expect("trajectory holds its initial point")
    }

    /// Largest drop of `H` between consecutive samples (0 if it never drops).
    pub fn max_potential_decrease(&self) -> f64 {
        self.potentials
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0, f64::max)
    }

    /// Writes `t, x_0_0, x_0_1, ..., H` with one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let first = &self.points[0];
        let (m1, m2) = (first.num_states(), first.num_signals());
        let mut header = vec!["t".to_string()];
        for i in 0..m1 {
            for j in 0..m2 {
                header.push(format!("x_{i}_{j}"));
            }
        }
        header.push("H".into());
        writeln!(out, "{}", header.join(","))?;
        for ((t, x), h) in self.times.iter().zip(&self.points).zip(&self.potentials) {
            write!(out, "{t}")?;
            for w in x.weights() {
                write!(out, ",{w}")?;
            }
            writeln!(out, ",{h}")?;
        }
        Ok(())
    }
}

fn axpy(base: &[f64], k: &[f64], scale: f64) -> Vec<f64> {
    base.iter().zip(k).map(|(b, k)| b + scale * k).collect()
}

/// Classical RK4 with every step recorded.
pub fn integrate(x0: &OccupationMeasure, dt: f64, steps: usize) -> Result<Trajectory> {
    integrate_with_stride(x0, dt, steps, 1)
}

/// Classical RK4, recording every `stride`-th step (and the last one).
///
/// After each step the point is clamped at zero and renormalized to unit
/// mass. A step that lands more than [`SIMPLEX_SLACK`] outside the simplex is
/// reported as an error instead.
pub fn integrate_with_stride(
    x0: &OccupationMeasure,
    dt: f64,
    steps: usize,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let stride = stride.max(1);
    let (m1, m2) = (x0.num_states(), x0.num_signals());
    let mut x = x0.weights().to_vec();
    let mut traj = Trajectory {
        times: vec![0.0],
        points: vec![x0.clone()],
        potentials: vec![x0.potential()],
    };
    for step in 1..=steps {
        let k1 = field_raw(m1, m2, &x);
        let k2 = field_raw(m1, m2, &axpy(&x, &k1, dt / 2.0));
        let k3 = field_raw(m1, m2, &axpy(&x, &k2, dt / 2.0));
        let k4 = field_raw(m1, m2, &axpy(&x, &k3, dt));
        for (idx, v) in x.iter_mut().enumerate() {
            // Unsupported pairs stay exactly at zero.
            if *v > 0.0 {
                *v += dt / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx]);
            }
        }
        let min_entry = x.iter().copied().fold(f64::INFINITY, f64::min);
        if min_entry < -SIMPLEX_SLACK || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationUnstable { step, min_entry });
        }
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        let mass: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v /= mass);

        if step % stride == 0 || step == steps {
            let point = OccupationMeasure::from_normalized(m1, m2, x.clone());
            traj.times.push(step as f64 * dt);
            traj.potentials.push(point.potential());
            traj.points.push(point);
        }
    }
    Ok(traj)
}

/// The three closed forms of `grad H . F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovForms {
    /// Triple sum `p(x)`.
    pub dissipation: f64,
    /// `sum x_ij (y_ij - N_i)^2` over the symmetrized index set.
    pub vertex_variance: f64,
    /// `sum x_ij (y_ij - H)^2 - sum x_i (N_i - H)^2`.
    pub centered: f64,
}

impl LyapunovForms {
    pub fn max_discrepancy(&self) -> f64 {
        let LyapunovForms {
            dissipation: a,
            vertex_variance: b,
            centered: c,
        } = *self;
        (a - b).abs().max((a - c).abs()).max((b - c).abs())
    }
}

pub fn lyapunov_derivative(x: &OccupationMeasure) -> Result<LyapunovForms> {
    let dissipation = x.dissipation()?;
    let h = x.potential();
    let mut vertex_variance = 0.0;
    let mut edge_spread = 0.0;
    let mut vertex_spread = 0.0;
    for v in x.vertices() {
        let n_v = x.vertex_efficiency(v)?;
        for (k, w) in x.support_of(v) {
            let y = x.pair_efficiency(v, k);
            vertex_variance += w * (y - n_v).powi(2);
            edge_spread += w * (y - h).powi(2);
        }
        vertex_spread += x.marginal(v) * (n_v - h).powi(2);
    }
    Ok(LyapunovForms {
        dissipation,
        vertex_variance,
        centered: edge_spread - vertex_spread,
    })
}

/// `|<grad H, F>_fd - p(x)|` with `grad H` from central differences in the
/// free pair coordinates `x_ij`. Perturbing `x_ij` moves both marginals it
/// contributes to, which is the symmetrized derivative.
pub fn finite_diff_gradient_check(x: &OccupationMeasure, h: f64) -> Result<f64> {
    x.require_interior("the Lyapunov derivative")?;
    let min_entry = x.weights().iter().copied().fold(f64::INFINITY, f64::min);
    if !(h > 0.0 && h < min_entry / 10.0) {
        return Err(Error::InvalidInput(format!(
            "step {h} must lie in (0, {}) for this point",
            min_entry / 10.0
        )));
    }
    let (m1, m2) = (x.num_states(), x.num_signals());
    let field = vector_field(x);
    let mut probe = x.weights().to_vec();
    let mut directional = 0.0;
    for idx in 0..m1 * m2 {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = potential_raw(m1, m2, &probe);
        probe[idx] = orig - h;
        let down = potential_raw(m1, m2, &probe);
        probe[idx] = orig;
        directional += (up - down) / (2.0 * h) * field.values[idx];
    }
    Ok((directional - x.dissipation()?).abs())
}
