//! Rest points of the mean-field flow and their linear stability.
//!
//! Linear stability of an interior rest point is read off the Jacobian,
//! assembled component by component in the block-triangular order: supported
//! pairs grouped by connected component, then every unsupported pair. The
//! spectrum is the union of the per-component block spectra and `-H(x)` once
//! per unsupported pair. The verdict is cross-checked against the graph
//! criterion ([`BipartiteGraph::satisfies_property_p`]).

use std::ops::Range;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::OccupationMeasure;
use crate::graph::{BipartiteGraph, Component, WeightMode};
use crate::meanfield::vector_field;

/// Largest real part still counted as nonpositive.
pub const STABILITY_TOL: f64 = 1e-8;

const SCHUR_MAX_ITER: usize = 10_000;

pub fn build_graph(x: &OccupationMeasure, edge_threshold: f64, mode: WeightMode) -> BipartiteGraph {
    BipartiteGraph::from_measure(x, edge_threshold, mode)
}

pub fn check_property_p(g: &BipartiteGraph) -> bool {
    g.satisfies_property_p()
}

/// Efficiencies agree within every connected component of the support.
pub fn in_lambda(x: &OccupationMeasure, tol: f64) -> bool {
    let g = build_graph(x, 0.0, WeightMode::Efficiency);
    g.components().iter().all(|c| {
        let ws = c.edges.iter().filter_map(|&(i, j)| g.weight(i, j));
        let (lo, hi) = ws.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| (lo.min(w), hi.max(w)));
        c.edges.is_empty() || hi - lo <= tol
    })
}

/// The two residuals characterizing a rest point: `max |F_ij|` and
/// `max |y_ij - H|` over supported pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    pub field: f64,
    pub weight: f64,
}

pub fn equilibrium_residuals(x: &OccupationMeasure) -> EquilibriumResiduals {
    let h = x.potential();
    let mut weight: f64 = 0.0;
    for i in 0..x.num_states() {
        for j in 0..x.num_signals() {
            if x.get(i, j) > 0.0 {
                let y = x.get(i, j) / (x.state_marginal(i) * x.signal_marginal(j));
                weight = weight.max((y - h).abs());
            }
        }
    }
    EquilibriumResiduals {
        field: vector_field(x).max_abs(),
        weight,
    }
}

/// `F(x) = 0` within `tol`, checked both on the field and on the edge
/// weights. The two tests must agree; a point where they do not (a pair
/// whose weight is so small that its field component vanishes although its
/// efficiency is off) is reported as an error.
pub fn in_gamma(x: &OccupationMeasure, tol: f64) -> Result<bool> {
    let r = equilibrium_residuals(x);
    let (by_field, by_weight) = (r.field <= tol, r.weight <= tol);
    if by_field != by_weight {
        return Err(Error::CriteriaDisagree {
            field_residual: r.field,
            weight_residual: r.weight,
        });
    }
    Ok(by_field)
}

/// Permutation pattern with entries `1/M`.
pub fn is_signaling_system(x: &OccupationMeasure, tol: f64) -> bool {
    let m = x.num_states();
    if m != x.num_signals() {
        return false;
    }
    let target = 1.0 / m as f64;
    let mut used = vec![false; m];
    for i in 0..m {
        let mut hit = None;
        for j in 0..m {
            let w = x.get(i, j);
            if (w - target).abs() <= tol {
                if hit.is_some() {
                    return false;
                }
                hit = Some(j);
            } else if w.abs() > tol {
                return false;
            }
        }
        match hit {
            Some(j) if !used[j] => used[j] = true,
            _ => return false,
        }
    }
    true
}

/// Rest point whose support is a disjoint union of complete bipartite blocks.
///
/// `state_block[i]` and `signal_block[j]` label the block of each vertex;
/// labels must run over `0..K` with every block holding at least one state
/// and one signal. Inside block `C` the measure is `a_i b_j / (K A_C B_C)`,
/// which puts mass `1/K` on every block and gives every supported pair
/// efficiency `K`.
pub fn block_equilibrium(
    state_block: &[usize],
    signal_block: &[usize],
    state_weights: &[f64],
    signal_weights: &[f64],
) -> Result<OccupationMeasure> {
    let (m1, m2) = (state_block.len(), signal_block.len());
    if state_weights.len() != m1 || signal_weights.len() != m2 {
        return Err(Error::DimensionMismatch("one weight per vertex is required".into()));
    }
    if state_weights.iter().chain(signal_weights).any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidInput("vertex weights must be positive".into()));
    }
    let k = state_block.iter().chain(signal_block).max().map_or(0, |&b| b + 1);
    let mut a_sum = vec![0.0; k];
    let mut b_sum = vec![0.0; k];
    for (i, &c) in state_block.iter().enumerate() {
        a_sum[c] += state_weights[i];
    }
    for (j, &c) in signal_block.iter().enumerate() {
        b_sum[c] += signal_weights[j];
    }
    if a_sum.iter().chain(&b_sum).any(|&s| s == 0.0) {
        return Err(Error::InvalidInput("every block needs a state and a signal".into()));
    }
    let mut w = vec![0.0; m1 * m2];
    for i in 0..m1 {
        for j in 0..m2 {
            let c = state_block[i];
            if c == signal_block[j] {
                w[i * m2 + j] = state_weights[i] * signal_weights[j] / (k as f64 * a_sum[c] * b_sum[c]);
            }
        }
    }
    OccupationMeasure::new(m1, m2, w)
}

/// Jacobian of `F` at an interior rest point.
///
/// Entry `(r, c)` is `dF_{order[c]} / dx_{order[r]}`, i.e. rows follow the
/// differentiation variable. This is the transpose of the usual layout and
/// has the same spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// Pair attached to each row/column.
    pub order: Vec<(usize, usize)>,
    /// Row/column ranges of the per-component blocks, in component order.
    pub blocks: Vec<Range<usize>>,
    /// Number of unsupported pairs (trailing rows/columns).
    pub unsupported: usize,
    pub potential: f64,
    /// `x_ij` of each pair in `order`.
    pub pair_weights: Vec<f64>,
}

impl Jacobian {
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        let r = self.blocks[k].clone();
        self.matrix.view((r.start, r.start), (r.len(), r.len())).into_owned()
    }

    /// Spectrum from the block structure: per-component blocks plus `-H`
    /// for every unsupported pair.
    ///
    /// Each block equals `H (I - B X)` with `B` symmetric and `X` the
    /// diagonal of pair weights, so `X^(1/2) (J - H I) X^(-1/2)` is symmetric
    /// and the block spectrum is real. That route is used whenever the
    /// symmetrized block is symmetric to rounding, and the general solver
    /// otherwise.
    pub fn block_spectrum(&self) -> Result<Vec<Complex<f64>>> {
        let mut out = Vec::with_capacity(self.order.len());
        for k in 0..self.blocks.len() {
            let r = self.blocks[k].clone();
            let d: Vec<f64> = self.pair_weights[r].iter().map(|w| w.sqrt()).collect();
            let mut s = self.block(k);
            let n = s.nrows();
            for a in 0..n {
                s[(a, a)] -= self.potential;
            }
            for a in 0..n {
                for b in 0..n {
                    s[(a, b)] *= d[a] / d[b];
                }
            }
            let scale = s.amax().max(1.0);
            if (&s - s.transpose()).amax() <= 1e-12 * scale {
                let sym = (&s + s.transpose()) * 0.5;
                let ev = nalgebra::linalg::SymmetricEigen::new(sym).eigenvalues;
                out.extend(ev.iter().map(|&e| Complex::new(e + self.potential, 0.0)));
            } else {
                out.extend(eigenvalues(&self.block(k))?);
            }
        }
        out.extend(std::iter::repeat_n(Complex::new(-self.potential, 0.0), self.unsupported));
        Ok(out)
    }

    /// Spectrum of the fully assembled matrix.
    pub fn full_spectrum(&self) -> Result<Vec<Complex<f64>>> {
        eigenvalues(&self.matrix)
    }
}

/// Eigenvalues of a dense real matrix through its real Schur form. The QR
/// iteration occasionally stalls on highly degenerate inputs; the
/// transpose, which has the same spectrum, is tried before giving up.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.is_empty() {
        return Ok(vec![]);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .or_else(|| nalgebra::linalg::Schur::try_new(m.transpose(), f64::EPSILON, SCHUR_MAX_ITER))
        .ok_or(Error::EigenSolver(m.nrows()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Assembles the Jacobian at an interior rest point. Rest-point membership
/// is checked with `tol`.
pub fn jacobian(x: &OccupationMeasure, tol: f64) -> Result<Jacobian> {
    x.require_interior("the Jacobian")?;
    let r = equilibrium_residuals(x);
    if r.field > tol || r.weight > tol {
        return Err(Error::NotEquilibrium {
            residual: r.field.max(r.weight),
        });
    }
    let h = x.potential();
    let g = build_graph(x, 0.0, WeightMode::Efficiency);

    let mut order = Vec::with_capacity(x.num_states() * x.num_signals());
    let mut blocks = Vec::new();
    for c in g.components() {
        if c.edges.is_empty() {
            continue;
        }
        let start = order.len();
        order.extend(c.edges.iter().copied());
        blocks.push(start..order.len());
    }
    let supported = order.len();
    for i in 0..x.num_states() {
        for j in 0..x.num_signals() {
            if !g.has_edge(i, j) {
                order.push((i, j));
            }
        }
    }

    let n = order.len();
    let mut matrix = DMatrix::zeros(n, n);
    for (row, &(i, j)) in order.iter().enumerate() {
        let (xi, xj) = (x.state_marginal(i), x.signal_marginal(j));
        let row_supported = row < supported;
        for (col, &(l, k)) in order.iter().enumerate() {
            let x_lk = x.get(l, k);
            let entry = if row_supported {
                if (l, k) == (i, j) {
                    h * (1.0 - x_lk / xi - x_lk / xj)
                } else if l == i {
                    -h * x_lk / xi
                } else if k == j {
                    -h * x_lk / xj
                } else {
                    0.0
                }
            } else if (l, k) == (i, j) {
                -h
            } else if x_lk == 0.0 {
                0.0
            } else {
                // Sensitivity of supported pairs to an unsupported one; it
                // sits below the diagonal blocks and does not affect the
                // spectrum.
                let mut e = 2.0 * x_lk * h;
                if l == i {
                    e -= h * x_lk / xi;
                }
                if k == j {
                    e -= h * x_lk / xj;
                }
                e
            };
            matrix[(row, col)] = entry;
        }
    }
    let pair_weights = order.iter().map(|&(i, j)| x.get(i, j)).collect();
    Ok(Jacobian {
        matrix,
        order,
        blocks,
        unsupported: n - supported,
        potential: h,
        pair_weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Stable,
    Unstable,
    BoundaryEquilibrium,
    NotEquilibrium,
}

/// Everything known about a point's status as a rest point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub classification: Classification,
    pub interior: bool,
    pub in_lambda: bool,
    pub in_gamma: bool,
    pub signaling_system: bool,
    pub property_p: bool,
    pub potential: f64,
    pub residuals: EquilibriumResiduals,
    /// `[re, im]` pairs; empty unless the point is an interior rest point.
    pub eigenvalues: Vec<[f64; 2]>,
    pub max_real_part: Option<f64>,
    pub components: Vec<Component>,
    pub tolerance: f64,
}

/// Classifies `x`, using `tol` both for rest-point membership and for the
/// sign of eigenvalue real parts.
pub fn classify(x: &OccupationMeasure, tol: f64) -> Result<StabilityReport> {
    let g = build_graph(x, 0.0, WeightMode::Efficiency);
    let residuals = equilibrium_residuals(x);
    let equilibrium = residuals.field <= tol && residuals.weight <= tol;
    let interior = x.is_interior();
    let property_p = g.satisfies_property_p();
    let mut report = StabilityReport {
        classification: Classification::NotEquilibrium,
        interior,
        in_lambda: in_lambda(x, tol),
        in_gamma: equilibrium,
        signaling_system: is_signaling_system(x, tol),
        property_p,
        potential: x.potential(),
        residuals,
        eigenvalues: vec![],
        max_real_part: None,
        components: g.components().to_vec(),
        tolerance: tol,
    };
    if !equilibrium {
        return Ok(report);
    }
    if !interior {
        report.classification = Classification::BoundaryEquilibrium;
        return Ok(report);
    }
    let spectrum = jacobian(x, tol)?.block_spectrum()?;
    let max_re = spectrum.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let stable = max_re <= tol;
    if stable != property_p {
        return Err(Error::Internal(format!(
            "spectral verdict (max Re = {max_re:e}) disagrees with the graph criterion (P = {property_p})"
        )));
    }
    report.classification = if stable {
        Classification::Stable
    } else {
        Classification::Unstable
    };
    report.eigenvalues = spectrum.iter().map(|z| [z.re, z.im]).collect();
    report.max_real_part = Some(max_re);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&[f64]]) -> OccupationMeasure {
        OccupationMeasure::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn diagonal(m: usize) -> OccupationMeasure {
        let mut w = vec![0.0; m * m];
        for i in 0..m {
            w[i * m + i] = 1.0 / m as f64;
        }
        OccupationMeasure::new(m, m, w).unwrap()
    }

    #[test]
    fn lambda_membership() {
        assert!(in_lambda(&OccupationMeasure::uniform(2, 2), 1e-12));
        let two = from_rows(&[&[0.6, 0.0], &[0.0, 0.4]]);
        assert!(in_lambda(&two, 1e-12));
        assert!(!in_lambda(&from_rows(&[&[0.5, 0.25], &[0.0, 0.25]]), 1e-6));
    }

    #[test]
    fn gamma_membership() {
        assert!(in_gamma(&OccupationMeasure::uniform(2, 2), 1e-12).unwrap());
        assert!(in_gamma(&diagonal(3), 1e-12).unwrap());
        let two = from_rows(&[&[0.6, 0.0], &[0.0, 0.4]]);
        assert!(!in_gamma(&two, 1e-8).unwrap());
        assert!(vector_field(&two).max_abs() > 0.1);
    }

    #[test]
    fn block_equilibria_are_rest_points() {
        let x = block_equilibrium(&[0, 0, 1], &[0, 1], &[1.0, 3.0, 2.0], &[1.0, 1.0]).unwrap();
        assert!(in_gamma(&x, 1e-12).unwrap());
        assert!((x.potential() - 2.0).abs() < 1e-12);
        assert!((x.get(0, 0) - 0.125).abs() < 1e-15);
        let k22 = block_equilibrium(&[0, 0], &[0, 0], &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(k22, OccupationMeasure::uniform(2, 2));
        assert!(block_equilibrium(&[0, 1], &[0, 0], &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn gamma_criteria_can_disagree_on_vanishing_pairs() {
        let x = from_rows(&[&[0.5 - 1e-14, 1e-14], &[0.0, 0.5]]);
        assert!(matches!(in_gamma(&x, 1e-10), Err(Error::CriteriaDisagree { .. })));
    }

    #[test]
    fn signaling_systems() {
        assert!(is_signaling_system(&diagonal(2), 1e-12));
        let third = 1.0 / 3.0;
        let anti = from_rows(&[&[0.0, 0.0, third], &[0.0, third, 0.0], &[third, 0.0, 0.0]]);
        assert!(is_signaling_system(&anti, 1e-12));
        assert!(!is_signaling_system(&OccupationMeasure::uniform(2, 2), 1e-12));
        assert!(!is_signaling_system(&from_rows(&[&[0.5, 0.5]]), 1e-12));
    }

    #[test]
    fn diagonal_jacobian_has_single_eigenvalue() {
        let j = jacobian(&diagonal(2), 1e-12).unwrap();
        assert_eq!(j.blocks.len(), 2);
        assert_eq!(j.unsupported, 2);
        for z in j.full_spectrum().unwrap() {
            assert!((z.re + 2.0).abs() < 1e-12 && z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn star_block_is_rank_one() {
        // States 0,1,2 on signal 0; state 3 on signal 1. Equal efficiencies
        // force equal signal marginals.
        let x = from_rows(&[&[0.2, 0.0], &[0.1, 0.0], &[0.2, 0.0], &[0.0, 0.5]]);
        let jac = jacobian(&x, 1e-12).unwrap();
        let h = jac.potential;
        assert!((h - 2.0).abs() < 1e-12);
        let b = jac.block(0);
        assert_eq!(b.nrows(), 3);
        let ones = DMatrix::from_element(3, 1, 1.0);
        let image = &b * &ones;
        assert!(image.iter().all(|v| (v + h).abs() < 1e-12));
        let mut ev: Vec<f64> = eigenvalues(&b).unwrap().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + h).abs() < 1e-8 && ev[1].abs() < 1e-8 && ev[2].abs() < 1e-8);
    }

    #[test]
    fn jacobian_rejects_non_equilibria() {
        let x = from_rows(&[&[0.5, 0.25], &[0.0, 0.25]]);
        assert!(matches!(jacobian(&x, 1e-8), Err(Error::NotEquilibrium { .. })));
        let pooled = from_rows(&[&[0.5, 0.0], &[0.5, 0.0]]);
        assert!(matches!(jacobian(&pooled, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn classification_examples() {
        let u = classify(&OccupationMeasure::uniform(2, 2), STABILITY_TOL).unwrap();
        assert_eq!(u.classification, Classification::Unstable);
        assert!(!u.property_p);
        assert!(u.max_real_part.unwrap() > 0.5);

        for m in 1..5 {
            let d = classify(&diagonal(m), STABILITY_TOL).unwrap();
            assert_eq!(d.classification, Classification::Stable);
            assert!(d.signaling_system);
        }

        let pooled = from_rows(&[&[0.5, 0.0], &[0.5, 0.0]]);
        let p = classify(&pooled, STABILITY_TOL).unwrap();
        assert_eq!(p.classification, Classification::BoundaryEquilibrium);
        assert!(p.eigenvalues.is_empty());

        let lopsided = from_rows(&[&[0.5, 0.25], &[0.0, 0.25]]);
        assert_eq!(
            classify(&lopsided, STABILITY_TOL).unwrap().classification,
            Classification::NotEquilibrium
        );
    }

    #[test]
    fn report_serializes_eigenvalues_as_pairs() {
        let r = classify(&diagonal(2), STABILITY_TOL).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["classification"], "Stable");
        assert_eq!(v["eigenvalues"][0].as_array().unwrap().len(), 2);
    }
}
