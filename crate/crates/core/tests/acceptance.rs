//! Acceptance criteria. Every test prints one `PASS`/`FAIL` line and then
//! asserts on the same verdict.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigdyn::equilibrium::{
    block_equilibrium, check_property_p, classify, in_gamma, in_lambda, is_signaling_system, jacobian,
    Classification, STABILITY_TOL,
};
use sigdyn::harness::{
    azuma_check, frozen_replay_success, run_ensemble, signaling_system_edges, submartingale_test,
};
use sigdyn::meanfield::{finite_diff_gradient_check, integrate, lyapunov_derivative, vector_field};
use sigdyn::oracle;
use sigdyn::statics::{is_ess, is_nash, is_nss, psi, psi_inverse, ANALYTIC_TOL};
use sigdyn::{BipartiteGraph, GameConfig, OccupationMeasure, PayoffMatrix, SeedMaterial, Vertex, WeightMode};

fn report(id: u32, name: &str, ok: bool, started: Instant, detail: String) {
    println!(
        "criterion {id:>2} {name}: {} ({detail}; {:.1}s)",
        if ok { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dims(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> (usize, usize) {
    (r.random_range(lo..=hi), r.random_range(lo..=hi))
}

/// Interior point with entries bounded away from zero.
fn interior_point(r: &mut ChaCha8Rng, m1: usize, m2: usize) -> OccupationMeasure {
    let w: Vec<f64> = (0..m1 * m2).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    OccupationMeasure::new(m1, m2, w.into_iter().map(|v| v / s).collect()).unwrap()
}

/// Point whose support may miss pairs and whole vertices.
fn sparse_point(r: &mut ChaCha8Rng, m1: usize, m2: usize) -> OccupationMeasure {
    loop {
        let w: Vec<f64> = (0..m1 * m2)
            .map(|_| if r.random_bool(0.4) { 0.0 } else { -r.random::<f64>().ln() })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return OccupationMeasure::new(m1, m2, w.into_iter().map(|v| v / s).collect()).unwrap();
        }
    }
}

fn random_game(r: &mut ChaCha8Rng, m1: usize, m2: usize) -> PayoffMatrix {
    let rows: Vec<Vec<u64>> = (0..m1).map(|_| (0..m2).map(|_| r.random_range(1..=30)).collect()).collect();
    PayoffMatrix::from_rows(&rows, 1).unwrap()
}

/// Block labels with every block holding at least one state and one signal.
fn random_partition(r: &mut ChaCha8Rng, m1: usize, m2: usize) -> (Vec<usize>, Vec<usize>) {
    let k = r.random_range(1..=m1.min(m2));
    let mut states: Vec<usize> = (0..m1).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
    let mut signals: Vec<usize> = (0..m2).map(|j| if j < k { j } else { r.random_range(0..k) }).collect();
    shuffle(r, &mut states);
    shuffle(r, &mut signals);
    (states, signals)
}

fn shuffle(r: &mut ChaCha8Rng, v: &mut [usize]) {
    for i in (1..v.len()).rev() {
        v.swap(i, r.random_range(0..=i));
    }
}

fn weights(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(0.2..1.0)).collect()
}

#[test]
fn criterion_01_lyapunov_identity() {
    let t = Instant::now();
    let mut r = rng(101);
    let (mut worst_forms, mut worst_fd) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (m1, m2) = dims(&mut r, 2, 5);
        let x = interior_point(&mut r, m1, m2);
        worst_forms = worst_forms.max(lyapunov_derivative(&x).unwrap().max_discrepancy());
        worst_fd = worst_fd.max(finite_diff_gradient_check(&x, 1e-5).unwrap());
    }
    let ok = worst_forms <= 1e-10 && worst_fd <= 1e-6;
    report(1, "Lyapunov identity", ok, t, format!("forms {worst_forms:.2e}, finite difference {worst_fd:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_02_potential_bounds() {
    let t = Instant::now();
    let mut r = rng(102);
    let mut violations = 0;
    let mut checked_vertices = 0;
    for k in 0..10_000 {
        let (m1, m2) = dims(&mut r, 1, 6);
        let x = if k % 2 == 0 {
            interior_point(&mut r, m1, m2)
        } else {
            sparse_point(&mut r, m1, m2)
        };
        let h = x.potential();
        if h < 1.0 - 1e-12 || h > m1.min(m2) as f64 + 1e-12 {
            violations += 1;
        }
        for v in x.vertices().collect::<Vec<Vertex>>() {
            if x.marginal(v) > 0.0 {
                checked_vertices += 1;
                if x.vertex_efficiency(v).unwrap() < 1.0 - 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    let ok = violations == 0;
    report(2, "potential bounds and N_i >= 1", ok, t, format!("{violations} violations, {checked_vertices} vertex checks"));
    assert!(ok);
}

#[test]
fn criterion_03_one_step_law() {
    let t = Instant::now();
    let mut r = rng(103);
    let mut worst_exact = 0.0f64;
    let mut worst_z = 0.0f64;
    for g in 0..50 {
        let (m1, m2) = dims(&mut r, 2, 4);
        let game = random_game(&mut r, m1, m2);
        let p = game.potential() / m1 as f64;
        worst_exact = worst_exact.max((oracle::success_probability(&game) - p).abs());
        let f = frozen_replay_success(&game, 100_000, SeedMaterial::new(103, g));
        let sigma = (p * (1.0 - p) / 100_000.0).sqrt();
        worst_z = worst_z.max((f - p).abs() / sigma);
    }
    let ok = worst_exact <= 1e-12 && worst_z <= 3.0;
    report(3, "one-step law", ok, t, format!("exact {worst_exact:.2e}, worst |z| {worst_z:.2}"));
    assert!(ok);
}

#[test]
fn criterion_04_increment_decomposition() {
    let t = Instant::now();
    let mut r = rng(104);
    let mut worst = 0.0f64;
    let mut negative = 0;
    for _ in 0..100 {
        let (m1, m2) = dims(&mut r, 2, 4);
        let game = random_game(&mut r, m1, m2);
        let inc = game.expected_potential_increment();
        worst = worst.max((inc.total - oracle::expected_potential_increment(&game)).abs());
        if inc.p_term < 0.0 || inc.q_term < 0.0 {
            negative += 1;
        }
    }
    let ok = worst <= 1e-10 && negative == 0;
    report(4, "expected-increment decomposition", ok, t, format!("max error {worst:.2e}, {negative} negative terms"));
    assert!(ok);
}

#[test]
fn criterion_05_submartingale_drift() {
    let t = Instant::now();
    let stats = run_ensemble(GameConfig::new(2, 2), 100_000, 200, 105, 1).unwrap();
    let traces = stats.potential_traces();
    let real = submartingale_test(&traces).unwrap();
    // Reflect each trace about its start: same noise, drift reversed.
    let control: Vec<Vec<f64>> = traces.iter().map(|h| h.iter().map(|v| 2.0 * h[0] - v).collect()).collect();
    let flipped = submartingale_test(&control).unwrap();
    let ok = real.passed && !flipped.passed;
    report(
        5,
        "submartingale drift",
        ok,
        t,
        format!(
            "{}/{} negative windows, control {}/{}",
            real.negative_windows,
            real.windows.len(),
            flipped.negative_windows,
            flipped.windows.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_tn_over_n_limit() {
    let t = Instant::now();
    let stats = run_ensemble(GameConfig::new(2, 2), 1_000_000, 100, 106, 1).unwrap();
    let good = stats
        .results
        .iter()
        .filter(|res| {
            let tn = res.terminal_tn_over_n();
            (0.45..=1.05).contains(&tn) && (tn - res.terminal_potential() / 2.0).abs() < 0.02
        })
        .count();
    let ok = good >= 95;
    report(6, "T_n/n limit", ok, t, format!("{good}/100 replications within bounds"));
    assert!(ok);
}

#[test]
fn criterion_07_ode_monotonicity() {
    let t = Instant::now();
    let mut r = rng(107);
    let mut worst_drop = 0.0f64;
    let mut worst_field = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let (m1, m2) = dims(&mut r, 2, 5);
        let x0 = interior_point(&mut r, m1, m2);
        let traj = integrate(&x0, 0.01, 10_000).unwrap();
        let drop = traj.max_potential_decrease();
        let field = vector_field(traj.last()).max_abs();
        worst_drop = worst_drop.max(drop);
        worst_field = worst_field.max(field);
        if drop > 1e-9 || field >= 1e-4 {
            failures += 1;
        }
    }
    let ok = failures == 0;
    report(
        7,
        "ODE monotonicity",
        ok,
        t,
        format!("{failures}/100 starts fail, worst drop {worst_drop:.2e}, worst terminal |F| {worst_field:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_08_jacobian_spectra() {
    let t = Instant::now();
    let tol = 1e-8;
    let mut problems = Vec::new();

    // Stars of every size: one hub state with k signals, k = 1..5.
    for k in 1..=5 {
        let x = block_equilibrium(&vec![0], &vec![0; k], &[1.0], &weights(&mut rng(k as u64), k)).unwrap();
        let j = jacobian(&x, tol).unwrap();
        let mut ev: Vec<f64> = j.block_spectrum().unwrap().iter().map(|c| c.re).collect();
        ev.sort_by(f64::total_cmp);
        let zeros = ev.iter().filter(|e| e.abs() <= tol).count();
        let minus_h = ev.iter().filter(|e| (**e + j.potential).abs() <= tol).count();
        if zeros != k - 1 || minus_h != 1 {
            problems.push(format!("star k={k}: {ev:?}"));
        }
    }
    // Stars inside a larger equilibrium: one hub signal with two states.
    let x = block_equilibrium(&[0, 0, 1], &[0, 1], &[0.3, 0.7, 1.0], &[1.0, 1.0]).unwrap();
    let j = jacobian(&x, tol).unwrap();
    for (b, range) in j.blocks.iter().enumerate() {
        let k = range.len();
        let ev = sigdyn::equilibrium::eigenvalues(&j.block(b)).unwrap();
        let zeros = ev.iter().filter(|e| e.norm() <= tol).count();
        let minus_h = ev.iter().filter(|e| (e.re + j.potential).abs() <= tol && e.im.abs() <= tol).count();
        if zeros != k - 1 || minus_h != 1 {
            problems.push(format!("3x2 star block {b}: {ev:?}"));
        }
    }

    // Permutation equilibria: spectrum is -H only.
    for m in 2..=5 {
        let mut r = rng(800 + m as u64);
        let mut perm: Vec<usize> = (0..m).collect();
        shuffle(&mut r, &mut perm);
        let x = block_equilibrium(&perm, &(0..m).collect::<Vec<_>>(), &vec![1.0; m], &vec![1.0; m]).unwrap();
        let j = jacobian(&x, tol).unwrap();
        let spec = j.block_spectrum().unwrap();
        if spec.len() != m * m || spec.iter().any(|e| (e.re + j.potential).abs() > tol || e.im.abs() > tol) {
            problems.push(format!("permutation m={m}: {spec:?}"));
        }
        // The dense solver scatters a defective eigenvalue by about the
        // square root of machine precision, so it only cross-checks loosely.
        let dense = j.full_spectrum().unwrap();
        if dense.iter().any(|e| (e - nalgebra::Complex::new(-j.potential, 0.0)).norm() > 1e-6) {
            problems.push(format!("permutation m={m} dense: {dense:?}"));
        }
    }

    // Uniform K_{2,2}.
    let k22 = jacobian(&OccupationMeasure::uniform(2, 2), tol).unwrap();
    let k22_max = k22.full_spectrum().unwrap().iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    if k22_max <= tol {
        problems.push(format!("K22 max real part {k22_max}"));
    }

    // Spectral verdict against the graph criterion.
    let mut r = rng(108);
    let (mut stable, mut unstable) = (0, 0);
    for _ in 0..50 {
        let (m1, m2) = dims(&mut r, 2, 4);
        let (sb, gb) = random_partition(&mut r, m1, m2);
        let x = block_equilibrium(&sb, &gb, &weights(&mut r, m1), &weights(&mut r, m2)).unwrap();
        let max_re = jacobian(&x, tol)
            .unwrap()
            .block_spectrum()
            .unwrap()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max);
        let spectral_stable = max_re <= STABILITY_TOL;
        let graph_stable = check_property_p(&BipartiteGraph::from_measure(&x, 0.0, WeightMode::Efficiency));
        if spectral_stable {
            stable += 1;
        } else {
            unstable += 1;
        }
        if spectral_stable != graph_stable {
            problems.push(format!("verdict mismatch at {:?}", x.rows()));
        }
    }
    let ok = problems.is_empty() && stable > 0 && unstable > 0;
    report(
        8,
        "Jacobian spectra",
        ok,
        t,
        format!("{} problems, {stable} stable / {unstable} unstable constructed, K22 max re {k22_max:.3}", problems.len()),
    );
    for p in &problems {
        println!("    {p}");
    }
    assert!(ok);
}

#[test]
fn criterion_09_limit_graph_census() {
    let t = Instant::now();
    let two = run_ensemble(GameConfig::new(2, 2), 1_000_000, 200, 109, 1).unwrap();
    let c = &two.census;
    let resolved_p = c.resolved_with_property_p as f64 / c.replications as f64;
    let diag = c.class(&signaling_system_edges(&[0, 1])).map_or(0.0, |k| k.frequency);
    let anti = c.class(&signaling_system_edges(&[1, 0])).map_or(0.0, |k| k.frequency);
    let mut ok = resolved_p >= 0.95 && diag > 0.0 && anti > 0.0;
    let mut detail = format!("2x2 resolved with (P) {resolved_p:.3}, diagonal {diag:.3}, anti-diagonal {anti:.3}");
    for (m1, m2) in [(3, 2), (2, 3)] {
        let s = run_ensemble(GameConfig::new(m1, m2), 1_000_000, 200, 109, 1).unwrap();
        let bad = s.census.resolved_violations().len();
        ok &= bad == 0;
        detail += &format!(
            "; {m1}x{m2} {} classes, {bad} resolved violations, {} unresolved",
            s.census.classes.len(),
            s.census.unresolved
        );
    }
    report(9, "limit-graph census", ok, t, detail);
    assert!(ok);
}

/// Complete bipartite blocks with arbitrary block masses: efficiencies are
/// constant within each block but may differ between blocks.
fn lambda_point(r: &mut ChaCha8Rng, m1: usize, m2: usize, equal_mass: bool) -> OccupationMeasure {
    let (sb, gb) = random_partition(r, m1, m2);
    let x = block_equilibrium(&sb, &gb, &weights(r, m1), &weights(r, m2)).unwrap();
    if equal_mass {
        return x;
    }
    let k = sb.iter().max().unwrap() + 1;
    let mass = weights(r, k);
    let w = (0..m1 * m2).map(|idx| x.weights()[idx] * mass[sb[idx / m2]]).collect::<Vec<_>>();
    let s: f64 = w.iter().sum();
    OccupationMeasure::new(m1, m2, w.into_iter().map(|v| v / s).collect()).unwrap()
}

#[test]
fn criterion_10_static_equivalence() {
    let t = Instant::now();
    let mut r = rng(110);
    let mut problems = Vec::new();
    let mut worst_round_trip = 0.0f64;
    let (mut nss, mut ess) = (0, 0);
    for k in 0..50 {
        let (m1, m2) = if k % 5 == 0 {
            let m = r.random_range(2..=4);
            (m, m)
        } else {
            dims(&mut r, 2, 4)
        };
        let x = lambda_point(&mut r, m1, m2, k % 2 == 0);
        assert!(in_lambda(&x, 1e-12));
        let s = psi(&x).unwrap();
        if !is_nash(&s, ANALYTIC_TOL).unwrap() {
            problems.push(format!("not Nash: {:?}", x.rows()));
        }
        let star = check_property_p(&BipartiteGraph::from_measure(&x, 0.0, WeightMode::Efficiency));
        let s_nss = is_nss(&s, ANALYTIC_TOL).unwrap();
        nss += s_nss as usize;
        if in_gamma(&x, 1e-12).unwrap() {
            let stable = classify(&x, 1e-12).unwrap().classification == Classification::Stable;
            if stable != s_nss {
                problems.push(format!("stable {stable} but NSS {s_nss}: {:?}", x.rows()));
            }
        } else if star != s_nss {
            problems.push(format!("star {star} but NSS {s_nss}: {:?}", x.rows()));
        }
        let s_ess = is_ess(&s, ANALYTIC_TOL);
        ess += s_ess as usize;
        // Off the rest-point set a one-to-one support is not a signaling
        // system (entries differ from 1/M) but still maps to a permutation.
        let one_to_one = m1 == m2 && x.weights().iter().filter(|&&w| w > 0.0).count() == m1 && star;
        let expected_ess = if in_gamma(&x, 1e-12).unwrap() {
            is_signaling_system(&x, 1e-12)
        } else {
            one_to_one
        };
        if expected_ess != s_ess {
            problems.push(format!("signaling system vs ESS mismatch: {:?}", x.rows()));
        }
        let back = psi(&psi_inverse(&s).unwrap()).unwrap();
        for i in 0..m1 {
            for j in 0..m2 {
                worst_round_trip = worst_round_trip
                    .max((back.p(i, j) - s.p(i, j)).abs())
                    .max((back.q(j, i) - s.q(j, i)).abs());
            }
        }
    }
    let ok = problems.is_empty() && worst_round_trip < 1e-10 && nss > 0 && nss < 50;
    report(
        10,
        "static equivalence",
        ok,
        t,
        format!("{} problems, {nss} NSS, {ess} ESS, round trip {worst_round_trip:.2e}", problems.len()),
    );
    for p in &problems {
        println!("    {p}");
    }
    assert!(ok);
}

#[test]
fn criterion_11_concentration_utility() {
    let t = Instant::now();
    let mut within = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut setting = 0u64;
    for terms in [10usize, 50, 200, 1000, 5000] {
        for scale in [0.5, 1.0, 1.5, 2.5] {
            let gammas: Vec<f64> = (1..=terms).map(|k| 1.0 / (k as f64).sqrt().max(1.0)).collect();
            let sd = gammas.iter().map(|g| g * g).sum::<f64>().sqrt();
            let check = azuma_check(&gammas, scale * sd, 4_000, SeedMaterial::new(111, setting)).unwrap();
            setting += 1;
            within += check.within as usize;
            worst_excess = worst_excess.max((check.exceedance - check.bound) / check.standard_error.max(1e-12));
        }
    }
    let ok = within == 20;
    report(11, "concentration utility", ok, t, format!("{within}/20 settings within bound, worst excess {worst_excess:.2} SE"));
    assert!(ok);
}
