//! Python bindings. Structured results (reports, replications, ensembles)
//! cross the boundary as JSON and come out as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use sigdyn::equilibrium;
use sigdyn::harness;
use sigdyn::meanfield;
use sigdyn::rng::RandomStream;
use sigdyn::{GameConfig, OccupationMeasure, PayoffMatrix, SeedMaterial};

fn err(e: sigdyn::Error) -> PyErr {
    use sigdyn::Error as E;
    match e {
        E::InvalidConfig(_) | E::InvalidInput(_) | E::DimensionMismatch(_) | E::Domain(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A point of the simplex of state/signal pair weights.
#[pyclass(name = "Measure", module = "sigdyn", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMeasure {
    inner: OccupationMeasure,
}

#[pymethods]
impl PyMeasure {
    /// Rows of nonnegative weights summing to 1 (within 1e-9).
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: OccupationMeasure::from_rows(&rows).map_err(err)?,
        })
    }

    #[staticmethod]
    fn uniform(states: usize, signals: usize) -> Self {
        Self {
            inner: OccupationMeasure::uniform(states, signals),
        }
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.num_states(), self.inner.num_signals())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    fn potential(&self) -> f64 {
        self.inner.potential()
    }

    fn efficiency(&self, state: usize, signal: usize) -> PyResult<f64> {
        self.inner.efficiency(state, signal).map_err(err)
    }

    fn dissipation(&self) -> PyResult<f64> {
        self.inner.dissipation().map_err(err)
    }

    fn is_interior(&self) -> bool {
        self.inner.is_interior()
    }

    /// Mean-field vector field as rows.
    fn field(&self) -> Vec<Vec<f64>> {
        let f = meanfield::vector_field(&self.inner);
        let (m1, m2) = (self.inner.num_states(), self.inner.num_signals());
        (0..m1).map(|i| (0..m2).map(|j| f.get(i, j)).collect()).collect()
    }

    fn lyapunov<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &meanfield::lyapunov_derivative(&self.inner).map_err(err)?)
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn in_lambda(&self, tol: f64) -> bool {
        equilibrium::in_lambda(&self.inner, tol)
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn in_gamma(&self, tol: f64) -> PyResult<bool> {
        equilibrium::in_gamma(&self.inner, tol).map_err(err)
    }

    #[pyo3(signature = (tol = 1e-8))]
    fn classify<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &equilibrium::classify(&self.inner, tol).map_err(err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!("Measure({:?})", self.inner.rows())
    }
}

/// One urn process with its own seeded random stream.
#[pyclass(name = "Game", module = "sigdyn")]
struct PyGame {
    game: PayoffMatrix,
    rng: RandomStream,
}

#[pymethods]
impl PyGame {
    #[new]
    #[pyo3(signature = (states, signals, seed, initial_weight = 1, stream = 0))]
    fn new(states: usize, signals: usize, seed: u64, initial_weight: u64, stream: u64) -> PyResult<Self> {
        let game = PayoffMatrix::new(GameConfig::new(states, signals).with_initial_weight(initial_weight)).map_err(err)?;
        Ok(Self {
            game,
            rng: SeedMaterial::new(seed, stream).rng(),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (rows, seed, initial_weight = 1))]
    fn from_counts(rows: Vec<Vec<u64>>, seed: u64, initial_weight: u64) -> PyResult<Self> {
        Ok(Self {
            game: PayoffMatrix::from_rows(&rows, initial_weight).map_err(err)?,
            rng: SeedMaterial::new(seed, 0).rng(),
        })
    }

    /// Plays `rounds` rounds and returns how many succeeded.
    #[pyo3(signature = (rounds = 1))]
    fn step(&mut self, rounds: u64) -> u64 {
        (0..rounds).map(|_| self.game.step(&mut self.rng).success as u64).sum()
    }

    fn counts(&self) -> Vec<Vec<u64>> {
        self.game.counts().chunks(self.game.num_signals()).map(<[u64]>::to_vec).collect()
    }

    #[getter]
    fn rounds(&self) -> u64 {
        self.game.rounds()
    }

    #[getter]
    fn grand_total(&self) -> u64 {
        self.game.grand_total()
    }

    fn potential(&self) -> f64 {
        self.game.potential()
    }

    fn success_probability(&self) -> f64 {
        self.game.success_probability()
    }

    fn expected_increment<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.game.expected_potential_increment())
    }

    fn measure(&self) -> PyMeasure {
        PyMeasure {
            inner: self.game.occupation_measure(),
        }
    }
}

/// RK4 flow of the mean-field ODE: `{"times", "potentials", "points"}`.
#[pyfunction]
#[pyo3(signature = (start, dt = 0.01, steps = 10_000, stride = 1))]
fn integrate<'py>(py: Python<'py>, start: &PyMeasure, dt: f64, steps: usize, stride: usize) -> PyResult<Bound<'py, PyAny>> {
    let traj = meanfield::integrate_with_stride(&start.inner, dt, steps, stride).map_err(err)?;
    to_py(py, &traj)
}

#[pyfunction]
fn block_equilibrium(
    state_blocks: Vec<usize>,
    signal_blocks: Vec<usize>,
    state_weights: Vec<f64>,
    signal_weights: Vec<f64>,
) -> PyResult<PyMeasure> {
    let inner = equilibrium::block_equilibrium(&state_blocks, &signal_blocks, &state_weights, &signal_weights).map_err(err)?;
    Ok(PyMeasure { inner })
}

#[pyfunction]
#[pyo3(signature = (states, signals, steps, seed, stream = 0))]
fn run_replication<'py>(py: Python<'py>, states: usize, signals: usize, steps: u64, seed: u64, stream: u64) -> PyResult<Bound<'py, PyAny>> {
    let res = py
        .detach(|| harness::run_replication(GameConfig::new(states, signals), steps, SeedMaterial::new(seed, stream)))
        .map_err(err)?;
    to_py(py, &res)
}

#[pyfunction]
#[pyo3(signature = (states, signals, steps, replications, seed, parallelism = 1))]
fn run_ensemble<'py>(
    py: Python<'py>,
    states: usize,
    signals: usize,
    steps: u64,
    replications: usize,
    seed: u64,
    parallelism: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let stats = py
        .detach(|| harness::run_ensemble(GameConfig::new(states, signals), steps, replications, seed, parallelism))
        .map_err(err)?;
    to_py(py, &stats)
}

#[pyfunction]
fn azuma_bound(increment_bounds: Vec<f64>, lam: f64) -> PyResult<f64> {
    harness::azuma_bound(&increment_bounds, lam).map_err(err)
}

#[pymodule]
#[pyo3(name = "sigdyn")]
fn sigdyn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(block_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(run_replication, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(azuma_bound, m)?)?;
    Ok(())
}
