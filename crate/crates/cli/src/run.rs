use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use sigdyn::equilibrium::{classify, StabilityReport};
use sigdyn::harness::{run_ensemble_with, run_replication_with, write_trace_csv, EnsembleStats, MonitorOutcome, ReplicationOptions};
use sigdyn::meanfield::integrate_with_stride;
use sigdyn::{GameConfig, OccupationMeasure, SeedMaterial};

use crate::config::{Command, OutputFormat, RunConfig};
use crate::error::CliError;
use crate::verify::{run_suite, Check};

/// What a run produced. `status` is the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub status: u8,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Output files of one run. Every target is checked for collisions before
/// anything is written, so a refused run leaves the directory untouched.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn plan(cfg: &RunConfig, names: &[String]) -> Result<Self, CliError> {
        for name in names {
            let path = cfg.output_dir.join(name);
            if path.exists() && !cfg.force {
                return Err(CliError::Collision(path));
            }
        }
        Ok(Outputs {
            dir: cfg.output_dir.clone(),
            written: vec![],
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let io = |source| CliError::Output { path: path.clone(), source };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(io)?;
        self.written.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Core(sigdyn::Error::Internal(e.to_string())))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

fn required<T>(v: Option<T>, key: &str, cfg: &RunConfig) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::MissingKeys {
        command: cfg.command.name().into(),
        keys: vec![key.into()],
    })
}

fn game_config(cfg: &RunConfig) -> Result<GameConfig, CliError> {
    let c = GameConfig::new(required(cfg.states, "states", cfg)?, required(cfg.signals, "signals", cfg)?)
        .with_initial_weight(cfg.initial_weight);
    c.validate()?;
    Ok(c)
}

fn trace_name(stem: &str, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => format!("{stem}.csv"),
        OutputFormat::Json => format!("{stem}.json"),
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Execution, CliError> {
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::OdeFlow => ode_flow(cfg),
        Command::Classify => classify_point(cfg),
        Command::Census => census(cfg),
        Command::VerifyIdentities => verify(cfg),
    }
}

#[derive(Serialize)]
struct TerminalState<'a> {
    config: &'a RunConfig,
    seed: u64,
    steps: u64,
    x: OccupationMeasure,
    counts: Vec<Vec<u64>>,
    potential: f64,
    tn_over_n: f64,
    limit_graph: Vec<(usize, usize)>,
    property_p: bool,
    unresolved: bool,
    frozen_pairs: Vec<(usize, usize)>,
    monitor: Option<MonitorOutcome>,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    config: &'a RunConfig,
    seed: Option<u64>,
    #[serde(flatten)]
    body: T,
}

fn simulate(cfg: &RunConfig) -> Result<Execution, CliError> {
    let game = game_config(cfg)?;
    let steps = required(cfg.steps, "steps", cfg)?;
    let seed = required(cfg.seed, "seed", cfg)?;
    let trace = trace_name("trace", cfg.format);
    let mut out = Outputs::plan(cfg, &[trace.clone(), "terminal.json".into()])?;

    let options = ReplicationOptions {
        monitor_epsilon: Some(cfg.epsilon),
    };
    let res = run_replication_with(game, steps, SeedMaterial::new(seed, 0), options)?;

    match cfg.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_trace_csv(&res, &mut buf).expect("writing to memory");
            out.write(&trace, &buf)?;
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Trace<'a> {
                replication: &'a sigdyn::harness::ReplicationResult,
            }
            out.write_json(&trace, &Tagged { config: cfg, seed: Some(seed), body: Trace { replication: &res } })?;
        }
    }
    let m2 = game.num_signals;
    let terminal = TerminalState {
        config: cfg,
        seed,
        steps,
        x: res.terminal_measure(),
        counts: res.terminal.counts().chunks(m2).map(<[u64]>::to_vec).collect(),
        potential: res.terminal_potential(),
        tn_over_n: res.terminal_tn_over_n(),
        limit_graph: res.limit_graph.edges(),
        property_p: res.property_p,
        unresolved: res.unresolved,
        frozen_pairs: res.frozen_pairs.clone(),
        monitor: res.monitor.clone(),
    };
    out.write_json("terminal.json", &terminal)?;
    let summary = format!(
        "simulate {}x{} steps={steps} seed={seed}: H={:.6} Tn/n={:.6} limit graph {:?}{}",
        game.num_states,
        game.num_signals,
        terminal.potential,
        terminal.tn_over_n,
        terminal.limit_graph,
        if terminal.unresolved { " (unresolved)" } else { "" }
    );
    Ok(Execution { status: 0, files: out.written, summary })
}

/// Reads a point from JSON: an object with an `x` field (as written by
/// `simulate`), a bare measure `{num_states, num_signals, weights}`, or a
/// plain array of rows. Also returns the `seed` field, if any.
pub fn read_point(path: &Path) -> Result<(OccupationMeasure, Option<u64>), CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| CliError::BadInput {
        path: path.to_path_buf(),
        message,
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let seed = value.get("seed").and_then(Value::as_u64);
    let point = match &value {
        Value::Object(map) if map.contains_key("x") => serde_json::from_value(map["x"].clone()),
        Value::Object(_) => serde_json::from_value(value.clone()),
        Value::Array(_) => serde_json::from_value::<Vec<Vec<f64>>>(value.clone()).and_then(|rows| {
            OccupationMeasure::from_rows(&rows).map_err(serde::de::Error::custom)
        }),
        _ => return Err(bad("expected an object or an array of rows".into())),
    };
    Ok((point.map_err(|e| bad(e.to_string()))?, seed))
}

fn random_interior(m1: usize, m2: usize, seed: u64) -> OccupationMeasure {
    let mut r = SeedMaterial::new(seed, 0).rng();
    let w: Vec<f64> = (0..m1 * m2).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    OccupationMeasure::new(m1, m2, w.into_iter().map(|v| v / s).collect()).expect("positive weights")
}

#[derive(Serialize)]
struct FlowSummary {
    start: OccupationMeasure,
    end: OccupationMeasure,
    t_end: f64,
    potential_start: f64,
    potential_end: f64,
    max_potential_decrease: f64,
    end_field_residual: f64,
}

fn ode_flow(cfg: &RunConfig) -> Result<Execution, CliError> {
    let x0 = match &cfg.input {
        Some(p) => read_point(p)?.0,
        None => {
            let game = game_config(cfg)?;
            random_interior(game.num_states, game.num_signals, required(cfg.seed, "seed", cfg)?)
        }
    };
    let steps = required(cfg.steps, "steps", cfg)?;
    let data = trace_name("trajectory", cfg.format);
    let mut out = Outputs::plan(cfg, &[data.clone(), "ode_flow.json".into()])?;

    let traj = integrate_with_stride(&x0, cfg.dt, steps as usize, cfg.stride)?;
    match cfg.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf).expect("writing to memory");
            out.write(&data, &buf)?;
        }
        OutputFormat::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                trajectory: &'a sigdyn::meanfield::Trajectory,
            }
            out.write_json(&data, &Tagged { config: cfg, seed: cfg.seed, body: Body { trajectory: &traj } })?;
        }
    }
    let end = traj.last().clone();
    let body = FlowSummary {
        potential_start: x0.potential(),
        potential_end: end.potential(),
        t_end: *traj.times.last().unwrap_or(&0.0),
        max_potential_decrease: traj.max_potential_decrease(),
        end_field_residual: sigdyn::meanfield::vector_field(&end).max_abs(),
        start: x0,
        end,
    };
    let summary = format!(
        "ode-flow t={}: H {:.6} -> {:.6}, max |F| at end {:.3e}",
        body.t_end, body.potential_start, body.potential_end, body.end_field_residual
    );
    out.write_json("ode_flow.json", &Tagged { config: cfg, seed: cfg.seed, body })?;
    Ok(Execution { status: 0, files: out.written, summary })
}

#[derive(Serialize)]
struct Classified {
    input: PathBuf,
    source_seed: Option<u64>,
    report: StabilityReport,
}

fn classify_point(cfg: &RunConfig) -> Result<Execution, CliError> {
    let input = required(cfg.input.clone(), "input", cfg)?;
    let mut out = Outputs::plan(cfg, &["classification.json".into()])?;
    let (x, source_seed) = read_point(&input)?;
    let report = classify(&x, cfg.tolerance)?;
    let summary = format!(
        "classify {}: {:?} (property P: {}, H = {:.6})",
        input.display(),
        report.classification,
        report.property_p,
        report.potential
    );
    out.write_json(
        "classification.json",
        &Tagged {
            config: cfg,
            seed: cfg.seed,
            body: Classified { input, source_seed, report },
        },
    )?;
    Ok(Execution { status: 0, files: out.written, summary })
}

#[derive(Serialize)]
struct CensusOut<'a> {
    stats: &'a EnsembleStats,
}

fn census(cfg: &RunConfig) -> Result<Execution, CliError> {
    let game = game_config(cfg)?;
    let steps = required(cfg.steps, "steps", cfg)?;
    let reps = required(cfg.replications, "replications", cfg)?;
    let seed = required(cfg.seed, "seed", cfg)?;
    let width = reps.saturating_sub(1).to_string().len().max(4);
    let trace_files: Vec<String> = if cfg.traces {
        (0..reps).map(|r| format!("traces/replication_{r:0width$}.csv")).collect()
    } else {
        vec![]
    };
    let mut names = vec!["census.json".to_string()];
    names.extend(trace_files.iter().cloned());
    let mut out = Outputs::plan(cfg, &names)?;

    let options = ReplicationOptions {
        monitor_epsilon: Some(cfg.epsilon),
    };
    let stats = run_ensemble_with(game, steps, reps, seed, cfg.parallelism, options)?;
    out.write_json("census.json", &Tagged { config: cfg, seed: Some(seed), body: CensusOut { stats: &stats } })?;
    for (name, res) in trace_files.iter().zip(&stats.results) {
        let mut buf = Vec::new();
        write_trace_csv(res, &mut buf).expect("writing to memory");
        out.write(name, &buf)?;
    }
    let mut summary = format!(
        "census {}x{} steps={steps} replications={reps} seed={seed}: {} unresolved",
        game.num_states, game.num_signals, stats.census.unresolved
    );
    for c in &stats.census.classes {
        summary.push_str(&format!(
            "\n  {:>7.4}  P={:<5}  {:?}",
            c.frequency, c.property_p, c.edges
        ));
    }
    Ok(Execution { status: 0, files: out.written, summary })
}

#[derive(Serialize)]
struct Verification {
    passed: bool,
    checks: Vec<Check>,
}

fn verify(cfg: &RunConfig) -> Result<Execution, CliError> {
    let seed = required(cfg.seed, "seed", cfg)?;
    let mut out = Outputs::plan(cfg, &["verify.json".into()])?;
    let checks = run_suite(seed);
    let passed = checks.iter().all(|c| c.passed);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut summary = String::new();
    for c in &checks {
        summary.push_str(&format!(
            "{}  {:width$}  residual {:.3e}  (tol {:.0e}, {} samples){}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance,
            c.samples,
            c.error.as_deref().map(|e| format!("  error: {e}")).unwrap_or_default()
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    summary.push_str(&format!("{} of {} checks passed", checks.len() - failed, checks.len()));
    out.write_json("verify.json", &Tagged { config: cfg, seed: Some(seed), body: Verification { passed, checks } })?;
    Ok(Execution {
        status: if passed { 0 } else { 1 },
        files: out.written,
        summary,
    })
}
