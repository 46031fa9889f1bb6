use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Default output directory when neither the flags nor the config file name one.
pub const OUT_DIR_ENV: &str = "SIGDYN_OUT_DIR";

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_ODE_STEPS: u64 = 100_000;
pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_EPSILON: f64 = 0.1;
/// verify-identities is deterministic; it does not need a user seed.
pub const DEFAULT_VERIFY_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    OdeFlow,
    Classify,
    Census,
    VerifyIdentities,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::OdeFlow => "ode-flow",
            Command::Classify => "classify",
            Command::Census => "census",
            Command::VerifyIdentities => "verify-identities",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// A validated run. Keys that only some commands use stay optional; the
/// ones a command needs are guaranteed present by [`parse_config`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub states: Option<usize>,
    pub signals: Option<usize>,
    pub initial_weight: u64,
    pub steps: Option<u64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub dt: f64,
    pub stride: usize,
    pub tolerance: f64,
    pub epsilon: f64,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
    pub force: bool,
    pub parallelism: usize,
    /// census only: also write one trace file per replication.
    pub traces: bool,
}

#[derive(Debug, Parser)]
#[command(name = "sigdyn", version, about = "Urn learning in signaling games")]
struct Args {
    /// simulate | ode-flow | classify | census | verify-identities
    command: Option<Command>,
    /// Flat key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    states: Option<String>,
    #[arg(long)]
    signals: Option<String>,
    #[arg(long)]
    initial_weight: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    replications: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    /// ode-flow: record every stride-th step.
    #[arg(long)]
    stride: Option<String>,
    #[arg(long)]
    tolerance: Option<String>,
    /// Epsilon of the stable-configuration monitor.
    #[arg(long)]
    epsilon: Option<String>,
    /// classify: JSON with the point; ode-flow: JSON with the start.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    format: Option<String>,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    parallelism: Option<String>,
    #[arg(long)]
    traces: bool,
}

const KEYS: &[&str] = &[
    "command",
    "states",
    "signals",
    "initial_weight",
    "steps",
    "replications",
    "seed",
    "dt",
    "stride",
    "tolerance",
    "epsilon",
    "input",
    "output_dir",
    "format",
    "force",
    "parallelism",
    "traces",
];

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_text(&text).map_err(|msg| CliError::Config(format!("{}: {msg}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(format!("line {}: expected key = value", lineno + 1));
        };
        let key = normalize_key(k);
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("line {}: unknown key '{}'", lineno + 1, k.trim()));
        }
        let value = v.trim().trim_matches('"').to_string();
        if out.insert(key.clone(), value).is_some() {
            return Err(format!("line {}: duplicate key '{key}'", lineno + 1));
        }
    }
    Ok(out)
}

/// Integer counts written as `1000000`, `1_000_000`, `1e6` or `10^6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let (mantissa, exp) = if let Some((m, e)) = t.split_once(['e', 'E']) {
        (m.parse::<u64>().map_err(|_| format!("not a count: {s}"))?, e)
    } else if let Some(e) = t.strip_prefix("10^") {
        (1, e)
    } else {
        return Err(format!("not a count: {s}"));
    };
    let exp: u32 = exp.parse().map_err(|_| format!("not a count: {s}"))?;
    10u64
        .checked_pow(exp)
        .and_then(|p| p.checked_mul(mantissa))
        .ok_or_else(|| format!("count out of range: {s}"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("not a boolean: {s}")),
    }
}

struct Merged {
    values: BTreeMap<String, String>,
    errors: Vec<String>,
}

impl Merged {
    fn count(&mut self, key: &str) -> Option<u64> {
        let raw = self.values.get(key)?;
        match parse_count(raw) {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{key}: {e}"));
                None
            }
        }
    }

    fn positive_count(&mut self, key: &str) -> Option<u64> {
        let v = self.count(key)?;
        if v == 0 {
            self.errors.push(format!("{key} must be positive"));
            return None;
        }
        Some(v)
    }

    fn positive_real(&mut self, key: &str, default: f64) -> f64 {
        let Some(raw) = self.values.get(key) else {
            return default;
        };
        match raw.trim().parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => v,
            _ => {
                self.errors.push(format!("{key} must be a positive number, got '{raw}'"));
                default
            }
        }
    }

    fn flag(&mut self, key: &str) -> bool {
        match self.values.get(key).map(|v| parse_bool(v)) {
            None => false,
            Some(Ok(b)) => b,
            Some(Err(e)) => {
                self.errors.push(format!("{key}: {e}"));
                false
            }
        }
    }
}

/// Builds a [`RunConfig`] from command-line arguments (without the program
/// name) and an optional config file. A `--config` flag in `args` is used
/// when `file` is `None`.
pub fn parse_config<I, S>(args: I, file: Option<&Path>) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("sigdyn")).chain(args.into_iter().map(Into::into));
    let args = Args::try_parse_from(argv).map_err(CliError::Usage)?;

    let mut values = match file.map(Path::to_path_buf).or_else(|| args.config.clone()) {
        Some(p) => read_config_file(&p)?,
        None => BTreeMap::new(),
    };
    let flags: [(&str, Option<String>); 15] = [
        ("command", args.command.map(|c| c.name().to_string())),
        ("states", args.states),
        ("signals", args.signals),
        ("initial_weight", args.initial_weight),
        ("steps", args.steps),
        ("replications", args.replications),
        ("seed", args.seed),
        ("dt", args.dt),
        ("stride", args.stride),
        ("tolerance", args.tolerance),
        ("epsilon", args.epsilon),
        ("input", args.input),
        ("output_dir", args.output_dir),
        ("format", args.format),
        ("parallelism", args.parallelism),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            values.insert(k.to_string(), v);
        }
    }
    if args.force {
        values.insert("force".into(), "true".into());
    }
    if args.traces {
        values.insert("traces".into(), "true".into());
    }
    build(Merged { values, errors: vec![] })
}

fn build(mut m: Merged) -> Result<RunConfig, CliError> {
    let command = match m.values.get("command") {
        None => return Err(CliError::MissingKeys { command: "sigdyn".into(), keys: vec!["command".into()] }),
        Some(c) => Command::from_str(c, true).map_err(|_| CliError::Config(format!("unknown command '{c}'")))?,
    };
    let states = m.positive_count("states").map(|v| v as usize);
    let signals = m.positive_count("signals").map(|v| v as usize);
    let initial_weight = m.positive_count("initial_weight").unwrap_or(1);
    let steps = m.positive_count("steps");
    let replications = m.positive_count("replications").map(|v| v as usize);
    let seed = m.count("seed");
    let stride = m.positive_count("stride").map_or(DEFAULT_STRIDE, |v| v as usize);
    let parallelism = m
        .positive_count("parallelism")
        .map(|v| v as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let dt = m.positive_real("dt", DEFAULT_DT);
    let tolerance = m.positive_real("tolerance", DEFAULT_TOLERANCE);
    let epsilon = m.positive_real("epsilon", DEFAULT_EPSILON);
    if epsilon >= 1.0 {
        m.errors.push(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    let format = match m.values.get("format") {
        None => OutputFormat::Csv,
        Some(f) => OutputFormat::from_str(f, true).unwrap_or_else(|_| {
            m.errors.push(format!("format must be csv or json, got '{f}'"));
            OutputFormat::Csv
        }),
    };
    let force = m.flag("force");
    let traces = m.flag("traces");
    let input = m.values.get("input").map(PathBuf::from);
    let output_dir = m
        .values
        .get("output_dir")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let mut missing: Vec<&str> = vec![];
    let mut need = |present: bool, key: &'static str| {
        if !present {
            missing.push(key);
        }
    };
    match command {
        Command::Simulate => {
            need(states.is_some(), "states");
            need(signals.is_some(), "signals");
            need(steps.is_some(), "steps");
            need(seed.is_some(), "seed");
        }
        Command::Census => {
            need(states.is_some(), "states");
            need(signals.is_some(), "signals");
            need(steps.is_some(), "steps");
            need(replications.is_some(), "replications");
            need(seed.is_some(), "seed");
        }
        Command::OdeFlow => {
            if input.is_none() {
                need(states.is_some(), "states");
                need(signals.is_some(), "signals");
                need(seed.is_some(), "seed (or input)");
            }
        }
        Command::Classify => need(input.is_some(), "input"),
        Command::VerifyIdentities => {}
    }
    if !m.errors.is_empty() {
        return Err(CliError::Config(m.errors.join("; ")));
    }
    if !missing.is_empty() {
        return Err(CliError::MissingKeys {
            command: command.name().into(),
            keys: missing.into_iter().map(String::from).collect(),
        });
    }
    let steps = match command {
        Command::OdeFlow => Some(steps.unwrap_or(DEFAULT_ODE_STEPS)),
        _ => steps,
    };
    let seed = match command {
        Command::VerifyIdentities => Some(seed.unwrap_or(DEFAULT_VERIFY_SEED)),
        _ => seed,
    };
    Ok(RunConfig {
        command,
        states,
        signals,
        initial_weight,
        steps,
        replications,
        seed,
        dt,
        stride,
        tolerance,
        epsilon,
        input,
        output_dir,
        format,
        force,
        parallelism,
        traces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_in_several_notations() {
        assert_eq!(parse_count("1000000"), Ok(1_000_000));
        assert_eq!(parse_count("1_000_000"), Ok(1_000_000));
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("5E5"), Ok(500_000));
        assert_eq!(parse_count("10^6"), Ok(1_000_000));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("1e30").is_err());
    }

    #[test]
    fn config_text_rejects_unknown_and_duplicate_keys() {
        let ok = parse_config_text("# comment\nsteps = 100000\nmaster-seed = 3\n");
        assert!(ok.unwrap_err().contains("unknown key 'master-seed'"));
        assert!(parse_config_text("seed=1\nseed=2").unwrap_err().contains("duplicate"));
        let m = parse_config_text("output-dir = \"out\" # trailing\n\nforce = yes").unwrap();
        assert_eq!(m["output_dir"], "out");
        assert_eq!(m["force"], "yes");
    }

    #[test]
    fn missing_keys_are_listed_together() {
        let err = parse_config(["census", "--states", "2"], None).unwrap_err();
        let msg = err.to_string();
        for k in ["signals", "steps", "replications", "seed"] {
            assert!(msg.contains(k), "{msg}");
        }
        assert!(!msg.contains("states"), "{msg}");
    }

    #[test]
    fn tolerances_must_be_positive() {
        let err = parse_config(["classify", "--input", "x.json", "--tolerance", "0"], None).unwrap_err();
        assert!(err.to_string().contains("tolerance"));
        assert_eq!(err.exit_code(), 2);
    }
}
