//! Experiment runner behind the `ipvt` binary: configuration, dispatch,
//! reports and artifact files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

mod experiments;
pub mod plot;

/// Version of the `*.report.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("parameter `{key}` = `{value}`: {reason}")]
    InvalidParameter { key: String, value: String, reason: String },
    #[error("unknown parameter `{key}` for {experiment}; accepted: {accepted}")]
    UnknownParameter {
        key: String,
        experiment: Experiment,
        accepted: String,
    },
    #[error("malformed inline parameter `{0}`, expected key=value")]
    MalformedParameter(String),
    #[error("config file {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("cannot write to {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] ipvt_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Volume,
    Delays,
    CoronaPortrait,
    Coverage,
    Mushroom,
    Field,
    Tiebreak,
    EndProbe,
    NmlProbe,
    IsometryCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 10] = [
        Experiment::Volume,
        Experiment::Delays,
        Experiment::CoronaPortrait,
        Experiment::Coverage,
        Experiment::Mushroom,
        Experiment::Field,
        Experiment::Tiebreak,
        Experiment::EndProbe,
        Experiment::NmlProbe,
        Experiment::IsometryCheck,
    ];

    /// Snake-case id used in file names and config files.
    pub fn id(self) -> &'static str {
        match self {
            Experiment::Volume => "volume",
            Experiment::Delays => "delays",
            Experiment::CoronaPortrait => "corona_portrait",
            Experiment::Coverage => "coverage",
            Experiment::Mushroom => "mushroom",
            Experiment::Field => "field",
            Experiment::Tiebreak => "tiebreak",
            Experiment::EndProbe => "end_probe",
            Experiment::NmlProbe => "nml_probe",
            Experiment::IsometryCheck => "isometry_check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Experiment::ALL
            .into_iter()
            .find(|e| e.id() == norm)
            .ok_or_else(|| CliError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub parameters: BTreeMap<String, String>,
    pub output_dir: PathBuf,
}

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_OUTPUT_DIR: &str = "out";

/// Contents of a `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub parameters: BTreeMap<String, toml::Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

fn toml_scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(a) => a.iter().map(toml_scalar).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Parses inline `key=value` arguments.
pub fn parse_inline(args: &[String]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for a in args {
        let (k, v) = a.split_once('=').ok_or_else(|| CliError::MalformedParameter(a.clone()))?;
        if k.is_empty() {
            return Err(CliError::MalformedParameter(a.clone()));
        }
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Merges command-line settings with an optional config file. The file wins
/// on conflicts; each conflict produces a warning.
pub fn resolve_config(
    experiment: Experiment,
    inline: BTreeMap<String, String>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    file: Option<(&Path, ConfigFile)>,
) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut cfg = ExperimentConfig {
        experiment,
        seed: seed.unwrap_or(DEFAULT_SEED),
        parameters: inline,
        output_dir: output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
    };
    let Some((path, file)) = file else {
        return Ok((cfg, warnings));
    };
    if let Some(name) = &file.experiment {
        let e: Experiment = name.parse()?;
        if e != experiment {
            return Err(CliError::Config {
                path: path.to_path_buf(),
                reason: format!("file is for experiment `{e}`, command is `{experiment}`"),
            });
        }
    }
    if let Some(s) = file.seed {
        if seed.is_some_and(|x| x != s) {
            warnings.push(format!("seed: config file value {s} overrides command line {}", seed.unwrap()));
        }
        cfg.seed = s;
    }
    if let Some(dir) = file.output_dir {
        if output_dir.as_ref().is_some_and(|d| *d != dir) {
            warnings.push(format!("output_dir: config file value {} overrides command line", dir.display()));
        }
        cfg.output_dir = dir;
    }
    for (k, v) in &file.parameters {
        let v = toml_scalar(v);
        if let Some(old) = cfg.parameters.get(k) {
            if *old != v {
                warnings.push(format!("parameter `{k}`: config file value `{v}` overrides command line `{old}`"));
            }
        }
        cfg.parameters.insert(k.clone(), v);
    }
    Ok((cfg, warnings))
}

/// Typed access to experiment parameters; records effective values and
/// rejects keys that no experiment step asked for.
pub(crate) struct Params {
    experiment: Experiment,
    given: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Params {
    fn new(experiment: Experiment, given: &BTreeMap<String, String>) -> Self {
        Self {
            experiment,
            given: given.clone(),
            used: BTreeMap::new(),
        }
    }

    fn invalid(key: &str, value: &str, reason: impl Into<String>) -> CliError {
        CliError::InvalidParameter {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    fn raw(&mut self, key: &str, default: &str) -> String {
        let v = self.given.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.used.insert(key.to_string(), v.clone());
        v
    }

    pub(crate) fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        let v = self.raw(key, &default.to_string());
        let x: f64 = v.parse().map_err(|_| Self::invalid(key, &v, "not a number"))?;
        if !x.is_finite() {
            return Err(Self::invalid(key, &v, "must be finite"));
        }
        Ok(x)
    }

    pub(crate) fn positive(&mut self, key: &str, default: f64) -> Result<f64> {
        let x = self.f64(key, default)?;
        if x <= 0.0 {
            return Err(Self::invalid(key, &x.to_string(), "must be > 0"));
        }
        Ok(x)
    }

    pub(crate) fn count(&mut self, key: &str, default: u64) -> Result<u64> {
        let v = self.raw(key, &default.to_string());
        // accept 1e7-style counts
        let x: f64 = v.parse().map_err(|_| Self::invalid(key, &v, "not a count"))?;
        if !(x >= 1.0) || x.fract() != 0.0 || x > 9.0e15 {
            return Err(Self::invalid(key, &v, "must be a positive integer"));
        }
        Ok(x as u64)
    }

    pub(crate) fn list(&mut self, key: &str, default: &str) -> Result<Vec<f64>> {
        let v = self.raw(key, default);
        v.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| Self::invalid(key, &v, format!("`{s}` is not a number"))))
            .collect()
    }

    pub(crate) fn choice(&mut self, key: &str, default: &str, options: &[&str]) -> Result<String> {
        let v = self.raw(key, default);
        if !options.contains(&v.as_str()) {
            return Err(Self::invalid(key, &v, format!("expected one of {}", options.join(", "))));
        }
        Ok(v)
    }

    /// Errors on any given key that was never read.
    pub(crate) fn finish(self) -> Result<BTreeMap<String, String>> {
        if let Some(k) = self.given.keys().find(|k| !self.used.contains_key(*k)) {
            return Err(CliError::UnknownParameter {
                key: k.clone(),
                experiment: self.experiment,
                accepted: self.used.keys().cloned().collect::<Vec<_>>().join(", "),
            });
        }
        Ok(self.used)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub seed: u64,
    pub generator: String,
    /// Effective parameters, defaults included.
    pub parameters: BTreeMap<String, String>,
    pub statistics: serde_json::Value,
    pub checks: Vec<Check>,
    pub pass: bool,
    pub artifacts: Vec<String>,
    /// Only recorded on request, since it breaks byte-identical reruns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

/// What an experiment hands back before the report is assembled.
pub(crate) struct Outcome {
    pub parameters: BTreeMap<String, String>,
    pub statistics: serde_json::Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
}

pub(crate) struct Sink<'a> {
    dir: &'a Path,
    experiment: Experiment,
}

impl Sink<'_> {
    /// Path of artifact `<experiment><suffix>`.
    pub(crate) fn path(&self, suffix: &str) -> (PathBuf, String) {
        let name = format!("{}{suffix}", self.experiment.id());
        (self.dir.join(&name), name)
    }

    pub(crate) fn csv(&self, suffix: &str) -> Result<(csv::Writer<fs::File>, String)> {
        let (path, name) = self.path(suffix);
        let file = fs::File::create(&path).map_err(|source| CliError::Output { path, source })?;
        Ok((csv::Writer::from_writer(file), name))
    }

    pub(crate) fn svg(&self, suffix: &str, doc: &svg::Document) -> Result<String> {
        let (path, name) = self.path(suffix);
        svg::save(&path, doc).map_err(|source| CliError::Output { path, source })?;
        Ok(name)
    }
}

/// Runs one experiment, writes its artifacts and `<id>.report.json`.
pub fn run(config: &ExperimentConfig, record_wall_time: bool) -> Result<TestReport> {
    let start = Instant::now();
    fs::create_dir_all(&config.output_dir).map_err(|source| CliError::Output {
        path: config.output_dir.clone(),
        source,
    })?;
    let params = Params::new(config.experiment, &config.parameters);
    let sink = Sink {
        dir: &config.output_dir,
        experiment: config.experiment,
    };
    let out = experiments::dispatch(config.experiment, params, config.seed, &sink)?;
    let (path, name) = sink.path(".report.json");
    let mut report = TestReport {
        schema_version: SCHEMA_VERSION,
        experiment: config.experiment,
        seed: config.seed,
        generator: ipvt_core::rng::GENERATOR_ID.to_string(),
        parameters: out.parameters,
        statistics: out.statistics,
        pass: out.checks.iter().all(|c| c.pass),
        checks: out.checks,
        artifacts: out.artifacts,
        wall_time_s: None,
    };
    report.artifacts.push(name);
    if record_wall_time {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(&path, text).map_err(|source| CliError::Output { path, source })?;
    Ok(report)
}
