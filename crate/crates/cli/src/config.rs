//! Run configuration: defaults, `key=value` files and overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mlg_core::exact::{MlsParams, DEFAULT_BUDGET};
use mlg_core::flg::FlgParams;
use mlg_core::linearized::PipelineParams;
use mlg_core::spd::DEFAULT_TAU;
use mlg_core::svm::{CvOptions, DEFAULT_C_GRID};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mode {
    Exact,
    #[default]
    Linearized,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exact" => Ok(Mode::Exact),
            "linearized" => Ok(Mode::Linearized),
            other => Err(format!("mode must be exact or linearized, got {other:?}")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Linearized => "linearized",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub name: Option<String>,
    pub levels: usize,
    pub radius: usize,
    pub eta: f64,
    pub gamma: f64,
    pub tau: f64,
    pub samples: usize,
    pub rank: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub mode: Mode,
    pub out: Option<PathBuf>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub repeats: usize,
    pub inner_folds: usize,
    pub subsample: Option<usize>,
    pub budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            name: None,
            levels: 2,
            radius: 1,
            eta: 0.1,
            gamma: 0.1,
            tau: DEFAULT_TAU,
            samples: 100,
            rank: 10,
            seed: 0,
            threads: None,
            mode: Mode::Linearized,
            out: None,
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: 10,
            repeats: 10,
            inner_folds: 5,
            subsample: None,
            budget: DEFAULT_BUDGET,
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "name",
    "levels",
    "radius",
    "eta",
    "gamma",
    "tau",
    "samples",
    "rank",
    "seed",
    "threads",
    "mode",
    "out",
    "c_grid",
    "folds",
    "repeats",
    "inner_folds",
    "subsample",
    "budget",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| format!("{key}: cannot parse {value:?}: {e}"))
}

/// Comma-separated list of values.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let items = value
        .split(',')
        .map(|s| parse(key, s.trim()))
        .collect::<Result<Vec<T>, String>>()?;
    if items.is_empty() {
        return Err(format!("{key}: empty list"));
    }
    Ok(items)
}

/// Splits a config file into `(line, key, value)` triples. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError {
            line: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError {
                line: i + 1,
                message: format!("unknown key {:?}", k.trim()),
            });
        }
        out.push((i + 1, key, v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "name" => self.name = Some(value.to_string()),
            "levels" => self.levels = parse(key, value)?,
            "radius" => self.radius = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "tau" => self.tau = parse(key, value)?,
            "samples" => self.samples = parse(key, value)?,
            "rank" => self.rank = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = Some(parse(key, value)?),
            "mode" => self.mode = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "c_grid" => self.c_grid = parse_list(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "repeats" => self.repeats = parse(key, value)?,
            "inner_folds" => self.inner_folds = parse(key, value)?,
            "subsample" => self.subsample = Some(parse(key, value)?),
            "budget" => self.budget = parse(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies every entry of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (line, key, value) in parse_config_text(text)? {
            self.set(&key, &value).map_err(|message| ConfigError { line, message })?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |message: String| Err(ConfigError { line: 0, message });
        if self.levels == 0 || self.radius == 0 {
            return fail("levels and radius must be at least 1".into());
        }
        if self.rank == 0 || self.samples < self.rank {
            return fail(format!("need samples >= rank >= 1 (samples={}, rank={})", self.samples, self.rank));
        }
        if let Err(e) = self.flg().validate() {
            return fail(e.to_string());
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        if self.c_grid.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
            return fail("every C must be positive".into());
        }
        if self.folds < 2 || self.inner_folds < 2 || self.repeats == 0 {
            return fail("need folds >= 2, inner_folds >= 2, repeats >= 1".into());
        }
        Ok(())
    }

    pub fn flg(&self) -> FlgParams {
        FlgParams {
            eta: self.eta,
            gamma: self.gamma,
            tau: self.tau,
        }
    }

    pub fn pipeline(&self) -> PipelineParams {
        PipelineParams {
            levels: self.levels,
            radius: self.radius,
            eta: self.eta,
            gamma: self.gamma,
            tau: self.tau,
            samples: self.samples,
            rank: self.rank,
            seed: self.seed,
        }
    }

    pub fn mls(&self) -> MlsParams {
        MlsParams {
            levels: self.levels,
            radius: self.radius,
            flg: self.flg(),
            budget: self.budget,
            ..MlsParams::default()
        }
    }

    pub fn cv(&self) -> CvOptions {
        CvOptions {
            folds: self.folds,
            repeats: self.repeats,
            inner_folds: self.inner_folds,
            c_grid: self.c_grid.clone(),
            seed: self.seed,
            ..CvOptions::default()
        }
    }
}
