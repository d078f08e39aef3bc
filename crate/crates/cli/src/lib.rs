//! `mlg` command-line front end.
//!
//! Subcommands: `gram` writes a dataset Gram matrix, `check` runs the
//! property self-checks, `cv` runs repeated cross-validation and `stats`
//! prints dataset summaries. Settings come from built-in defaults, then an
//! optional `key=value` file (`--config`), then `MLG_*` environment
//! variables, then flags.

pub mod config;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mlg_core::check::{run_checks, Fault};
use mlg_core::dataset::{dataset_stats, load_tu_dataset, one_hot_features, Dataset};
use mlg_core::exact::gram_exact;
use mlg_core::gram::GramMatrix;
use mlg_core::linearized::gram_linearized;
use mlg_core::svm::cross_validate;

pub use config::{Mode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// A pipeline error or a failed check.
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<mlg_core::Error> for CliError {
    fn from(e: mlg_core::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlg", version, about = "Multiscale Laplacian graph kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a dataset Gram matrix and write it as CSV with a `#` header.
    Gram {
        #[command(flatten)]
        common: Common,
        /// Record wall time in the file header (makes output time-dependent).
        #[arg(long)]
        timing_header: bool,
    },
    /// Run the kernel property checks on random fixtures.
    Check {
        #[command(flatten)]
        common: Common,
        /// Corrupt an intermediate result to exercise failure reporting.
        #[arg(long, value_name = "FAULT")]
        inject: Option<Fault>,
    },
    /// Repeated stratified cross-validation of a C-SVM on the MLG Gram.
    Cv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sweep: Sweep,
    },
    /// Print dataset summary statistics.
    Stats {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Default, Args)]
pub struct Common {
    /// `key=value` configuration file.
    #[arg(long, env = "MLG_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Directory with `NAME_*.txt` files (or their parent).
    #[arg(long, env = "MLG_DATASET")]
    pub dataset: Option<PathBuf>,
    #[arg(long, env = "MLG_NAME")]
    pub name: Option<String>,
    #[arg(long, env = "MLG_LEVELS")]
    pub levels: Option<usize>,
    #[arg(long, env = "MLG_RADIUS")]
    pub radius: Option<usize>,
    #[arg(long, env = "MLG_ETA")]
    pub eta: Option<f64>,
    #[arg(long, env = "MLG_GAMMA")]
    pub gamma: Option<f64>,
    #[arg(long, env = "MLG_TAU")]
    pub tau: Option<f64>,
    /// Sampled vertices per level.
    #[arg(long, env = "MLG_SAMPLES")]
    pub samples: Option<usize>,
    /// Target rank per level.
    #[arg(long, env = "MLG_RANK")]
    pub rank: Option<usize>,
    #[arg(long, env = "MLG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "MLG_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, env = "MLG_MODE", value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, env = "MLG_OUT")]
    pub out: Option<PathBuf>,
    /// Comma-separated SVM C values.
    #[arg(long, env = "MLG_C_GRID")]
    pub c_grid: Option<String>,
    #[arg(long, env = "MLG_FOLDS")]
    pub folds: Option<usize>,
    #[arg(long, env = "MLG_REPEATS")]
    pub repeats: Option<usize>,
    #[arg(long, env = "MLG_INNER_FOLDS")]
    pub inner_folds: Option<usize>,
    /// Use a random subset of this many graphs.
    #[arg(long, env = "MLG_SUBSAMPLE")]
    pub subsample: Option<usize>,
    /// Maximum FLG evaluations in exact mode.
    #[arg(long, env = "MLG_BUDGET")]
    pub budget: Option<u64>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Debug, Default, Args)]
pub struct Sweep {
    /// Evaluate every combination of the grids below and report the best.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value = "2,3")]
    pub sweep_levels: String,
    #[arg(long, default_value = "1,2")]
    pub sweep_radius: String,
    #[arg(long, default_value = "0.01,0.1")]
    pub sweep_eta: String,
    #[arg(long, default_value = "0.01,0.1")]
    pub sweep_gamma: String,
}

impl Common {
    /// Defaults, then the config file, then environment and flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        }
        let s = |v: &dyn ToString| v.to_string();
        let overrides: [(&str, Option<String>); 19] = [
            ("dataset", self.dataset.as_ref().map(|p| p.display().to_string())),
            ("name", self.name.clone()),
            ("levels", self.levels.map(|v| s(&v))),
            ("radius", self.radius.map(|v| s(&v))),
            ("eta", self.eta.map(|v| s(&v))),
            ("gamma", self.gamma.map(|v| s(&v))),
            ("tau", self.tau.map(|v| s(&v))),
            ("samples", self.samples.map(|v| s(&v))),
            ("rank", self.rank.map(|v| s(&v))),
            ("seed", self.seed.map(|v| s(&v))),
            ("threads", self.threads.map(|v| s(&v))),
            ("mode", self.mode.map(|v| s(&v))),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("c_grid", self.c_grid.clone()),
            ("folds", self.folds.map(|v| s(&v))),
            ("repeats", self.repeats.map(|v| s(&v))),
            ("inner_folds", self.inner_folds.map(|v| s(&v))),
            ("subsample", self.subsample.map(|v| s(&v))),
            ("budget", self.budget.map(|v| s(&v))),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v).map_err(CliError::Usage)?;
            }
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

/// Resolves `--dataset`/`--name` to a directory holding `NAME_A.txt`.
fn dataset_location(cfg: &RunConfig) -> Result<(PathBuf, String), CliError> {
    let dir = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::Usage("--dataset is required".into()))?;
    let name = match &cfg.name {
        Some(n) => n.clone(),
        None => dir
            .file_name()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| CliError::Usage("--name is required".into()))?,
    };
    let nested = dir.join(&name);
    if !dir.join(format!("{name}_A.txt")).is_file() && nested.join(format!("{name}_A.txt")).is_file() {
        return Ok((nested, name));
    }
    Ok((dir, name))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let (dir, name) = dataset_location(cfg)?;
    let ds = load_tu_dataset(&dir, &name)?;
    match cfg.subsample {
        Some(n) if n < ds.len() => Ok(ds.subsample(n, cfg.seed)?),
        _ => Ok(ds),
    }
}

pub fn compute_gram(ds: &Dataset, cfg: &RunConfig) -> Result<GramMatrix, CliError> {
    let ds = one_hot_features(ds)?;
    let mut gram = match cfg.mode {
        Mode::Linearized => gram_linearized(&ds.graphs, &cfg.pipeline())?,
        Mode::Exact => {
            let mut g = gram_exact(&ds.graphs, &cfg.mls())?;
            g.set_meta("budget", cfg.budget);
            g
        }
    };
    gram.set_meta("dataset", &ds.name);
    if let Some(n) = cfg.subsample {
        gram.set_meta("subsample", n);
        gram.set_meta("subsample_seed", cfg.seed);
    }
    Ok(gram)
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Failed(format!("writing {}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

pub fn cmd_gram(cfg: &RunConfig, timing_header: bool, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let start = Instant::now();
    let mut gram = compute_gram(&ds, cfg)?;
    let secs = start.elapsed().as_secs_f64();
    if timing_header {
        gram.set_meta("wall_time_s", format!("{secs:.3}"));
    }
    let (min, max) = gram.eigen_extremes();
    eprintln!(
        "{}x{} {} Gram for {} in {secs:.3}s; eigenvalues [{min:.3e}, {max:.3e}]{}",
        gram.size(),
        gram.size(),
        cfg.mode,
        ds.name,
        if gram.is_psd(1e-8) { "" } else { " (NOT PSD)" }
    );
    write_output(cfg.out.as_deref(), &gram.to_text(), stdout)
}

pub fn cmd_check(cfg: &RunConfig, fault: Option<Fault>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let report = run_checks(cfg.seed, fault);
    writeln!(stdout, "{report}")?;
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} check(s) failed", report.failures())))
    }
}

fn cv_once(ds: &Dataset, cfg: &RunConfig) -> Result<mlg_core::svm::CvReport, CliError> {
    let gram = compute_gram(ds, cfg)?;
    Ok(cross_validate(&gram.matrix, &ds.labels, &cfg.cv())?)
}

pub fn cmd_cv(cfg: &RunConfig, sweep: &Sweep, stdout: &mut dyn Write) -> Result<(), CliError> {
    use config::parse_list;
    let ds = load_dataset(cfg)?;
    writeln!(
        stdout,
        "{}: {} graphs, {} classes, {}x{}-fold CV, C grid {:?}, mode {}",
        ds.name,
        ds.len(),
        ds.class_count(),
        cfg.repeats,
        cfg.folds,
        cfg.c_grid,
        cfg.mode
    )?;
    if !sweep.sweep {
        let r = cv_once(&ds, cfg)?;
        writeln!(
            stdout,
            "levels={} radius={} eta={} gamma={}",
            cfg.levels, cfg.radius, cfg.eta, cfg.gamma
        )?;
        let per: Vec<String> = r.repeat_accuracies.iter().map(|a| format!("{:.2}", 100.0 * a)).collect();
        writeln!(stdout, "repeat accuracies: {}", per.join(" "))?;
        writeln!(stdout, "accuracy: {}", r.summary())?;
        return Ok(());
    }
    let levels: Vec<usize> = parse_list("sweep_levels", &sweep.sweep_levels).map_err(CliError::Usage)?;
    let radii: Vec<usize> = parse_list("sweep_radius", &sweep.sweep_radius).map_err(CliError::Usage)?;
    let etas: Vec<f64> = parse_list("sweep_eta", &sweep.sweep_eta).map_err(CliError::Usage)?;
    let gammas: Vec<f64> = parse_list("sweep_gamma", &sweep.sweep_gamma).map_err(CliError::Usage)?;
    writeln!(stdout, "{:>6} {:>6} {:>6} {:>6}  accuracy", "levels", "radius", "eta", "gamma")?;
    let mut best: Option<(f64, String)> = None;
    for &l in &levels {
        for &r in &radii {
            for &e in &etas {
                for &g in &gammas {
                    let point = RunConfig {
                        levels: l,
                        radius: r,
                        eta: e,
                        gamma: g,
                        ..cfg.clone()
                    };
                    point.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                    let rep = cv_once(&ds, &point)?;
                    let row = format!("{l:>6} {r:>6} {e:>6} {g:>6}  {}", rep.summary());
                    writeln!(stdout, "{row}")?;
                    if best.as_ref().is_none_or(|(m, _)| rep.mean > *m) {
                        best = Some((rep.mean, row));
                    }
                }
            }
        }
    }
    if let Some((_, row)) = best {
        writeln!(stdout, "best: {}", row.trim_start())?;
    }
    Ok(())
}

pub fn cmd_stats(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let ds = load_dataset(cfg)?;
    let s = dataset_stats(&ds);
    let classes: Vec<String> = s.classes.iter().map(|(c, n)| format!("{c}:{n}")).collect();
    writeln!(
        stdout,
        "{:<10} {:>6} {:<20} {:>6} {:>7} {:>7} {:>9} {:>8}",
        "dataset", "graphs", "classes", "labels", "nodes", "edges", "directed", "diameter"
    )?;
    writeln!(
        stdout,
        "{:<10} {:>6} {:<20} {:>6} {:>7.2} {:>7.2} {:>9.2} {:>8.2}",
        s.name,
        s.size,
        classes.join(" "),
        s.label_alphabet,
        s.mean_nodes,
        s.mean_edges,
        s.mean_directed_edges,
        s.mean_diameter
    )?;
    Ok(())
}

fn configure_threads(cfg: &RunConfig) -> Result<(), CliError> {
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    Ok(())
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let common = match &cli.command {
        Command::Gram { common, .. } | Command::Check { common, .. } | Command::Cv { common, .. } | Command::Stats { common } => common,
    };
    let cfg = common.resolve()?;
    configure_threads(&cfg)?;
    match &cli.command {
        Command::Gram { timing_header, .. } => cmd_gram(&cfg, *timing_header, stdout),
        Command::Check { inject, .. } => cmd_check(&cfg, *inject, stdout),
        Command::Cv { sweep, .. } => cmd_cv(&cfg, sweep, stdout),
        Command::Stats { .. } => cmd_stats(&cfg, stdout),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
