//! Command-line front end.
//!
//! Every option can come from a flag, from a TOML file given by `--config`,
//! or from its default, in that order of precedence. Config keys are the
//! flag names without the leading dashes; unknown keys are rejected.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when `fit` stops at its
//! iteration cap without converging (the fit is still written).

use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Deserialize;

use crate::apps::baseball::{self, baseball_report, synthetic_two_atom, TwoAtomDesign};
use crate::apps::classifier::{fit_classifier, synthetic_classification, ClassifierDesign, ClassifierKind, Confusion};
use crate::apps::glucose::{self, glucose_pipeline, synthetic_subjects, GlucoseModel, GlucoseMode, GlucoseOptions, SubjectDesign};
use crate::apps::simulation::{run_sim_study, Estimator, MixingId, SimConfig, StudyConfig};
use crate::error::{Error, Result};
use crate::grid::{build_grid, default_counts, mle_cloud, parse_counts, BoundsMode, GridSpec};
use crate::io::{self as dataio, observation_header, observation_rows, FitFile};
use crate::kernels::KernelId;
use crate::model::SolverId;
use crate::pipeline::{fit_on_grid, FitOptions};
use crate::posterior::{marginalize, posterior_mean, posterior_rows, sample_mixture_indexed, SampleOptions};
use crate::solvers::{default_max_iter, SolverConfig, DEFAULT_TOL};

/// Grid counts such as `30x30`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridCounts(pub Vec<usize>);

impl FromStr for GridCounts {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_counts(s).map(GridCounts)
    }
}

impl<'de> Deserialize<'de> for GridCounts {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fixed seed, or `auto` to draw one from the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedArg {
    Fixed(u64),
    Auto,
}

impl SeedArg {
    fn value(self) -> u64 {
        match self {
            SeedArg::Fixed(s) => s,
            SeedArg::Auto => {
                let s = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(0);
                eprintln!("using seed {s}");
                s
            }
        }
    }
}

impl FromStr for SeedArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SeedArg::Auto);
        }
        s.parse()
            .map(SeedArg::Fixed)
            .map_err(|_| Error::InvalidConfig(format!("seed must be a nonnegative integer or 'auto', got '{s}'")))
    }
}

impl<'de> Deserialize<'de> for SeedArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(SeedArg::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

macro_rules! deserialize_via_from_str {
    ($($t:ty),*) => {$(
        impl<'de> Deserialize<'de> for Wrapped<$t> {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map(Wrapped).map_err(serde::de::Error::custom)
            }
        }
    )*};
}

/// Config-file value parsed with the same `FromStr` as the flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrapped<T>(pub T);

deserialize_via_from_str!(
    KernelId,
    BoundsMode,
    SolverId,
    MixingId,
    ClassifierKind,
    GlucoseModel,
    GlucoseMode,
    SyntheticDesign
);

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub kernel: Option<Wrapped<KernelId>>,
    pub grid: Option<GridCounts>,
    pub bounds_mode: Option<Wrapped<BoundsMode>>,
    pub solver: Option<Wrapped<SolverId>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<SeedArg>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace: Option<bool>,
    pub fit: Option<PathBuf>,
    pub coords: Option<String>,
    pub mixing: Option<Wrapped<MixingId>>,
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub reps: Option<usize>,
    pub estimators: Option<String>,
    pub synthetic: Option<Wrapped<SyntheticDesign>>,
    pub size: Option<usize>,
    pub estimates: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub kind: Option<Wrapped<ClassifierKind>>,
    pub model: Option<Wrapped<GlucoseModel>>,
    pub mode: Option<Wrapped<GlucoseMode>>,
    pub draws: Option<usize>,
    pub replicates: Option<usize>,
    pub variance: Option<f64>,
    pub dim: Option<String>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_string(),
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ConfigFile::parse(&text, &path.display().to_string())
    }
}

/// Built-in synthetic datasets for the applied subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticDesign {
    /// Two-atom `(lambda, pi)` batting population.
    TwoAtom,
    /// Expression data with 10% of features shifted.
    Shifted,
    /// Expression data with correlated class means.
    Correlated,
    /// Subjects from a two-atom `(log tau, log sigma)` mixture.
    Subjects,
}

impl FromStr for SyntheticDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-atom" => Ok(SyntheticDesign::TwoAtom),
            "shifted" => Ok(SyntheticDesign::Shifted),
            "correlated" => Ok(SyntheticDesign::Correlated),
            "subjects" => Ok(SyntheticDesign::Subjects),
            _ => Err(Error::InvalidConfig(format!(
                "unknown synthetic design '{s}' (two-atom|shifted|correlated|subjects)"
            ))),
        }
    }
}

impl fmt::Display for SyntheticDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticDesign::TwoAtom => "two-atom",
            SyntheticDesign::Shifted => "shifted",
            SyntheticDesign::Correlated => "correlated",
            SyntheticDesign::Subjects => "subjects",
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "npmle", version, about = "Nonparametric maximum likelihood for multivariate mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Likelihood kernel, e.g. gaussian-location-scale.
    #[arg(long, global = true)]
    pub kernel: Option<KernelId>,
    /// Grid points per dimension, e.g. 30x30.
    #[arg(long, global = true)]
    pub grid: Option<GridCounts>,
    /// Grid bounds: box or hull.
    #[arg(long = "bounds-mode", global = true)]
    pub bounds_mode: Option<BoundsMode>,
    /// em or fw.
    #[arg(long, global = true)]
    pub solver: Option<SolverId>,
    /// Relative change in the objective that stops the solver.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter", global = true)]
    pub max_iter: Option<usize>,
    /// Integer seed, or `auto`.
    #[arg(long, global = true)]
    pub seed: Option<SeedArg>,
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// TOML file with default values for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a mixing distribution to observations.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Stream (iteration, objective, kkt_gap) to stderr.
        #[arg(long)]
        trace: bool,
    },
    /// Posterior means of atom coordinates under a saved fit.
    Posterior {
        #[command(flatten)]
        common: CommonArgs,
        /// Fit JSON written by `fit`.
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Comma-separated coordinate names; all by default.
        #[arg(long)]
        coords: Option<String>,
    },
    /// Gaussian location-scale simulation study.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// dist1 or dist2.
        #[arg(long)]
        mixing: Option<MixingId>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated estimator names; all by default.
        #[arg(long)]
        estimators: Option<String>,
    },
    /// Batting-average prediction with the Poisson-binomial mixture.
    Baseball {
        #[command(flatten)]
        common: CommonArgs,
        /// Use a generated dataset instead of --input (two-atom).
        #[arg(long)]
        synthetic: Option<SyntheticDesign>,
        /// Players in the generated dataset.
        #[arg(long)]
        size: Option<usize>,
        /// Also write per-player estimates (all players) here.
        #[arg(long)]
        estimates: Option<PathBuf>,
    },
    /// Two-class empirical Bayes classifier.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
        /// Test matrix; labels in the first column are optional.
        #[arg(long)]
        test: Option<PathBuf>,
        /// joint or independent.
        #[arg(long)]
        kind: Option<ClassifierKind>,
        /// Use a generated dataset (shifted or correlated).
        #[arg(long)]
        synthetic: Option<SyntheticDesign>,
    },
    /// Glucose prediction with linear and state-space models.
    Glucose {
        #[command(flatten)]
        common: CommonArgs,
        /// lm or ss; both by default.
        #[arg(long)]
        model: Option<GlucoseModel>,
        /// combined, individual or npmle; all by default.
        #[arg(long)]
        mode: Option<GlucoseMode>,
        /// Use generated subjects (subjects).
        #[arg(long)]
        synthetic: Option<SyntheticDesign>,
        /// Subjects in the generated dataset.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Draw observations from a saved fit.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long)]
        draws: Option<usize>,
        /// Replicates per draw, or subjects per class for two-class fits.
        #[arg(long)]
        replicates: Option<usize>,
        /// Measurement variance for location and two-class fits.
        #[arg(long)]
        variance: Option<f64>,
    },
    /// Marginal mass of one coordinate of a saved fit.
    Marginal {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        fit: Option<PathBuf>,
        /// Coordinate name or 0-based index.
        #[arg(long)]
        dim: Option<String>,
    },
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Fit { common, .. }
            | Command::Posterior { common, .. }
            | Command::Simulate { common, .. }
            | Command::Baseball { common, .. }
            | Command::Classify { common, .. }
            | Command::Glucose { common, .. }
            | Command::Sample { common, .. }
            | Command::Marginal { common, .. } => common,
        }
    }
}

/// Flag, else config value, else default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

fn unwrap<T>(w: Option<Wrapped<T>>) -> Option<T> {
    w.map(|Wrapped(v)| v)
}

/// Options shared by every subcommand after precedence is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub kernel: Option<KernelId>,
    pub grid: Option<Vec<usize>>,
    pub bounds_mode: BoundsMode,
    pub solver: SolverId,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: Option<SeedArg>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(args: &CommonArgs, cfg: &ConfigFile) -> Result<Self> {
        let solver = pick(args.solver, unwrap(cfg.solver), SolverId::Em);
        let s = Settings {
            kernel: args.kernel.or(unwrap(cfg.kernel)),
            grid: args.grid.clone().or(cfg.grid.clone()).map(|g| g.0),
            bounds_mode: pick(args.bounds_mode, unwrap(cfg.bounds_mode), BoundsMode::BoundingBox),
            solver,
            tol: pick(args.tol, cfg.tol, DEFAULT_TOL),
            max_iter: pick(args.max_iter, cfg.max_iter, default_max_iter(solver)),
            seed: args.seed.or(cfg.seed),
            input: args.input.clone().or(cfg.input.clone()),
            output: args.output.clone().or(cfg.output.clone()),
        };
        if !(s.tol > 0.0) || s.max_iter == 0 {
            return Err(Error::InvalidConfig("tol and max-iter must be positive".into()));
        }
        Ok(s)
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig::for_solver(self.solver)
            .with_tol(self.tol)
            .with_max_iter(self.max_iter)
    }

    fn grid_spec(&self, default: Vec<usize>) -> GridSpec {
        GridSpec::new(self.grid.clone().unwrap_or(default)).with_mode(self.bounds_mode)
    }

    fn fit_options(&self, default_grid: Vec<usize>) -> FitOptions {
        FitOptions {
            grid: self.grid_spec(default_grid),
            solver: self.solver,
            config: self.solver_config(),
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--input is required".into()))
    }

    /// Seed for randomized subcommands, which refuse to run without one.
    fn required_seed(&self, what: &str) -> Result<u64> {
        self.seed.map(SeedArg::value).ok_or_else(|| {
            Error::InvalidConfig(format!("{what} is randomized: pass --seed <n> or --seed auto"))
        })
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        sink(self.output.as_deref())
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidConfig(format!("--{flag} is required")))
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            1
        }
    }
}

fn is_broken_pipe(e: &Error) -> bool {
    let io = match e {
        Error::Io(io) => Some(io),
        Error::Csv(c) => match c.kind() {
            csv::ErrorKind::Io(io) => Some(io),
            _ => None,
        },
        _ => None,
    };
    io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
}

fn error_chain(e: &Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}

fn load_config(common: &CommonArgs) -> Result<ConfigFile> {
    match &common.config {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

/// Runs one parsed subcommand.
pub fn execute(cmd: &Command) -> Result<i32> {
    let cfg = load_config(cmd.common())?;
    let s = Settings::resolve(cmd.common(), &cfg)?;
    match cmd {
        Command::Fit { trace, .. } => cmd_fit(&s, *trace || cfg.trace.unwrap_or(false)),
        Command::Posterior { fit, coords, .. } => cmd_posterior(
            &s,
            &required(fit.clone().or(cfg.fit.clone()), "fit")?,
            coords.clone().or(cfg.coords.clone()),
        ),
        Command::Simulate {
            mixing,
            p,
            n,
            reps,
            estimators,
            ..
        } => {
            let defaults = SimConfig::default();
            let sim = SimConfig {
                p: pick(*p, cfg.p, defaults.p),
                n: pick(*n, cfg.n, defaults.n),
                mixing: pick(*mixing, unwrap(cfg.mixing), defaults.mixing),
                reps: pick(*reps, cfg.reps, defaults.reps),
                seed: 0,
            };
            cmd_simulate(&s, sim, estimators.clone().or(cfg.estimators.clone()))
        }
        Command::Baseball {
            synthetic,
            size,
            estimates,
            ..
        } => cmd_baseball(
            &s,
            synthetic.or(unwrap(cfg.synthetic)),
            size.or(cfg.size),
            estimates.clone().or(cfg.estimates.clone()),
        ),
        Command::Classify {
            test, kind, synthetic, ..
        } => cmd_classify(
            &s,
            test.clone().or(cfg.test.clone()),
            pick(*kind, unwrap(cfg.kind), ClassifierKind::Joint),
            synthetic.or(unwrap(cfg.synthetic)),
        ),
        Command::Glucose {
            model,
            mode,
            synthetic,
            size,
            ..
        } => cmd_glucose(
            &s,
            model.or(unwrap(cfg.model)),
            mode.or(unwrap(cfg.mode)),
            synthetic.or(unwrap(cfg.synthetic)),
            size.or(cfg.size),
        ),
        Command::Sample {
            fit,
            draws,
            replicates,
            variance,
            ..
        } => {
            let d = SampleOptions::default();
            cmd_sample(
                &s,
                &required(fit.clone().or(cfg.fit.clone()), "fit")?,
                pick(*draws, cfg.draws, 1000),
                SampleOptions {
                    replicates: pick(*replicates, cfg.replicates, d.replicates),
                    variance: pick(*variance, cfg.variance, d.variance),
                },
            )
        }
        Command::Marginal { fit, dim, .. } => cmd_marginal(
            &s,
            &required(fit.clone().or(cfg.fit.clone()), "fit")?,
            &pick(dim.clone(), cfg.dim.clone(), "0".to_string()),
        ),
    }
}

fn cmd_fit(s: &Settings, trace: bool) -> Result<i32> {
    let kernel = required(s.kernel, "kernel")?;
    let data = dataio::read_observations(s.input()?, kernel)?;
    let cloud = mle_cloud(kernel, &data.observations)?;
    let counts = match &s.grid {
        Some(g) => g.clone(),
        None => default_counts(cloud.atoms[0].dim(), data.len())?,
    };
    let spec = GridSpec::new(counts).with_mode(s.bounds_mode);
    let grid = build_grid(kernel, &cloud.atoms, &spec)?;
    let mut cfg = s.solver_config();
    cfg.trace = trace;
    let start = Instant::now();
    let fitted = fit_on_grid(kernel, &data.observations, cloud, grid, s.solver, &cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let seed = s.seed.map(SeedArg::value);
    let file = FitFile::new(kernel, &fitted.grid, &fitted.fit, &data.observations, seed, wall)?;
    let mut out = s.sink()?;
    out.write_all(file.to_json()?.as_bytes())?;
    out.flush()?;
    let r = &fitted.fit;
    eprintln!(
        "{} on {} atoms: {} iterations, neg_log_lik {:.8}, kkt_gap {:.3e}, support {}, {}",
        r.solver,
        fitted.grid.len(),
        r.iterations,
        file.neg_log_lik,
        file.kkt_gap,
        r.weights.support().len(),
        if r.converged { "converged" } else { "NOT converged" }
    );
    Ok(if r.converged { 0 } else { 2 })
}

fn cmd_posterior(s: &Settings, fit_path: &Path, coords: Option<String>) -> Result<i32> {
    let fit = FitFile::read(fit_path)?;
    if let Some(k) = s.kernel {
        if k != fit.kernel {
            return Err(Error::InvalidConfig(format!(
                "--kernel {k} does not match the fit's kernel {}",
                fit.kernel
            )));
        }
    }
    let data = dataio::read_observations(s.input()?, fit.kernel)?;
    let grid = fit.grid()?;
    let w = fit.weights()?;
    let names = fit.kernel.coord_names(grid.dim());
    let wanted: Vec<usize> = match coords {
        None => (0..names.len()).collect(),
        Some(list) => list
            .split(',')
            .map(|c| {
                let c = c.trim();
                names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown coordinate '{c}' (have {})", names.join(","))))
            })
            .collect::<Result<_>>()?,
    };
    let l = crate::kernels::likelihood_matrix(fit.kernel, &data.observations, &grid)?;
    let rows = posterior_rows(&l, &w)?;
    let mut out = csv::Writer::from_writer(s.sink()?);
    let mut header = vec!["id".to_string()];
    header.extend(wanted.iter().map(|&c| format!("post_mean_{}", names[c])));
    out.write_record(&header)?;
    for (id, row) in data.ids.iter().zip(&rows) {
        let mut rec = vec![id.clone()];
        for &c in &wanted {
            rec.push(posterior_mean(row, &grid, |a| a[c])?.to_string());
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_simulate(s: &Settings, mut sim: SimConfig, estimators: Option<String>) -> Result<i32> {
    sim.seed = s.required_seed("simulate")?;
    let mut study = StudyConfig::new(sim);
    if let Some(list) = estimators {
        study.estimators = list.split(',').map(|e| e.trim().parse()).collect::<Result<Vec<Estimator>>>()?;
    }
    if let Some(g) = &s.grid {
        study.grid = g.clone();
    }
    study.bounds_mode = s.bounds_mode;
    study.tol = s.tol;
    match s.solver {
        SolverId::Em => study.em_max_iter = s.max_iter,
        SolverId::FrankWolfe => study.fw_max_iter = s.max_iter,
    }
    let report = run_sim_study(&study)?;
    if let Some(p) = &s.output {
        report.write_csv(BufWriter::new(File::create(p)?))?;
    }
    print!("{}", report.text_table());
    Ok(0)
}

fn cmd_baseball(
    s: &Settings,
    synthetic: Option<SyntheticDesign>,
    size: Option<usize>,
    estimates: Option<PathBuf>,
) -> Result<i32> {
    let records = match synthetic {
        Some(SyntheticDesign::TwoAtom) => {
            let seed = s.required_seed("a synthetic dataset")?;
            let d = TwoAtomDesign::default();
            synthetic_two_atom(
                &TwoAtomDesign {
                    players: size.unwrap_or(d.players),
                    ..d
                },
                seed,
            )?
        }
        Some(other) => return Err(Error::InvalidConfig(format!("baseball has no '{other}' design (two-atom)"))),
        None => dataio::read_baseball(s.input()?)?,
    };
    let opts = s.fit_options(baseball::default_options().grid.per_dim_counts);
    let report = baseball_report(&records, &opts)?;
    if let Some(p) = &s.output {
        report.write_csv(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = estimates {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(p)?));
        for e in &report.cohorts[0].players {
            w.serialize(e)?;
        }
        w.flush()?;
    }
    print!("TSE relative to the MLE\n{}", report.text_table());
    Ok(0)
}

fn cmd_classify(
    s: &Settings,
    test: Option<PathBuf>,
    kind: ClassifierKind,
    synthetic: Option<SyntheticDesign>,
) -> Result<i32> {
    let (train, labels, test_x, test_y) = match synthetic {
        Some(d @ (SyntheticDesign::Shifted | SyntheticDesign::Correlated)) => {
            let seed = s.required_seed("a synthetic dataset")?;
            let design = if d == SyntheticDesign::Shifted {
                ClassifierDesign::shifted()
            } else {
                ClassifierDesign::correlated()
            };
            let data = synthetic_classification(&design, seed)?;
            (data.train, data.train_labels, data.test, Some(data.test_labels))
        }
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "classify has no '{other}' design (shifted|correlated)"
            )))
        }
        None => {
            let input = s.input()?;
            let m = dataio::read_matrix(input)?;
            let (x, y) = dataio::split_labels(&m, &input.display().to_string())?;
            let p = x[0].len();
            let test_path = required(test, "test")?;
            let tm = dataio::read_matrix(&test_path)?;
            let width = tm.rows[0].len();
            let (tx, ty) = if width == p + 1 {
                let (a, b) = dataio::split_labels(&tm, &test_path.display().to_string())?;
                (a, Some(b))
            } else if width == p {
                (tm.rows, None)
            } else {
                return Err(Error::Parse {
                    path: test_path.display().to_string(),
                    line: tm.lines[0],
                    message: format!("expected {p} or {} columns, found {width}", p + 1),
                });
            };
            (x, y, tx, ty)
        }
    };
    let model = fit_classifier(&train, &labels, kind, &s.fit_options(vec![30, 30]))?;
    let mut out = csv::Writer::from_writer(s.sink()?);
    out.write_record(["row", "score", "predicted", "label"])?;
    let mut predicted = Vec::with_capacity(test_x.len());
    for (i, x) in test_x.iter().enumerate() {
        let score = model.score(x).map_err(|e| Error::at(i, e))?;
        let p = u8::from(score >= 0.0);
        predicted.push(p);
        let label = test_y.as_ref().map(|y| y[i].to_string()).unwrap_or_default();
        out.write_record([i.to_string(), score.to_string(), p.to_string(), label])?;
    }
    out.flush()?;
    drop(out);
    if let Some(y) = &test_y {
        let c = Confusion::from_labels(y, &predicted)?;
        let msg = c.text_table();
        if s.output.is_some() {
            print!("{msg}");
        } else {
            eprint!("{msg}");
        }
    }
    Ok(0)
}

fn cmd_glucose(
    s: &Settings,
    model: Option<GlucoseModel>,
    mode: Option<GlucoseMode>,
    synthetic: Option<SyntheticDesign>,
    size: Option<usize>,
) -> Result<i32> {
    let subjects = match synthetic {
        Some(SyntheticDesign::Subjects) => {
            let seed = s.required_seed("a synthetic dataset")?;
            let d = SubjectDesign::default();
            synthetic_subjects(
                &SubjectDesign {
                    subjects: size.unwrap_or(d.subjects),
                    ..d
                },
                seed,
            )?
        }
        Some(other) => return Err(Error::InvalidConfig(format!("glucose has no '{other}' design (subjects)"))),
        None => dataio::read_glucose(s.input()?)?,
    };
    let defaults = GlucoseOptions::default();
    let lm_counts = defaults.lm.grid.per_dim_counts.clone();
    let ss_counts = defaults.ss.grid.per_dim_counts.clone();
    let settings_without_grid = Settings { grid: None, ..s.clone() };
    let mut opts = GlucoseOptions {
        lm: settings_without_grid.fit_options(lm_counts),
        ss: settings_without_grid.fit_options(ss_counts),
    };
    if let Some(g) = &s.grid {
        match g.len() {
            3 => opts.lm.grid.per_dim_counts = g.clone(),
            2 => opts.ss.grid.per_dim_counts = g.clone(),
            _ => return Err(Error::InvalidGrid("glucose grids are 3-D (lm) or 2-D (ss)".into())),
        }
    }
    let models = model.map_or(GlucoseModel::ALL.to_vec(), |m| vec![m]);
    let modes = mode.map_or(GlucoseMode::ALL.to_vec(), |m| vec![m]);
    let mut results = Vec::new();
    for &m in &models {
        for &md in &modes {
            info!("glucose {m}/{md}");
            results.push(glucose_pipeline(&subjects, m, md, &opts)?);
        }
    }
    let report = glucose::GlucoseReport { results };
    if let Some(p) = &s.output {
        report.write_csv(BufWriter::new(File::create(p)?))?;
    }
    print!("{}", report.text_table());
    Ok(0)
}

fn cmd_sample(s: &Settings, fit_path: &Path, draws: usize, opts: SampleOptions) -> Result<i32> {
    let seed = s.required_seed("sample")?;
    let fit = FitFile::read(fit_path)?;
    let grid = fit.grid()?;
    let w = fit.weights()?;
    let samples = sample_mixture_indexed(fit.kernel, &grid, &w, draws, seed, &opts)?;
    let names = fit.kernel.coord_names(grid.dim());
    let mut out = csv::Writer::from_writer(s.sink()?);
    let Some((_, first)) = samples.first() else {
        return Ok(0);
    };
    let mut header: Vec<String> = observation_header(first).iter().map(|h| h.to_string()).collect();
    header.push("atom".into());
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for (i, (k, obs)) in samples.iter().enumerate() {
        let atom = grid.atoms()[*k].coords();
        for mut row in observation_rows(&format!("d{i}"), obs) {
            row.push(k.to_string());
            row.extend(atom.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(0)
}

fn cmd_marginal(s: &Settings, fit_path: &Path, dim: &str) -> Result<i32> {
    let fit = FitFile::read(fit_path)?;
    let grid = fit.grid()?;
    let w = fit.weights()?;
    let names = fit.kernel.coord_names(grid.dim());
    let d = match dim.parse::<usize>() {
        Ok(d) => d,
        Err(_) => names
            .iter()
            .position(|n| n == dim)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown coordinate '{dim}' (have {})", names.join(","))))?,
    };
    if d >= grid.dim() {
        return Err(Error::InvalidConfig(format!("dimension {d} out of range for a {}-D grid", grid.dim())));
    }
    let mut out = csv::Writer::from_writer(s.sink()?);
    out.write_record([names[d].as_str(), "mass"])?;
    for (v, m) in marginalize(&grid, &w, d)? {
        out.write_record([v.to_string(), m.to_string()])?;
    }
    out.flush()?;
    if s.solver != SolverId::Em || s.kernel.is_some() {
        warn!("--solver and --kernel are ignored by marginal");
    }
    Ok(0)
}
