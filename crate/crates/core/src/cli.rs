//! `rcctl` command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration and usage errors
//! (including unreadable inputs), 3 for numerical failures such as a
//! diverging integration or prediction.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::control::{run_controlled, ControlConfig, ControlError};
use crate::dynamics::{integrate_sampled, DynamicsError, StateVector, SystemId, SystemParams, Trajectory};
use crate::experiments::{
    catalog, export_results, find_scenario, load_scenarios, merge_json, render_table, run_ensemble, ExperimentError,
    ScenarioSpec, TABLE1_SCENARIOS,
};
use crate::io::{
    export_controlled_run, read_json, read_trajectory_csv, write_json, write_trajectory_csv, IoError, MeasureReport,
};
use crate::measures::{measure_attractor, CorrDimConfig, LyapunovConfig, MeasureError};
use crate::reservoir::{
    build_network, load_model, predict_autonomous, save_model, synchronize, train, PersistError, RCHyperParams,
    ReservoirError, TrainedReservoir,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Reservoir-computing control of chaotic flows.
#[derive(Debug, Parser)]
#[command(name = "rcctl", version, about, long_about = None)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Realization seed; drives the reservoir draw and initial conditions.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs that are not given an explicit path.
    #[arg(long, global = true, env = "RCCTL_OUT_DIR", default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for ensemble runs [default: number of CPUs].
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate a system and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Train a reservoir on a trajectory and save the model as JSON.
    Train(TrainArgs),
    /// Synchronize a saved model on data and run it autonomously.
    Predict(PredictArgs),
    /// Run the controlled plant against a saved model's prediction.
    Control(ControlArgs),
    /// Largest Lyapunov exponent, correlation dimension and volume of a trajectory.
    Measure(MeasureArgs),
    /// Run seed ensembles over catalog scenarios and export the statistics.
    Reproduce(ReproduceArgs),
}

/// System selection and parameters. Unset parameters take the defaults of
/// the chosen system.
#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// lorenz or roessler.
    #[arg(long, default_value = "lorenz")]
    pub system: SystemId,
    /// Lorenz sigma [default: 10].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Lorenz rho [default: 28].
    #[arg(long)]
    pub rho: Option<f64>,
    /// Lorenz beta [default: 8/3].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Rössler a [default: 0.5].
    #[arg(long)]
    pub a: Option<f64>,
    /// Rössler b [default: 2].
    #[arg(long)]
    pub b: Option<f64>,
    /// Rössler c [default: 4].
    #[arg(long)]
    pub c: Option<f64>,
    /// Sampling step [default: 0.02 for lorenz, 0.5 for roessler].
    #[arg(long)]
    pub dt: Option<f64>,
    /// RK4 steps per sample [default: 1 for lorenz, 20 for roessler].
    #[arg(long)]
    pub substeps: Option<usize>,
}

impl SystemArgs {
    pub fn params(&self) -> Result<SystemParams, CliError> {
        let given = |v: Option<f64>, name: &str| -> Result<(), CliError> {
            match v {
                Some(_) => Err(CliError::Config(format!("--{name} does not apply to {:?}", self.system))),
                None => Ok(()),
            }
        };
        let p = match self.system {
            SystemId::Lorenz => {
                given(self.a, "a")?;
                given(self.b, "b")?;
                given(self.c, "c")?;
                SystemParams::lorenz(
                    self.sigma.unwrap_or(10.0),
                    self.rho.unwrap_or(28.0),
                    self.beta.unwrap_or(8.0 / 3.0),
                )
            }
            SystemId::Roessler => {
                given(self.sigma, "sigma")?;
                given(self.rho, "rho")?;
                given(self.beta, "beta")?;
                SystemParams::roessler(self.a.unwrap_or(0.5), self.b.unwrap_or(2.0), self.c.unwrap_or(4.0))
            }
        };
        if !p.is_finite() {
            return Err(CliError::Config("system parameters must be finite".into()));
        }
        Ok(p)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.system.default_dt())
    }

    pub fn substeps(&self) -> usize {
        self.substeps.unwrap_or(self.system.default_substeps())
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Integration steps; the output has steps + 1 samples.
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Initial state as comma-separated components.
    #[arg(long, default_value = "1,1,1", value_parser = parse_state)]
    pub x0: StateVector,
    /// Samples integrated and dropped before recording starts.
    #[arg(long, default_value_t = 0)]
    pub transient: usize,
    /// Output CSV [default: <out-dir>/trajectory.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reservoir hyperparameter flags; each overrides the config file, which
/// overrides the catalog row chosen with `--scenario`.
#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Catalog row whose hyperparameters are the starting point.
    #[arg(long, default_value = "periodic_to_chaotic")]
    pub scenario: String,
    /// JSON file with a `hyper` object of overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reservoir nodes [catalog: 300].
    #[arg(long)]
    pub d_r: Option<usize>,
    /// Edge probability [catalog: 0.02].
    #[arg(long)]
    pub p: Option<f64>,
    /// Input weight scale [catalog: 0.0084 for periodic/chaotic rows].
    #[arg(long)]
    pub omega: Option<f64>,
    /// Target spectral radius [catalog: equal to omega on Lorenz rows].
    #[arg(long)]
    pub rho_star: Option<f64>,
    /// Leak factor [catalog: 0].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ridge regularization [catalog: 6e-11 or 1e-11 depending on row].
    #[arg(long)]
    pub beta_reg: Option<f64>,
    /// Washout samples [catalog: 5000].
    #[arg(long)]
    pub t_w: Option<usize>,
    /// Training samples [catalog: 5000].
    #[arg(long)]
    pub t_t: Option<usize>,
}

impl HyperArgs {
    pub fn resolve(&self) -> Result<RCHyperParams, CliError> {
        let spec = find_scenario(&self.scenario)
            .ok_or_else(|| CliError::Config(format!("unknown scenario {}", self.scenario)))?;
        let mut h = spec.hyper;
        if let Some(path) = &self.config {
            let root: serde_json::Value = read_json(path)?;
            if let Some(patch) = root.get("hyper") {
                let mut v = serde_json::to_value(h).expect("serializable");
                merge_json(&mut v, patch);
                h = serde_json::from_value(v)
                    .map_err(|e| CliError::Config(format!("{}: hyper: {e}", path.display())))?;
            }
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { h.$f = v; })* };
        }
        set!(d_r, p, omega, rho_star, alpha, beta_reg, t_w, t_t);
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Trajectory CSV; training uses its first t_w + t_t + 1 samples.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output model [default: <out-dir>/model.json].
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory whose last t_w samples synchronize the reservoir.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Output CSV [default: <out-dir>/prediction.csv].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ControlArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Trajectory whose last t_w samples synchronize the reservoir.
    #[arg(long)]
    pub input: PathBuf,
    /// Shifted plant parameters.
    #[command(flatten)]
    pub system: SystemArgs,
    /// Force gain K [default: 25 for lorenz, 20 for roessler].
    #[arg(long)]
    pub k: Option<f64>,
    /// Control steps; each series has steps + 1 samples.
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    /// Plant state at control onset [default: last sample of --input].
    #[arg(long, value_parser = parse_state)]
    pub u0: Option<StateVector>,
    /// Re-drive the reservoir with the plant state every n samples.
    #[arg(long)]
    pub resync: Option<usize>,
    /// Output directory [default: <out-dir>/control].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Leading samples to ignore.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    /// Theiler window in samples [default: mean spacing of x maxima].
    #[arg(long)]
    pub theiler: Option<usize>,
    /// Divergence tracking horizon in samples.
    #[arg(long, default_value_t = LyapunovConfig::default().follow_steps)]
    pub follow_steps: usize,
    /// First sample of the Lyapunov fit window.
    #[arg(long, default_value_t = LyapunovConfig::default().fit_lo)]
    pub fit_lo: usize,
    /// Last sample of the Lyapunov fit window.
    #[arg(long, default_value_t = LyapunovConfig::default().fit_hi)]
    pub fit_hi: usize,
    /// Lyapunov reference points.
    #[arg(long, default_value_t = LyapunovConfig::default().max_points)]
    pub lyap_points: usize,
    /// Radii of the correlation sum.
    #[arg(long, default_value_t = CorrDimConfig::default().n_radii)]
    pub n_radii: usize,
    /// Pair-distance quantile of the smallest radius.
    #[arg(long, default_value_t = CorrDimConfig::default().radius_lo_q)]
    pub radius_lo_q: f64,
    /// Pair-distance quantile of the largest radius.
    #[arg(long, default_value_t = CorrDimConfig::default().radius_hi_q)]
    pub radius_hi_q: f64,
    /// Points kept for the correlation sum.
    #[arg(long, default_value_t = CorrDimConfig::default().max_points)]
    pub corr_points: usize,
    /// Label stored in the report.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Label stored in the report.
    #[arg(long)]
    pub phase: Option<String>,
    /// Report JSON [default: <out-dir>/measure.json].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// The eight Lorenz scenarios.
    Table1,
    /// Per-realization scatter data of chaoticB_to_chaoticA.
    Fig4,
    /// The Rössler scenario.
    Roessler,
}

impl Table {
    fn scenarios(self) -> Vec<&'static str> {
        match self {
            Table::Table1 => TABLE1_SCENARIOS.to_vec(),
            Table::Fig4 => vec!["chaoticB_to_chaoticA"],
            Table::Roessler => vec!["roessler_chaotic"],
        }
    }

    fn dir_name(self) -> &'static str {
        match self {
            Table::Table1 => "table1",
            Table::Fig4 => "fig4",
            Table::Roessler => "roessler",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    pub table: Table,
    /// Realizations per scenario.
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// First seed; realizations use base-seed .. base-seed + n.
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    /// JSON scenario overrides: {"scenarios": {"<name>": {...}}}.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: <out-dir>/<table>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::Diverged { .. } | DynamicsError::NonFinite => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ReservoirError> for CliError {
    fn from(e: ReservoirError) -> Self {
        match e {
            ReservoirError::Dimension(_)
            | ReservoirError::InvalidHyper(_)
            | ReservoirError::InsufficientData { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(format!("controlled phase: {e}")),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::EnsembleFailed { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn parse_state(s: &str) -> Result<StateVector, String> {
    let v: Result<Vec<f64>, _> = s.split(',').map(|c| c.trim().parse::<f64>()).collect();
    StateVector::new(v.map_err(|e| format!("`{s}`: {e}"))?).map_err(|e| e.to_string())
}

fn output(explicit: &Option<PathBuf>, global: &GlobalArgs, default: &str) -> Result<PathBuf, CliError> {
    let path = explicit.clone().unwrap_or_else(|| global.out_dir.join(default));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    Ok(path)
}

fn sync_window(trained: &TrainedReservoir, data: &Trajectory) -> Trajectory {
    let n = data.len();
    data.window(n.saturating_sub(trained.hyper().t_w.max(1)), n)
}

fn load_for_model(model: &Path, input: &Path) -> Result<(TrainedReservoir, Trajectory), CliError> {
    let trained = load_model(model)?;
    let data = read_trajectory_csv(input, Some(trained.dt()))?;
    if data.dim() != trained.dim() {
        return Err(CliError::Config(format!(
            "{} has dimension {}, model expects {}",
            input.display(),
            data.dim(),
            trained.dim()
        )));
    }
    Ok((trained, data))
}

pub fn cmd_simulate(args: &SimulateArgs, global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let params = args.system.params()?;
    if args.x0.dim() != 3 {
        return Err(CliError::Config(format!("--x0 needs 3 components, got {}", args.x0.dim())));
    }
    let dt = args.system.dt();
    let traj = integrate_sampled(&params, &args.x0, args.transient + args.steps, dt, args.system.substeps(), None)?
        .skip(args.transient)
        .with_t0(0.0);
    let out = output(&args.out, global, "trajectory.csv")?;
    write_trajectory_csv(&traj, &out)?;
    Ok(out)
}

pub fn cmd_train(args: &TrainArgs, global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let hyper = args.hyper.resolve()?;
    let data = read_trajectory_csv(&args.input, None)?;
    let needed = hyper.t_w + hyper.t_t + 1;
    if data.len() < needed {
        return Err(ReservoirError::InsufficientData { needed, got: data.len() }.into());
    }
    let net = build_network(&hyper, data.dim(), global.seed)?;
    let trained = train(net, &data.window(0, needed), &hyper, global.seed)?;
    let out = output(&args.model, global, "model.json")?;
    save_model(&trained, &out)?;
    Ok(out)
}

pub fn cmd_predict(args: &PredictArgs, global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let (trained, data) = load_for_model(&args.model, &args.input)?;
    let r0 = synchronize(&trained, &sync_window(&trained, &data))?;
    let pred = predict_autonomous(&trained, &r0, args.steps)?;
    let out = output(&args.out, global, "prediction.csv")?;
    write_trajectory_csv(&pred, &out)?;
    Ok(out)
}

pub fn cmd_control(args: &ControlArgs, global: &GlobalArgs) -> Result<PathBuf, CliError> {
    let (trained, data) = load_for_model(&args.model, &args.input)?;
    let params_star = args.system.params()?;
    if let Some(dt) = args.system.dt {
        if dt != trained.dt() {
            return Err(CliError::Config(format!("--dt {dt} differs from the model's step {}", trained.dt())));
        }
    }
    let r0 = synchronize(&trained, &sync_window(&trained, &data))?;
    let u0 = match &args.u0 {
        Some(u) => u.clone(),
        None => StateVector::new(data.last().to_vec())?,
    };
    let k_gain = args.k.unwrap_or(match args.system.system {
        SystemId::Lorenz => 25.0,
        SystemId::Roessler => 20.0,
    });
    let cfg = ControlConfig {
        k_gain,
        params_star,
        n_steps: args.steps,
        dt: trained.dt(),
        substeps: args.system.substeps(),
        resync_period: args.resync,
    };
    let run = run_controlled(&trained, &r0, &u0, &cfg)?;
    let out = output(&args.out, global, "control")?;
    export_controlled_run(&run, Some(trained.seed()), &out)?;
    Ok(out)
}

pub fn cmd_measure(args: &MeasureArgs, global: &GlobalArgs) -> Result<(PathBuf, MeasureReport), CliError> {
    let traj = read_trajectory_csv(&args.input, None)?;
    if args.skip >= traj.len() {
        return Err(CliError::Config(format!("--skip {} leaves no samples of {}", args.skip, traj.len())));
    }
    let traj = traj.skip(args.skip);
    let lcfg = LyapunovConfig {
        theiler_window: args.theiler,
        follow_steps: args.follow_steps,
        fit_lo: args.fit_lo,
        fit_hi: args.fit_hi,
        max_points: args.lyap_points,
    };
    let ccfg = CorrDimConfig {
        n_radii: args.n_radii,
        radius_lo_q: args.radius_lo_q,
        radius_hi_q: args.radius_hi_q,
        max_points: args.corr_points,
    };
    lcfg.validate()?;
    ccfg.validate()?;
    let result = measure_attractor(&traj, &lcfg, &ccfg)?;
    let mut report = MeasureReport::new(result, lcfg, ccfg);
    report.scenario = args.scenario.clone();
    report.phase = args.phase.clone();
    report.seed = Some(global.seed);
    let out = output(&args.out, global, "measure.json")?;
    write_json(&report, &out)?;
    Ok((out, report))
}

pub fn cmd_reproduce(args: &ReproduceArgs, global: &GlobalArgs) -> Result<(PathBuf, String), CliError> {
    if args.n < 2 {
        return Err(CliError::Config(format!("--n must be at least 2, got {}", args.n)));
    }
    let specs: Vec<ScenarioSpec> = match &args.config {
        Some(path) => load_scenarios(path)?,
        None => catalog(),
    };
    let parallelism = global.parallelism.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut ensembles = Vec::new();
    let mut wholly_failed = Vec::new();
    for name in args.table.scenarios() {
        let spec = specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| CliError::Config(format!("scenario {name} missing from configuration")))?;
        match run_ensemble(spec, args.n, args.base_seed, parallelism) {
            Ok(e) => ensembles.push(e),
            Err(ExperimentError::EnsembleFailed { scenario, n }) => wholly_failed.push(format!("{scenario} ({n})")),
            Err(e) => return Err(e.into()),
        }
    }
    let out = args.out.clone().unwrap_or_else(|| global.out_dir.join(args.table.dir_name()));
    export_results(&ensembles, &out)?;
    let stats: Vec<_> = ensembles.iter().map(|(s, _)| s.clone()).collect();
    let table = render_table(&stats);
    std::fs::write(out.join("table.txt"), &table)
        .map_err(|e| CliError::Config(format!("{}: {e}", out.join("table.txt").display())))?;
    if !wholly_failed.is_empty() {
        return Err(CliError::Numerical(format!("every realization failed for {}", wholly_failed.join(", "))));
    }
    Ok((out, table))
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let g = &cli.global;
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, g).map(|p| println!("wrote {}", p.display())),
        Command::Train(a) => cmd_train(a, g).map(|p| println!("wrote {}", p.display())),
        Command::Predict(a) => cmd_predict(a, g).map(|p| println!("wrote {}", p.display())),
        Command::Control(a) => cmd_control(a, g).map(|p| println!("wrote {}", p.display())),
        Command::Measure(a) => cmd_measure(a, g).map(|(p, r)| {
            println!("lambda_max {:.6}  corr_dim {:.6}  volume {:.6e}", r.lambda_max, r.corr_dim, r.volume);
            println!("wrote {}", p.display());
        }),
        Command::Reproduce(a) => cmd_reproduce(a, g).map(|(p, table)| {
            print!("{table}");
            println!("wrote {}", p.display());
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
