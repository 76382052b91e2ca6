//! Scenario catalog, seeded realizations and ensemble statistics.
//!
//! Scenario names read `<changed>_to_<original>` for the forward rows and
//! `<original>_from_<changed>` for the reversed rows: the state on the left
//! of "to" is the one the parameter shift produces, the state on the right
//! is where control brings the system back to.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::scenario_pipeline;
use crate::dynamics::{SystemId, SystemParams};
use crate::measures::{measure_attractor, CorrDimConfig, LyapunovConfig, MeasureResult};
use crate::reservoir::RCHyperParams;

/// Phase lengths in samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunLengths {
    /// Discarded before the original run and again after the parameter shift.
    pub transient: usize,
    /// Original-parameter samples kept; the training window is its head.
    pub orig_run: usize,
    pub changed_run: usize,
    pub controlled_run: usize,
    /// Head of the controlled run excluded from measurement.
    pub measure_discard: usize,
}

impl Default for RunLengths {
    fn default() -> Self {
        RunLengths {
            transient: 2000,
            orig_run: 50_000,
            changed_run: 50_000,
            controlled_run: 51_000,
            measure_discard: 1000,
        }
    }
}

/// One control experiment: original and shifted parameters, reservoir
/// hyperparameters, gain and run lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Parameters of the desired state the reservoir is trained on.
    pub params: SystemParams,
    /// Parameters after the shift; the plant keeps these while controlled.
    pub params_star: SystemParams,
    pub hyper: RCHyperParams,
    pub k_gain: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub substeps: usize,
    #[serde(default)]
    pub resync_period: Option<usize>,
    #[serde(default)]
    pub lengths: RunLengths,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub corr_dim: CorrDimConfig,
}

fn one() -> usize {
    1
}

impl ScenarioSpec {
    pub fn system_id(&self) -> SystemId {
        self.params.system_id()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(format!("scenario {}: {m}", self.name)));
        if self.params.system_id() != self.params_star.system_id() {
            return bad("original and shifted parameters belong to different systems".into());
        }
        if !self.params.is_finite() || !self.params_star.is_finite() {
            return bad("non-finite system parameters".into());
        }
        if self.dt.is_nan() || self.dt <= 0.0 || self.substeps == 0 || self.k_gain.is_nan() || self.k_gain < 0.0 {
            return bad(format!("need dt > 0, substeps >= 1, K >= 0 (dt={}, K={})", self.dt, self.k_gain));
        }
        let l = &self.lengths;
        if l.controlled_run <= l.measure_discard + 1 || l.changed_run < 2 || l.orig_run < 2 {
            return bad("run lengths leave nothing to measure".into());
        }
        self.hyper.validate().map_err(|e| ExperimentError::Config(format!("scenario {}: {e}", self.name)))?;
        self.lyapunov.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.corr_dim.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }
}

const BETA_LORENZ: f64 = 8.0 / 3.0;

fn lorenz_row(name: &str, orig: (f64, f64), changed: (f64, f64), scale: f64, beta_reg: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: name.into(),
        params: SystemParams::lorenz(orig.0, orig.1, BETA_LORENZ),
        params_star: SystemParams::lorenz(changed.0, changed.1, BETA_LORENZ),
        hyper: RCHyperParams { omega: scale, rho_star: scale, beta_reg, ..RCHyperParams::default() },
        k_gain: 25.0,
        dt: 0.02,
        substeps: SystemId::Lorenz.default_substeps(),
        resync_period: None,
        lengths: RunLengths::default(),
        lyapunov: LyapunovConfig::default(),
        corr_dim: CorrDimConfig::default(),
    }
}

/// The eight Lorenz scenarios (four pairs, both directions) and the
/// Rössler example.
pub fn catalog() -> Vec<ScenarioSpec> {
    let periodic = (10.0, 166.0);
    let chaotic = (10.0, 167.2);
    let intermittent = (10.0, 166.15);
    let chaotic_a = (10.0, 28.0);
    let chaotic_b = (10.0, 50.0);
    let chaotic_c = (10.0, 102.0);
    let chaotic_d = (20.0, 102.0);
    vec![
        lorenz_row("periodic_to_chaotic", chaotic, periodic, 0.0084, 6e-11),
        lorenz_row("chaotic_to_intermittent", intermittent, chaotic, 0.0084, 1e-11),
        lorenz_row("chaoticB_to_chaoticA", chaotic_a, chaotic_b, 0.0100, 1e-11),
        lorenz_row("chaoticD_to_chaoticC", chaotic_c, chaotic_d, 0.0150, 1e-11),
        lorenz_row("periodic_from_chaotic", periodic, chaotic, 0.0084, 6e-11),
        lorenz_row("chaotic_from_intermittent", chaotic, intermittent, 0.0084, 1e-11),
        lorenz_row("chaoticB_from_chaoticA", chaotic_b, chaotic_a, 0.0025, 1e-11),
        lorenz_row("chaoticD_from_chaoticC", chaotic_d, chaotic_c, 0.0120, 1e-11),
        ScenarioSpec {
            name: "roessler_chaotic".into(),
            params: SystemParams::roessler(0.5, 2.0, 4.0),
            params_star: SystemParams::roessler(0.55, 2.0, 4.0),
            hyper: RCHyperParams { omega: 0.15, rho_star: 0.4, beta_reg: 1e-6, ..RCHyperParams::default() },
            k_gain: 20.0,
            dt: 0.5,
            substeps: SystemId::Roessler.default_substeps(),
            resync_period: None,
            lengths: RunLengths::default(),
            lyapunov: LyapunovConfig::default(),
            corr_dim: CorrDimConfig::default(),
        },
    ]
}

/// Names of the eight Lorenz rows, forward rows first.
pub const TABLE1_SCENARIOS: [&str; 8] = [
    "periodic_to_chaotic",
    "chaotic_to_intermittent",
    "chaoticB_to_chaoticA",
    "chaoticD_to_chaoticC",
    "periodic_from_chaotic",
    "chaotic_from_intermittent",
    "chaoticB_from_chaoticA",
    "chaoticD_from_chaoticC",
];

pub fn find_scenario(name: &str) -> Option<ScenarioSpec> {
    catalog().into_iter().find(|s| s.name == name)
}

/// Recursive JSON merge: objects merge key by key, anything else replaces.
pub fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge_json(b.entry(k.clone()).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Applies a partial JSON object to a scenario, e.g.
/// `{"k_gain": 10, "params": {"rho": 30}}`.
pub fn apply_overrides(spec: &ScenarioSpec, patch: &serde_json::Value) -> Result<ScenarioSpec, ExperimentError> {
    let mut value = serde_json::to_value(spec).map_err(|e| ExperimentError::Config(e.to_string()))?;
    merge_json(&mut value, patch);
    let out: ScenarioSpec =
        serde_json::from_value(value).map_err(|e| ExperimentError::Config(format!("scenario {}: {e}", spec.name)))?;
    out.validate()?;
    Ok(out)
}

/// Scenario file: `{"scenarios": {"<name>": {<partial spec>}, ..}}`.
/// Names from the catalog are patched; other names must carry
/// `"base": "<catalog name>"` and become new scenarios.
pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parse = |message: String| ExperimentError::Parse { path: path.to_path_buf(), message };
    let root: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
    let mut out = catalog();
    let Some(map) = root.get("scenarios") else { return Ok(out) };
    let map = map.as_object().ok_or_else(|| parse("`scenarios` must be an object".into()))?;
    for (name, patch) in map {
        let mut patch = patch.clone();
        let base = patch.as_object_mut().and_then(|o| o.remove("base"));
        let spec = match (out.iter().position(|s| &s.name == name), base) {
            (Some(i), None) => {
                out[i] = apply_overrides(&out[i], &patch)?;
                continue;
            }
            (_, Some(base)) => {
                let base = base.as_str().ok_or_else(|| parse(format!("{name}: `base` must be a string")))?;
                let mut spec = find_scenario(base).ok_or_else(|| parse(format!("{name}: unknown base {base}")))?;
                spec.name = name.clone();
                apply_overrides(&spec, &patch)?
            }
            (None, None) => return Err(parse(format!("unknown scenario {name} without a `base`"))),
        };
        out.retain(|s| &s.name != name);
        out.push(spec);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("every one of the {n} realizations of {scenario} failed")]
    EnsembleFailed { scenario: String, n: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Measures of the three phases of one seed, or why it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub seed: u64,
    pub orig: Option<MeasureResult>,
    pub changed: Option<MeasureResult>,
    pub controlled: Option<MeasureResult>,
    pub error: Option<String>,
}

impl RealizationResult {
    pub fn is_success(&self) -> bool {
        self.error.is_none()
    }

    fn failed(seed: u64, error: String) -> Self {
        RealizationResult { seed, orig: None, changed: None, controlled: None, error: Some(error) }
    }
}

/// Runs the pipeline for one seed and measures all phases. Never fails:
/// errors end up in the record.
pub fn run_realization(spec: &ScenarioSpec, seed: u64) -> RealizationResult {
    let out = match scenario_pipeline(spec, seed) {
        Ok(out) => out,
        Err(e) => return RealizationResult::failed(seed, e.to_string()),
    };
    let measure = |phase: &str, t| {
        measure_attractor(t, &spec.lyapunov, &spec.corr_dim).map_err(|e| format!("{phase} measures: {e}"))
    };
    let controlled = out.run.plant.skip(spec.lengths.measure_discard);
    match (measure("orig", &out.orig), measure("changed", &out.changed), measure("controlled", &controlled)) {
        (Ok(o), Ok(c), Ok(k)) => {
            RealizationResult { seed, orig: Some(o), changed: Some(c), controlled: Some(k), error: None }
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => RealizationResult::failed(seed, e),
    }
}

/// Mean and sample standard deviation (n − 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            f64::NAN
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub lambda: MeanStd,
    pub nu: MeanStd,
    pub volume: MeanStd,
}

impl PhaseStats {
    fn of(results: &[&MeasureResult]) -> Self {
        let col = |f: fn(&MeasureResult) -> f64| MeanStd::of(&results.iter().map(|m| f(m)).collect::<Vec<_>>());
        PhaseStats { lambda: col(|m| m.lambda_max), nu: col(|m| m.corr_dim), volume: col(|m| m.volume) }
    }
}

/// Aggregate of an ensemble; failed realizations are excluded from the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub scenario: String,
    pub n: usize,
    pub failures: usize,
    pub orig: PhaseStats,
    pub changed: PhaseStats,
    pub controlled: PhaseStats,
}

impl EnsembleStats {
    pub fn from_results(scenario: &str, results: &[RealizationResult]) -> Self {
        let ok: Vec<&RealizationResult> = results.iter().filter(|r| r.is_success()).collect();
        let phase = |f: fn(&RealizationResult) -> Option<&MeasureResult>| {
            PhaseStats::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        EnsembleStats {
            scenario: scenario.into(),
            n: results.len(),
            failures: results.len() - ok.len(),
            orig: phase(|r| r.orig.as_ref()),
            changed: phase(|r| r.changed.as_ref()),
            controlled: phase(|r| r.controlled.as_ref()),
        }
    }

    pub fn phases(&self) -> [(&'static str, &PhaseStats); 3] {
        [("orig", &self.orig), ("changed", &self.changed), ("controlled", &self.controlled)]
    }
}

/// Runs seeds `base_seed .. base_seed + n` on up to `parallelism` threads.
/// The output does not depend on the thread count.
pub fn run_ensemble(
    spec: &ScenarioSpec,
    n: usize,
    base_seed: u64,
    parallelism: usize,
) -> Result<(EnsembleStats, Vec<RealizationResult>), ExperimentError> {
    if n < 2 {
        return Err(ExperimentError::Config(format!("ensemble needs n >= 2, got {n}")));
    }
    spec.validate()?;
    let seeds: Vec<u64> = (0..n as u64).map(|k| base_seed + k).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let mut results: Vec<RealizationResult> =
        pool.install(|| seeds.par_iter().map(|&s| run_realization(spec, s)).collect());
    results.sort_by_key(|r| r.seed);
    let stats = EnsembleStats::from_results(&spec.name, &results);
    if stats.failures == n {
        return Err(ExperimentError::EnsembleFailed { scenario: spec.name.clone(), n });
    }
    Ok((stats, results))
}

pub const SUMMARY_HEADER: &str = "scenario,phase,n,lambda_mean,lambda_std,nu_mean,nu_std,vol_mean,vol_std,failures";
pub const SCATTER_HEADER: &str =
    "scenario,seed,lambda_orig,lambda_changed,lambda_controlled,vol_orig,vol_changed,vol_controlled";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Table-style summary, one row per scenario and phase.
pub fn write_summary_csv(stats: &[EnsembleStats], path: &Path) -> Result<(), ExperimentError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SUMMARY_HEADER}").map_err(io_err(path))?;
    for s in stats {
        for (phase, p) in s.phases() {
            writeln!(
                w,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                s.scenario,
                phase,
                s.n,
                p.lambda.mean,
                p.lambda.std,
                p.nu.mean,
                p.nu.std,
                p.volume.mean,
                p.volume.std,
                s.failures
            )
            .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a summary written by [`write_summary_csv`].
pub fn read_summary_csv(path: &Path) -> Result<Vec<EnsembleStats>, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let parse_err = |line: usize, m: &str| ExperimentError::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {m}"),
    };
    let mut out: Vec<EnsembleStats> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if i == 0 {
            if line.trim() != SUMMARY_HEADER {
                return Err(parse_err(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(parse_err(i + 1, "expected 10 fields"));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| parse_err(i + 1, &e.to_string()));
        let int = |k: usize| f[k].parse::<usize>().map_err(|e| parse_err(i + 1, &e.to_string()));
        let p = PhaseStats {
            lambda: MeanStd { mean: num(3)?, std: num(4)? },
            nu: MeanStd { mean: num(5)?, std: num(6)? },
            volume: MeanStd { mean: num(7)?, std: num(8)? },
        };
        let (n, failures) = (int(2)?, int(9)?);
        let phase = f[1];
        if phase == "orig" {
            out.push(EnsembleStats { scenario: f[0].to_string(), n, failures, orig: p, changed: p, controlled: p });
            continue;
        }
        let cur = out
            .last_mut()
            .filter(|s| s.scenario == f[0])
            .ok_or_else(|| parse_err(i + 1, "phase row without preceding orig row"))?;
        match phase {
            "changed" => cur.changed = p,
            "controlled" => cur.controlled = p,
            other => return Err(parse_err(i + 1, &format!("unknown phase {other}"))),
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RealizationLine<'a> {
    scenario: &'a str,
    #[serde(flatten)]
    result: RealizationResult,
}

/// Per-realization records as JSON lines.
pub fn write_realizations_jsonl(
    scenario: &str,
    results: &[RealizationResult],
    path: &Path,
) -> Result<(), ExperimentError> {
    let file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for r in results {
        let line = serde_json::to_string(&RealizationLine { scenario, result: r.clone() })
            .map_err(|e| ExperimentError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Scatter data pairing each realization's original, changed and
/// controlled Lyapunov exponents and volumes.
pub fn write_scatter_csv(
    scenario: &str,
    results: &[RealizationResult],
    path: &Path,
    append: bool,
) -> Result<(), ExperimentError> {
    let exists = append && path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    if !exists {
        writeln!(w, "{SCATTER_HEADER}").map_err(io_err(path))?;
    }
    for r in results {
        if let (Some(o), Some(c), Some(k)) = (&r.orig, &r.changed, &r.controlled) {
            writeln!(
                w,
                "{scenario},{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.seed, o.lambda_max, c.lambda_max, k.lambda_max, o.volume, c.volume, k.volume
            )
            .map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Paths written by [`export_results`].
#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub summary: PathBuf,
    pub realizations: PathBuf,
    pub scatter: PathBuf,
}

impl ExportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ExportPaths {
            summary: dir.join("summary.csv"),
            realizations: dir.join("realizations.jsonl"),
            scatter: dir.join("scatter.csv"),
        }
    }
}

/// Writes summary CSV, realization JSON lines and scatter CSV into `dir`,
/// replacing earlier files.
pub fn export_results(
    ensembles: &[(EnsembleStats, Vec<RealizationResult>)],
    dir: &Path,
) -> Result<ExportPaths, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let paths = ExportPaths::in_dir(dir);
    let stats: Vec<EnsembleStats> = ensembles.iter().map(|(s, _)| s.clone()).collect();
    write_summary_csv(&stats, &paths.summary)?;
    fs::File::create(&paths.realizations).map_err(io_err(&paths.realizations))?;
    write_scatter_csv("", &[], &paths.scatter, false)?;
    for (s, results) in ensembles {
        write_realizations_jsonl(&s.scenario, results, &paths.realizations)?;
        write_scatter_csv(&s.scenario, results, &paths.scatter, true)?;
    }
    Ok(paths)
}

/// Reads realization records written by [`export_results`].
pub fn read_realizations_jsonl(path: &Path) -> Result<Vec<(String, RealizationResult)>, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l)
                .map_err(|e| ExperimentError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
            let scenario = v["scenario"].as_str().unwrap_or_default().to_string();
            let r: RealizationResult = serde_json::from_value(v)
                .map_err(|e| ExperimentError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
            Ok((scenario, r))
        })
        .collect()
}

/// Fixed-width text rendering laid out like the Lyapunov / correlation
/// dimension results table.
pub fn render_table(stats: &[EnsembleStats]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<28}{:>16}{:>16}{:>16}{:>16}{:>16}{:>16}  fail\n",
        "scenario", "lambda_orig", "lambda_changed", "lambda_ctrl", "nu_orig", "nu_changed", "nu_ctrl"
    ));
    let cell = |m: &MeanStd| format!("{:.3}±{:.3}", m.mean, m.std);
    for e in stats {
        s.push_str(&format!(
            "{:<28}{:>16}{:>16}{:>16}{:>16}{:>16}{:>16}  {}/{}\n",
            e.scenario,
            cell(&e.orig.lambda),
            cell(&e.changed.lambda),
            cell(&e.controlled.lambda),
            cell(&e.orig.nu),
            cell(&e.changed.nu),
            cell(&e.controlled.nu),
            e.failures,
            e.n
        ));
    }
    s
}
