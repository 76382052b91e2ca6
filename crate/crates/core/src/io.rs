//! File formats: trajectory CSV, controlled-run bundles and measure reports.
//!
//! Trajectories are written as `t,x,y,z` (or `t,x1,..,xD` for other
//! dimensions) with 17 significant digits, so values survive a write/read
//! cycle unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{ControlConfig, ControlledRun};
use crate::dynamics::Trajectory;
use crate::measures::{CorrDimConfig, LyapunovConfig, MeasureResult};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn csv_header(dim: usize) -> String {
    if dim == 3 {
        "t,x,y,z".into()
    } else {
        std::iter::once("t".to_string()).chain((1..=dim).map(|k| format!("x{k}"))).collect::<Vec<_>>().join(",")
    }
}

pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let mut s = csv_header(traj.dim());
    s.push('\n');
    for (i, x) in traj.samples().enumerate() {
        let _ = write!(s, "{:.16e}", traj.time(i));
        for v in x {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    fs::write(path, trajectory_to_csv(traj)).map_err(io_err(path))
}

/// Reads a trajectory CSV. The step is taken from `dt` when given,
/// otherwise from the span of the time column.
pub fn read_trajectory_csv(path: &Path, dt: Option<f64>) -> Result<Trajectory, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let perr = |line: usize, message: String| IoError::Parse { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        return Err(perr(1, format!("expected a header starting with `t`, got `{header}`")));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(perr(i + 1, format!("expected {} fields, got {}", dim + 1, fields.len())));
        }
        for (k, f) in fields.iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|e| perr(i + 1, format!("`{f}`: {e}")))?;
            if !v.is_finite() {
                return Err(perr(i + 1, format!("non-finite value `{f}`")));
            }
            if k == 0 {
                times.push(v);
            } else {
                data.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(perr(2, "no samples".into()));
    }
    let step = match dt {
        Some(dt) => dt,
        None if times.len() >= 2 => (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64,
        None => return Err(perr(2, "a single sample needs an explicit dt".into())),
    };
    Trajectory::from_flat(step, times[0], dim, data).map_err(|e| perr(1, e.to_string()))
}

/// Sidecar written next to the three series of a controlled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSidecar {
    pub config: ControlConfig,
    pub seed: Option<u64>,
    pub samples: usize,
}

/// Writes `plant.csv`, `target.csv`, `force.csv` and `control.json` into `dir`.
pub fn export_controlled_run(run: &ControlledRun, seed: Option<u64>, dir: &Path) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_trajectory_csv(&run.plant, &dir.join("plant.csv"))?;
    write_trajectory_csv(&run.target, &dir.join("target.csv"))?;
    write_trajectory_csv(&run.force, &dir.join("force.csv"))?;
    let sidecar = ControlSidecar { config: run.config, seed, samples: run.plant.len() };
    write_json(&sidecar, &dir.join("control.json"))
}

/// Reads back a bundle written by [`export_controlled_run`].
pub fn import_controlled_run(dir: &Path) -> Result<(ControlledRun, Option<u64>), IoError> {
    let sidecar: ControlSidecar = read_json(&dir.join("control.json"))?;
    let dt = Some(sidecar.config.dt);
    let run = ControlledRun {
        plant: read_trajectory_csv(&dir.join("plant.csv"), dt)?,
        target: read_trajectory_csv(&dir.join("target.csv"), dt)?,
        force: read_trajectory_csv(&dir.join("force.csv"), dt)?,
        config: sidecar.config,
    };
    Ok((run, sidecar.seed))
}

/// One measured attractor together with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub scenario: Option<String>,
    pub phase: Option<String>,
    pub seed: Option<u64>,
    pub lambda_max: f64,
    pub corr_dim: f64,
    pub volume: f64,
    pub lyapunov: LyapunovConfig,
    pub corr_dim_config: CorrDimConfig,
}

impl MeasureReport {
    pub fn new(result: MeasureResult, lyapunov: LyapunovConfig, corr_dim_config: CorrDimConfig) -> Self {
        MeasureReport {
            scenario: None,
            phase: None,
            seed: None,
            lambda_max: result.lambda_max,
            corr_dim: result.corr_dim,
            volume: result.volume,
            lyapunov,
            corr_dim_config,
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}
