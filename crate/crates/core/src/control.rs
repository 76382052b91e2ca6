//! Closed-loop control of a parameter-shifted plant toward a predicted
//! target trajectory.
//!
//! At every sample the reservoir emits the target `v(t)`, the proportional
//! force `F = K·(v − u)` is computed from the plant state `u(t)`, and the
//! plant advances under its shifted parameters with `F` added to its
//! vector field. The force is applied with negative-feedback sign: it pulls
//! the plant toward the target.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_sampled, DynamicsError, Rk4Workspace, StateVector, SystemParams, Trajectory};
use crate::experiments::ScenarioSpec;
use crate::reservoir::{
    build_network, synchronize, train, AutonomousPredictor, ReservoirError, ReservoirState, TrainedReservoir,
};
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Force scale `K`.
    pub k_gain: f64,
    /// Shifted plant parameters.
    pub params_star: SystemParams,
    pub n_steps: usize,
    /// Sampling step; must equal the model's training step.
    pub dt: f64,
    /// RK4 steps per sample. The target is held over the sample; the force
    /// is recomputed from the plant state at the start of each substep.
    #[serde(default = "one")]
    pub substeps: usize,
    /// If set, every `n`-th reservoir update is driven by the plant state
    /// instead of the reservoir's own output. Off by default.
    #[serde(default)]
    pub resync_period: Option<usize>,
}

fn one() -> usize {
    1
}

impl ControlConfig {
    pub fn new(k_gain: f64, params_star: SystemParams, n_steps: usize, dt: f64) -> Self {
        ControlConfig { k_gain, params_star, n_steps, dt, substeps: 1, resync_period: None }
    }
}

/// Plant, target and force series of a controlled run, all sampled at the
/// same instants.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledRun {
    pub plant: Trajectory,
    pub target: Trajectory,
    pub force: Trajectory,
    pub config: ControlConfig,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid control setup: {0}")]
    Config(String),
    #[error("plant integration diverged at step {step}")]
    PlantDiverged { step: usize, partial: Box<Option<ControlledRun>> },
    #[error("target prediction diverged at step {step}")]
    TargetDiverged { step: usize, partial: Box<Option<ControlledRun>> },
}

impl ControlError {
    pub fn step(&self) -> Option<usize> {
        match self {
            ControlError::PlantDiverged { step, .. } | ControlError::TargetDiverged { step, .. } => Some(*step),
            ControlError::Config(_) => None,
        }
    }

    pub fn partial(&self) -> Option<&ControlledRun> {
        match self {
            ControlError::PlantDiverged { partial, .. } | ControlError::TargetDiverged { partial, .. } => {
                partial.as_ref().as_ref()
            }
            ControlError::Config(_) => None,
        }
    }
}

/// `K·(v − u)`: zero when the plant sits on the target.
pub fn control_force(u: &StateVector, v: &StateVector, k_gain: f64) -> StateVector {
    assert_eq!(u.dim(), v.dim(), "plant and target dimensions differ");
    let mut out = vec![0.0; u.dim()];
    force_into(u, v, k_gain, &mut out);
    StateVector::new(out).expect("force of finite states is finite")
}

#[inline]
fn force_into(u: &[f64], v: &[f64], k_gain: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(u).zip(v) {
        *o = k_gain * (b - a);
    }
}

/// Source of target states during a controlled run.
pub trait TargetSource {
    /// Writes the target for the current sample into `out`. `plant` is the
    /// current plant state and `resync` asks the source to absorb it.
    fn next_target(&mut self, plant: &[f64], resync: bool, out: &mut [f64]) -> Result<(), usize>;
}

impl TargetSource for AutonomousPredictor<'_> {
    fn next_target(&mut self, plant: &[f64], resync: bool, out: &mut [f64]) -> Result<(), usize> {
        let res = if resync { self.advance_driven(plant, out) } else { self.advance(out) };
        res.map_err(|e| match e {
            ReservoirError::PredictionDiverged { step } => step,
            _ => 0,
        })
    }
}

/// Replays a recorded trajectory as the target.
pub struct ReplayTarget<'a> {
    traj: &'a Trajectory,
    next: usize,
}

impl<'a> ReplayTarget<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        ReplayTarget { traj, next: 0 }
    }
}

impl TargetSource for ReplayTarget<'_> {
    fn next_target(&mut self, _plant: &[f64], _resync: bool, out: &mut [f64]) -> Result<(), usize> {
        if self.next >= self.traj.len() {
            return Err(self.next);
        }
        out.copy_from_slice(self.traj.sample(self.next));
        self.next += 1;
        Ok(())
    }
}

/// Runs the controlled plant from `u0` against the reservoir's autonomous
/// prediction started at `r0`.
pub fn run_controlled(
    trained: &TrainedReservoir,
    r0: &ReservoirState,
    u0: &StateVector,
    cfg: &ControlConfig,
) -> Result<ControlledRun, ControlError> {
    if (cfg.dt - trained.dt()).abs() > 1e-12 * trained.dt() {
        return Err(ControlError::Config(format!(
            "control dt {} differs from the model's sampling step {}",
            cfg.dt,
            trained.dt()
        )));
    }
    let mut predictor = AutonomousPredictor::new(trained, r0).map_err(|e| ControlError::Config(e.to_string()))?;
    run_controlled_with(&mut predictor, u0, cfg)
}

/// Controlled run against an arbitrary target source.
///
/// Emits `n_steps + 1` samples of plant, target and force; sample `k` holds
/// the plant state at the start of step `k` and the target and force used
/// during that step (the last sample's target and force are computed but
/// not applied).
pub fn run_controlled_with<S: TargetSource + ?Sized>(
    source: &mut S,
    u0: &StateVector,
    cfg: &ControlConfig,
) -> Result<ControlledRun, ControlError> {
    let dim = u0.dim();
    if dim != 3 {
        return Err(ControlError::Config(format!("plant state has dimension {dim}, expected 3")));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) || cfg.substeps == 0 || !cfg.k_gain.is_finite() || cfg.k_gain < 0.0 {
        return Err(ControlError::Config(format!(
            "need dt > 0, substeps >= 1 and K >= 0 (dt={}, substeps={}, K={})",
            cfg.dt, cfg.substeps, cfg.k_gain
        )));
    }
    if cfg.resync_period == Some(0) {
        return Err(ControlError::Config("resync period must be positive".into()));
    }
    let field = cfg.params_star;
    let h = cfg.dt / cfg.substeps as f64;
    let len = cfg.n_steps + 1;
    let mut plant = Vec::with_capacity(len * dim);
    let mut target = Vec::with_capacity(len * dim);
    let mut force = Vec::with_capacity(len * dim);
    let mut u = u0.to_vec();
    let mut v = vec![0.0; dim];
    let mut f = vec![0.0; dim];
    let mut ws = Rk4Workspace::new(dim);

    let partial = |plant: &[f64], target: &[f64], force: &[f64]| -> Box<Option<ControlledRun>> {
        let n = force.len() / dim;
        if n == 0 {
            return Box::new(None);
        }
        let mk = |d: &[f64]| Trajectory::from_flat(cfg.dt, 0.0, dim, d[..n * dim].to_vec()).ok();
        Box::new(match (mk(plant), mk(target), mk(force)) {
            (Some(plant), Some(target), Some(force)) => Some(ControlledRun { plant, target, force, config: *cfg }),
            _ => None,
        })
    };

    for k in 0..len {
        let resync = cfg.resync_period.is_some_and(|m| k > 0 && k % m == 0);
        if let Err(step) = source.next_target(&u, resync, &mut v) {
            return Err(ControlError::TargetDiverged { step, partial: partial(&plant, &target, &force) });
        }
        force_into(&u, &v, cfg.k_gain, &mut f);
        plant.extend_from_slice(&u);
        target.extend_from_slice(&v);
        force.extend_from_slice(&f);
        if k == cfg.n_steps {
            break;
        }
        for s in 0..cfg.substeps {
            if s > 0 {
                force_into(&u, &v, cfg.k_gain, &mut f);
            }
            if !ws.step(&field, &mut u, h, &f) {
                return Err(ControlError::PlantDiverged { step: k, partial: partial(&plant, &target, &force) });
            }
        }
    }
    let mk = |d: Vec<f64>| Trajectory::from_flat(cfg.dt, 0.0, dim, d);
    let err = |e: DynamicsError| ControlError::Config(e.to_string());
    Ok(ControlledRun {
        plant: mk(plant).map_err(err)?,
        target: mk(target).map_err(err)?,
        force: mk(force).map_err(err)?,
        config: *cfg,
    })
}

/// Stage of the end-to-end pipeline in which an error occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Original,
    Training,
    Changed,
    Controlled,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Original => "original",
            Phase::Training => "training",
            Phase::Changed => "changed",
            Phase::Controlled => "controlled",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("{phase} phase: {source}")]
    Dynamics { phase: Phase, source: DynamicsError },
    #[error("{phase} phase: {source}")]
    Reservoir { phase: Phase, source: ReservoirError },
    #[error("{phase} phase: {source}")]
    Control { phase: Phase, source: ControlError },
}

impl PipelineError {
    pub fn phase(&self) -> Phase {
        match self {
            PipelineError::Dynamics { phase, .. }
            | PipelineError::Reservoir { phase, .. }
            | PipelineError::Control { phase, .. } => *phase,
        }
    }
}

/// Everything one realization produces before measurement.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// System under the original parameters, post-transient. The training
    /// window is its first `t_w + t_t + 1` samples.
    pub orig: Trajectory,
    /// Unforced system after the parameter shift, post-transient.
    pub changed: Trajectory,
    pub run: ControlledRun,
    pub trained: TrainedReservoir,
}

/// Per-realization initial condition: `(1,1,1)` plus uniform noise in
/// `[−0.5, 0.5)` per component.
pub fn initial_condition(seed: u64) -> StateVector {
    let mut rng = SeededRng::new(seed, Stream::InitialCondition);
    let v: Vec<f64> = (0..3).map(|_| 1.0 + rng.uniform(-0.5, 0.5)).collect();
    StateVector::new(v).expect("finite")
}

/// Original run, training, parameter shift and controlled run for one seed.
pub fn scenario_pipeline(spec: &ScenarioSpec, seed: u64) -> Result<PipelineOutput, PipelineError> {
    let l = &spec.lengths;
    let hyper = &spec.hyper;
    let dyn_err = |phase| move |source| PipelineError::Dynamics { phase, source };
    let res_err = |phase| move |source| PipelineError::Reservoir { phase, source };

    let x0 = initial_condition(seed);
    let train_total = hyper.t_w + hyper.t_t + 1;
    let orig_len = l.orig_run.max(train_total);
    let orig = integrate_sampled(&spec.params, &x0, l.transient + orig_len - 1, spec.dt, spec.substeps, None)
        .map_err(dyn_err(Phase::Original))?
        .skip(l.transient);

    let net = build_network(hyper, 3, seed).map_err(res_err(Phase::Training))?;
    let training = orig.window(0, train_total);
    let trained = train(net, &training, hyper, seed).map_err(res_err(Phase::Training))?;

    let onset: StateVector = StateVector::new(orig.last().to_vec()).expect("finite");
    let changed =
        integrate_sampled(&spec.params_star, &onset, l.transient + l.changed_run - 1, spec.dt, spec.substeps, None)
            .map_err(dyn_err(Phase::Changed))?
            .skip(l.transient);

    let sync = training.window(train_total - hyper.t_w.max(1), train_total);
    let r0 = synchronize(&trained, &sync).map_err(res_err(Phase::Controlled))?;
    let u0 = StateVector::new(changed.last().to_vec()).expect("finite");
    let cfg = ControlConfig {
        k_gain: spec.k_gain,
        params_star: spec.params_star,
        n_steps: l.controlled_run - 1,
        dt: spec.dt,
        substeps: spec.substeps,
        resync_period: spec.resync_period,
    };
    let run = run_controlled(&trained, &r0, &u0, &cfg)
        .map_err(|source| PipelineError::Control { phase: Phase::Controlled, source })?;
    Ok(PipelineOutput { orig, changed, run, trained })
}
