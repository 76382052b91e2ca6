//! Vector fields for the Lorenz and Rössler systems and a fixed-step
//! fourth-order Runge–Kutta integrator with an optional external force.
//!
//! The force enters the right-hand side additively, `ẋ = f(x) + F`, and is
//! held constant across the four stages of a step (zero-order hold), the
//! way a sampled digital controller would apply it.

use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Any component above this magnitude is treated as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{field} vector field called with {got:?} parameters")]
    WrongSystem { field: &'static str, got: SystemId },
    #[error("integration diverged at step {step}")]
    Diverged { step: usize },
    #[error("non-finite state component")]
    NonFinite,
    #[error("invalid integration setup: {0}")]
    InvalidSetup(String),
}

/// A point in state space. All components are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(components: Vec<f64>) -> Result<Self, DynamicsError> {
        if components.iter().all(|c| c.is_finite()) {
            Ok(StateVector(components))
        } else {
            Err(DynamicsError::NonFinite)
        }
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for StateVector {
    type Error = DynamicsError;

    fn try_from(v: Vec<f64>) -> Result<Self, DynamicsError> {
        StateVector::new(v)
    }
}

impl From<StateVector> for Vec<f64> {
    fn from(s: StateVector) -> Vec<f64> {
        s.0
    }
}

impl From<[f64; 3]> for StateVector {
    fn from(a: [f64; 3]) -> Self {
        StateVector(a.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemId {
    Lorenz,
    Roessler,
}

impl SystemId {
    /// Sampling step used for this system throughout the experiments.
    pub fn default_dt(self) -> f64 {
        match self {
            SystemId::Lorenz => 0.02,
            SystemId::Roessler => 0.5,
        }
    }

    /// RK4 steps per sample at [`default_dt`](Self::default_dt). A single
    /// step of 0.5 is accurate for the free Rössler flow but not once a
    /// gain-20 force is added, so it is split into 20 steps of 0.025.
    pub fn default_substeps(self) -> usize {
        match self {
            SystemId::Lorenz => 1,
            SystemId::Roessler => 20,
        }
    }
}

impl std::str::FromStr for SystemId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lorenz" => Ok(SystemId::Lorenz),
            "roessler" | "rossler" | "rössler" => Ok(SystemId::Roessler),
            other => Err(format!("unknown system '{other}' (expected lorenz or roessler)")),
        }
    }
}

/// Parameters of one of the shipped systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum SystemParams {
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    Roessler { a: f64, b: f64, c: f64 },
}

impl SystemParams {
    pub fn lorenz(sigma: f64, rho: f64, beta: f64) -> Self {
        SystemParams::Lorenz { sigma, rho, beta }
    }

    pub fn roessler(a: f64, b: f64, c: f64) -> Self {
        SystemParams::Roessler { a, b, c }
    }

    pub fn system_id(&self) -> SystemId {
        match self {
            SystemParams::Lorenz { .. } => SystemId::Lorenz,
            SystemParams::Roessler { .. } => SystemId::Roessler,
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            SystemParams::Lorenz { sigma, rho, beta } => sigma.is_finite() && rho.is_finite() && beta.is_finite(),
            SystemParams::Roessler { a, b, c } => a.is_finite() && b.is_finite() && c.is_finite(),
        }
    }
}

/// Right-hand side of an autonomous ODE `ẋ = f(x)`.
pub trait VectorField {
    fn dim(&self) -> usize;

    /// Writes `f(state)` into `out`. Both slices have length `dim()`.
    fn eval(&self, state: &[f64], out: &mut [f64]);
}

impl VectorField for SystemParams {
    fn dim(&self) -> usize {
        3
    }

    #[inline]
    fn eval(&self, s: &[f64], out: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        match *self {
            SystemParams::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (y - x);
                out[1] = x * (rho - z) - y;
                out[2] = x * y - beta * z;
            }
            SystemParams::Roessler { a, b, c } => {
                out[0] = -(y + z);
                out[1] = x + a * y;
                out[2] = b + (x - c) * z;
            }
        }
    }
}

/// Adapts a closure `|state, out|` into a [`VectorField`] of fixed dimension.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, state: &[f64], out: &mut [f64]) {
        (self.f)(state, out)
    }
}

fn checked_eval(
    name: &'static str,
    want: SystemId,
    state: &StateVector,
    params: &SystemParams,
) -> Result<StateVector, DynamicsError> {
    if params.system_id() != want {
        return Err(DynamicsError::WrongSystem { field: name, got: params.system_id() });
    }
    if state.dim() != 3 {
        return Err(DynamicsError::DimensionMismatch { expected: 3, got: state.dim() });
    }
    let mut out = vec![0.0; 3];
    params.eval(state, &mut out);
    StateVector::new(out)
}

/// `(σ(y−x), x(ρ−z)−y, xy−βz)`.
pub fn lorenz_deriv(state: &StateVector, params: &SystemParams) -> Result<StateVector, DynamicsError> {
    checked_eval("lorenz", SystemId::Lorenz, state, params)
}

/// `(−(y+z), x+ay, b+(x−c)z)`.
pub fn roessler_deriv(state: &StateVector, params: &SystemParams) -> Result<StateVector, DynamicsError> {
    checked_eval("roessler", SystemId::Roessler, state, params)
}

/// Scratch buffers for repeated RK4 steps of one dimension.
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(dim: usize) -> Self {
        Rk4Workspace {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `state` in place by one classical RK4 step of `ẋ = f(x) + force`.
    ///
    /// Returns `false` if the new state is non-finite or exceeds
    /// [`DIVERGENCE_LIMIT`]; `state` then holds the offending values.
    pub fn step<V: VectorField + ?Sized>(&mut self, field: &V, state: &mut [f64], dt: f64, force: &[f64]) -> bool {
        let n = state.len();
        let half = 0.5 * dt;

        field.eval(state, &mut self.k1);
        for i in 0..n {
            self.k1[i] += force[i];
            self.tmp[i] = state[i] + half * self.k1[i];
        }
        field.eval(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.k2[i] += force[i];
            self.tmp[i] = state[i] + half * self.k2[i];
        }
        field.eval(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.k3[i] += force[i];
            self.tmp[i] = state[i] + dt * self.k3[i];
        }
        field.eval(&self.tmp, &mut self.k4);
        let sixth = dt / 6.0;
        let mut ok = true;
        for i in 0..n {
            self.k4[i] += force[i];
            state[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            ok &= state[i].is_finite() && state[i].abs() <= DIVERGENCE_LIMIT;
        }
        ok
    }
}

/// One RK4 step of `ẋ = field(x) + force` with the force held constant.
pub fn rk4_step<V: VectorField + ?Sized>(
    field: &V,
    state: &StateVector,
    dt: f64,
    force: &StateVector,
) -> Result<StateVector, DynamicsError> {
    check_dims(field, state)?;
    if force.dim() != state.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: state.dim(), got: force.dim() });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidSetup(format!("dt must be positive, got {dt}")));
    }
    let mut next = state.0.clone();
    if Rk4Workspace::new(state.dim()).step(field, &mut next, dt, force) {
        Ok(StateVector(next))
    } else {
        Err(DynamicsError::Diverged { step: 0 })
    }
}

fn check_dims<V: VectorField + ?Sized>(field: &V, x0: &StateVector) -> Result<(), DynamicsError> {
    if x0.dim() != field.dim() {
        return Err(DynamicsError::DimensionMismatch { expected: field.dim(), got: x0.dim() });
    }
    Ok(())
}

/// Supplies the force for each integration step.
///
/// Called once per step with the step index and the state at the start of
/// the step; the force written into `out` is held for the whole step.
pub trait ForceProvider {
    fn force(&mut self, step: usize, state: &[f64], out: &mut [f64]);
}

impl<F: FnMut(usize, &[f64], &mut [f64])> ForceProvider for F {
    fn force(&mut self, step: usize, state: &[f64], out: &mut [f64]) {
        self(step, state, out)
    }
}

/// Integrates `n_steps` RK4 steps from `x0`, returning `n_steps + 1` samples.
pub fn integrate<V: VectorField + ?Sized>(
    field: &V,
    x0: &StateVector,
    n_steps: usize,
    dt: f64,
    force_provider: Option<&mut dyn ForceProvider>,
) -> Result<Trajectory, DynamicsError> {
    integrate_sampled(field, x0, n_steps, dt, 1, force_provider)
}

/// Like [`integrate`], but each sample interval `dt` is covered by
/// `substeps` RK4 steps of size `dt / substeps`. Only every `substeps`-th
/// state is recorded. The force provider is queried once per substep, with
/// the substep index.
pub fn integrate_sampled<V: VectorField + ?Sized>(
    field: &V,
    x0: &StateVector,
    n_samples: usize,
    dt: f64,
    substeps: usize,
    mut force_provider: Option<&mut dyn ForceProvider>,
) -> Result<Trajectory, DynamicsError> {
    check_dims(field, x0)?;
    if n_samples < 1 {
        return Err(DynamicsError::InvalidSetup("n_steps must be at least 1".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) || substeps == 0 {
        return Err(DynamicsError::InvalidSetup(format!(
            "need dt > 0 and substeps >= 1, got dt={dt}, substeps={substeps}"
        )));
    }
    let dim = x0.dim();
    let h = dt / substeps as f64;
    let mut data = Vec::with_capacity((n_samples + 1) * dim);
    data.extend_from_slice(x0);
    let mut state = x0.0.clone();
    let mut force = vec![0.0; dim];
    let mut ws = Rk4Workspace::new(dim);
    let mut step = 0;
    for _ in 0..n_samples {
        for _ in 0..substeps {
            if let Some(p) = force_provider.as_deref_mut() {
                p.force(step, &state, &mut force);
            }
            if !ws.step(field, &mut state, h, &force) {
                return Err(DynamicsError::Diverged { step });
            }
            step += 1;
        }
        data.extend_from_slice(&state);
    }
    Ok(Trajectory { dt, t0: 0.0, dim, data })
}

/// Uniformly sampled multivariate time series.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dt: f64,
    t0: f64,
    dim: usize,
    data: Vec<f64>,
}

impl Trajectory {
    /// Builds a trajectory from row-major sample data.
    pub fn from_flat(dt: f64, t0: f64, dim: usize, data: Vec<f64>) -> Result<Self, DynamicsError> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(DynamicsError::InvalidSetup(format!(
                "{} values do not form whole samples of dimension {dim}",
                data.len()
            )));
        }
        if !(dt > 0.0 && dt.is_finite()) || !t0.is_finite() {
            return Err(DynamicsError::InvalidSetup(format!("bad time axis dt={dt}, t0={t0}")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        Ok(Trajectory { dt, t0, dim, data })
    }

    pub fn from_samples(dt: f64, t0: f64, samples: &[StateVector]) -> Result<Self, DynamicsError> {
        let dim = samples.first().map_or(0, |s| s.dim());
        if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
            return Err(DynamicsError::DimensionMismatch { expected: dim, got: bad.dim() });
        }
        let data = samples.iter().flat_map(|s| s.iter().copied()).collect();
        Trajectory::from_flat(dt, t0, dim, data)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.sample(self.len() - 1)
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Samples `start..end` as a new trajectory with shifted start time.
    pub fn window(&self, start: usize, end: usize) -> Trajectory {
        assert!(start < end && end <= self.len(), "window {start}..{end} out of 0..{}", self.len());
        Trajectory {
            dt: self.dt,
            t0: self.time(start),
            dim: self.dim,
            data: self.data[start * self.dim..end * self.dim].to_vec(),
        }
    }

    /// Drops the first `n` samples (keeping at least one).
    pub fn skip(&self, n: usize) -> Trajectory {
        self.window(n.min(self.len() - 1), self.len())
    }

    pub fn with_t0(mut self, t0: f64) -> Trajectory {
        self.t0 = t0;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorenz28() -> SystemParams {
        SystemParams::lorenz(10.0, 28.0, 8.0 / 3.0)
    }

    #[test]
    fn lorenz_fixed_point_and_substitution() {
        let p = lorenz28();
        let d = lorenz_deriv(&StateVector::zeros(3), &p).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 0.0, 0.0]);
        let d = lorenz_deriv(&[1.0, 1.0, 1.0].into(), &p).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 26.0, 1.0 - 8.0 / 3.0]);
    }

    #[test]
    fn roessler_substitution() {
        let p = SystemParams::roessler(0.5, 2.0, 4.0);
        assert_eq!(roessler_deriv(&StateVector::zeros(3), &p).unwrap().as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(roessler_deriv(&[4.0, 0.0, 1.0].into(), &p).unwrap().as_slice(), &[-1.0, 4.0, 2.0]);
        let p = SystemParams::roessler(0.55, 2.0, 4.0);
        let d = roessler_deriv(&[1.0, 1.0, 1.0].into(), &p).unwrap();
        assert_eq!(d[0], -2.0);
        assert!((d[1] - 1.55).abs() < 1e-15);
        assert_eq!(d[2], -1.0);
    }

    #[test]
    fn wrong_system_and_dimension_are_rejected() {
        let p = lorenz28();
        assert!(matches!(roessler_deriv(&StateVector::zeros(3), &p), Err(DynamicsError::WrongSystem { .. })));
        assert!(matches!(
            lorenz_deriv(&StateVector::zeros(2), &p),
            Err(DynamicsError::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert!(StateVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn zero_field_and_constant_force() {
        let zero = FnField::new(3, |_: &[f64], out: &mut [f64]| out.fill(0.0));
        let s: StateVector = [1.0, -2.0, 3.0].into();
        assert_eq!(rk4_step(&zero, &s, 0.1, &StateVector::zeros(3)).unwrap(), s);
        let c: StateVector = [0.5, 1.0, -4.0].into();
        let next = rk4_step(&zero, &s, 0.25, &c).unwrap();
        for i in 0..3 {
            assert!((next[i] - (s[i] + c[i] * 0.25)).abs() < 1e-15);
        }
    }

    #[test]
    fn exponential_decay_single_step() {
        let decay = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = -x[0]);
        let next = rk4_step(&decay, &StateVector::new(vec![1.0]).unwrap(), 0.02, &StateVector::zeros(1)).unwrap();
        assert!((next[0] - (-0.02f64).exp()).abs() <= 1e-9);
    }

    #[test]
    fn integrate_one_step_matches_rk4_step() {
        let p = lorenz28();
        let x0: StateVector = [1.0, 1.0, 1.0].into();
        let traj = integrate(&p, &x0, 1, 0.02, None).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.sample(0), x0.as_slice());
        let stepped = rk4_step(&p, &x0, 0.02, &StateVector::zeros(3)).unwrap();
        assert_eq!(traj.sample(1), stepped.as_slice());
    }

    #[test]
    fn constant_provider_matches_repeated_steps() {
        let p = lorenz28();
        let x0: StateVector = [1.0, 2.0, 3.0].into();
        let c: StateVector = [0.3, -0.2, 0.1].into();
        let mut provider = |_: usize, _: &[f64], out: &mut [f64]| out.copy_from_slice(&[0.3, -0.2, 0.1]);
        let traj = integrate(&p, &x0, 50, 0.02, Some(&mut provider)).unwrap();
        let mut s = x0;
        for i in 1..=50 {
            s = rk4_step(&p, &s, 0.02, &c).unwrap();
            assert_eq!(traj.sample(i), s.as_slice());
        }
    }

    #[test]
    fn zero_provider_is_bit_identical_to_none() {
        let p = lorenz28();
        let x0: StateVector = [1.0, 1.0, 1.0].into();
        let mut zero = |_: usize, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let a = integrate(&p, &x0, 2000, 0.02, Some(&mut zero)).unwrap();
        let b = integrate(&p, &x0, 2000, 0.02, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn provider_sees_step_index_and_current_state() {
        let p = lorenz28();
        let x0: StateVector = [1.0, 1.0, 1.0].into();
        let mut seen = Vec::new();
        let mut spy = |k: usize, s: &[f64], out: &mut [f64]| {
            seen.push((k, s.to_vec()));
            out.fill(0.0);
        };
        let traj = integrate(&p, &x0, 5, 0.02, Some(&mut spy)).unwrap();
        assert_eq!(seen.len(), 5);
        for (k, s) in &seen {
            assert_eq!(s.as_slice(), traj.sample(*k));
        }
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let grow = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        let err = integrate(&grow, &StateVector::new(vec![1.0]).unwrap(), 1000, 0.1, None).unwrap_err();
        assert!(matches!(err, DynamicsError::Diverged { step } if step < 1000));
    }

    #[test]
    fn roessler_is_stable_at_coarse_sampling_with_substeps() {
        let p = SystemParams::roessler(0.5, 2.0, 4.0);
        let traj = integrate_sampled(&p, &[1.0, 1.0, 1.0].into(), 20_000, 0.5, 20, None).unwrap();
        assert_eq!(traj.len(), 20_001);
        assert!(traj.samples().all(|s| s.iter().all(|v| v.abs() < 100.0)));
    }

    #[test]
    fn window_shifts_time_axis() {
        let p = lorenz28();
        let traj = integrate(&p, &[1.0, 1.0, 1.0].into(), 10, 0.02, None).unwrap();
        let w = traj.window(4, 8);
        assert_eq!(w.len(), 4);
        assert_eq!(w.sample(0), traj.sample(4));
        assert!((w.t0() - 0.08).abs() < 1e-15);
    }
}
