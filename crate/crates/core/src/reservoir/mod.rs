//! Echo state network: a fixed sparse random reservoir driven by the input
//! signal, with a linear readout over the augmented state `{r, r²}` fitted
//! by ridge regression.
//!
//! State update (leak `α`, zero in all shipped experiments):
//!
//! ```text
//! r(t+Δt) = α·r(t) + (1−α)·tanh(A·r(t) + W_in·u(t))
//! v(t)    = P·[r(t); r(t)²]
//! ```
//!
//! Training regresses the state that has just absorbed `u(t)` onto the next
//! observation `u(t+Δt)`, so in autonomous mode each output is fed straight
//! back as the next input.

mod persist;
mod sparse;
mod spectral;

pub use persist::{load_model, save_model, ModelFile, PersistError};
pub use sparse::SparseMatrix;
pub use spectral::{spectral_radius, spectral_radius_with, DENSE_FALLBACK_MAX_DIM};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{StateVector, Trajectory};
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservoirError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("raw reservoir for seed {seed} has zero spectral radius; rebuild with seed {}", seed.wrapping_add(1))]
    ZeroSpectralRadius { seed: u64 },
    #[error("spectral radius estimation did not converge (best estimate {best})")]
    EstimationFailed { best: f64 },
    #[error("training needs at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("ridge solve failed: {0}")]
    SolverFailure(String),
    #[error("autonomous prediction diverged at step {step}")]
    PredictionDiverged { step: usize },
}

/// Reservoir hyperparameters. Defaults are the values used for the
/// periodic/chaotic Lorenz experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RCHyperParams {
    /// Number of reservoir nodes.
    pub d_r: usize,
    /// Erdős–Rényi edge probability.
    pub p: f64,
    /// Input weights are drawn from `[−omega, omega]`.
    pub omega: f64,
    /// Target spectral radius of the adjacency matrix.
    pub rho_star: f64,
    /// Leak mixing factor.
    pub alpha: f64,
    /// Ridge regularization constant.
    pub beta_reg: f64,
    /// Washout length in samples.
    pub t_w: usize,
    /// Training length in samples.
    pub t_t: usize,
}

impl Default for RCHyperParams {
    fn default() -> Self {
        RCHyperParams {
            d_r: 300,
            p: 0.02,
            omega: 0.0084,
            rho_star: 0.0084,
            alpha: 0.0,
            beta_reg: 6e-11,
            t_w: 5000,
            t_t: 5000,
        }
    }
}

impl RCHyperParams {
    pub fn validate(&self) -> Result<(), ReservoirError> {
        let bad = |m: String| Err(ReservoirError::InvalidHyper(m));
        if self.d_r < 1 {
            return bad("d_r must be at least 1".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return bad(format!("edge probability p={} outside (0, 1]", self.p));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad(format!("omega={} must be positive", self.omega));
        }
        if !(self.rho_star > 0.0 && self.rho_star.is_finite()) {
            return bad(format!("rho_star={} must be positive", self.rho_star));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha={} outside [0, 1]", self.alpha));
        }
        if !(self.beta_reg >= 0.0 && self.beta_reg.is_finite()) {
            return bad(format!("beta_reg={} must be non-negative", self.beta_reg));
        }
        if self.t_t < 1 {
            return bad("t_t must be at least 1".into());
        }
        Ok(())
    }
}

/// Fixed random part of the reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirNetwork {
    adjacency: SparseMatrix,
    /// Row-major `d_r × dim_in`.
    input_map: Vec<f64>,
    dim_in: usize,
    achieved_spectral_radius: f64,
}

impl ReservoirNetwork {
    /// Assembles a network from explicit matrices, measuring its spectral radius.
    pub fn from_parts(adjacency: SparseMatrix, input_map: &DMatrix<f64>) -> Result<Self, ReservoirError> {
        if !adjacency.is_square() || adjacency.nrows() != input_map.nrows() {
            return Err(ReservoirError::Dimension(format!(
                "adjacency {}x{} incompatible with input map {}x{}",
                adjacency.nrows(),
                adjacency.ncols(),
                input_map.nrows(),
                input_map.ncols()
            )));
        }
        let achieved_spectral_radius = spectral_radius(&adjacency)?;
        Ok(Self::from_raw(adjacency, input_map, achieved_spectral_radius))
    }

    pub(crate) fn from_raw(adjacency: SparseMatrix, input_map: &DMatrix<f64>, radius: f64) -> Self {
        let (rows, cols) = input_map.shape();
        let input_map = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|ij| input_map[ij]).collect();
        ReservoirNetwork { adjacency, input_map, dim_in: cols, achieved_spectral_radius: radius }
    }

    pub fn d_r(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn input_map(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d_r(), self.dim_in, &self.input_map)
    }

    pub fn achieved_spectral_radius(&self) -> f64 {
        self.achieved_spectral_radius
    }

    /// `out = tanh(A·r + W_in·u)` mixed with `r` by `alpha`.
    #[inline]
    fn update_into(&self, r: &[f64], u: &[f64], alpha: f64, out: &mut [f64]) {
        self.adjacency.mul_vec_into(r, out);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.input_map[i * self.dim_in..(i + 1) * self.dim_in];
            let drive: f64 = row.iter().zip(u).map(|(w, x)| w * x).sum();
            let act = (*o + drive).tanh();
            *o = if alpha == 0.0 { act } else { alpha * r[i] + (1.0 - alpha) * act };
        }
    }
}

/// Draws the adjacency and input matrices for `seed` and rescales the
/// adjacency to spectral radius `hyper.rho_star`.
///
/// Draw order on the network stream: for each row `i`, each column `j`, one
/// uniform decides the edge (`< p`) and, for an edge, a second gives its
/// weight in `[−1, 1)`. Self-loops take part. The input map is drawn
/// afterwards row by row from `[−omega, omega)`.
pub fn build_network(hyper: &RCHyperParams, dim_in: usize, seed: u64) -> Result<ReservoirNetwork, ReservoirError> {
    hyper.validate()?;
    if dim_in == 0 {
        return Err(ReservoirError::Dimension("input dimension must be positive".into()));
    }
    let n = hyper.d_r;
    let mut rng = SeededRng::new(seed, Stream::Network);
    let mut triplets = Vec::with_capacity((hyper.p * (n * n) as f64 * 1.2) as usize + 8);
    for i in 0..n {
        for j in 0..n {
            if rng.unit() < hyper.p {
                triplets.push((i, j, rng.uniform(-1.0, 1.0)));
            }
        }
    }
    let w_in: Vec<f64> = (0..n * dim_in).map(|_| rng.uniform(-hyper.omega, hyper.omega)).collect();
    let input_map = DMatrix::from_row_slice(n, dim_in, &w_in);

    let raw = SparseMatrix::from_triplets(n, n, &triplets);
    let raw_radius = spectral_radius(&raw)?;
    let frobenius = triplets.iter().map(|t| t.2 * t.2).sum::<f64>().sqrt();
    if raw_radius <= 1e-12 * frobenius {
        return Err(ReservoirError::ZeroSpectralRadius { seed });
    }
    let adjacency = raw.scaled(hyper.rho_star / raw_radius);
    let achieved = spectral_radius(&adjacency)?;
    Ok(ReservoirNetwork::from_raw(adjacency, &input_map, achieved))
}

/// Node activations of a reservoir.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState(Vec<f64>);

impl ReservoirState {
    pub fn zeros(d_r: usize) -> Self {
        ReservoirState(vec![0.0; d_r])
    }

    pub fn from_vec(r: Vec<f64>) -> Self {
        ReservoirState(r)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_state(net: &ReservoirNetwork, r: &ReservoirState, u: &[f64]) -> Result<(), ReservoirError> {
    if r.len() != net.d_r() || u.len() != net.dim_in() {
        return Err(ReservoirError::Dimension(format!(
            "state {} / input {} vs network {} / {}",
            r.len(),
            u.len(),
            net.d_r(),
            net.dim_in()
        )));
    }
    Ok(())
}

/// One reservoir update driven by input `u`.
pub fn update_state(
    net: &ReservoirNetwork,
    r: &ReservoirState,
    u: &[f64],
    alpha: f64,
) -> Result<ReservoirState, ReservoirError> {
    check_state(net, r, u)?;
    let mut out = vec![0.0; net.d_r()];
    net.update_into(&r.0, u, alpha, &mut out);
    Ok(ReservoirState(out))
}

/// `[r; r²]`.
pub fn augment(r: &ReservoirState) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * r.len());
    out.extend_from_slice(&r.0);
    out.extend(r.0.iter().map(|v| v * v));
    out
}

/// Reservoir with a fitted readout. Immutable once trained.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedReservoir {
    network: ReservoirNetwork,
    /// Row-major `dim_out × 2·d_r`.
    readout: Vec<f64>,
    hyper: RCHyperParams,
    seed: u64,
    dt: f64,
}

impl TrainedReservoir {
    /// Wraps an explicit readout matrix `P` (`dim × 2·d_r`).
    pub fn from_parts(
        network: ReservoirNetwork,
        readout: &DMatrix<f64>,
        hyper: RCHyperParams,
        seed: u64,
        dt: f64,
    ) -> Result<Self, ReservoirError> {
        if readout.ncols() != 2 * network.d_r() || readout.nrows() != network.dim_in() {
            return Err(ReservoirError::Dimension(format!(
                "readout {}x{} does not match {} inputs and {} nodes",
                readout.nrows(),
                readout.ncols(),
                network.dim_in(),
                network.d_r()
            )));
        }
        if !readout.iter().all(|v| v.is_finite()) {
            return Err(ReservoirError::SolverFailure("readout has non-finite entries".into()));
        }
        let readout = readout.transpose().as_slice().to_vec();
        Ok(TrainedReservoir { network, readout, hyper, seed, dt })
    }

    pub fn network(&self) -> &ReservoirNetwork {
        &self.network
    }

    pub fn readout_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.network.dim_in(), 2 * self.network.d_r(), &self.readout)
    }

    pub fn hyper(&self) -> &RCHyperParams {
        &self.hyper
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sampling step of the training data.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.network.dim_in()
    }

    #[inline]
    fn readout_into(&self, r: &[f64], out: &mut [f64]) {
        let d_r = r.len();
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.readout[k * 2 * d_r..(k + 1) * 2 * d_r];
            let (lin, quad) = row.split_at(d_r);
            *o = lin.iter().zip(r).map(|(p, x)| p * x).sum::<f64>()
                + quad.iter().zip(r).map(|(p, x)| p * x * x).sum::<f64>();
        }
    }

    fn step_into(&self, r: &[f64], u: &[f64], out: &mut [f64]) {
        self.network.update_into(r, u, self.hyper.alpha, out);
    }
}

/// `P·[r; r²]`.
pub fn readout(trained: &TrainedReservoir, r: &ReservoirState) -> Result<StateVector, ReservoirError> {
    if r.len() != trained.network.d_r() {
        return Err(ReservoirError::Dimension(format!(
            "state of length {} for {} nodes",
            r.len(),
            trained.network.d_r()
        )));
    }
    let mut out = vec![0.0; trained.dim()];
    trained.readout_into(&r.0, &mut out);
    StateVector::new(out).map_err(|_| ReservoirError::PredictionDiverged { step: 0 })
}

/// Drives the reservoir from `r = 0` through `data`, returning the
/// augmented states recorded after the washout together with their
/// one-step-ahead targets.
pub fn collect_training_states(
    net: &ReservoirNetwork,
    data: &Trajectory,
    hyper: &RCHyperParams,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ReservoirError> {
    let needed = hyper.t_w + hyper.t_t + 1;
    if data.len() < needed {
        return Err(ReservoirError::InsufficientData { needed, got: data.len() });
    }
    if data.dim() != net.dim_in() {
        return Err(ReservoirError::Dimension(format!(
            "data dimension {} vs network input {}",
            data.dim(),
            net.dim_in()
        )));
    }
    let d_r = net.d_r();
    let dim = data.dim();
    let mut r = vec![0.0; d_r];
    let mut next = vec![0.0; d_r];
    for k in 0..hyper.t_w {
        net.update_into(&r, data.sample(k), hyper.alpha, &mut next);
        std::mem::swap(&mut r, &mut next);
    }
    let mut states = DMatrix::zeros(hyper.t_t, 2 * d_r);
    let mut targets = DMatrix::zeros(hyper.t_t, dim);
    for row in 0..hyper.t_t {
        let k = hyper.t_w + row;
        net.update_into(&r, data.sample(k), hyper.alpha, &mut next);
        std::mem::swap(&mut r, &mut next);
        for (j, v) in r.iter().enumerate() {
            states[(row, j)] = *v;
            states[(row, d_r + j)] = v * v;
        }
        for (j, v) in data.sample(k + 1).iter().enumerate() {
            targets[(row, j)] = *v;
        }
    }
    Ok((states, targets))
}

/// Solves `(XᵀX + βI) W = XᵀY` for `W` and returns `P = Wᵀ`.
///
/// Uses a Cholesky factorization; if that fails for `β > 0` an LU solve is
/// attempted before giving up.
pub fn ridge_solve(
    states: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    beta_reg: f64,
) -> Result<DMatrix<f64>, ReservoirError> {
    let mut gram = states.tr_mul(states);
    for i in 0..gram.nrows() {
        gram[(i, i)] += beta_reg;
    }
    let rhs = states.tr_mul(targets);
    let solution = match gram.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None if beta_reg > 0.0 => gram.lu().solve(&rhs),
        None => None,
    };
    let w = solution.ok_or_else(|| {
        ReservoirError::SolverFailure(if beta_reg == 0.0 {
            "normal matrix is singular to working precision; use a nonzero beta_reg".into()
        } else {
            "normal matrix could not be factorized".into()
        })
    })?;
    if !w.iter().all(|v| v.is_finite()) {
        return Err(ReservoirError::SolverFailure("ridge solution is not finite; increase beta_reg".into()));
    }
    Ok(w.transpose())
}

/// Fits the readout on `t_t` states recorded after a washout of `t_w` samples.
pub fn train(
    net: ReservoirNetwork,
    data: &Trajectory,
    hyper: &RCHyperParams,
    seed: u64,
) -> Result<TrainedReservoir, ReservoirError> {
    hyper.validate()?;
    let (states, targets) = collect_training_states(&net, data, hyper)?;
    let p = ridge_solve(&states, &targets, hyper.beta_reg)?;
    TrainedReservoir::from_parts(net, &p, *hyper, seed, data.dt())
}

/// Runs the reservoir from `r = 0` over every sample of `data`.
pub fn synchronize(trained: &TrainedReservoir, data: &Trajectory) -> Result<ReservoirState, ReservoirError> {
    if data.dim() != trained.dim() {
        return Err(ReservoirError::Dimension(format!(
            "data dimension {} vs model input {}",
            data.dim(),
            trained.dim()
        )));
    }
    let d_r = trained.network.d_r();
    let mut r = vec![0.0; d_r];
    let mut next = vec![0.0; d_r];
    for u in data.samples() {
        trained.step_into(&r, u, &mut next);
        std::mem::swap(&mut r, &mut next);
    }
    Ok(ReservoirState(r))
}

/// Closed-loop generator: each call emits `v = P·r̃` and feeds it back.
#[derive(Debug, Clone)]
pub struct AutonomousPredictor<'a> {
    trained: &'a TrainedReservoir,
    r: Vec<f64>,
    next: Vec<f64>,
    steps: usize,
}

impl<'a> AutonomousPredictor<'a> {
    pub fn new(trained: &'a TrainedReservoir, r0: &ReservoirState) -> Result<Self, ReservoirError> {
        if r0.len() != trained.network.d_r() {
            return Err(ReservoirError::Dimension(format!(
                "state of length {} for {} nodes",
                r0.len(),
                trained.network.d_r()
            )));
        }
        let d_r = r0.len();
        Ok(AutonomousPredictor { trained, r: r0.0.clone(), next: vec![0.0; d_r], steps: 0 })
    }

    /// Writes the next prediction into `out` and advances the reservoir.
    pub fn advance(&mut self, out: &mut [f64]) -> Result<(), ReservoirError> {
        self.trained.readout_into(&self.r, out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(ReservoirError::PredictionDiverged { step: self.steps });
        }
        self.trained.step_into(&self.r, out, &mut self.next);
        std::mem::swap(&mut self.r, &mut self.next);
        self.steps += 1;
        Ok(())
    }

    /// Like [`advance`](Self::advance), but the reservoir absorbs `input`
    /// instead of its own output.
    pub fn advance_driven(&mut self, input: &[f64], out: &mut [f64]) -> Result<(), ReservoirError> {
        self.trained.readout_into(&self.r, out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(ReservoirError::PredictionDiverged { step: self.steps });
        }
        self.trained.step_into(&self.r, input, &mut self.next);
        std::mem::swap(&mut self.r, &mut self.next);
        self.steps += 1;
        Ok(())
    }

    pub fn state(&self) -> ReservoirState {
        ReservoirState(self.r.clone())
    }
}

/// `n_steps` autonomous predictions starting from a synchronized state.
pub fn predict_autonomous(
    trained: &TrainedReservoir,
    r0: &ReservoirState,
    n_steps: usize,
) -> Result<Trajectory, ReservoirError> {
    let dim = trained.dim();
    let mut pred = AutonomousPredictor::new(trained, r0)?;
    let mut data = vec![0.0; n_steps * dim];
    for chunk in data.chunks_exact_mut(dim) {
        pred.advance(chunk)?;
    }
    Trajectory::from_flat(trained.dt, 0.0, dim, data).map_err(|e| ReservoirError::Dimension(e.to_string()))
}
