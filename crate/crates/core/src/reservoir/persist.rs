//! JSON persistence of trained reservoirs.
//!
//! Floats are written in shortest round-trip form and parsed with exact
//! rounding, so a save/load cycle reproduces every matrix bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{RCHyperParams, ReservoirError, ReservoirNetwork, SparseMatrix, TrainedReservoir};

pub const MODEL_FORMAT: &str = "reservoir-control/model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseFile {
    pub n: usize,
    /// `(row, col, value)` in row-major order.
    pub triplets: Vec<(usize, usize, f64)>,
}

/// On-disk layout of a [`TrainedReservoir`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub hyper: RCHyperParams,
    pub seed: u64,
    pub dt: f64,
    pub achieved_spectral_radius: f64,
    /// `d_r` rows of `dim_in` entries.
    pub input_map: Vec<Vec<f64>>,
    pub adjacency: SparseFile,
    /// `dim_in` rows of `2·d_r` entries.
    pub readout: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ReservoirError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ReservoirError::Dimension(format!("ragged {what} matrix")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<&TrainedReservoir> for ModelFile {
    fn from(t: &TrainedReservoir) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            hyper: t.hyper,
            seed: t.seed,
            dt: t.dt,
            achieved_spectral_radius: t.network.achieved_spectral_radius,
            input_map: rows(&t.network.input_map()),
            adjacency: SparseFile { n: t.network.d_r(), triplets: t.network.adjacency.triplets() },
            readout: rows(&t.readout_matrix()),
        }
    }
}

impl TryFrom<ModelFile> for TrainedReservoir {
    type Error = ReservoirError;

    fn try_from(f: ModelFile) -> Result<Self, ReservoirError> {
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(ReservoirError::Dimension(format!("unsupported model format {} v{}", f.format, f.version)));
        }
        let n = f.adjacency.n;
        if f.adjacency.triplets.iter().any(|&(i, j, _)| i >= n || j >= n) {
            return Err(ReservoirError::Dimension("adjacency triplet out of range".into()));
        }
        let adjacency = SparseMatrix::from_triplets(n, n, &f.adjacency.triplets);
        let input_map = from_rows(&f.input_map, "input map")?;
        if input_map.nrows() != n {
            return Err(ReservoirError::Dimension(format!("input map has {} rows for {n} nodes", input_map.nrows())));
        }
        let network = ReservoirNetwork::from_raw(adjacency, &input_map, f.achieved_spectral_radius);
        let readout = from_rows(&f.readout, "readout")?;
        TrainedReservoir::from_parts(network, &readout, f.hyper, f.seed, f.dt)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PersistError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {source}")]
    Model { path: String, source: ReservoirError },
}

pub fn save_model(t: &TrainedReservoir, path: &Path) -> Result<(), PersistError> {
    let p = path.display().to_string();
    let json =
        serde_json::to_string(&ModelFile::from(t)).map_err(|source| PersistError::Json { path: p.clone(), source })?;
    fs::write(path, json).map_err(|source| PersistError::Io { path: p, source })
}

pub fn load_model(path: &Path) -> Result<TrainedReservoir, PersistError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| PersistError::Io { path: p.clone(), source })?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|source| PersistError::Json { path: p.clone(), source })?;
    TrainedReservoir::try_from(file).map_err(|source| PersistError::Model { path: p, source })
}
