//! Spectral radius of sparse matrices.
//!
//! Power iteration cannot settle when the dominant eigenvalue is one of a
//! complex-conjugate pair, which is the common case for random real
//! matrices. Each iteration therefore also fits the two-term recurrence
//! `A²x ≈ a·Ax + b·x` (a 2-D Krylov Rayleigh–Ritz step); once that fit is
//! exact to tolerance, the roots of `μ² − aμ − b` are the dominant pair.
//! If neither test converges within the iteration cap, matrices up to
//! [`DENSE_FALLBACK_MAX_DIM`] are handed to a dense Schur eigensolver.

use nalgebra::linalg::Schur;

use super::sparse::SparseMatrix;
use super::ReservoirError;
use crate::rng::{SeededRng, Stream};

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 100_000;
pub const DENSE_FALLBACK_MAX_DIM: usize = 500;

/// Largest absolute eigenvalue of a square matrix.
pub fn spectral_radius(m: &SparseMatrix) -> Result<f64, ReservoirError> {
    spectral_radius_with(m, POWER_TOLERANCE, POWER_MAX_ITERATIONS)
}

pub fn spectral_radius_with(m: &SparseMatrix, tol: f64, max_iterations: usize) -> Result<f64, ReservoirError> {
    if !m.is_square() {
        return Err(ReservoirError::Dimension(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    if n == 0 || m.nnz() == 0 {
        return Ok(0.0);
    }
    match power_iteration(m, tol, max_iterations) {
        PowerOutcome::Converged(r) => Ok(r),
        PowerOutcome::Stalled(best) if n <= DENSE_FALLBACK_MAX_DIM => {
            dense_spectral_radius(m).ok_or(ReservoirError::EstimationFailed { best })
        }
        PowerOutcome::Stalled(best) => Err(ReservoirError::EstimationFailed { best }),
    }
}

enum PowerOutcome {
    Converged(f64),
    Stalled(f64),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn power_iteration(m: &SparseMatrix, tol: f64, max_iterations: usize) -> PowerOutcome {
    let n = m.nrows();
    let mut rng = SeededRng::new(0x5eed_5eed, Stream::PowerIteration);
    let mut x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut best = 0.0;

    for _ in 0..max_iterations {
        m.mul_vec_into(&x, &mut y);
        let ny = norm(&y);
        if ny == 0.0 {
            // x was annihilated: the reachable part of the matrix is nilpotent.
            return PowerOutcome::Converged(0.0);
        }
        best = ny;

        // Single dominant real eigenvalue: y ≈ λx.
        let lambda = dot(&x, &y);
        let res: f64 = x.iter().zip(&y).map(|(a, b)| (b - lambda * a).powi(2)).sum::<f64>().sqrt();
        if res <= tol * lambda.abs() {
            return PowerOutcome::Converged(lambda.abs());
        }

        // Dominant pair: z = A y ≈ a y + b x.
        m.mul_vec_into(&y, &mut z);
        let (yy, xy, xx) = (dot(&y, &y), dot(&x, &y), 1.0);
        let (zy, zx) = (dot(&z, &y), dot(&z, &x));
        let det = yy * xx - xy * xy;
        if det > 1e-12 * yy * xx {
            let a = (zy * xx - zx * xy) / det;
            let b = (yy * zx - xy * zy) / det;
            let fit: f64 = (0..n).map(|i| (z[i] - a * y[i] - b * x[i]).powi(2)).sum::<f64>().sqrt();
            if fit <= tol * norm(&z) {
                let disc = a * a + 4.0 * b;
                let radius = if disc < 0.0 {
                    (-b).sqrt()
                } else {
                    let s = disc.sqrt();
                    (0.5 * (a + s)).abs().max((0.5 * (a - s)).abs())
                };
                return PowerOutcome::Converged(radius);
            }
        }

        let nz = norm(&z);
        if nz == 0.0 {
            return PowerOutcome::Converged(0.0);
        }
        // Advance two steps per iteration since A·y is already available.
        x.iter_mut().zip(&z).for_each(|(a, b)| *a = b / nz);
    }
    PowerOutcome::Stalled(best)
}

fn dense_spectral_radius(m: &SparseMatrix) -> Option<f64> {
    let schur = Schur::try_new(m.to_dense(), f64::EPSILON, 100_000)?;
    let eig = schur.complex_eigenvalues();
    Some(eig.iter().map(|c| c.norm()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn diag(d: &[f64]) -> SparseMatrix {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseMatrix::from_triplets(d.len(), d.len(), &t)
    }

    #[test]
    fn identity_and_diagonal() {
        assert!((spectral_radius(&diag(&[1.0; 7])).unwrap() - 1.0).abs() < 1e-12);
        assert!((spectral_radius(&diag(&[2.0, -5.0, 0.1])).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn rotation_pair_is_resolved_without_fallback() {
        // Eigenvalues 2·e^{±iπ/3} and 0.5.
        let (c, s) = ((std::f64::consts::PI / 3.0).cos(), (std::f64::consts::PI / 3.0).sin());
        let m = DMatrix::from_row_slice(3, 3, &[2.0 * c, -2.0 * s, 0.0, 2.0 * s, 2.0 * c, 0.0, 0.0, 0.0, 0.5]);
        let sp = SparseMatrix::from_dense(&m);
        match power_iteration(&sp, POWER_TOLERANCE, 10_000) {
            PowerOutcome::Converged(r) => assert!((r - 2.0).abs() < 1e-9, "{r}"),
            PowerOutcome::Stalled(_) => panic!("pair not detected"),
        }
    }

    #[test]
    fn nilpotent_matrix_has_zero_radius() {
        let m = SparseMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 2, 4.0)]);
        assert_eq!(spectral_radius(&m).unwrap(), 0.0);
        assert_eq!(spectral_radius(&SparseMatrix::from_triplets(4, 4, &[])).unwrap(), 0.0);
    }

    #[test]
    fn stalled_iteration_falls_back_to_dense() {
        // Three eigenvalues of equal modulus on different rays defeat both tests.
        let m = SparseMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]);
        assert!(matches!(power_iteration(&m, 1e-10, 200), PowerOutcome::Stalled(_)));
        assert!((spectral_radius(&m).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn non_square_is_rejected() {
        let m = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]);
        assert!(matches!(spectral_radius(&m), Err(ReservoirError::Dimension(_))));
    }
}
