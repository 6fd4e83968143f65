//! Leading eigenpairs of a Hermitian positive semi-definite operator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IltError, Result};

/// How the decomposition is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense when the window allows it, iterative otherwise.
    #[default]
    Auto,
    Dense,
    /// Block subspace iteration with Rayleigh-Ritz on the implicit operator.
    Subspace,
}

/// Eigenpairs sorted by descending eigenvalue; vectors are unit length.
pub(crate) struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

pub(crate) fn dense_top(h: DMatrix<Complex64>, count: usize) -> EigenPairs {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().take(count).map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .take(count)
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    EigenPairs { values, vectors }
}

/// Relative residual target `||H v - s v|| <= tol * s_1`.
pub(crate) const RESIDUAL_TOL: f64 = 1e-8;

pub(crate) fn subspace_top<F>(apply: F, dim: usize, count: usize, seed: u64, max_iter: usize) -> Result<EigenPairs>
where
    F: Fn(&[Complex64]) -> Vec<Complex64> + Sync,
{
    let block = (count + count.max(8)).min(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = DMatrix::from_fn(dim, block, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut basis = orthonormalize(start);
    let mut worst = f64::INFINITY;

    for _ in 0..max_iter {
        let image = apply_block(&apply, &basis);
        // Rayleigh-Ritz on span(basis)
        let mut t = basis.adjoint() * &image;
        t = (&t + t.adjoint()) * Complex64::new(0.5, 0.0);
        let small = dense_top(t, block);
        let rotation = DMatrix::from_fn(block, block, |i, j| small.vectors[j][i]);
        let ritz = &basis * &rotation;
        let ritz_image = &image * &rotation;

        let top = small.values[0].max(f64::MIN_POSITIVE);
        worst = 0.0;
        for j in 0..count {
            let r = ritz_image.column(j) - ritz.column(j) * Complex64::new(small.values[j], 0.0);
            worst = f64::max(worst, r.norm() / top);
        }
        if worst <= RESIDUAL_TOL {
            let vectors = (0..count).map(|j| ritz.column(j).iter().copied().collect()).collect();
            return Ok(EigenPairs {
                values: small.values[..count].to_vec(),
                vectors,
            });
        }
        basis = orthonormalize(ritz_image);
    }
    Err(IltError::ConvergenceFailure(format!(
        "subspace iteration stopped after {max_iter} sweeps with relative residual {worst:.3e}"
    )))
}

fn apply_block<F>(apply: &F, basis: &DMatrix<Complex64>) -> DMatrix<Complex64>
where
    F: Fn(&[Complex64]) -> Vec<Complex64> + Sync,
{
    let dim = basis.nrows();
    let cols: Vec<Vec<Complex64>> = (0..basis.ncols())
        .map(|j| {
            let col: Vec<Complex64> = basis.column(j).iter().copied().collect();
            apply(&col)
        })
        .collect();
    DMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i])
}

/// Modified Gram-Schmidt, twice. Columns that collapse are replaced by
/// deterministic unit vectors so the block keeps full rank.
fn orthonormalize(mut m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let cols = m.ncols();
    for j in 0..cols {
        for _pass in 0..2 {
            for i in 0..j {
                let proj = m.column(i).dotc(&m.column(j));
                let qi = m.column(i).clone_owned();
                m.column_mut(j).axpy(-proj, &qi, Complex64::new(1.0, 0.0));
            }
        }
        let norm = m.column(j).norm();
        if norm > 1e-300 {
            m.column_mut(j).unscale_mut(norm);
        } else {
            let e = (j * 7919) % m.nrows();
            m.column_mut(j).fill(Complex64::new(0.0, 0.0));
            m[(e, j)] = Complex64::new(1.0, 0.0);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(dim: usize) -> DMatrix<Complex64> {
        // Hermitian PSD with a geometric spectrum and a degenerate pair.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let q = orthonormalize(a);
        let spectrum: Vec<f64> = (0..dim)
            .map(|i| if i == 2 { 0.5 } else { 0.5f64.powi(i as i32) })
            .collect();
        let d = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                Complex64::new(spectrum[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        &q * d * q.adjoint()
    }

    #[test]
    fn subspace_matches_dense() {
        let h = test_matrix(40);
        let dense = dense_top(h.clone(), 6);
        let apply = |v: &[Complex64]| {
            let x = nalgebra::DVector::from_column_slice(v);
            (&h * x).iter().copied().collect::<Vec<_>>()
        };
        let it = subspace_top(apply, 40, 6, 1, 500).unwrap();
        for (a, b) in dense.values.iter().zip(&it.values) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn reports_failure_when_budget_too_small() {
        let h = test_matrix(40);
        let apply = |v: &[Complex64]| {
            let x = nalgebra::DVector::from_column_slice(v);
            (&h * x).iter().copied().collect::<Vec<_>>()
        };
        let err = subspace_top(apply, 40, 6, 1, 1).err().unwrap();
        assert!(matches!(err, IltError::ConvergenceFailure(_)));
    }
}
