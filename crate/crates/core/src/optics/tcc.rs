use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{eval_mutual_intensity_approx, eval_psf, GridSpec, OpticalSystem};
use crate::error::{IltError, Result};
use crate::fft::{ConvPlan, Kernel, Spectrum};

/// Largest window side for which the `n^2 x n^2` operator may be stored.
pub const DENSE_LIMIT: usize = 48;

/// Model for the mutual intensity entering the TCC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutualIntensity {
    /// Closed-form Gaussian approximation.
    #[default]
    GaussianApprox,
    /// `J = 1`: fully coherent illumination.
    Coherent,
}

/// Hopkins transmission cross coefficients on the kernel window,
/// `H(k, j) = dx^4 K(x_k) J(x_j - x_k) conj(K(x_j))`, zero when either index
/// leaves the window. Stored through its factors; see [`TccOperator::dense`].
#[derive(Debug, Clone)]
pub struct TccOperator {
    grid: GridSpec,
    psf: Array2<Complex64>,
    /// `J` sampled on offsets `[-(n-1), n-1]^2`, origin at `n - 1`.
    mutual: Kernel,
    weight: f64,
    plan: ConvPlan,
    mutual_reflected: Spectrum,
}

pub fn build_tcc(sys: &OpticalSystem, grid: &GridSpec, model: MutualIntensity) -> Result<TccOperator> {
    sys.validate()?;
    grid.validate()?;
    let n = grid.n;
    let psf = Array2::from_shape_fn((n, n), |(i, j)| {
        Complex64::new(eval_psf(sys, grid.kernel_position(i, j)), 0.0)
    });
    let m = 2 * n - 1;
    let c = (n - 1) as isize;
    let mutual = Array2::from_shape_fn((m, m), |(i, j)| {
        let x = [
            (i as isize - c) as f64 * grid.dx_nm,
            (j as isize - c) as f64 * grid.dx_nm,
        ];
        let v = match model {
            MutualIntensity::GaussianApprox => eval_mutual_intensity_approx(sys, x),
            MutualIntensity::Coherent => 1.0,
        };
        Complex64::new(v, 0.0)
    });
    TccOperator::from_parts(*grid, psf, Kernel::new(mutual, [c, c]))
}

impl TccOperator {
    /// Assemble from sampled factors. `psf` lives on the kernel window,
    /// `mutual` must cover every offset between two window cells.
    pub fn from_parts(grid: GridSpec, psf: Array2<Complex64>, mutual: Kernel) -> Result<Self> {
        grid.check_shape(psf.dim())?;
        let weight = grid.dx_nm.powi(4);
        let plan = ConvPlan::new(grid.n, ConvPlan::default_pad(grid.n))?;
        // (H v)(k) needs sum_j J(x_j - x_k) z_j, i.e. a convolution with J(-m).
        let mutual_reflected = plan.kernel_spectrum(&mutual.reflect());
        Ok(Self {
            grid,
            psf,
            mutual,
            weight,
            plan,
            mutual_reflected,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.n * self.grid.n
    }

    pub fn psf(&self) -> &Array2<Complex64> {
        &self.psf
    }

    /// Quadrature weight `dx^2 dy^2` folded into every entry.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Single entry; `k` and `j` are flat row-major kernel indices.
    pub fn entry(&self, k: usize, j: usize) -> Complex64 {
        let n = self.grid.n;
        let (k0, k1) = (k / n, k % n);
        let (j0, j1) = (j / n, j % n);
        let off = [j0 as isize - k0 as isize, j1 as isize - k1 as isize];
        self.psf[[k0, k1]] * self.mutual.at(off) * self.psf[[j0, j1]].conj() * self.weight
    }

    /// Matrix-vector product through one FFT convolution with `J`.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.grid.n;
        let z = Array2::from_shape_fn((n, n), |(i, j)| self.psf[[i, j]].conj() * v[i * n + j]);
        let zs = self.plan.forward(&z);
        let spec = crate::fft::multiply(&self.mutual_reflected, &zs);
        let y = self.plan.inverse_window(spec);
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.psf[[i, j]] * y[[i, j]] * self.weight);
            }
        }
        out
    }

    /// Materialize the full operator. Only allowed up to [`DENSE_LIMIT`].
    pub fn dense(&self) -> Result<DMatrix<Complex64>> {
        if self.grid.n > DENSE_LIMIT {
            return Err(IltError::CapacityExceeded {
                n: self.grid.n,
                limit: DENSE_LIMIT,
            });
        }
        let d = self.dim();
        Ok(DMatrix::from_fn(d, d, |k, j| self.entry(k, j)))
    }
}
