use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;

use super::eigen::{dense_top, subspace_top, EigenMethod, EigenPairs};
use super::tcc::{TccOperator, DENSE_LIMIT};
use super::GridSpec;
use crate::error::{IltError, Result};
use crate::fft::{ConvPlan, Kernel, Spectrum};
use crate::stencil::central_diff_kernel;

/// Tolerated negative eigenvalue, relative to the largest one.
const PSD_TOL: f64 = 1e-10;

/// One coherent system: eigenvalue, eigenmode kernel and the derived kernels
/// used by the forward model and its adjoint.
#[derive(Debug, Clone)]
pub struct SocsMode {
    pub sigma: f64,
    /// `V_n`, origin at the grid center.
    pub v: Kernel,
    /// `W_n(x) = conj(V_n(-x))`.
    pub w: Kernel,
    /// Central differences of `V_n` along `x1`, `x2`.
    pub dv: [Kernel; 2],
    /// `Z_n(x) = (d V_n)(-x)`, no conjugation.
    pub dz: [Kernel; 2],
}

impl SocsMode {
    pub fn new(sigma: f64, v: Kernel) -> Self {
        let w = v.reflect_conj();
        let dv = [central_diff_kernel(&v, 0), central_diff_kernel(&v, 1)];
        let dz = [dv[0].reflect(), dv[1].reflect()];
        Self { sigma, v, w, dv, dz }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ModeSpectra {
    pub v: Spectrum,
    pub w: Spectrum,
    pub dv: [Spectrum; 2],
    pub dz: [Spectrum; 2],
}

/// Truncated eigen-expansion of the TCC with precomputed kernel spectra.
/// Immutable once built; share it freely between evaluations.
#[derive(Debug, Clone)]
pub struct SocsModel {
    grid: GridSpec,
    modes: Vec<SocsMode>,
    plan: ConvPlan,
    spectra: Vec<ModeSpectra>,
}

impl SocsModel {
    /// Build from eigenvalues and eigenmodes sampled on the kernel window.
    pub fn from_eigenpairs(grid: GridSpec, sigmas: &[f64], modes: &[Array2<Complex64>]) -> Result<Self> {
        if sigmas.len() != modes.len() || sigmas.is_empty() {
            return Err(IltError::InvalidParameter(format!(
                "{} eigenvalues for {} eigenmodes",
                sigmas.len(),
                modes.len()
            )));
        }
        if sigmas.windows(2).any(|w| w[1] > w[0]) || sigmas.iter().any(|s| *s < 0.0) {
            return Err(IltError::InvalidParameter(
                "eigenvalues must be nonnegative and non-increasing".into(),
            ));
        }
        let c = grid.center() as isize;
        let modes = sigmas
            .iter()
            .zip(modes)
            .map(|(&s, v)| {
                grid.check_shape(v.dim())?;
                Ok(SocsMode::new(s, Kernel::new(v.clone(), [c, c])))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(grid, modes, ConvPlan::default_pad(grid.n))
    }

    fn assemble(grid: GridSpec, modes: Vec<SocsMode>, pad: usize) -> Result<Self> {
        let plan = ConvPlan::new(grid.n, pad)?;
        let spectra = modes
            .iter()
            .map(|m| ModeSpectra {
                v: plan.kernel_spectrum(&m.v),
                w: plan.kernel_spectrum(&m.w),
                dv: [plan.kernel_spectrum(&m.dv[0]), plan.kernel_spectrum(&m.dv[1])],
                dz: [plan.kernel_spectrum(&m.dz[0]), plan.kernel_spectrum(&m.dz[1])],
            })
            .collect();
        Ok(Self {
            grid,
            modes,
            plan,
            spectra,
        })
    }

    /// Same model with a different FFT padding (at least `2n - 1`).
    pub fn with_padding(&self, pad: usize) -> Result<Self> {
        Self::assemble(self.grid, self.modes.clone(), pad)
    }

    /// Same eigenmodes with every eigenvalue multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let mut modes = self.modes.clone();
        for m in &mut modes {
            m.sigma *= factor;
        }
        Self::assemble(self.grid, modes, self.plan.pad())
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n0(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[SocsMode] {
        &self.modes
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.sigma).collect()
    }

    pub fn plan(&self) -> &ConvPlan {
        &self.plan
    }

    pub(crate) fn spectra(&self) -> &[ModeSpectra] {
        &self.spectra
    }

    /// `sum_n sigma_n V_n(k) conj(V_n(j))` as a dense matrix, flat row-major
    /// kernel indices. Small windows only.
    pub fn reassemble(&self) -> Result<DMatrix<Complex64>> {
        if self.grid.n > DENSE_LIMIT {
            return Err(IltError::CapacityExceeded {
                n: self.grid.n,
                limit: DENSE_LIMIT,
            });
        }
        let d = self.grid.n * self.grid.n;
        let mut h = DMatrix::zeros(d, d);
        for m in &self.modes {
            let v: Vec<Complex64> = m.v.values.iter().copied().collect();
            for k in 0..d {
                let a = v[k] * m.sigma;
                for j in 0..d {
                    h[(k, j)] += a * v[j].conj();
                }
            }
        }
        Ok(h)
    }
}

/// Top-`n0` eigenpairs of the TCC, with the default solver choice.
pub fn decompose_socs(tcc: &TccOperator, n0: usize) -> Result<SocsModel> {
    decompose_socs_with(tcc, n0, EigenMethod::Auto)
}

pub fn decompose_socs_with(tcc: &TccOperator, n0: usize, method: EigenMethod) -> Result<SocsModel> {
    let dim = tcc.dim();
    if n0 == 0 || n0 > dim {
        return Err(IltError::InvalidParameter(format!("n0 = {n0} outside 1..={dim}")));
    }
    let grid = *tcc.grid();
    let dense = match method {
        EigenMethod::Dense => true,
        EigenMethod::Subspace => false,
        EigenMethod::Auto => grid.n <= DENSE_LIMIT,
    };
    let pairs = if dense {
        dense_top(tcc.dense()?, n0)
    } else {
        subspace_top(|v| tcc.apply(v), dim, n0, 0x5eed, 2000)?
    };
    let EigenPairs { values, vectors } = pairs;

    let top = values[0].max(0.0);
    let mut sigmas = Vec::with_capacity(n0);
    for &s in &values {
        if s < -PSD_TOL * top {
            return Err(IltError::ConvergenceFailure(format!(
                "TCC eigenvalue {s:.3e} is negative beyond tolerance (largest {top:.3e})"
            )));
        }
        sigmas.push(s.max(0.0));
    }
    // enforce exact ordering after clamping
    for i in 1..sigmas.len() {
        if sigmas[i] > sigmas[i - 1] {
            sigmas[i] = sigmas[i - 1];
        }
    }

    let n = grid.n;
    let modes: Vec<Array2<Complex64>> = vectors
        .into_iter()
        .map(|v| {
            let v = fix_phase(v);
            Array2::from_shape_vec((n, n), v).expect("eigenvector length matches grid")
        })
        .collect();
    SocsModel::from_eigenpairs(grid, &sigmas, &modes)
}

/// Rotate so the largest-magnitude component is real and positive.
fn fix_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let p = v[best];
    if p.norm() > 0.0 {
        let rot = p.conj() / p.norm();
        for x in &mut v {
            *x *= rot;
        }
    }
    let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    v
}
