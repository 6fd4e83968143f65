//! Optical kernels, the Hopkins transmission cross coefficients and their
//! sum-of-coherent-systems decomposition.

mod bessel;
mod eigen;
mod socs;
mod tcc;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{IltError, Result};

pub use bessel::bessel_j1;
pub use eigen::EigenMethod;
pub use socs::{decompose_socs, decompose_socs_with, SocsMode, SocsModel};
pub use tcc::{build_tcc, MutualIntensity, TccOperator, DENSE_LIMIT};

/// Wavelength, numerical aperture and coherency of the projection optics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalSystem {
    pub lambda_nm: f64,
    pub na: f64,
    pub sigma_c: f64,
}

impl OpticalSystem {
    pub fn new(lambda_nm: f64, na: f64, sigma_c: f64) -> Result<Self> {
        let sys = Self { lambda_nm, na, sigma_c };
        sys.validate()?;
        Ok(sys)
    }

    /// 193 nm immersion-style optics with NA 1 and coherency 0.067.
    pub fn reference() -> Self {
        Self {
            lambda_nm: 193.0,
            na: 1.0,
            sigma_c: 0.067,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_nm > 0.0 && self.na > 0.0 && self.sigma_c > 0.0) {
            return Err(IltError::InvalidParameter(format!(
                "optics require lambda, NA, sigma > 0 (got {}, {}, {})",
                self.lambda_nm, self.na, self.sigma_c
            )));
        }
        Ok(())
    }

    /// Wavenumber `2 pi / lambda`, in 1/nm.
    pub fn k(&self) -> f64 {
        2.0 * PI / self.lambda_nm
    }

    /// Pupil cutoff `k NA`.
    pub fn cutoff(&self) -> f64 {
        self.k() * self.na
    }

    /// Illumination radius `k sigma NA`.
    pub fn coherence_radius(&self) -> f64 {
        self.k() * self.sigma_c * self.na
    }

    /// Width of the Gaussian mutual intensity in frequency space, nm^2.
    pub fn beta(&self) -> f64 {
        let q = self.coherence_radius();
        std::f64::consts::LN_2 / (q * q)
    }
}

/// Square computational window of `n x n` cells of side `dx_nm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub dx_nm: f64,
}

impl GridSpec {
    pub fn new(n: usize, dx_nm: f64) -> Result<Self> {
        let g = Self { n, dx_nm };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || !(self.dx_nm > 0.0) {
            return Err(IltError::InvalidParameter(format!(
                "grid needs n >= 4 and dx > 0 (got n = {}, dx = {})",
                self.n, self.dx_nm
            )));
        }
        Ok(())
    }

    pub fn extent_nm(&self) -> f64 {
        self.n as f64 * self.dx_nm
    }

    /// Index of the cell sitting at the optical axis. Kernel arrays put
    /// offset zero here, so offsets run over `[-n/2, n - 1 - n/2]`.
    pub fn center(&self) -> usize {
        self.n / 2
    }

    /// Physical position of kernel cell `(i, j)`, in nm.
    pub fn kernel_position(&self, i: usize, j: usize) -> [f64; 2] {
        let c = self.center() as f64;
        [(i as f64 - c) * self.dx_nm, (j as f64 - c) * self.dx_nm]
    }

    pub fn check_shape(&self, dim: (usize, usize)) -> Result<()> {
        if dim != (self.n, self.n) {
            return Err(IltError::GridMismatch {
                expected: self.n,
                got_rows: dim.0,
                got_cols: dim.1,
            });
        }
        Ok(())
    }
}

/// Coherent point spread function `K(x) = (k NA / 2 pi) J1(k NA |x|) / |x|`.
pub fn eval_psf(sys: &OpticalSystem, x: [f64; 2]) -> f64 {
    let a = sys.cutoff();
    let r = x[0].hypot(x[1]);
    let ar = a * r;
    if ar < 1e-8 {
        // J1(t)/t -> 1/2 - t^2/16
        return a * a / (4.0 * PI) * (1.0 - ar * ar / 8.0);
    }
    a / (2.0 * PI) * bessel_j1(ar) / r
}

/// Gaussian stand-in for the mutual intensity, evaluated in closed form:
/// the inverse transform of `exp(-beta |xi|^2) / (pi q^2)` with `q = k sigma NA`.
pub fn eval_mutual_intensity_approx(sys: &OpticalSystem, x: [f64; 2]) -> f64 {
    let q = sys.coherence_radius();
    let beta = sys.beta();
    let r2 = x[0] * x[0] + x[1] * x[1];
    (1.0 / (PI * q * q)) * (PI / beta) * (-r2 / (4.0 * beta)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let sys = OpticalSystem::reference();
        assert!((sys.k() * sys.lambda_nm - 2.0 * PI).abs() < 1e-14);
        let q = sys.coherence_radius();
        assert!((sys.beta() * q * q - std::f64::consts::LN_2).abs() < 1e-15);
        // beta = ln2 / (k sigma NA)^2 with k = 2 pi / 193
        assert!((sys.beta() - 1.457e5).abs() / 1.457e5 < 1e-3, "{}", sys.beta());
    }

    #[test]
    fn psf_origin_value() {
        // k NA = 1 -> K(0) = 1 / (4 pi)
        let sys = OpticalSystem::new(2.0 * PI, 1.0, 0.1).unwrap();
        assert!((eval_psf(&sys, [0.0, 0.0]) - 1.0 / (4.0 * PI)).abs() < 1e-15);
        // continuous across the series switch
        let near = eval_psf(&sys, [2e-8, 0.0]);
        assert!((near - 1.0 / (4.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn psf_decays() {
        let sys = OpticalSystem::reference();
        let k0 = eval_psf(&sys, [0.0, 0.0]);
        let far = eval_psf(&sys, [1e3 / sys.cutoff(), 0.0]);
        assert!(far.abs() < 1e-2 * k0);
    }

    #[test]
    fn mutual_intensity_at_origin() {
        for sys in [OpticalSystem::reference(), OpticalSystem::new(248.0, 0.7, 0.4).unwrap()] {
            let v = eval_mutual_intensity_approx(&sys, [0.0, 0.0]);
            assert!((v - 1.0 / std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_limit_is_flat_on_compacts() {
        let sys = OpticalSystem::new(193.0, 1.0, 1e-3).unwrap();
        let v0 = eval_mutual_intensity_approx(&sys, [0.0, 0.0]);
        for x in [[100.0, 0.0], [0.0, -100.0], [70.0, 70.0], [30.0, -20.0]] {
            let v = eval_mutual_intensity_approx(&sys, x);
            assert!((v - v0).abs() < 0.01 * v0);
        }
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(OpticalSystem::new(0.0, 1.0, 0.1).is_err());
        assert!(OpticalSystem::new(193.0, -1.0, 0.1).is_err());
        assert!(GridSpec::new(3, 1.0).is_err());
        assert!(GridSpec::new(8, 0.0).is_err());
    }
}
