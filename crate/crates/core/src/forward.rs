//! Discrete aerial image `I(u) = sum_n sigma_n |V_n * u|^2` and its spatial
//! derivatives.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{IltError, Result};
use crate::fft::multiply;
use crate::optics::{GridSpec, SocsModel};

/// Mask variable on the window, values in `[0, 1]`, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl PhaseField {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        grid.check_shape(values.dim())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IltError::InvalidParameter(format!(
                "phase field value {v} outside [0, 1]"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Clamp into `[0, 1]`; NaN maps to 0.
    pub fn clamped(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        grid.check_shape(values.dim())?;
        let values = values.mapv(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, level: f64) -> Result<Self> {
        Self::new(grid, Array2::from_elem((grid.n, grid.n), level))
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: Array2::zeros((grid.n, grid.n)),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Pixels not within `tol` of 0 or 1.
    pub fn nonbinary_count(&self, tol: f64) -> usize {
        self.values.iter().filter(|v| **v > tol && **v < 1.0 - tol).count()
    }

    /// `{u > 1/2}`.
    pub fn binarize(&self) -> Array2<bool> {
        self.values.mapv(|v| v > 0.5)
    }
}

/// Intensity, its per-pixel derivatives and the per-mode convolutions they
/// were assembled from. Values are in raw units; divide by the threshold to
/// normalize.
#[derive(Debug, Clone)]
pub struct IntensityBundle {
    pub intensity: Array2<f64>,
    pub grad_x1: Array2<f64>,
    pub grad_x2: Array2<f64>,
    /// `V_n * u`, one per mode.
    pub mode_convs: Vec<Array2<Complex64>>,
    /// `(dV_n/dx1 * u, dV_n/dx2 * u)`.
    pub mode_dconvs: Vec<[Array2<Complex64>; 2]>,
}

impl IntensityBundle {
    pub fn grid_n(&self) -> usize {
        self.intensity.nrows()
    }

    /// `(I, dI/dx1, dI/dx2) / h`.
    pub fn normalized(&self, h: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        (&self.intensity / h, &self.grad_x1 / h, &self.grad_x2 / h)
    }
}

fn check(model: &SocsModel, dim: (usize, usize)) -> Result<()> {
    model.grid().check_shape(dim)
}

pub fn intensity(model: &SocsModel, u: &PhaseField) -> Result<IntensityBundle> {
    intensity_field(model, u.values())
}

/// Intensity of an arbitrary real field; no `[0, 1]` requirement.
pub fn intensity_field(model: &SocsModel, u: &Array2<f64>) -> Result<IntensityBundle> {
    check(model, u.dim())?;
    let plan = model.plan();
    let us = plan.forward(u);
    let n = model.grid().n;
    let mut intensity = Array2::<f64>::zeros((n, n));
    let mut grad_x1 = Array2::<f64>::zeros((n, n));
    let mut grad_x2 = Array2::<f64>::zeros((n, n));
    let mut mode_convs = Vec::with_capacity(model.n0());
    let mut mode_dconvs = Vec::with_capacity(model.n0());
    for (mode, spec) in model.modes().iter().zip(model.spectra()) {
        let c = plan.inverse_window(multiply(&spec.v, &us));
        let e1 = plan.inverse_window(multiply(&spec.dv[0], &us));
        let e2 = plan.inverse_window(multiply(&spec.dv[1], &us));
        let s = mode.sigma;
        for (((((i, g1), g2), c), e1), e2) in intensity
            .iter_mut()
            .zip(grad_x1.iter_mut())
            .zip(grad_x2.iter_mut())
            .zip(c.iter())
            .zip(e1.iter())
            .zip(e2.iter())
        {
            *i += s * c.norm_sqr();
            *g1 += 2.0 * s * (e1 * c.conj()).re;
            *g2 += 2.0 * s * (e2 * c.conj()).re;
        }
        mode_convs.push(c);
        mode_dconvs.push([e1, e2]);
    }
    Ok(IntensityBundle {
        intensity,
        grad_x1,
        grad_x2,
        mode_convs,
        mode_dconvs,
    })
}

/// `dI/dx_l = 2 Re sum_n sigma_n (dV_n/dx_l * u) conj(V_n * u)`, recomputing
/// the derivative convolutions from `u` and reusing the cached `V_n * u`.
pub fn intensity_gradient_fields(
    model: &SocsModel,
    u: &PhaseField,
    mode_convs: &[Array2<Complex64>],
) -> Result<(Array2<f64>, Array2<f64>)> {
    check(model, u.values().dim())?;
    if mode_convs.len() != model.n0() {
        return Err(IltError::DimensionMismatch(format!(
            "{} cached convolutions for {} modes",
            mode_convs.len(),
            model.n0()
        )));
    }
    let plan = model.plan();
    let us = plan.forward(u.values());
    let n = model.grid().n;
    let mut out = [Array2::<f64>::zeros((n, n)), Array2::<f64>::zeros((n, n))];
    for ((mode, spec), c) in model.modes().iter().zip(model.spectra()).zip(mode_convs) {
        check(model, c.dim())?;
        for (l, g) in out.iter_mut().enumerate() {
            let e = plan.inverse_window(multiply(&spec.dv[l], &us));
            g.zip_mut_with(&(&e * &c.mapv(|z| z.conj())), |g, p| *g += 2.0 * mode.sigma * p.re);
        }
    }
    let [g1, g2] = out;
    Ok((g1, g2))
}

/// Gateaux derivative `DI(u)[v] = 2 Re sum_n sigma_n (V_n * u) conj(V_n * v)`.
pub fn directional_derivative(model: &SocsModel, u: &PhaseField, v: &Array2<f64>) -> Result<Array2<f64>> {
    check(model, u.values().dim())?;
    check(model, v.dim())?;
    let plan = model.plan();
    let us = plan.forward(u.values());
    let vs = plan.forward(v);
    let n = model.grid().n;
    let mut out = Array2::<f64>::zeros((n, n));
    for (mode, spec) in model.modes().iter().zip(model.spectra()) {
        let cu = plan.inverse_window(multiply(&spec.v, &us));
        let cv = plan.inverse_window(multiply(&spec.v, &vs));
        out.zip_mut_with(&(&cu * &cv.mapv(|z| z.conj())), |o, p| *o += 2.0 * mode.sigma * p.re);
    }
    Ok(out)
}
