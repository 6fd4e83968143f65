//! Exposure, error metrics, threshold stability and topology of printed
//! patterns.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{IltError, Result};
use crate::forward::{intensity_field, IntensityBundle};
use crate::optics::{GridSpec, SocsModel};
use crate::stencil::central_diff;

/// Binary target `chi_0` and its discrete perimeter.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPattern {
    grid: GridSpec,
    indicator: Array2<bool>,
    /// Total variation of the indicator with the central-difference
    /// stencil, in pixel units.
    pub perimeter: f64,
}

impl TargetPattern {
    /// The indicator must vanish on the outer rim of the window.
    pub fn new(grid: GridSpec, indicator: Array2<bool>) -> Result<Self> {
        grid.check_shape(indicator.dim())?;
        let n = grid.n;
        let on_rim = indicator
            .indexed_iter()
            .any(|((i, j), v)| *v && (i == 0 || j == 0 || i == n - 1 || j == n - 1));
        if on_rim {
            return Err(IltError::InvalidParameter("target touches the window border".into()));
        }
        let perimeter = total_variation(&indicator.mapv(f64::from));
        Ok(Self {
            grid,
            indicator,
            perimeter,
        })
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            indicator: Array2::from_elem((grid.n, grid.n), false),
            perimeter: 0.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn indicator(&self) -> &Array2<bool> {
        &self.indicator
    }

    /// Indicator as a 0/1 real field.
    pub fn field(&self) -> Array2<f64> {
        self.indicator.mapv(f64::from)
    }

    /// Pixel count of the foreground.
    pub fn area(&self) -> usize {
        self.indicator.iter().filter(|v| **v).count()
    }

    pub fn perimeter_nm(&self) -> f64 {
        self.perimeter * self.grid.dx_nm
    }
}

fn total_variation(field: &Array2<f64>) -> f64 {
    let d1 = central_diff(field, 0);
    let d2 = central_diff(field, 1);
    d1.iter().zip(&d2).map(|(a, b)| a.hypot(*b)).sum()
}

/// `{I > (1 + hvar/100) h}`.
pub fn expose(bundle: &IntensityBundle, h: f64, hvar_percent: f64) -> Array2<bool> {
    let level = (1.0 + hvar_percent / 100.0) * h;
    bundle.intensity.mapv(|v| v > level)
}

/// Forty percent of the peak intensity printed by the target itself.
pub fn default_threshold(model: &SocsModel, target: &TargetPattern) -> Result<f64> {
    peak_fraction_threshold(model, target, 0.4)
}

/// `fraction` times the peak intensity printed by the target.
pub fn peak_fraction_threshold(model: &SocsModel, target: &TargetPattern, fraction: f64) -> Result<f64> {
    let i0 = intensity_field(model, &target.field())?;
    let max = i0.intensity.iter().fold(0.0f64, |m, v| m.max(*v));
    if !(max > 0.0) {
        return Err(IltError::DegenerateTarget("target prints no intensity".into()));
    }
    Ok(fraction * max)
}

/// `d = sqrt((I/h - 1)^2 + (dI/dx1 / h)^2 + (dI/dx2 / h)^2)` per pixel and its
/// minimum in percent.
pub fn stability_metric(bundle: &IntensityBundle, h: f64) -> (Array2<f64>, f64) {
    stability_metric_shifted(bundle, h, 0.0)
}

/// As [`stability_metric`] with the threshold moved to `(1 + hvar/100) h` in
/// the normalized units of `h`.
pub fn stability_metric_shifted(bundle: &IntensityBundle, h: f64, hvar_percent: f64) -> (Array2<f64>, f64) {
    let t = 1.0 + hvar_percent / 100.0;
    let mut d = Array2::zeros(bundle.intensity.dim());
    for (((o, i), g1), g2) in d
        .iter_mut()
        .zip(&bundle.intensity)
        .zip(&bundle.grad_x1)
        .zip(&bundle.grad_x2)
    {
        let a = i / h - t;
        let b = g1 / h;
        let c = g2 / h;
        *o = (a * a + b * b + c * c).sqrt();
    }
    let min = d.iter().fold(f64::INFINITY, |m: f64, v| m.min(*v));
    (d, 100.0 * min)
}

/// Connected components and enclosed holes of a binary pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologySummary {
    pub components: usize,
    pub holes: usize,
    /// Pixel count per component, in scan order of first pixel.
    pub component_sizes: Vec<usize>,
    pub holes_per_component: Vec<usize>,
}

impl TopologySummary {
    /// Holes enclosed by the component with the most pixels; 0 when empty.
    pub fn holes_in_largest(&self) -> usize {
        let mut best = None;
        for (k, s) in self.component_sizes.iter().enumerate() {
            if best.is_none_or(|b: usize| *s > self.component_sizes[b]) {
                best = Some(k);
            }
        }
        best.map_or(0, |k| self.holes_per_component[k])
    }
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const N8: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

fn label(mask: &Array2<bool>, want: bool, nbrs: &[(isize, isize)]) -> (Array2<usize>, Vec<Vec<(usize, usize)>>) {
    let (r, c) = mask.dim();
    let mut lab = Array2::from_elem((r, c), usize::MAX);
    let mut comps = Vec::new();
    let mut queue = VecDeque::new();
    for i in 0..r {
        for j in 0..c {
            if mask[[i, j]] != want || lab[[i, j]] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut pixels = Vec::new();
            lab[[i, j]] = id;
            queue.push_back((i, j));
            while let Some((a, b)) = queue.pop_front() {
                pixels.push((a, b));
                for (da, db) in nbrs {
                    let (x, y) = (a as isize + da, b as isize + db);
                    if x < 0 || y < 0 || x as usize >= r || y as usize >= c {
                        continue;
                    }
                    let (x, y) = (x as usize, y as usize);
                    if mask[[x, y]] == want && lab[[x, y]] == usize::MAX {
                        lab[[x, y]] = id;
                        queue.push_back((x, y));
                    }
                }
            }
            comps.push(pixels);
        }
    }
    (lab, comps)
}

/// Foreground components use 8-connectivity, background 4-connectivity;
/// background touching the window border is not a hole.
pub fn topology_summary(pattern: &Array2<bool>) -> TopologySummary {
    let (r, c) = pattern.dim();
    let (fg_lab, fg) = label(pattern, true, &N8);
    let (_, bg) = label(pattern, false, &N4);
    let mut holes_per_component = vec![0; fg.len()];
    let mut holes = 0;
    for comp in &bg {
        if comp.iter().any(|&(i, j)| i == 0 || j == 0 || i == r - 1 || j == c - 1) {
            continue;
        }
        holes += 1;
        // scan order puts the topmost-leftmost pixel first; the cell above it
        // is foreground and belongs to the enclosing component
        let (i, j) = comp[0];
        holes_per_component[fg_lab[[i - 1, j]]] += 1;
    }
    TopologySummary {
        components: fg.len(),
        holes,
        component_sizes: fg.iter().map(Vec::len).collect(),
        holes_per_component,
    }
}

/// Printed pattern at one threshold shift with its metrics.
#[derive(Debug, Clone)]
pub struct ExposureReport {
    pub hvar_percent: f64,
    pub exposed: Array2<bool>,
    pub pixel_error: usize,
    pub d_field: Array2<f64>,
    /// Percent of `h`.
    pub d_min: f64,
    pub components: usize,
    pub holes: usize,
    pub holes_in_largest: usize,
}

pub fn pixel_error(a: &Array2<bool>, b: &Array2<bool>) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub fn exposure_report(
    bundle: &IntensityBundle,
    h: f64,
    hvar_percent: f64,
    target: &TargetPattern,
) -> Result<ExposureReport> {
    target.grid().check_shape(bundle.intensity.dim())?;
    let exposed = expose(bundle, h, hvar_percent);
    let (d_field, d_min) = stability_metric_shifted(bundle, h, hvar_percent);
    let topo = topology_summary(&exposed);
    Ok(ExposureReport {
        hvar_percent,
        pixel_error: pixel_error(&exposed, target.indicator()),
        exposed,
        d_field,
        d_min,
        components: topo.components,
        holes: topo.holes,
        holes_in_largest: topo.holes_in_largest(),
    })
}

pub fn threshold_sweep(
    bundle: &IntensityBundle,
    h: f64,
    hvar_list: &[f64],
    target: &TargetPattern,
) -> Result<Vec<ExposureReport>> {
    hvar_list
        .iter()
        .map(|&hv| exposure_report(bundle, h, hv, target))
        .collect()
}
