//! Energy terms: misfit, Modica-Mortola perimeter, smoothed Heaviside and the
//! threshold-stability barrier.
//!
//! Sums run over pixels with unit cell area. Intensities are divided by the
//! threshold `h` before any term sees them, so the critical level is 1.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::TargetPattern;
use crate::error::{IltError, Result};
use crate::forward::{intensity, IntensityBundle, PhaseField};
use crate::optics::SocsModel;
use crate::stencil::{central_diff, forward_grad};

/// Double-well potential of the Modica-Mortola term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleWell {
    /// `s (1 - s)`
    #[default]
    Product,
    /// `s^2 (1 - s)^2`
    ProductSquared,
}

impl DoubleWell {
    pub fn value(self, s: f64) -> f64 {
        match self {
            Self::Product => s * (1.0 - s),
            Self::ProductSquared => (s * (1.0 - s)).powi(2),
        }
    }

    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Self::Product => 1.0 - 2.0 * s,
            Self::ProductSquared => 2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        }
    }
}

/// Shape of the barrier `f` and of the parabola `phi(s) = -phi_a (s - 1)^2 + phi_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegProfile {
    pub delta0: f64,
    pub alpha: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub d_hard: f64,
    pub d_soft: f64,
}

impl Default for RegProfile {
    fn default() -> Self {
        Self::from_radii(0.05, 0.07)
    }
}

impl RegProfile {
    /// Profile whose barrier argument is `d^2 - d_hard^2`: infinite on
    /// `{d <= d_hard}`, zero on `{d >= d_soft}`.
    pub fn from_radii(d_hard: f64, d_soft: f64) -> Self {
        Self {
            delta0: d_soft * d_soft - d_hard * d_hard,
            alpha: 1.0,
            phi_a: 1.0,
            phi_b: d_hard * d_hard,
            d_hard,
            d_soft,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(IltError::InvalidParameter(format!("regularizer profile: {m}")));
        if !(self.delta0 > 0.0) {
            return bad("delta0 must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(self.phi_a > 0.0 && self.phi_b > 0.0) {
            return bad("phi_a and phi_b must be positive");
        }
        if !(self.phi(0.0) < -self.delta0) {
            return bad("phi(0) must be below -delta0");
        }
        Ok(())
    }

    pub fn phi(&self, s: f64) -> f64 {
        -self.phi_a * (s - 1.0).powi(2) + self.phi_b
    }

    pub fn phi_prime(&self, s: f64) -> f64 {
        -2.0 * self.phi_a * (s - 1.0)
    }

    /// `min phi` on `[1 - delta, 1 + delta]`.
    pub fn c1(&self, delta: f64) -> f64 {
        self.phi(1.0 + delta)
    }

    /// `ln f(s)` for `0 < s < delta0` and its derivative.
    fn log_f(&self, s: f64) -> (f64, f64) {
        let d2 = self.delta0 * self.delta0;
        let q = d2 - s * s;
        let lf = -d2 / q - (2.0 / self.alpha) * s.ln();
        let dlf = -2.0 * d2 * s / (q * q) - (2.0 / self.alpha) / s;
        (lf, dlf)
    }
}

/// `f(s) = exp(-delta0^2 / (delta0^2 - s^2)) s^(-2/alpha)` on `(0, delta0)`,
/// `+inf` for `s <= 0`, `0` for `s >= delta0`.
pub fn reg_barrier_f(s: f64, profile: &RegProfile) -> f64 {
    if s <= 0.0 {
        f64::INFINITY
    } else if s >= profile.delta0 {
        0.0
    } else {
        profile.log_f(s).0.exp()
    }
}

pub fn reg_barrier_f_prime(s: f64, profile: &RegProfile) -> f64 {
    if s <= 0.0 {
        f64::NEG_INFINITY
    } else if s >= profile.delta0 {
        0.0
    } else {
        let (lf, dlf) = profile.log_f(s);
        dlf * lf.exp()
    }
}

/// `f / (1 + gamma f)`, equal to `1/gamma` where `f = +inf`. Falls back to
/// `f` when `gamma = 0`.
pub fn reg_barrier_f_gamma(s: f64, gamma: f64, profile: &RegProfile) -> f64 {
    if gamma == 0.0 {
        return reg_barrier_f(s, profile);
    }
    if s <= 0.0 {
        1.0 / gamma
    } else if s >= profile.delta0 {
        0.0
    } else {
        // 1 / (1/f + gamma) stays finite for any f
        let inv = (-profile.log_f(s).0).exp();
        1.0 / (inv + gamma)
    }
}

pub fn reg_barrier_f_gamma_prime(s: f64, gamma: f64, profile: &RegProfile) -> f64 {
    if gamma == 0.0 {
        return reg_barrier_f_prime(s, profile);
    }
    if s <= 0.0 || s >= profile.delta0 {
        0.0
    } else {
        let (lf, dlf) = profile.log_f(s);
        let inv = (-lf).exp();
        if !inv.is_finite() {
            return 0.0;
        }
        // d/ds 1/(r + gamma) with r = 1/f, r' = -lf' r
        let t = inv + gamma;
        dlf * (inv / t) / t
    }
}

/// Quintic smoothstep on `[-1/2, 1/2]`, evaluated at `(t - h)/eta`.
pub fn smooth_step(t: f64, h: f64, eta: f64) -> f64 {
    smoothstep_parts((t - h) / eta).0
}

/// Value, first and second derivative of the unit profile at `x`.
pub(crate) fn smoothstep_parts(x: f64) -> (f64, f64, f64) {
    let s = x + 0.5;
    if s <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let v = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let d = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        let dd = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
        (v, d, dd)
    }
}

/// Weights, smoothing parameters and profile of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FunctionalConfig {
    /// `a`
    pub weight_perim_diff: f64,
    /// `b`
    pub weight_mm: f64,
    /// `c`
    pub weight_reg: f64,
    /// Exposure threshold `h` in raw intensity units.
    pub threshold: f64,
    pub misfit_exponent: u32,
    pub mm_exponent: f64,
    pub dw: DoubleWell,
    pub eps: f64,
    pub eta: f64,
    pub gamma: f64,
    pub reg_profile: RegProfile,
    /// `None` picks `1e-6 max(P(target), 1)`.
    pub smooth_abs_mu: Option<f64>,
    /// Omit `c_p`; `weight_mm` then stands for `b / c_p`.
    pub drop_cp: bool,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        Self {
            weight_perim_diff: 0.0,
            weight_mm: 2e-4,
            weight_reg: 0.0,
            threshold: 1.0,
            misfit_exponent: 2,
            mm_exponent: 2.0,
            dw: DoubleWell::Product,
            eps: 0.002,
            eta: 0.2,
            gamma: 0.03,
            reg_profile: RegProfile::default(),
            smooth_abs_mu: None,
            drop_cp: true,
        }
    }
}

impl FunctionalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IltError::InvalidParameter(m));
        for (name, w) in [
            ("a", self.weight_perim_diff),
            ("b", self.weight_mm),
            ("c", self.weight_reg),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(format!("weight {name} = {w} must be finite and >= 0"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return bad(format!("threshold {} must be positive", self.threshold));
        }
        if self.misfit_exponent < 1 {
            return bad("misfit exponent must be >= 1".into());
        }
        if !(self.mm_exponent > 1.0) {
            return bad(format!("Modica-Mortola exponent {} must exceed 1", self.mm_exponent));
        }
        if !(self.eps > 0.0 && self.eta > 0.0 && self.gamma >= 0.0) {
            return bad(format!(
                "need eps, eta > 0 and gamma >= 0 (got {}, {}, {})",
                self.eps, self.eta, self.gamma
            ));
        }
        if let Some(mu) = self.smooth_abs_mu {
            if !(mu > 0.0) {
                return bad(format!("smoothing mu {mu} must be positive"));
            }
        }
        self.reg_profile.validate()
    }

    /// Smoothing used by the perimeter-difference term.
    pub fn mu(&self, target: &TargetPattern) -> f64 {
        self.smooth_abs_mu.unwrap_or(1e-6 * target.perimeter.max(1.0))
    }
}

/// `sqrt(x^2 + mu^2) - mu`.
pub fn smooth_abs(x: f64, mu: f64) -> f64 {
    x.hypot(mu) - mu
}

pub fn smooth_abs_prime(x: f64, mu: f64) -> f64 {
    x / x.hypot(mu)
}

/// `sum (sqrt(|p|^2 + mu^2) - mu)` over pixels.
pub fn tv_smoothed(grad: &[Array2<f64>; 2], mu: f64) -> f64 {
    grad[0]
        .iter()
        .zip(&grad[1])
        .map(|(a, b)| (a * a + b * b + mu * mu).sqrt() - mu)
        .sum()
}

/// `Phi` together with its two per-pixel derivative fields.
#[derive(Debug, Clone)]
pub struct SmoothedPattern {
    pub values: Array2<f64>,
    pub grad: [Array2<f64>; 2],
}

impl SmoothedPattern {
    /// `Phi = phi_eta(I/h)` with derivatives by the chain rule through the
    /// bundle's intensity derivatives.
    pub fn from_bundle(bundle: &IntensityBundle, cfg: &FunctionalConfig) -> Self {
        let h = cfg.threshold;
        let eta = cfg.eta;
        let dim = bundle.intensity.dim();
        let mut values = Array2::zeros(dim);
        let mut g1 = Array2::zeros(dim);
        let mut g2 = Array2::zeros(dim);
        for (ix, i) in bundle.intensity.indexed_iter() {
            let (v, d, _) = smoothstep_parts((i / h - 1.0) / eta);
            values[ix] = v;
            g1[ix] = d / eta * bundle.grad_x1[ix] / h;
            g2[ix] = d / eta * bundle.grad_x2[ix] / h;
        }
        Self { values, grad: [g1, g2] }
    }

    /// Any real field, differentiated with the central-difference stencil.
    pub fn from_field(values: Array2<f64>) -> Self {
        let grad = [central_diff(&values, 0), central_diff(&values, 1)];
        Self { values, grad }
    }
}

/// The two pieces of the misfit, unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MisfitTerms {
    /// `sum |Phi - chi_0|^p`
    pub lp: f64,
    /// `smooth_abs(TV(Phi) - TV(chi_0))`
    pub perim_diff: f64,
}

impl MisfitTerms {
    pub fn total(&self, a: f64) -> f64 {
        self.lp + a * self.perim_diff
    }
}

pub fn misfit_terms(pattern: &SmoothedPattern, target: &TargetPattern, cfg: &FunctionalConfig) -> Result<MisfitTerms> {
    target.grid().check_shape(pattern.values.dim())?;
    let p = cfg.misfit_exponent as i32;
    let lp = pattern
        .values
        .iter()
        .zip(target.indicator())
        .map(|(v, t)| (v - f64::from(*t)).abs().powi(p))
        .sum();
    let perim_diff = if cfg.weight_perim_diff > 0.0 {
        let mu = cfg.mu(target);
        let reference = SmoothedPattern::from_field(target.field());
        smooth_abs(tv_smoothed(&pattern.grad, mu) - tv_smoothed(&reference.grad, mu), mu)
    } else {
        0.0
    };
    Ok(MisfitTerms { lp, perim_diff })
}

/// `sum |Phi - chi_0|^p + a smooth_abs(TV(Phi) - TV(chi_0))`.
pub fn misfit(pattern: &SmoothedPattern, target: &TargetPattern, cfg: &FunctionalConfig) -> Result<f64> {
    Ok(misfit_terms(pattern, target, cfg)?.total(cfg.weight_perim_diff))
}

/// `(int_0^1 W(s)^(1/p') ds)^(-1)`, the normalization making the
/// Modica-Mortola energy converge to the perimeter.
pub fn modica_mortola_constant(dw: DoubleWell, p: f64) -> f64 {
    let q = (p - 1.0) / p;
    // s = (1 - cos t)/2 clusters nodes at both wells
    let m = 4096;
    let h = std::f64::consts::PI / m as f64;
    let g = |t: f64| {
        let s = 0.5 * (1.0 - t.cos());
        dw.value(s).max(0.0).powf(q) * 0.5 * t.sin()
    };
    let mut acc = g(0.0) + g(std::f64::consts::PI);
    for k in 1..m {
        acc += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 / (acc * h / 3.0)
}

pub(crate) fn mm_prefactors(cfg: &FunctionalConfig) -> (f64, f64) {
    let p = cfg.mm_exponent;
    let cp = if cfg.drop_cp {
        1.0
    } else {
        modica_mortola_constant(cfg.dw, p)
    };
    let pp = p / (p - 1.0);
    (cp / (pp * cfg.eps), cp * cfg.eps.powf(p - 1.0) / p)
}

/// `c_p/(p' eps) sum W(u) + c_p eps^(p-1)/p sum |grad u|^p` with forward
/// differences and no flux across the window edge.
pub fn modica_mortola(u: &PhaseField, cfg: &FunctionalConfig) -> f64 {
    modica_mortola_field(u.values(), cfg)
}

pub(crate) fn modica_mortola_field(u: &Array2<f64>, cfg: &FunctionalConfig) -> f64 {
    let (kw, kg) = mm_prefactors(cfg);
    let p = cfg.mm_exponent;
    let well: f64 = u.iter().map(|v| cfg.dw.value(*v)).sum();
    let (g1, g2) = forward_grad(u);
    let grad: f64 = g1.iter().zip(&g2).map(|(a, b)| (a * a + b * b).powf(p / 2.0)).sum();
    kw * well + kg * grad
}

/// Barrier argument `|grad I|^2 - phi(I)` in normalized units.
pub fn barrier_argument(bundle: &IntensityBundle, cfg: &FunctionalConfig) -> Array2<f64> {
    let h = cfg.threshold;
    let mut g = Array2::zeros(bundle.intensity.dim());
    for (((o, i), a), b) in g
        .iter_mut()
        .zip(&bundle.intensity)
        .zip(&bundle.grad_x1)
        .zip(&bundle.grad_x2)
    {
        let (i, a, b) = (i / h, a / h, b / h);
        *o = a * a + b * b - cfg.reg_profile.phi(i);
    }
    g
}

/// `sum f_gamma(|grad I|^2 - phi(I))`, with `f` itself when `gamma = 0`
/// (possibly `+inf`).
pub fn regularizer(bundle: &IntensityBundle, cfg: &FunctionalConfig) -> f64 {
    barrier_argument(bundle, cfg)
        .iter()
        .map(|s| reg_barrier_f_gamma(*s, cfg.gamma, &cfg.reg_profile))
        .sum()
}

/// Regularizer plus the reciprocal pixel count of `{|I/h - 1| <= delta}`.
pub fn regularizer_band_variant(bundle: &IntensityBundle, cfg: &FunctionalConfig, delta: f64) -> f64 {
    let h = cfg.threshold;
    let band = bundle
        .intensity
        .iter()
        .filter(|i| (*i / h - 1.0).abs() <= delta)
        .count();
    let extra = if band == 0 { f64::INFINITY } else { 1.0 / band as f64 };
    regularizer(bundle, cfg) + extra
}

/// Total objective and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    /// `lp + a perim_diff`
    pub misfit: f64,
    pub misfit_lp: f64,
    /// Unweighted perimeter-difference term.
    pub perim_diff: f64,
    /// Unweighted Modica-Mortola term.
    pub mm: f64,
    /// Unweighted regularizer; 0 when `c = 0`.
    pub reg: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn total_objective(
    u: &PhaseField,
    model: &SocsModel,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
) -> Result<ObjectiveBreakdown> {
    let bundle = intensity(model, u)?;
    objective_from_bundle(u.values(), &bundle, target, cfg)
}

pub(crate) fn objective_from_bundle(
    u: &Array2<f64>,
    bundle: &IntensityBundle,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
) -> Result<ObjectiveBreakdown> {
    cfg.validate()?;
    let pattern = SmoothedPattern::from_bundle(bundle, cfg);
    let m = misfit_terms(&pattern, target, cfg)?;
    let mm = if cfg.weight_mm > 0.0 {
        modica_mortola_field(u, cfg)
    } else {
        0.0
    };
    let reg = if cfg.weight_reg > 0.0 {
        regularizer(bundle, cfg)
    } else {
        0.0
    };
    let misfit = m.total(cfg.weight_perim_diff);
    let mut total = misfit + cfg.weight_mm * mm;
    if cfg.weight_reg > 0.0 {
        total += cfg.weight_reg * reg;
    }
    Ok(ObjectiveBreakdown {
        total,
        misfit,
        misfit_lp: m.lp,
        perim_diff: m.perim_diff,
        mm,
        reg,
        a: cfg.weight_perim_diff,
        b: cfg.weight_mm,
        c: cfg.weight_reg,
    })
}
