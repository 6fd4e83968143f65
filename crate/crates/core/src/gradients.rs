//! Analytic gradients of the objective terms and a finite-difference oracle.
//!
//! Every intensity-dependent term reduces to a first variation of the form
//! `sum_i b(i) dI(i) + sum_l a_l(i) dI_l(i)`; [`assemble_adjoint`] turns the
//! coefficient fields into a gradient with the kernels `W_n` and `Z_n`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::analysis::TargetPattern;
use crate::error::{IltError, Result};
use crate::fft::accumulate_product;
use crate::forward::{intensity, IntensityBundle, PhaseField};
use crate::functionals::{
    barrier_argument, mm_prefactors, objective_from_bundle, reg_barrier_f_gamma_prime, smooth_abs_prime,
    smoothstep_parts, tv_smoothed, FunctionalConfig, ObjectiveBreakdown, SmoothedPattern,
};
use crate::optics::SocsModel;
use crate::stencil::{forward_grad, forward_grad_adjoint};

/// `dF/du` per pixel.
pub type GradientField = Array2<f64>;

/// Coefficients of a first variation in `I` and its two derivatives.
#[derive(Debug, Clone)]
pub struct AdjointCoefficients {
    pub b: Array2<f64>,
    pub a: Option<[Array2<f64>; 2]>,
}

impl AdjointCoefficients {
    fn add(&mut self, other: &Self, scale: f64) {
        self.b.scaled_add(scale, &other.b);
        if let Some(oa) = &other.a {
            let a = self.a.get_or_insert_with(|| {
                let z = Array2::zeros(oa[0].dim());
                [z.clone(), z]
            });
            a[0].scaled_add(scale, &oa[0]);
            a[1].scaled_add(scale, &oa[1]);
        }
    }
}

/// `2 Re sum_n sigma_n [W_n * (b c_n + sum_l a_l e_nl) + sum_l Z_nl * conj(a_l c_n)]`
/// with `c_n = V_n * u` and `e_nl = dV_n/dx_l * u` taken from the bundle.
pub fn assemble_adjoint(
    bundle: &IntensityBundle,
    model: &SocsModel,
    coef: &AdjointCoefficients,
) -> Result<GradientField> {
    let grid = model.grid();
    grid.check_shape(bundle.intensity.dim())?;
    grid.check_shape(coef.b.dim())?;
    if bundle.mode_convs.len() != model.n0() || bundle.mode_dconvs.len() != model.n0() {
        return Err(IltError::DimensionMismatch(format!(
            "bundle carries {} modes, model has {}",
            bundle.mode_convs.len(),
            model.n0()
        )));
    }
    let plan = model.plan();
    let mut acc = vec![Complex64::new(0.0, 0.0); plan.pad() * plan.pad()];
    for (((mode, spec), c), e) in model
        .modes()
        .iter()
        .zip(model.spectra())
        .zip(&bundle.mode_convs)
        .zip(&bundle.mode_dconvs)
    {
        let src = match &coef.a {
            None => Array2::from_shape_fn(c.dim(), |ix| c[ix] * coef.b[ix]),
            Some(a) => {
                grid.check_shape(a[0].dim())?;
                grid.check_shape(a[1].dim())?;
                for (dz, al) in spec.dz.iter().zip(a) {
                    let t = Array2::from_shape_fn(c.dim(), |ix| (c[ix] * al[ix]).conj());
                    accumulate_product(&mut acc, dz, &plan.forward(&t), mode.sigma);
                }
                Array2::from_shape_fn(c.dim(), |ix| {
                    c[ix] * coef.b[ix] + e[0][ix] * a[0][ix] + e[1][ix] * a[1][ix]
                })
            }
        };
        accumulate_product(&mut acc, &spec.w, &plan.forward(&src), mode.sigma);
    }
    Ok(plan.inverse_window(acc).mapv(|z| 2.0 * z.re))
}

/// Gradient of `sum_i f(I(u)(i))` given `f'(I)` per pixel.
pub fn grad_pointwise_of_intensity(
    bundle: &IntensityBundle,
    model: &SocsModel,
    fprime: &Array2<f64>,
) -> Result<GradientField> {
    assemble_adjoint(
        bundle,
        model,
        &AdjointCoefficients {
            b: fprime.clone(),
            a: None,
        },
    )
}

/// Gradient of `sum_i g(|grad I|^2, I)` given the partials `g1 = dg/dA`,
/// `g2 = dg/dB` per pixel.
pub fn grad_gradient_composite(
    bundle: &IntensityBundle,
    model: &SocsModel,
    g1: &Array2<f64>,
    g2: &Array2<f64>,
) -> Result<GradientField> {
    assemble_adjoint(bundle, model, &gradient_composite_coefficients(bundle, g1, g2))
}

fn gradient_composite_coefficients(
    bundle: &IntensityBundle,
    g1: &Array2<f64>,
    g2: &Array2<f64>,
) -> AdjointCoefficients {
    AdjointCoefficients {
        b: g2.clone(),
        a: Some([
            Array2::from_shape_fn(g1.dim(), |ix| 2.0 * g1[ix] * bundle.grad_x1[ix]),
            Array2::from_shape_fn(g1.dim(), |ix| 2.0 * g1[ix] * bundle.grad_x2[ix]),
        ]),
    }
}

/// Partials of `f_gamma(|grad I|^2/h^2 - phi(I/h))` in raw units.
pub fn regularizer_partials(bundle: &IntensityBundle, cfg: &FunctionalConfig) -> (Array2<f64>, Array2<f64>) {
    let h = cfg.threshold;
    let s = barrier_argument(bundle, cfg);
    let fp = s.mapv(|v| reg_barrier_f_gamma_prime(v, cfg.gamma, &cfg.reg_profile));
    let g1 = fp.mapv(|v| v / (h * h));
    let g2 = Array2::from_shape_fn(fp.dim(), |ix| {
        -fp[ix] * cfg.reg_profile.phi_prime(bundle.intensity[ix] / h) / h
    });
    (g1, g2)
}

pub fn grad_regularizer(bundle: &IntensityBundle, model: &SocsModel, cfg: &FunctionalConfig) -> Result<GradientField> {
    let (g1, g2) = regularizer_partials(bundle, cfg);
    grad_gradient_composite(bundle, model, &g1, &g2)
}

fn misfit_coefficients(
    bundle: &IntensityBundle,
    cfg: &FunctionalConfig,
    target: &TargetPattern,
) -> Result<AdjointCoefficients> {
    target.grid().check_shape(bundle.intensity.dim())?;
    let h = cfg.threshold;
    let eta = cfg.eta;
    let p = cfg.misfit_exponent as i32;
    let chi = target.field();
    let dim = bundle.intensity.dim();
    let mut b = Array2::zeros(dim);
    let mut dphi = Array2::zeros(dim);
    let mut ddphi = Array2::zeros(dim);
    for (ix, i) in bundle.intensity.indexed_iter() {
        let (v, d, dd) = smoothstep_parts((i / h - 1.0) / eta);
        dphi[ix] = d / eta;
        ddphi[ix] = dd / (eta * eta);
        let r = v - chi[ix];
        let dr = if r == 0.0 {
            0.0
        } else {
            p as f64 * r.abs().powi(p - 1) * r.signum()
        };
        b[ix] = dr * dphi[ix] / h;
    }
    let mut coef = AdjointCoefficients { b, a: None };
    if cfg.weight_perim_diff > 0.0 {
        let mu = cfg.mu(target);
        let pattern = SmoothedPattern::from_bundle(bundle, cfg);
        let reference = SmoothedPattern::from_field(chi);
        let diff = tv_smoothed(&pattern.grad, mu) - tv_smoothed(&reference.grad, mu);
        let k = cfg.weight_perim_diff * smooth_abs_prime(diff, mu);
        let mut a = [Array2::zeros(dim), Array2::zeros(dim)];
        for ix in ndarray::indices(dim) {
            let (p1, p2) = (pattern.grad[0][ix], pattern.grad[1][ix]);
            let norm = (p1 * p1 + p2 * p2 + mu * mu).sqrt();
            let (n1, n2) = (p1 / norm, p2 / norm);
            let (i1, i2) = (bundle.grad_x1[ix] / h, bundle.grad_x2[ix] / h);
            coef.b[ix] += k * (n1 * i1 + n2 * i2) * ddphi[ix] / h;
            a[0][ix] = k * n1 * dphi[ix] / h;
            a[1][ix] = k * n2 * dphi[ix] / h;
        }
        coef.a = Some(a);
    }
    Ok(coef)
}

/// Gradient of the misfit `sum |Phi - chi_0|^p + a smooth_abs(TV(Phi) - TV(chi_0))`.
pub fn grad_smoothed_pattern_composite(
    bundle: &IntensityBundle,
    model: &SocsModel,
    cfg: &FunctionalConfig,
    target: &TargetPattern,
) -> Result<GradientField> {
    assemble_adjoint(bundle, model, &misfit_coefficients(bundle, cfg, target)?)
}

pub fn grad_modica_mortola(u: &PhaseField, cfg: &FunctionalConfig) -> GradientField {
    grad_modica_mortola_field(u.values(), cfg)
}

fn grad_modica_mortola_field(u: &Array2<f64>, cfg: &FunctionalConfig) -> GradientField {
    let (kw, kg) = mm_prefactors(cfg);
    let p = cfg.mm_exponent;
    let (mut g1, mut g2) = forward_grad(u);
    if p != 2.0 {
        for (a, b) in g1.iter_mut().zip(g2.iter_mut()) {
            let m = (*a * *a + *b * *b).sqrt();
            let w = if m == 0.0 { 0.0 } else { m.powf(p - 2.0) };
            *a *= w;
            *b *= w;
        }
    }
    let mut out = forward_grad_adjoint(&g1, &g2) * (kg * p);
    out.zip_mut_with(u, |o, v| *o += kw * cfg.dw.derivative(*v));
    out
}

/// Objective and gradient from one intensity evaluation.
pub fn objective_and_gradient(
    u: &PhaseField,
    model: &SocsModel,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
) -> Result<(ObjectiveBreakdown, GradientField)> {
    let bundle = intensity(model, u)?;
    let value = objective_from_bundle(u.values(), &bundle, target, cfg)?;
    if !value.total.is_finite() {
        return Err(IltError::NonFiniteObjective);
    }
    let grad = gradient_from_bundle(u.values(), &bundle, model, target, cfg)?;
    Ok((value, grad))
}

pub(crate) fn gradient_from_bundle(
    u: &Array2<f64>,
    bundle: &IntensityBundle,
    model: &SocsModel,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
) -> Result<GradientField> {
    let mut coef = misfit_coefficients(bundle, cfg, target)?;
    if cfg.weight_reg > 0.0 {
        let (g1, g2) = regularizer_partials(bundle, cfg);
        coef.add(&gradient_composite_coefficients(bundle, &g1, &g2), cfg.weight_reg);
    }
    let mut grad = assemble_adjoint(bundle, model, &coef)?;
    if cfg.weight_mm > 0.0 {
        grad.scaled_add(cfg.weight_mm, &grad_modica_mortola_field(u, cfg));
    }
    Ok(grad)
}

/// `misfit + b mm + c reg` gradient.
pub fn grad_total(
    u: &PhaseField,
    model: &SocsModel,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
) -> Result<GradientField> {
    Ok(objective_and_gradient(u, model, target, cfg)?.1)
}

/// Central differences `(F(u + t e_i) - F(u - t e_i)) / 2t` for every pixel.
pub fn fd_oracle<F>(objective: F, u: &Array2<f64>, step: f64) -> GradientField
where
    F: Fn(&Array2<f64>) -> f64,
{
    let mut work = u.clone();
    Array2::from_shape_fn(u.dim(), |ix| {
        let x = work[ix];
        work[ix] = x + step;
        let fp = objective(&work);
        work[ix] = x - step;
        let fm = objective(&work);
        work[ix] = x;
        (fp - fm) / (2.0 * step)
    })
}

/// `||a - b|| / ||b||` in the Euclidean norm.
pub fn relative_l2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::intensity_field;
    use crate::functionals::{misfit, modica_mortola, regularizer};
    use crate::optics::{build_tcc, decompose_socs, GridSpec, MutualIntensity, OpticalSystem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, n0: usize) -> SocsModel {
        let grid = GridSpec::new(n, 12.5).unwrap();
        let tcc = build_tcc(&OpticalSystem::reference(), &grid, MutualIntensity::GaussianApprox).unwrap();
        decompose_socs(&tcc, n0).unwrap()
    }

    fn random_u(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..0.9))
    }

    #[test]
    fn pointwise_identity_gradient_matches_differences() {
        let m = model(8, 6);
        let u = random_u(8, 1);
        let b = intensity_field(&m, &u).unwrap();
        let g = grad_pointwise_of_intensity(&b, &m, &Array2::ones((8, 8))).unwrap();
        let fd = fd_oracle(|x| intensity_field(&m, x).unwrap().intensity.sum(), &u, 1e-6);
        assert!(relative_l2(&g, &fd) < 1e-6);
    }

    #[test]
    fn pointwise_gradient_vanishes_at_zero() {
        let m = model(8, 4);
        let b = intensity_field(&m, &Array2::zeros((8, 8))).unwrap();
        let g = grad_pointwise_of_intensity(&b, &m, &Array2::ones((8, 8))).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn composite_with_only_intensity_dependence_reduces_to_pointwise() {
        let m = model(8, 4);
        let b = intensity_field(&m, &random_u(8, 2)).unwrap();
        let ones = Array2::ones((8, 8));
        let g1 = grad_gradient_composite(&b, &m, &Array2::zeros((8, 8)), &ones).unwrap();
        let g2 = grad_pointwise_of_intensity(&b, &m, &ones).unwrap();
        assert!(relative_l2(&g1, &g2) < 1e-14);
    }

    #[test]
    fn squared_gradient_norm_matches_differences() {
        let m = model(8, 6);
        let u = random_u(8, 3);
        let b = intensity_field(&m, &u).unwrap();
        let g = grad_gradient_composite(&b, &m, &Array2::ones((8, 8)), &Array2::zeros((8, 8))).unwrap();
        let fd = fd_oracle(
            |x| {
                let b = intensity_field(&m, x).unwrap();
                (&b.grad_x1 * &b.grad_x1 + &b.grad_x2 * &b.grad_x2).sum()
            },
            &u,
            1e-6,
        );
        assert!(relative_l2(&g, &fd) < 1e-5, "{}", relative_l2(&g, &fd));
    }

    #[test]
    fn modica_mortola_gradient() {
        let n = 8;
        let g = GridSpec::new(n, 1.0).unwrap();
        let u = random_u(n, 4);
        let cfg = FunctionalConfig {
            eps: 0.7,
            ..Default::default()
        };
        let an = grad_modica_mortola(&PhaseField::new(g, u.clone()).unwrap(), &cfg);
        let fd = fd_oracle(
            |x| modica_mortola(&PhaseField::clamped(g, x.clone()).unwrap(), &cfg),
            &u,
            1e-6,
        );
        assert!(relative_l2(&an, &fd) < 1e-6);
        let half = grad_modica_mortola(&PhaseField::constant(g, 0.5).unwrap(), &cfg);
        assert!(half.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn misfit_gradient_with_perimeter_term() {
        let n = 8;
        let m = model(n, 6);
        let u = random_u(n, 5);
        let mut ind = Array2::from_elem((n, n), false);
        for i in 2..6 {
            for j in 3..6 {
                ind[[i, j]] = true;
            }
        }
        let t = TargetPattern::new(*m.grid(), ind).unwrap();
        let b = intensity_field(&m, &u).unwrap();
        let mut sorted: Vec<f64> = b.intensity.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let cfg = FunctionalConfig {
            threshold: sorted[sorted.len() / 2],
            weight_perim_diff: 0.5,
            eta: 0.5,
            ..Default::default()
        };
        let an = grad_smoothed_pattern_composite(&b, &m, &cfg, &t).unwrap();
        let fd = fd_oracle(
            |x| {
                let b = intensity_field(&m, x).unwrap();
                misfit(&SmoothedPattern::from_bundle(&b, &cfg), &t, &cfg).unwrap()
            },
            &u,
            1e-6,
        );
        assert!(relative_l2(&an, &fd) < 1e-4, "{}", relative_l2(&an, &fd));
    }

    #[test]
    fn regularizer_gradient_matches_differences() {
        let n = 16;
        let m = model(n, 8);
        let u = random_u(n, 6);
        let b = intensity_field(&m, &u).unwrap();
        // the flattest pixel, moved to 6% above threshold, sits in the band
        let ix = ndarray::indices((n, n))
            .into_iter()
            .min_by(|&p, &q| {
                let r = |k: (usize, usize)| b.grad_x1[k].hypot(b.grad_x2[k]) / b.intensity[k];
                r(p).total_cmp(&r(q))
            })
            .unwrap();
        let cfg = FunctionalConfig {
            threshold: b.intensity[ix] / 1.06,
            ..Default::default()
        };
        assert!(regularizer(&b, &cfg) > 0.0);
        let an = grad_regularizer(&b, &m, &cfg).unwrap();
        let fd = fd_oracle(|x| regularizer(&intensity_field(&m, x).unwrap(), &cfg), &u, 1e-6);
        assert!(relative_l2(&an, &fd) < 1e-4, "{}", relative_l2(&an, &fd));
    }

    #[test]
    fn fd_oracle_trivial_objectives() {
        let u = random_u(4, 7);
        assert!(fd_oracle(|_| 3.0, &u, 1e-6).iter().all(|v| *v == 0.0));
        assert!(fd_oracle(|x| x.sum(), &u, 1e-6).iter().all(|v| (v - 1.0).abs() < 1e-8));
    }
}
