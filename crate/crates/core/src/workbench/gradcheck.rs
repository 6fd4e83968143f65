//! Analytic gradients against central differences on a small random field.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::TargetPattern;
use crate::error::Result;
use crate::forward::{intensity_field, PhaseField};
use crate::functionals::{misfit, modica_mortola, regularizer, total_objective, FunctionalConfig, SmoothedPattern};
use crate::gradients::{
    fd_oracle, grad_gradient_composite, grad_modica_mortola, grad_pointwise_of_intensity, grad_regularizer,
    grad_smoothed_pattern_composite, grad_total, relative_l2,
};
use crate::optics::SocsModel;

pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub rel_err: f64,
    pub tol: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.rel_err <= self.tol
    }
}

/// Uniform random field on `(0.1, 0.9)`.
pub fn random_field(n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, n), |_| rng.random_range(0.1..0.9))
}

/// Threshold putting the pixel with the smallest relative slope 6% below
/// its intensity, so the regularizer barrier is active there.
pub fn banded_threshold(model: &SocsModel, u: &Array2<f64>) -> Result<f64> {
    let b = intensity_field(model, u)?;
    let r = |k: (usize, usize)| b.grad_x1[k].hypot(b.grad_x2[k]) / b.intensity[k];
    let n = b.grid_n();
    let ix = ndarray::indices((n, n))
        .into_iter()
        .min_by(|&p, &q| r(p).total_cmp(&r(q)))
        .expect("nonempty grid");
    Ok(b.intensity[ix] / 1.06)
}

/// Runs every check. `base` supplies `b`, the smoothing parameters and the
/// regularizer profile; weights and the threshold are set per check.
pub fn run_gradcheck(
    model: &SocsModel,
    target: &TargetPattern,
    base: &FunctionalConfig,
    seed: u64,
) -> Result<Vec<GradCheck>> {
    let n = model.grid().n;
    let grid = *model.grid();
    let u = random_field(n, seed);
    let bundle = intensity_field(model, &u)?;
    let mut out = Vec::new();
    let mut push = |name: &str, an: &Array2<f64>, fd: &Array2<f64>, tol: f64| {
        out.push(GradCheck {
            name: name.into(),
            rel_err: relative_l2(an, fd),
            tol,
        })
    };

    let ones = Array2::ones((n, n));
    let an = grad_pointwise_of_intensity(&bundle, model, &ones)?;
    let fd = fd_oracle(
        |x| intensity_field(model, x).map_or(f64::NAN, |b| b.intensity.sum()),
        &u,
        FD_STEP,
    );
    push("pointwise_composite", &an, &fd, 1e-5);

    let zeros = Array2::zeros((n, n));
    let an = grad_gradient_composite(&bundle, model, &ones, &zeros)?;
    let fd = fd_oracle(
        |x| intensity_field(model, x).map_or(f64::NAN, |b| (&b.grad_x1 * &b.grad_x1 + &b.grad_x2 * &b.grad_x2).sum()),
        &u,
        FD_STEP,
    );
    push("gradient_composite", &an, &fd, 1e-5);

    let mut sorted: Vec<f64> = bundle.intensity.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    for (name, a) in [("misfit_a0", 0.0), ("misfit_a0.5", 0.5)] {
        let cfg = FunctionalConfig {
            threshold: median,
            weight_perim_diff: a,
            ..*base
        };
        let an = grad_smoothed_pattern_composite(&bundle, model, &cfg, target)?;
        let fd = fd_oracle(
            |x| {
                intensity_field(model, x)
                    .and_then(|b| misfit(&SmoothedPattern::from_bundle(&b, &cfg), target, &cfg))
                    .unwrap_or(f64::NAN)
            },
            &u,
            FD_STEP,
        );
        push(name, &an, &fd, 1e-5);
    }

    let an = grad_modica_mortola(&PhaseField::new(grid, u.clone())?, base);
    let fd = fd_oracle(
        |x| PhaseField::clamped(grid, x.clone()).map_or(f64::NAN, |p| modica_mortola(&p, base)),
        &u,
        FD_STEP,
    );
    push("modica_mortola", &an, &fd, 1e-5);

    let reg_cfg = FunctionalConfig {
        threshold: banded_threshold(model, &u)?,
        ..*base
    };
    let an = grad_regularizer(&bundle, model, &reg_cfg)?;
    let fd = fd_oracle(
        |x| intensity_field(model, x).map_or(f64::NAN, |b| regularizer(&b, &reg_cfg)),
        &u,
        FD_STEP,
    );
    push("regularizer", &an, &fd, 1e-4);

    let tot_cfg = FunctionalConfig {
        weight_perim_diff: 0.5,
        weight_reg: 1.0,
        ..reg_cfg
    };
    let an = grad_total(&PhaseField::new(grid, u.clone())?, model, target, &tot_cfg)?;
    let fd = fd_oracle(
        |x| {
            PhaseField::clamped(grid, x.clone())
                .and_then(|p| total_objective(&p, model, target, &tot_cfg))
                .map_or(f64::NAN, |o| o.total)
        },
        &u,
        FD_STEP,
    );
    push("total", &an, &fd, 1e-4);
    Ok(out)
}
