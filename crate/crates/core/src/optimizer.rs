//! Projected steepest descent under a continuation schedule in
//! `(eps, eta, gamma)`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{expose, pixel_error, stability_metric, TargetPattern};
use crate::error::{IltError, Result};
use crate::forward::{intensity, IntensityBundle, PhaseField};
use crate::functionals::{objective_from_bundle, FunctionalConfig, ObjectiveBreakdown};
use crate::gradients::gradient_from_bundle;
use crate::optics::{GridSpec, SocsModel};

/// Armijo sufficient-decrease constant.
pub const ARMIJO_SIGMA: f64 = 1e-4;
/// Tolerance for counting a pixel as binary.
pub const BINARY_TOL: f64 = 1e-3;

/// Stage-wise geometric decrease of `(eps, eta, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub eps0: f64,
    pub eta0: f64,
    pub gamma0: f64,
    pub rate_eps: f64,
    pub rate_eta: f64,
    pub rate_gamma: f64,
    pub iters_per_stage: usize,
    pub total_iters: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::reference()
    }
}

impl Schedule {
    /// Rates (1.2, 1.2, 1.05), 18 stages of 60 iterations.
    pub fn reference() -> Self {
        Self {
            eps0: 0.002,
            eta0: 0.2,
            gamma0: 0.03,
            rate_eps: 1.2,
            rate_eta: 1.2,
            rate_gamma: 1.05,
            iters_per_stage: 60,
            total_iters: 1080,
        }
    }

    /// Rates (1.5, 1.5, 1.1), 13 stages of 60 iterations.
    pub fn fast() -> Self {
        Self {
            rate_eps: 1.5,
            rate_eta: 1.5,
            rate_gamma: 1.1,
            total_iters: 780,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IltError::InvalidParameter(m));
        if !(self.eps0 > 0.0 && self.eta0 > 0.0 && self.gamma0 >= 0.0) {
            return bad("schedule needs eps0, eta0 > 0 and gamma0 >= 0".into());
        }
        if !(self.rate_eps >= 1.0 && self.rate_eta >= 1.0 && self.rate_gamma >= 1.0) {
            return bad("schedule rates must be >= 1".into());
        }
        if self.iters_per_stage == 0 || !self.total_iters.is_multiple_of(self.iters_per_stage) {
            return bad(format!(
                "total_iters {} is not a positive multiple of iters_per_stage {}",
                self.total_iters, self.iters_per_stage
            ));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.total_iters / self.iters_per_stage
    }

    /// `(eps, eta, gamma)` at 0-based stage `s`.
    pub fn at(&self, s: usize) -> (f64, f64, f64) {
        let s = s as i32;
        (
            self.eps0 * self.rate_eps.powi(-s),
            self.eta0 * self.rate_eta.powi(-s),
            self.gamma0 * self.rate_gamma.powi(-s),
        )
    }
}

/// One row of the run trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub stage: usize,
    pub eps: f64,
    pub eta: f64,
    pub gamma: f64,
    pub objective: ObjectiveBreakdown,
    /// Accepted step size; 0 when the line search found no decrease.
    pub step: f64,
    pub pixel_err: usize,
    pub d_min_pct: f64,
    pub nonbinary_px: usize,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    /// State before the first iteration, with stage-0 parameters.
    pub initial: IterRecord,
    pub records: Vec<IterRecord>,
    pub final_field: PhaseField,
    /// `{u > 1/2}`
    pub final_mask: Array2<bool>,
}

/// Knobs of the descent loop that are not part of the objective.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// First trial step; `None` scales it so the first trial moves the
    /// largest pixel by 0.1.
    pub t_init: Option<f64>,
    /// Pixels outside the mask are held at 0.
    pub support_mask: Option<Array2<bool>>,
    /// Halvings before a line search gives up; 0 means 60.
    pub max_backtracks: usize,
    /// Upper bound on `t max|grad F|` for every trial step.
    pub max_move: Option<f64>,
    pub step_rule: StepRule,
}

/// Where each line search starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Every iteration starts from twice the previous accepted step.
    #[default]
    PerIteration,
    /// Every iteration of a stage starts from the same trial step, set at
    /// stage entry to twice the last accepted step.
    PerStage,
}

/// Clamp to `[0, 1]` and zero outside the support.
pub fn project(grid: &GridSpec, u: &Array2<f64>, support_mask: Option<&Array2<bool>>) -> Result<PhaseField> {
    let mut v = u.mapv(|x| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) });
    if let Some(m) = support_mask {
        grid.check_shape(m.dim())?;
        v.zip_mut_with(m, |x, keep| {
            if !keep {
                *x = 0.0;
            }
        });
    }
    PhaseField::new(*grid, v)
}

struct State {
    u: PhaseField,
    bundle: IntensityBundle,
    value: ObjectiveBreakdown,
}

fn evaluate(u: PhaseField, model: &SocsModel, target: &TargetPattern, cfg: &FunctionalConfig) -> Result<State> {
    let bundle = intensity(model, &u)?;
    let value = objective_from_bundle(u.values(), &bundle, target, cfg)?;
    Ok(State { u, bundle, value })
}

fn record(
    state: &State,
    iter: usize,
    stage: usize,
    cfg: &FunctionalConfig,
    step: f64,
    target: &TargetPattern,
) -> IterRecord {
    let exposed = expose(&state.bundle, cfg.threshold, 0.0);
    let (_, d_min_pct) = stability_metric(&state.bundle, cfg.threshold);
    IterRecord {
        iter,
        stage,
        eps: cfg.eps,
        eta: cfg.eta,
        gamma: cfg.gamma,
        objective: state.value,
        step,
        pixel_err: pixel_error(&exposed, target.indicator()),
        d_min_pct,
        nonbinary_px: state.u.nonbinary_count(BINARY_TOL),
    }
}

/// Run the full schedule from `u_init`. `on_stage_end` sees the field after
/// every stage.
pub fn run(
    u_init: &PhaseField,
    model: &SocsModel,
    target: &TargetPattern,
    cfg: &FunctionalConfig,
    schedule: &Schedule,
    opts: &RunOptions,
    mut on_stage_end: impl FnMut(usize, &PhaseField) -> Result<()>,
) -> Result<RunTrace> {
    schedule.validate()?;
    cfg.validate()?;
    let grid = *model.grid();
    grid.check_shape(u_init.values().dim())?;
    target.grid().check_shape(u_init.values().dim())?;
    let support = opts.support_mask.as_ref();
    let max_backtracks = if opts.max_backtracks == 0 {
        60
    } else {
        opts.max_backtracks
    };

    let stage_cfg = |s: usize| {
        let (eps, eta, gamma) = schedule.at(s);
        FunctionalConfig {
            eps,
            eta,
            gamma,
            ..*cfg
        }
    };

    let mut cfg_s = stage_cfg(0);
    let start = project(&grid, u_init.values(), support)?;
    let mut state = evaluate(start, model, target, &cfg_s)?;
    if !state.value.total.is_finite() {
        return Err(IltError::NonFiniteObjective);
    }
    let initial = record(&state, 0, 0, &cfg_s, 0.0, target);
    let mut records = Vec::with_capacity(schedule.total_iters);
    let mut t_next = opts.t_init;
    let mut last_accepted = None;
    let mut iter = 0;

    for stage in 0..schedule.stages() {
        if stage > 0 {
            cfg_s = stage_cfg(stage);
            state.value = objective_from_bundle(state.u.values(), &state.bundle, target, &cfg_s)?;
            if !state.value.total.is_finite() {
                return Err(IltError::NonFiniteObjective);
            }
        }
        for _ in 0..schedule.iters_per_stage {
            iter += 1;
            let grad = gradient_from_bundle(state.u.values(), &state.bundle, model, target, &cfg_s)?;
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            let t0 = *t_next.get_or_insert(if gmax > 0.0 { 0.1 / gmax } else { 1.0 });
            let mut t = t0;
            if let Some(m) = opts.max_move {
                if gmax > 0.0 {
                    t = t.min(m / gmax);
                }
            }
            let mut accepted = None;
            if gmax > 0.0 {
                for _ in 0..max_backtracks {
                    let trial = project(&grid, &(state.u.values() - &(&grad * t)), support)?;
                    let decrease: f64 = grad
                        .iter()
                        .zip(trial.values().iter().zip(state.u.values()))
                        .map(|(g, (a, b))| g * (a - b))
                        .sum();
                    if decrease == 0.0 {
                        // projection pins every moving pixel
                        break;
                    }
                    let cand = evaluate(trial, model, target, &cfg_s)?;
                    if cand.value.total <= state.value.total + ARMIJO_SIGMA * decrease {
                        accepted = Some((cand, t));
                        break;
                    }
                    t *= 0.5;
                }
            }
            let step = match accepted {
                Some((cand, t)) => {
                    state = cand;
                    last_accepted = Some(t);
                    if opts.step_rule == StepRule::PerIteration {
                        t_next = Some(2.0 * t);
                    }
                    t
                }
                None => 0.0,
            };
            records.push(record(&state, iter, stage, &cfg_s, step, target));
        }
        if let Some(t) = last_accepted {
            t_next = Some(2.0 * t);
        }
        on_stage_end(stage, &state.u)?;
    }

    let final_mask = state.u.binarize();
    Ok(RunTrace {
        initial,
        records,
        final_field: state.u,
        final_mask,
    })
}

/// Kind of starting field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuessKind {
    /// Gaussian-blurred target.
    #[default]
    PerturbedTarget,
    /// Low-contrast lattice of blobs unrelated to the target.
    Diffuse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialGuessParams {
    /// Standard deviation of the blur, pixels.
    pub blur_px: f64,
    /// Mean level of the diffuse pattern.
    pub level: f64,
    /// Amplitude of the diffuse pattern around `level`.
    pub contrast: f64,
    /// Lattice period of the diffuse pattern, pixels.
    pub period_px: f64,
    /// Seeds the lattice phase of the diffuse pattern.
    pub seed: u64,
}

impl Default for InitialGuessParams {
    fn default() -> Self {
        Self {
            blur_px: 2.0,
            level: 0.5,
            contrast: 0.4,
            period_px: 16.0,
            seed: 0,
        }
    }
}

pub fn make_initial_guess(
    kind: InitialGuessKind,
    target: &TargetPattern,
    params: &InitialGuessParams,
) -> Result<PhaseField> {
    let grid = *target.grid();
    match kind {
        InitialGuessKind::PerturbedTarget => {
            let blurred = gaussian_blur(&target.field(), params.blur_px);
            PhaseField::clamped(grid, blurred)
        }
        InitialGuessKind::Diffuse => {
            if !(params.period_px > 0.0) {
                return Err(IltError::InvalidParameter("lattice period must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            let ph: [f64; 2] = [
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            ];
            let k = std::f64::consts::TAU / params.period_px;
            let v = Array2::from_shape_fn((grid.n, grid.n), |(i, j)| {
                params.level + params.contrast * (k * i as f64 + ph[0]).cos() * (k * j as f64 + ph[1]).cos()
            });
            PhaseField::clamped(grid, v)
        }
    }
}

/// Separable Gaussian blur with zero extension; `sigma = 0` is the identity.
pub fn gaussian_blur(field: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if !(sigma > 0.0) {
        return field.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut w: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let (rows, cols) = field.dim();
    let pass = |src: &Array2<f64>, axis: usize| {
        Array2::from_shape_fn((rows, cols), |(i, j)| {
            let mut acc = 0.0;
            for (k, wk) in (-r..=r).zip(&w) {
                let (a, b) = if axis == 0 {
                    (i as isize + k, j as isize)
                } else {
                    (i as isize, j as isize + k)
                };
                if a >= 0 && b >= 0 && (a as usize) < rows && (b as usize) < cols {
                    acc += wk * src[[a as usize, b as usize]];
                }
            }
            acc
        })
    };
    pass(&pass(field, 0), 1)
}

/// Chebyshev-ball dilation by `r` pixels.
pub fn dilate(mask: &Array2<bool>, r: usize) -> Array2<bool> {
    let (rows, cols) = mask.dim();
    let r = r as isize;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        for a in (i as isize - r).max(0)..=(i as isize + r).min(rows as isize - 1) {
            for b in (j as isize - r).max(0)..=(j as isize + r).min(cols as isize - 1) {
                if mask[[a as usize, b as usize]] {
                    return true;
                }
            }
        }
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;

    #[test]
    fn schedule_arithmetic() {
        let s = Schedule::reference();
        assert_eq!(s.stages(), 18);
        let (e, n, g) = s.at(17);
        assert!((e - 0.002 / 1.2f64.powi(17)).abs() < 1e-18);
        assert!((e - 9e-5).abs() < 0.05e-5, "{e}");
        assert!((n - 9e-3).abs() < 0.05e-3, "{n}");
        assert!((g - 1.3e-2).abs() < 0.05e-2, "{g}");
        assert_eq!(Schedule::fast().stages(), 13);
        let bad = Schedule {
            total_iters: 100,
            ..Schedule::reference()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn projection() {
        let g = GridSpec::new(4, 1.0).unwrap();
        let mut u = Array2::from_elem((4, 4), 0.3);
        u[[0, 0]] = 1.7;
        u[[0, 1]] = -0.2;
        let p = project(&g, &u, None).unwrap();
        assert_eq!(p.values()[[0, 0]], 1.0);
        assert_eq!(p.values()[[0, 1]], 0.0);
        let mut m = Array2::from_elem((4, 4), false);
        m.slice_mut(s![1..3, 1..3]).fill(true);
        let q = project(&g, &u, Some(&m)).unwrap();
        assert_eq!(q.values()[[0, 2]], 0.0);
        assert_eq!(q.values()[[1, 1]], 0.3);
        let q2 = project(&g, q.values(), Some(&m)).unwrap();
        assert_eq!(q, q2);
    }

    fn target(n: usize) -> TargetPattern {
        let mut m = Array2::from_elem((n, n), false);
        m.slice_mut(s![4..12, 5..10]).fill(true);
        TargetPattern::new(GridSpec::new(n, 12.5).unwrap(), m).unwrap()
    }

    #[test]
    fn initial_guesses() {
        let t = target(16);
        let p = InitialGuessParams {
            blur_px: 0.0,
            ..Default::default()
        };
        let u = make_initial_guess(InitialGuessKind::PerturbedTarget, &t, &p).unwrap();
        assert_eq!(u.values(), &t.field());
        let d = make_initial_guess(InitialGuessKind::Diffuse, &t, &InitialGuessParams::default()).unwrap();
        assert!((d.values().mean().unwrap() - 0.5).abs() < 0.05);
        let b = make_initial_guess(InitialGuessKind::PerturbedTarget, &t, &InitialGuessParams::default()).unwrap();
        assert!(b.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dilation_grows_by_radius() {
        let mut m = Array2::from_elem((7, 7), false);
        m[[3, 3]] = true;
        let d = dilate(&m, 2);
        assert_eq!(d.iter().filter(|v| **v).count(), 25);
    }
}
