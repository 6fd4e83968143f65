//! Acceptance criteria 1-8. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};

use ilt::forward::{intensity, intensity_field, PhaseField};
use ilt::functionals::{modica_mortola, reg_barrier_f, reg_barrier_f_gamma, DoubleWell, FunctionalConfig, RegProfile};
use ilt::optics::{build_tcc, decompose_socs, GridSpec, MutualIntensity, OpticalSystem, SocsModel};
use ilt::optimizer::{InitialGuessKind, Schedule};
use ilt::workbench::gradcheck::run_gradcheck;
use ilt::workbench::trace::strip_timestamp;
use ilt::workbench::{cache, custom_rects, Experiment, ExperimentConfig, Rect, TargetSpec};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn reference_model(n: usize, n0: usize) -> SocsModel {
    let grid = GridSpec::new(n, 12.5).unwrap();
    let tcc = build_tcc(&OpticalSystem::reference(), &grid, MutualIntensity::GaussianApprox).unwrap();
    decompose_socs(&tcc, n0).unwrap()
}

/// `I(x) = sum_{k,j} H(k, j) u(x - m_k) u(x - m_j)` with `m_k` the kernel
/// offset of flat index `k`.
fn quadruple_sum(h: &nalgebra::DMatrix<Complex64>, u: &Array2<f64>) -> Array2<f64> {
    let n = u.nrows();
    let c = (n / 2) as isize;
    let sample = |x: (usize, usize), k: usize| {
        let a = x.0 as isize - (k / n) as isize + c;
        let b = x.1 as isize - (k % n) as isize + c;
        if (0..n as isize).contains(&a) && (0..n as isize).contains(&b) {
            u[[a as usize, b as usize]]
        } else {
            0.0
        }
    };
    Array2::from_shape_fn((n, n), |x| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n * n {
            let uk = sample(x, k);
            if uk == 0.0 {
                continue;
            }
            for j in 0..n * n {
                acc += h[(k, j)] * (uk * sample(x, j));
            }
        }
        acc.re
    })
}

fn criterion_1() -> Outcome {
    let n = 8;
    let model = reference_model(n, 10);
    let h = model.reassemble().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = Array2::from_shape_fn((n, n), |_| rng.random_range(0.0..1.0));
        let fft = intensity_field(&model, &u).map_err(|e| e.to_string())?.intensity;
        let direct = quadruple_sum(&h, &u);
        worst = worst.max(max_abs(&(&fft - &direct)) / max_abs(&direct));
    }
    let tcc = build_tcc(
        &OpticalSystem::reference(),
        &GridSpec::new(n, 12.5).unwrap(),
        MutualIntensity::GaussianApprox,
    )
    .map_err(|e| e.to_string())?;
    let full = decompose_socs(&tcc, n * n).map_err(|e| e.to_string())?;
    let dense = tcc.dense().map_err(|e| e.to_string())?;
    let back = full.reassemble().map_err(|e| e.to_string())?;
    let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let reasm = (&back - &dense).iter().fold(0.0f64, |m, v| m.max(v.norm())) / scale;
    check(
        worst <= 1e-10 && reasm <= 1e-8,
        format!("FFT vs direct sum {worst:.2e} (tol 1e-10), full-rank reassembly {reasm:.2e} (tol 1e-8)"),
    )
}

fn criterion_2() -> Outcome {
    let n = 16;
    let model = reference_model(n, 10);
    let q = n / 4;
    let target = custom_rects(model.grid(), &[Rect::new(q, q, n - 2 * q, n / 2 - q / 2)]).map_err(|e| e.to_string())?;
    let checks = run_gradcheck(&model, &target, &FunctionalConfig::default(), 0).map_err(|e| e.to_string())?;
    let detail = checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}", c.name, c.rel_err, c.tol))
        .collect::<Vec<_>>()
        .join(", ");
    check(checks.len() == 7 && checks.iter().all(|c| c.passed()), detail)
}

fn criterion_3() -> Outcome {
    let mut fails = Vec::new();
    let model = reference_model(16, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let u = Array2::from_shape_fn((16, 16), |_| rng.random_range(0.0..1.0));
        if intensity_field(&model, &u).unwrap().intensity.iter().any(|v| *v < 0.0) {
            fails.push("negative intensity");
        }
    }
    let zero = intensity(&model, &PhaseField::zeros(*model.grid())).unwrap();
    if zero.intensity.iter().any(|v| *v != 0.0) {
        fails.push("u = 0 prints");
    }

    let tcc = build_tcc(
        &OpticalSystem::reference(),
        &GridSpec::new(8, 12.5).unwrap(),
        MutualIntensity::GaussianApprox,
    )
    .unwrap();
    let h = tcc.dense().unwrap();
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if (&h - h.adjoint()).iter().any(|v| v.norm() > 1e-14 * scale) {
        fails.push("TCC not Hermitian");
    }
    let eig = h.symmetric_eigenvalues();
    if eig.iter().any(|l| *l < -1e-12 * eig.max()) {
        fails.push("TCC not PSD");
    }

    let p = RegProfile::default();
    let gammas = [0.003, 0.01, 0.03, 0.1, 0.3];
    let sandwich = (0..1000).all(|k| {
        let s = -0.5 * p.delta0 + 2.0 * p.delta0 * k as f64 / 999.0;
        let mut prev = reg_barrier_f(s, &p);
        gammas.iter().all(|&g| {
            let v = reg_barrier_f_gamma(s, g, &p);
            let ok = v <= prev;
            prev = v;
            ok
        })
    });
    if !sandwich {
        fails.push("barrier sandwich");
    }

    let plan = model.plan();
    let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let x = Array2::from_shape_fn((16, 16), |_| c());
    let y = Array2::from_shape_fn((16, 16), |_| c());
    let mut adj = 0.0f64;
    for mode in model.modes() {
        let vx = plan.convolve(&mode.v, &x);
        let wy = plan.convolve(&mode.v.reflect_conj(), &y);
        let lhs: Complex64 = vx.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(&wy).map(|(a, b)| a * b.conj()).sum();
        adj = adj.max((lhs - rhs).norm() / lhs.norm());
    }
    if adj > 1e-12 {
        fails.push("adjoint identity");
    }
    let detail = format!(
        "nonnegativity, zero mask, Hermitian/PSD TCC (min eig {:.1e}), sandwich 1000 x 5, adjoint {adj:.1e}",
        eig.min() / eig.max()
    );
    if fails.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}: {detail}", fails.join(", ")))
    }
}

fn criterion_4() -> Outcome {
    let n = 192;
    let r = 32.0;
    let grid = GridSpec::new(n, 1.0).unwrap();
    let exact = 2.0 * std::f64::consts::PI * r * grid.dx_nm;
    let centre = (n / 2) as f64 - 0.5;
    let errs: Vec<f64> = [8.0, 4.0, 2.0]
        .iter()
        .map(|&eps| {
            // optimal profile for W = s(1 - s) is close to tanh of width eps sqrt(2/3)
            let w = eps * (2.0f64 / 3.0).sqrt();
            let u = Array2::from_shape_fn((n, n), |(i, j)| {
                let rr = (i as f64 - centre).hypot(j as f64 - centre);
                0.5 * (1.0 - ((rr - r) / w).tanh())
            });
            let cfg = FunctionalConfig {
                eps,
                dw: DoubleWell::Product,
                drop_cp: false,
                ..Default::default()
            };
            (modica_mortola(&PhaseField::new(grid, u).unwrap(), &cfg) / exact - 1.0).abs()
        })
        .collect();
    check(
        errs[2] <= 0.05 && errs[0] > errs[1] && errs[1] > errs[2],
        format!(
            "relative error {:.2}% / {:.2}% / {:.2}% at eps 8 / 4 / 2 px",
            100.0 * errs[0],
            100.0 * errs[1],
            100.0 * errs[2]
        ),
    )
}

fn two_sig(x: f64) -> f64 {
    let p = 10f64.powi(x.abs().log10().floor() as i32 - 1);
    (x / p).round() * p
}

fn criterion_5() -> Outcome {
    let (e, n, g) = Schedule::reference().at(17);
    let want = [9e-5, 9e-3, 1.3e-2];
    let ok = [e, n, g]
        .iter()
        .zip(want)
        .all(|(v, w)| (two_sig(*v) - w).abs() <= 1e-12 * w);
    check(ok, format!("stage 17: eps {e:.3e}, eta {n:.3e}, gamma {g:.3e}"))
}

fn desk_config(target: TargetSpec, weight_reg: f64, hvar: Vec<f64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridSpec::new(64, 25.0).unwrap();
    cfg.socs.n0 = 10;
    cfg.run.target = target;
    cfg.run.initial_guess.kind = InitialGuessKind::Diffuse;
    cfg.run.hvar = hvar;
    cfg.functional.weight_reg = weight_reg;
    cfg
}

fn desk_model(cfg: &ExperimentConfig) -> SocsModel {
    cache::load_or_build(
        None,
        &cfg.optics,
        &cfg.grid,
        cfg.socs.n0,
        cfg.socs.mutual,
        cfg.socs.method,
    )
    .unwrap()
}

fn experiment(cfg: ExperimentConfig, model: &SocsModel) -> Experiment {
    let target = ilt::workbench::generate_target(&cfg.run.target, &cfg.grid).unwrap();
    Experiment::with_parts(cfg, model.clone(), target).unwrap()
}

fn criterion_6(model: &SocsModel) -> Outcome {
    let cfg = desk_config(TargetSpec::Target1Like, 0.0, vec![0.0]);
    let exp = experiment(cfg, model);
    let out = exp.optimize(None).map_err(|e| e.to_string())?;
    let rep = &out.report;
    let limit = 0.01 * (exp.config.grid.n * exp.config.grid.n) as f64;
    let mut monotone = true;
    let mut prev = (0, out.trace.initial.objective.total);
    for r in &out.trace.records {
        if r.stage == prev.0 && r.objective.total > prev.1 {
            monotone = false;
        }
        prev = (r.stage, r.objective.total);
    }
    check(
        rep.iterations == 1080 && rep.pixel_err as f64 <= limit && rep.pixel_err < rep.initial_pixel_err && monotone,
        format!(
            "pixel error {} -> {} (limit {limit}), {} iterations, objective non-increasing within stages: {monotone}",
            rep.initial_pixel_err, rep.pixel_err, rep.iterations
        ),
    )
}

fn criterion_7(model: &SocsModel) -> Outcome {
    let hvar: Vec<f64> = (0..9).map(|k| -0.5 + 0.5 * k as f64).collect();
    let weights = [0.0, 5e-4, 2e-3];
    let runs: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = weights
            .iter()
            .map(|&c| {
                let exp = experiment(desk_config(TargetSpec::Target2Like, c, hvar.clone()), model);
                s.spawn(move || exp.optimize(None).map(|o| o.report))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let reports = runs
        .into_iter()
        .collect::<ilt::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let d: Vec<f64> = reports.iter().map(|r| r.d_min_pct).collect();
    let increasing = d[0] < d[1] && d[1] < d[2];

    let holes_at = |r: &ilt::workbench::FinalReport, h: f64| {
        r.sweep
            .iter()
            .find(|row| (row.hvar_pct - h).abs() < 1e-9)
            .map(|row| row.holes_in_largest)
    };
    let strong: Vec<_> = [-0.5, 0.0, 2.5]
        .iter()
        .map(|&h| holes_at(&reports[2], h).unwrap())
        .collect();
    let stable = strong.iter().all(|&k| k == strong[0]);
    let base: Vec<_> = reports[0].sweep.iter().map(|r| (r.components, r.holes)).collect();
    let changes = base.iter().any(|t| *t != base[0]);
    let detail = format!(
        "d_min {:.2}% / {:.2}% / {:.2}% (increasing: {increasing}); pixel error {} / {} / {}; \
         c=2e-3 holes in largest at -0.5/0/2.5: {strong:?} (stable: {stable}); \
         c=0 topology changes over [-0.5, 3.5]: {changes} (components, holes) {base:?}",
        d[0], d[1], d[2], reports[0].pixel_err, reports[1].pixel_err, reports[2].pixel_err
    );
    check(increasing && stable, detail)
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::default();
    cfg.grid = GridSpec::new(32, 25.0).unwrap();
    cfg.socs.n0 = 8;
    cfg.run.target = TargetSpec::CustomRects {
        rects: vec![Rect::new(8, 8, 16, 6), Rect::new(8, 18, 6, 6)],
    };
    cfg.run.initial_guess.kind = InitialGuessKind::Diffuse;
    cfg.functional.weight_reg = 2e-3;
    cfg.schedule.total_iters = 240;
    let path = dir.path().join("config.json");
    std::fs::write(&path, cfg.to_json()).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<String, String> {
        let out = dir.path().join(name);
        let st = Command::new(env!("CARGO_BIN_EXE_ilt"))
            .args(["optimize", "--config"])
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !st.status.success() {
            return Err(String::from_utf8_lossy(&st.stderr).into_owned());
        }
        std::fs::read_to_string(out.join("trace.csv")).map_err(|e| e.to_string())
    };
    let (a, b) = (run("a")?, run("b")?);
    let rows = strip_timestamp(&a).lines().count();
    check(
        strip_timestamp(&a) == strip_timestamp(&b) && rows == 242,
        format!(
            "two invocations, {rows} trace lines after the timestamp, identical: {}",
            strip_timestamp(&a) == strip_timestamp(&b)
        ),
    )
}

fn report(k: usize, f: impl FnOnce() -> Outcome) -> bool {
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match res {
        Ok(d) => {
            println!("criterion {k}: PASS  {d}");
            true
        }
        Err(d) => {
            println!("criterion {k}: FAIL  {d}");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= report(1, criterion_1);
    ok &= report(2, criterion_2);
    ok &= report(3, criterion_3);
    ok &= report(4, criterion_4);
    ok &= report(5, criterion_5);
    let desk = desk_model(&desk_config(TargetSpec::Target1Like, 0.0, vec![]));
    ok &= report(6, || criterion_6(&desk));
    ok &= report(7, || criterion_7(&desk));
    ok &= report(8, criterion_8);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
