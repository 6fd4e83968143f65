use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ilt::analysis::exposure_report;
use ilt::forward::intensity;
use ilt::optics::GridSpec;
use ilt::workbench::gradcheck::run_gradcheck;
use ilt::workbench::{
    cache, custom_rects, generate_target, output_dir, raster, sweep_csv, write_atomic, Experiment, ExperimentConfig,
    Rect, SweepRow, TargetSpec,
};
use ilt::{IltError, Result};

#[derive(Parser)]
#[command(name = "ilt", version, about = "Phase-field inverse lithography workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `run.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Target1Like,
    Target2Like,
}

#[derive(Subcommand)]
enum Command {
    /// Build the SOCS kernels and store them in the cache.
    Tcc(Common),
    /// Run the continuation schedule and write mask, trace and report.
    Optimize(Common),
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Grid size of the check.
        #[arg(long, default_value_t = 16)]
        n: usize,
    },
    /// Expose a stored mask and report its metrics.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Mask as a field file, PGM or PBM.
        #[arg(long)]
        mask: PathBuf,
    },
    /// Metrics of a stored mask over a list of threshold shifts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mask: PathBuf,
        /// Threshold shifts in percent, overriding `run.hvar`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hvar: Option<Vec<f64>>,
    },
    /// Write the configured target, or a built-in one, as PBM.
    GenTarget {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, c: &Common) -> Result<PathBuf> {
    let dir = output_dir(cfg, c.out.as_deref());
    std::fs::create_dir_all(&dir).map_err(|e| IltError::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn tcc(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    cfg.validate()?;
    let root = cache::resolve_root(cfg.socs.cache_dir.as_deref()).unwrap_or(out_dir(&cfg, c)?);
    let model = cache::load_or_build(
        Some(&root),
        &cfg.optics,
        &cfg.grid,
        cfg.socs.n0,
        cfg.socs.mutual,
        cfg.socs.method,
    )?;
    let dir = cache::entry_dir(&root, &cfg.optics, &cfg.grid, cfg.socs.n0, cfg.socs.mutual);
    println!("kernels in {}", dir.display());
    for (k, s) in model.sigmas().iter().enumerate() {
        println!("sigma[{k}] = {s:.10e}");
    }
    Ok(())
}

fn optimize(c: &Common) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_dir(&cfg, c)?;
    let exp = Experiment::prepare(cfg)?;
    let res = exp.optimize(Some(&out))?;
    let r = &res.report;
    println!(
        "{} iterations, pixel error {} -> {}, d_min {:.3}%, F = {:.6e}",
        r.iterations, r.initial_pixel_err, r.pixel_err, r.d_min_pct, r.objective.total
    );
    println!("outputs in {}", out.display());
    Ok(())
}

fn gradcheck(c: &Common, n: usize) -> Result<bool> {
    let mut cfg = load_config(c)?;
    cfg.grid = GridSpec::new(n, cfg.grid.dx_nm)?;
    cfg.socs.n0 = cfg.socs.n0.min(n * n);
    cfg.validate()?;
    let q = n / 4;
    let target = custom_rects(&cfg.grid, &[Rect::new(q, q, n - 2 * q, n / 2 - q / 2)])?;
    let model = cache::load_or_build(
        None,
        &cfg.optics,
        &cfg.grid,
        cfg.socs.n0,
        cfg.socs.mutual,
        cfg.socs.method,
    )?;
    let checks = run_gradcheck(&model, &target, &cfg.functional, cfg.run.seed)?;
    let mut ok = true;
    for ch in &checks {
        let verdict = if ch.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<22} rel_err {:.3e}  tol {:.0e}  {verdict}",
            ch.name, ch.rel_err, ch.tol
        );
        ok &= ch.passed();
    }
    Ok(ok)
}

fn analyze(c: &Common, mask: &Path) -> Result<()> {
    let cfg = load_config(c)?;
    let out = out_dir(&cfg, c)?;
    let exp = Experiment::prepare(cfg)?;
    let u = exp.load_mask(mask)?;
    let bundle = intensity(&exp.model, &u)?;
    let rep = exposure_report(&bundle, exp.functional.threshold, 0.0, &exp.target)?;
    exp.write_result(&out, &u, &bundle, std::slice::from_ref(&rep))?;
    let row = SweepRow::from(&rep);
    let json = serde_json::json!({
        "threshold": exp.functional.threshold,
        "nonbinary_px": u.nonbinary_count(ilt::optimizer::BINARY_TOL),
        "exposure": row,
    });
    let text = serde_json::to_string_pretty(&json).expect("report serializes");
    write_atomic(out.join("analysis.json"), text.as_bytes())?;
    println!("{text}");
    Ok(())
}

fn sweep(c: &Common, mask: &Path, hvar: Option<Vec<f64>>) -> Result<()> {
    let mut cfg = load_config(c)?;
    if let Some(h) = hvar {
        cfg.run.hvar = h;
    }
    let out = out_dir(&cfg, c)?;
    let exp = Experiment::prepare(cfg)?;
    let u = exp.load_mask(mask)?;
    let bundle = intensity(&exp.model, &u)?;
    let rows: Vec<SweepRow> = exp.sweep(&bundle)?.iter().map(SweepRow::from).collect();
    let csv = sweep_csv(&rows);
    write_atomic(out.join("sweep.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

fn gen_target(c: &Common, kind: Option<Kind>) -> Result<()> {
    let cfg = load_config(c)?;
    cfg.validate()?;
    let spec = match kind {
        Some(Kind::Target1Like) => TargetSpec::Target1Like,
        Some(Kind::Target2Like) => TargetSpec::Target2Like,
        None => cfg.run.target.clone(),
    };
    let out = out_dir(&cfg, c)?;
    let t = generate_target(&spec, &cfg.grid)?;
    raster::write_pbm(out.join("target.pbm"), t.indicator())?;
    println!(
        "{}x{} target, {} px, perimeter {:.1} px, written to {}",
        cfg.grid.n,
        cfg.grid.n,
        t.area(),
        t.perimeter,
        out.join("target.pbm").display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Tcc(c) => tcc(c),
        Command::Optimize(c) => optimize(c),
        Command::Gradcheck { common, n } => match gradcheck(common, *n) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("gradient check failed");
                return ExitCode::from(3);
            }
            Err(e) => Err(e),
        },
        Command::Analyze { common, mask } => analyze(common, mask),
        Command::Sweep { common, mask, hvar } => sweep(common, mask, hvar.clone()),
        Command::GenTarget { common, kind } => gen_target(common, *kind),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
