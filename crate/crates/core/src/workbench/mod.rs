//! Configuration, file formats, target generators and the experiment driver
//! behind the command line tool.

pub mod cache;
pub mod config;
pub mod fieldio;
pub mod gradcheck;
pub mod raster;
pub mod targets;
pub mod trace;

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::analysis::{peak_fraction_threshold, threshold_sweep, ExposureReport, TargetPattern};
use crate::error::{IltError, Result};
use crate::forward::{intensity, IntensityBundle, PhaseField};
use crate::functionals::{FunctionalConfig, ObjectiveBreakdown};
use crate::optics::SocsModel;
use crate::optimizer::{dilate, make_initial_guess, run, RunOptions, RunTrace};

pub use config::ExperimentConfig;
pub use fieldio::{read_field, write_field, FieldData, FieldFile};
pub use targets::{custom_rects, generate_target, Rect, TargetSpec};

/// Write through a temporary file in the destination directory, then rename.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IltError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IltError::io(path, e))?;
    tmp.persist(path).map_err(|e| IltError::io(path, e.error))?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IltError::io(dir, e))
}

/// Metrics of one threshold shift, without the raster fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub hvar_pct: f64,
    pub pixel_err: usize,
    pub d_min_pct: f64,
    pub components: usize,
    pub holes: usize,
    pub holes_in_largest: usize,
}

impl From<&ExposureReport> for SweepRow {
    fn from(r: &ExposureReport) -> Self {
        Self {
            hvar_pct: r.hvar_percent,
            pixel_err: r.pixel_error,
            d_min_pct: r.d_min,
            components: r.components,
            holes: r.holes,
            holes_in_largest: r.holes_in_largest,
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("hvar_pct,pixel_err,d_min_pct,components,holes,holes_in_largest\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.hvar_pct, r.pixel_err, r.d_min_pct, r.components, r.holes, r.holes_in_largest
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub n: usize,
    pub dx_nm: f64,
    pub n0: usize,
    pub threshold: f64,
    pub iterations: usize,
    pub stages: usize,
    pub initial_pixel_err: usize,
    pub pixel_err: usize,
    pub d_min_pct: f64,
    pub nonbinary_px: usize,
    pub objective: ObjectiveBreakdown,
    pub sweep: Vec<SweepRow>,
}

/// Loaded model and target with the resolved threshold.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: SocsModel,
    pub target: TargetPattern,
    /// Functional settings with the resolved threshold.
    pub functional: FunctionalConfig,
}

pub struct OptimizeOutcome {
    pub trace: RunTrace,
    pub bundle: IntensityBundle,
    pub sweep: Vec<ExposureReport>,
    pub report: FinalReport,
    /// Rendered trace CSV, identical to the file written to disk.
    pub trace_csv: String,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let root = cache::resolve_root(config.socs.cache_dir.as_deref());
        let model = cache::load_or_build(
            root.as_deref(),
            &config.optics,
            &config.grid,
            config.socs.n0,
            config.socs.mutual,
            config.socs.method,
        )?;
        let target = generate_target(&config.run.target, &config.grid)?;
        Self::with_parts(config, model, target)
    }

    pub fn with_parts(config: ExperimentConfig, model: SocsModel, target: TargetPattern) -> Result<Self> {
        let threshold = match config.run.threshold {
            Some(h) => h,
            None => peak_fraction_threshold(&model, &target, config.run.threshold_fraction)?,
        };
        let functional = FunctionalConfig {
            threshold,
            ..config.functional
        };
        functional.validate()?;
        Ok(Self {
            config,
            model,
            target,
            functional,
        })
    }

    pub fn initial_guess(&self) -> Result<PhaseField> {
        let g = &self.config.run.initial_guess;
        make_initial_guess(g.kind, &self.target, &g.params(self.config.run.seed))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            t_init: self.config.run.t_init,
            support_mask: self
                .config
                .run
                .support_dilation_px
                .map(|r| dilate(self.target.indicator(), r)),
            max_backtracks: 0,
            max_move: self.config.run.max_move,
            step_rule: self.config.run.step_rule,
        }
    }

    pub fn sweep(&self, bundle: &IntensityBundle) -> Result<Vec<ExposureReport>> {
        threshold_sweep(bundle, self.functional.threshold, &self.config.run.hvar, &self.target)
    }

    /// Runs the schedule. With `out`, writes stage checkpoints, the trace,
    /// rasters of the result and `report.json` there.
    pub fn optimize(&self, out: Option<&Path>) -> Result<OptimizeOutcome> {
        let grid = self.config.grid;
        let ckpt_dir = out.map(|o| o.join("checkpoints"));
        if let Some(o) = out {
            ensure_dir(o)?;
            write_atomic(o.join("config.json"), self.config.to_json().as_bytes())?;
            raster::write_pbm(o.join("target.pbm"), self.target.indicator())?;
        }
        if let Some(d) = &ckpt_dir {
            ensure_dir(d)?;
        }
        let u0 = self.initial_guess()?;
        if let Some(o) = out {
            raster::write_pgm(o.join("initial.pgm"), u0.values(), raster::PgmEncoding::Text)?;
        }
        let trace = run(
            &u0,
            &self.model,
            &self.target,
            &self.functional,
            &self.config.schedule,
            &self.run_options(),
            |stage, u| match &ckpt_dir {
                Some(d) => write_field(
                    d.join(format!("stage_{stage:02}.field")),
                    &FieldFile::real(u.values().clone(), grid.dx_nm),
                ),
                None => Ok(()),
            },
        )?;
        let trace_csv = trace::render(&trace.initial, &trace.records);
        let bundle = intensity(&self.model, &trace.final_field)?;
        let sweep = self.sweep(&bundle)?;
        let last = trace.records.last().unwrap_or(&trace.initial);
        let report = FinalReport {
            n: grid.n,
            dx_nm: grid.dx_nm,
            n0: self.model.n0(),
            threshold: self.functional.threshold,
            iterations: trace.records.len(),
            stages: self.config.schedule.stages(),
            initial_pixel_err: trace.initial.pixel_err,
            pixel_err: last.pixel_err,
            d_min_pct: last.d_min_pct,
            nonbinary_px: last.nonbinary_px,
            objective: last.objective,
            sweep: sweep.iter().map(SweepRow::from).collect(),
        };
        if let Some(o) = out {
            write_atomic(o.join("trace.csv"), trace_csv.as_bytes())?;
            self.write_result(o, &trace.final_field, &bundle, &sweep)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_atomic(o.join("report.json"), json.as_bytes())?;
        }
        Ok(OptimizeOutcome {
            trace,
            bundle,
            sweep,
            report,
            trace_csv,
        })
    }

    /// Mask rasters, the exposed pattern at the nominal threshold, the
    /// difference image and the sweep table.
    pub fn write_result(
        &self,
        out: &Path,
        u: &PhaseField,
        bundle: &IntensityBundle,
        sweep: &[ExposureReport],
    ) -> Result<()> {
        ensure_dir(out)?;
        raster::write_pgm(out.join("mask.pgm"), u.values(), raster::PgmEncoding::Text)?;
        raster::write_pbm(out.join("mask.pbm"), &u.binarize())?;
        write_field(
            out.join("mask.field"),
            &FieldFile::real(u.values().clone(), self.config.grid.dx_nm),
        )?;
        let exposed = crate::analysis::expose(bundle, self.functional.threshold, 0.0);
        raster::write_pbm(out.join("exposed.pbm"), &exposed)?;
        raster::write_difference(out.join("difference.pgm"), &exposed, self.target.indicator())?;
        let rows: Vec<SweepRow> = sweep.iter().map(SweepRow::from).collect();
        write_atomic(out.join("sweep.csv"), sweep_csv(&rows).as_bytes())
    }

    /// Mask from a field file or a netpbm raster on this grid.
    pub fn load_mask(&self, path: &Path) -> Result<PhaseField> {
        let values = read_mask_values(path)?;
        if values.dim() != (self.config.grid.n, self.config.grid.n) {
            return Err(IltError::DimensionMismatch(format!(
                "mask {} is {}x{}, grid is {n}x{n}",
                path.display(),
                values.nrows(),
                values.ncols(),
                n = self.config.grid.n
            )));
        }
        PhaseField::new(self.config.grid, values)
    }
}

fn read_mask_values(path: &Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| IltError::io(path, e))?;
    if bytes.starts_with(fieldio::MAGIC.as_bytes()) {
        let text = String::from_utf8(bytes).map_err(|_| IltError::Parse {
            line: 1,
            offset: 0,
            msg: "field file is not UTF-8".into(),
        })?;
        fieldio::decode(&text)?.into_real()
    } else {
        Ok(raster::decode(&bytes)?.values)
    }
}

/// Output directory: the command line override, else the configured one.
pub fn output_dir(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.run.output_dir))
}
