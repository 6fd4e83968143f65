//! JSON experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::targets::TargetSpec;
use crate::error::{IltError, Result};
use crate::functionals::FunctionalConfig;
use crate::optics::{EigenMethod, GridSpec, MutualIntensity, OpticalSystem};
use crate::optimizer::{InitialGuessKind, InitialGuessParams, Schedule, StepRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SocsSettings {
    /// Number of retained kernels.
    pub n0: usize,
    /// Directory of the kernel cache; `None` disables caching unless the
    /// `ILT_SOCS_CACHE` environment variable is set.
    pub cache_dir: Option<String>,
    pub method: EigenMethod,
    pub mutual: MutualIntensity,
}

impl Default for SocsSettings {
    fn default() -> Self {
        Self {
            n0: 10,
            cache_dir: None,
            method: EigenMethod::Auto,
            mutual: MutualIntensity::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialGuessSpec {
    pub kind: InitialGuessKind,
    pub blur_px: f64,
    pub level: f64,
    pub contrast: f64,
    pub period_px: f64,
}

impl Default for InitialGuessSpec {
    fn default() -> Self {
        let p = InitialGuessParams::default();
        Self {
            kind: InitialGuessKind::default(),
            blur_px: p.blur_px,
            level: p.level,
            contrast: p.contrast,
            period_px: p.period_px,
        }
    }
}

impl InitialGuessSpec {
    pub fn params(&self, seed: u64) -> InitialGuessParams {
        InitialGuessParams {
            blur_px: self.blur_px,
            level: self.level,
            contrast: self.contrast,
            period_px: self.period_px,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub target: TargetSpec,
    pub initial_guess: InitialGuessSpec,
    /// Restrict the mask to the target dilated by this many pixels.
    pub support_dilation_px: Option<usize>,
    /// Raw exposure threshold; `None` uses `threshold_fraction` of the
    /// peak intensity printed by the target.
    pub threshold: Option<f64>,
    pub threshold_fraction: f64,
    /// Threshold shifts in percent of `h` used for reports.
    pub hvar: Vec<f64>,
    pub seed: u64,
    /// First trial step of the line search; `None` picks it from the
    /// first gradient.
    pub t_init: Option<f64>,
    /// Cap on the largest pixel change of a trial step; `None` disables it.
    pub max_move: Option<f64>,
    pub step_rule: StepRule,
    pub output_dir: String,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            target: TargetSpec::default(),
            initial_guess: InitialGuessSpec::default(),
            support_dilation_px: None,
            threshold: None,
            threshold_fraction: 0.4,
            hvar: vec![-0.5, 0.0, 3.5],
            seed: 0,
            t_init: None,
            max_move: None,
            step_rule: StepRule::default(),
            output_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub optics: OpticalSystem,
    pub grid: GridSpec,
    pub socs: SocsSettings,
    /// `threshold`, `eps`, `eta` and `gamma` are overridden by the run
    /// threshold rule and the schedule during `optimize`.
    pub functional: FunctionalConfig,
    pub schedule: Schedule,
    pub run: RunSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            optics: OpticalSystem::reference(),
            grid: GridSpec { n: 128, dx_nm: 12.5 },
            socs: SocsSettings::default(),
            functional: FunctionalConfig::default(),
            schedule: Schedule::reference(),
            run: RunSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.grid.validate()?;
        self.functional.validate()?;
        self.schedule.validate()?;
        if self.socs.n0 == 0 || self.socs.n0 > self.grid.n * self.grid.n {
            return Err(IltError::Config(format!("socs.n0 = {} out of range", self.socs.n0)));
        }
        if let Some(h) = self.run.threshold {
            if !(h > 0.0 && h.is_finite()) {
                return Err(IltError::Config(format!("run.threshold = {h} must be positive")));
            }
        }
        let f = self.run.threshold_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(IltError::Config(format!(
                "run.threshold_fraction = {f} must lie in (0, 1)"
            )));
        }
        if self.run.hvar.iter().any(|v| !v.is_finite() || *v <= -100.0) {
            return Err(IltError::Config(
                "run.hvar entries must be finite and above -100".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| IltError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| IltError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_roundtrip() {
        let c = ExperimentConfig::default();
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.socs.n0, 10);
        assert_eq!(c.optics, OpticalSystem::reference());
        assert_eq!(c.run.threshold_fraction, 0.4);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"grid": {"n": 64, "dx_nm": 25, "dy": 1}}"#),
            Err(IltError::Config(_))
        ));
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"run": {"target": {"kind": "target3"}}}"#).is_err());
    }

    #[test]
    fn custom_target_parses() {
        let c = ExperimentConfig::from_json(
            r#"{"run": {"target": {"kind": "custom_rects", "rects": [{"row": 4, "col": 4, "height": 20, "width": 20}]}}}"#,
        )
        .unwrap();
        assert!(matches!(c.run.target, TargetSpec::CustomRects { ref rects } if rects.len() == 1));
    }
}
