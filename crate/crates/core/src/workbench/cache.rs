//! On-disk cache of SOCS kernels: `manifest.json` plus one complex field
//! file per kernel.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::fieldio::{read_field, write_field, FieldFile};
use super::write_atomic;
use crate::error::{IltError, Result};
use crate::optics::{build_tcc, decompose_socs_with, EigenMethod, GridSpec, MutualIntensity, OpticalSystem, SocsModel};

/// Overrides the cache directory of the configuration.
pub const CACHE_ENV: &str = "ILT_SOCS_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub optics: OpticalSystem,
    pub grid: GridSpec,
    pub n0: usize,
    pub mutual: MutualIntensity,
    pub sigmas: Vec<f64>,
    pub files: Vec<String>,
}

/// Cache root from the environment, falling back to `configured`.
pub fn resolve_root(configured: Option<&str>) -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| configured.map(PathBuf::from))
}

/// Entry directory for one `(lambda, NA, sigma, n, dx, n0)` combination.
pub fn entry_dir(root: &Path, sys: &OpticalSystem, grid: &GridSpec, n0: usize, mutual: MutualIntensity) -> PathBuf {
    let tag = match mutual {
        MutualIntensity::GaussianApprox => "gauss",
        MutualIntensity::Coherent => "coherent",
    };
    root.join(format!(
        "socs_l{}_na{}_s{}_n{}_dx{}_k{}_{tag}",
        sys.lambda_nm, sys.na, sys.sigma_c, grid.n, grid.dx_nm, n0
    ))
}

pub fn store(dir: &Path, sys: &OpticalSystem, mutual: MutualIntensity, model: &SocsModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| IltError::io(dir, e))?;
    let grid = *model.grid();
    let mut files = Vec::new();
    for (k, m) in model.modes().iter().enumerate() {
        let name = format!("mode_{k:02}.field");
        write_field(dir.join(&name), &FieldFile::complex(m.v.values.clone(), grid.dx_nm))?;
        files.push(name);
    }
    let manifest = Manifest {
        optics: *sys,
        grid,
        n0: model.n0(),
        mutual,
        sigmas: model.sigmas(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(dir.join("manifest.json"), json.as_bytes())
}

/// Loads a cached model; `Ok(None)` when the entry is absent or describes
/// a different setup.
pub fn load(
    dir: &Path,
    sys: &OpticalSystem,
    grid: &GridSpec,
    n0: usize,
    mutual: MutualIntensity,
) -> Result<Option<SocsModel>> {
    let path = dir.join("manifest.json");
    let Ok(text) = std::fs::read_to_string(&path) else {
        return Ok(None);
    };
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| IltError::Config(format!("{}: {e}", path.display())))?;
    if manifest.optics != *sys || manifest.grid != *grid || manifest.n0 != n0 || manifest.mutual != mutual {
        return Ok(None);
    }
    let mut modes = Vec::with_capacity(n0);
    for name in &manifest.files {
        let f = read_field(dir.join(name))?;
        f.check_grid(grid)?;
        modes.push(f.into_complex()?);
    }
    SocsModel::from_eigenpairs(*grid, &manifest.sigmas, &modes).map(Some)
}

/// Reads the model from the cache under `root` or computes and stores it.
pub fn load_or_build(
    root: Option<&Path>,
    sys: &OpticalSystem,
    grid: &GridSpec,
    n0: usize,
    mutual: MutualIntensity,
    method: EigenMethod,
) -> Result<SocsModel> {
    let dir = root.map(|r| entry_dir(r, sys, grid, n0, mutual));
    if let Some(d) = &dir {
        if let Some(model) = load(d, sys, grid, n0, mutual)? {
            return Ok(model);
        }
    }
    let tcc = build_tcc(sys, grid, mutual)?;
    let model = decompose_socs_with(&tcc, n0, method)?;
    if let Some(d) = &dir {
        store(d, sys, mutual, &model)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_then_load() {
        let tmp = tempfile::tempdir().unwrap();
        let sys = OpticalSystem::reference();
        let grid = GridSpec::new(8, 25.0).unwrap();
        let mutual = MutualIntensity::default();
        let built = load_or_build(Some(tmp.path()), &sys, &grid, 4, mutual, EigenMethod::Dense).unwrap();
        let dir = entry_dir(tmp.path(), &sys, &grid, 4, mutual);
        assert!(dir.join("manifest.json").exists());
        let loaded = load(&dir, &sys, &grid, 4, mutual).unwrap().unwrap();
        assert_eq!(loaded.sigmas(), built.sigmas());
        for (a, b) in loaded.modes().iter().zip(built.modes()) {
            assert_eq!(a.v.values, b.v.values);
        }
        assert!(load(&dir, &sys, &grid, 3, mutual).unwrap().is_none());
    }
}
