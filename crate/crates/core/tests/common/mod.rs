#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use ilt::optics::{build_tcc, decompose_socs, GridSpec, MutualIntensity, OpticalSystem, SocsModel};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn grid(n: usize) -> GridSpec {
    GridSpec::new(n, 12.5).unwrap()
}

/// Reference optics at 12.5 nm pitch, built once per `(n, n0)`.
pub fn model(n: usize, n0: usize) -> SocsModel {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), SocsModel>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry((n, n0))
        .or_insert_with(|| {
            let tcc = build_tcc(&OpticalSystem::reference(), &grid(n), MutualIntensity::GaussianApprox).unwrap();
            decompose_socs(&tcc, n0).unwrap()
        })
        .clone()
}

pub fn random_field(n: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, n), |_| rng.random_range(lo..hi))
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
