//! WebAssembly bindings behind `www/index.html`. Every export returns a JSON
//! string so the page needs no extra glue; errors come back as
//! `{"error": "..."}`.

use levitrap::odmr::{fit_spectrum, synthesize_spectrum, FrequencyGrid, NoiseSpec, OdmrLine};
use levitrap::spin_model::{zfs_of_temperature, MagneticField, SpinParams, ZfsCoefficients};
use levitrap::thermal_model::{steady_state_temperature, AbsorptionModel, GasEnvironment, LaserBeam, DEFAULT_EMISSIVITY, DEFAULT_WAIST_M};
use levitrap::thermometry::temperature_from_fit;
use levitrap::trap_dynamics::{classify_axis, ParticleState};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points in the demo spectrum; coarser than the CLI default to keep the
/// page responsive.
const DEMO_POINTS: usize = 2001;

#[derive(Serialize)]
pub struct OdmrDemo {
    pub freq_ghz: Vec<f64>,
    pub pl_cps: Vec<f64>,
    pub model_cps: Vec<f64>,
    pub true_d_ghz: f64,
    pub d_fit_ghz: f64,
    pub d_sigma_ghz: f64,
    pub e_fit_ghz: f64,
    pub contrast: f64,
    pub temperature_k: Option<f64>,
    pub sigma_t_k: Option<f64>,
    pub status: String,
}

/// Spectrum of a particle at `temperature_k`, its fit and the temperature
/// read back from the fitted splitting.
pub fn odmr_demo(temperature_k: f64, contrast: f64, noise: f64, seed: u64) -> levitrap::Result<OdmrDemo> {
    let zfs = ZfsCoefficients::default();
    let d = zfs_of_temperature(&zfs, temperature_k)?.value;
    let line = OdmrLine {
        contrast,
        ..OdmrLine::default()
    };
    let grid = FrequencyGrid {
        n_points: DEMO_POINTS,
        ..FrequencyGrid::default()
    };
    let s = synthesize_spectrum(&SpinParams::new(d, 0.005)?, &MagneticField::ZERO, &line, &grid, &NoiseSpec::gaussian(seed, noise))?;
    let fit = fit_spectrum(&s)?;
    let (temperature_k, sigma_t_k, status) = match temperature_from_fit(&fit, &zfs, 0.0) {
        Ok(t) => (Some(t.temperature_k), Some(t.sigma_t_k), fit.status.clone()),
        Err(e) => (None, None, e.to_string()),
    };
    Ok(OdmrDemo {
        model_cps: s.frequencies.iter().map(|&f| fit.model(f)).collect(),
        freq_ghz: s.frequencies,
        pl_cps: s.pl,
        true_d_ghz: d,
        d_fit_ghz: fit.d_fit,
        d_sigma_ghz: fit.d_sigma,
        e_fit_ghz: fit.e_fit,
        contrast: fit.contrast,
        temperature_k,
        sigma_t_k,
        status,
    })
}

#[derive(Serialize)]
pub struct StabilityDemo {
    pub q: Vec<f64>,
    pub a: Vec<f64>,
    /// Row-major over `a` (outer) and `q`, 1 for stable.
    pub stable: Vec<u8>,
}

pub fn stability_demo(n_q: usize, n_a: usize, gamma_norm: f64) -> StabilityDemo {
    let axis = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n.max(2) - 1) as f64).collect() };
    let q = axis(n_q, 0.0, 1.2);
    let a = axis(n_a, -0.3, 0.3);
    let stable = a
        .iter()
        .flat_map(|&ai| q.iter().map(move |&qi| classify_axis(ai, qi, gamma_norm).stable as u8))
        .collect();
    StabilityDemo { q, a, stable }
}

#[derive(Serialize)]
pub struct ThermalDemo {
    pub power_uw: Vec<f64>,
    pub temperature_k: Vec<Option<f64>>,
}

/// Steady-state temperature of the default 10 µm particle against laser
/// power at fixed pressure.
pub fn thermal_demo(pressure_mbar: f64, max_power_uw: f64, n: usize) -> levitrap::Result<ThermalDemo> {
    let gas = GasEnvironment::air(pressure_mbar);
    gas.validate()?;
    let p = ParticleState::ten_micron_diamond();
    let a = AbsorptionModel::default();
    let power_uw: Vec<f64> = (0..n.max(2)).map(|i| max_power_uw * i as f64 / (n.max(2) - 1) as f64).collect();
    let temperature_k = power_uw
        .iter()
        .map(|&w| steady_state_temperature(&LaserBeam::green(w * 1e-6, DEFAULT_WAIST_M), &a, &gas, &p, DEFAULT_EMISSIVITY).ok())
        .collect();
    Ok(ThermalDemo { power_uw, temperature_k })
}

fn to_json<T: Serialize>(r: levitrap::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| format!("{{\"error\":{:?}}}", e.to_string())),
        Err(e) => format!("{{\"error\":{:?}}}", e.to_string()),
    }
}

#[wasm_bindgen]
pub fn odmr_fit(temperature_k: f64, contrast: f64, noise: f64, seed: u32) -> String {
    to_json(odmr_demo(temperature_k, contrast, noise, seed as u64))
}

#[wasm_bindgen]
pub fn stability_map(n_q: usize, n_a: usize, gamma_norm: f64) -> String {
    to_json(Ok(stability_demo(n_q, n_a, gamma_norm)))
}

#[wasm_bindgen]
pub fn thermal_curve(pressure_mbar: f64, max_power_uw: f64, n: usize) -> String {
    to_json(thermal_demo(pressure_mbar, max_power_uw, n))
}
