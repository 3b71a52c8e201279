//! Internal temperature of the levitated diamond: laser absorption against
//! free-molecular gas cooling and thermal radiation, plus the empirical
//! laser-power and inverse-pressure calibrations.
//!
//! Pressures are in mbar at the boundary and converted to Pa internally.
//! The particle is treated as a sphere of surface `π d²`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constants::{
    AIR_MOLECULE_DIAMETER, AIR_MOLECULE_MASS, BOLTZMANN, PASCAL_PER_MBAR, STEFAN_BOLTZMANN,
};
use crate::error::{Error, Result};
use crate::trap_dynamics::ParticleState;

/// Upper end of the steady-state temperature bracket.
pub const MAX_TEMPERATURE_K: f64 = 5000.0;

/// Gas surface-reflection law used by the Epstein drag constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DragReflection {
    Specular,
    #[default]
    Diffuse,
}

impl DragReflection {
    /// Epstein momentum-transfer factor δ.
    pub fn epstein_delta(self) -> f64 {
        match self {
            DragReflection::Specular => 1.0,
            DragReflection::Diffuse => 1.0 + PI / 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasEnvironment {
    pub pressure_mbar: f64,
    pub temperature_k: f64,
    pub molecule_mass_kg: f64,
    pub molecule_diameter_m: f64,
    /// Thermal accommodation coefficient in (0, 1].
    pub accommodation: f64,
    /// Specific-heat ratio of the gas.
    pub heat_capacity_ratio: f64,
    pub reflection: DragReflection,
}

impl GasEnvironment {
    /// Room-temperature air at the given pressure.
    pub fn air(pressure_mbar: f64) -> Self {
        GasEnvironment {
            pressure_mbar,
            temperature_k: 298.0,
            molecule_mass_kg: AIR_MOLECULE_MASS,
            molecule_diameter_m: AIR_MOLECULE_DIAMETER,
            accommodation: 1.0,
            heat_capacity_ratio: 1.4,
            reflection: DragReflection::Diffuse,
        }
    }

    pub fn with_pressure(self, pressure_mbar: f64) -> Self {
        GasEnvironment {
            pressure_mbar,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pressure_mbar >= 0.0 && self.pressure_mbar.is_finite()) {
            return Err(Error::invalid("pressure_mbar", "must be >= 0"));
        }
        if !(self.temperature_k > 0.0) {
            return Err(Error::invalid("gas temperature", "must be > 0"));
        }
        if !(self.molecule_mass_kg > 0.0 && self.molecule_diameter_m > 0.0) {
            return Err(Error::invalid("molecule", "mass and diameter must be > 0"));
        }
        if !(self.accommodation > 0.0 && self.accommodation <= 1.0) {
            return Err(Error::invalid("accommodation", "must lie in (0, 1]"));
        }
        if !(self.heat_capacity_ratio > 1.0) {
            return Err(Error::invalid("heat_capacity_ratio", "must be > 1"));
        }
        Ok(())
    }

    pub fn pressure_pa(&self) -> f64 {
        self.pressure_mbar * PASCAL_PER_MBAR
    }

    /// Mean molecular speed `√(8 k_B T / π m)`.
    pub fn mean_speed(&self) -> f64 {
        (8.0 * BOLTZMANN * self.temperature_k / (PI * self.molecule_mass_kg)).sqrt()
    }
}

/// `λ = k_B T / (√2 π d_m² p)`. Infinite at zero pressure.
pub fn mean_free_path(g: &GasEnvironment) -> f64 {
    let p = g.pressure_pa();
    if p <= 0.0 {
        return f64::INFINITY;
    }
    BOLTZMANN * g.temperature_k / (2f64.sqrt() * PI * g.molecule_diameter_m.powi(2) * p)
}

/// Knudsen number `λ / d` of the particle.
pub fn knudsen(g: &GasEnvironment, p: &ParticleState) -> f64 {
    mean_free_path(g) / p.diameter
}

/// A scalar paired with the free-molecular validity flag of the regime it
/// was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeValue {
    pub value: f64,
    /// `Kn >= 1`; the free-molecular formulas are outside their validity
    /// otherwise (value is still returned).
    pub free_molecular: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserBeam {
    pub power_w: f64,
    /// 1/e² intensity radius.
    pub waist_m: f64,
    pub wavelength_m: f64,
}

impl LaserBeam {
    pub fn green(power_w: f64, waist_m: f64) -> Self {
        LaserBeam {
            power_w,
            waist_m,
            wavelength_m: 532e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power_w >= 0.0) {
            return Err(Error::invalid("laser power", "must be >= 0"));
        }
        if !(self.waist_m > 0.0) {
            return Err(Error::invalid("waist", "must be > 0"));
        }
        Ok(())
    }

    /// Peak intensity `2P / (π w²)` of a Gaussian beam.
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power_w / (PI * self.waist_m * self.waist_m)
    }
}

/// Fraction of the peak intensity seen by the particle, possibly a function
/// of its micromotion amplitude (metres).
#[derive(Clone)]
pub enum IntensityOverlap {
    Constant(f64),
    Micromotion(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl IntensityOverlap {
    pub fn at(&self, micromotion_amplitude_m: f64) -> f64 {
        match self {
            IntensityOverlap::Constant(v) => *v,
            IntensityOverlap::Micromotion(f) => f(micromotion_amplitude_m),
        }
    }
}

impl fmt::Debug for IntensityOverlap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntensityOverlap::Constant(v) => write!(f, "Constant({v})"),
            IntensityOverlap::Micromotion(_) => f.write_str("Micromotion(<fn>)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AbsorptionModel {
    pub effective_cross_section_m2: f64,
    pub intensity_overlap: IntensityOverlap,
}

/// Cross-section back-solved so that a 10 µm diamond in 298 K air at 1 mbar
/// under 700 µW (waist 5 µm, overlap 0.5, emissivity 0.1) sits at 470 K.
/// Calibration, not a material constant.
pub const DEFAULT_CROSS_SECTION_M2: f64 = 1.432_491_504_824e-12;
pub const DEFAULT_WAIST_M: f64 = 5e-6;
pub const DEFAULT_OVERLAP: f64 = 0.5;
pub const DEFAULT_EMISSIVITY: f64 = 0.1;

impl AbsorptionModel {
    pub fn constant(effective_cross_section_m2: f64, overlap: f64) -> Self {
        AbsorptionModel {
            effective_cross_section_m2,
            intensity_overlap: IntensityOverlap::Constant(overlap),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.effective_cross_section_m2 > 0.0) {
            return Err(Error::invalid("effective_cross_section", "must be > 0"));
        }
        let o = self.intensity_overlap.at(0.0);
        if !(o > 0.0 && o <= 1.0) {
            return Err(Error::invalid("intensity_overlap", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

impl Default for AbsorptionModel {
    fn default() -> Self {
        AbsorptionModel::constant(DEFAULT_CROSS_SECTION_M2, DEFAULT_OVERLAP)
    }
}

/// `P_abs = σ_eff · overlap · I_peak` at zero micromotion.
pub fn absorbed_power(b: &LaserBeam, a: &AbsorptionModel) -> f64 {
    absorbed_power_with_micromotion(b, a, 0.0)
}

pub fn absorbed_power_with_micromotion(b: &LaserBeam, a: &AbsorptionModel, micromotion_m: f64) -> f64 {
    a.effective_cross_section_m2 * a.intensity_overlap.at(micromotion_m) * b.peak_intensity()
}

/// Free-molecular heat flux from the particle at `t_internal` to the gas.
/// Negative when the particle is colder than the gas.
pub fn gas_cooling_power(g: &GasEnvironment, p: &ParticleState, t_internal: f64) -> RegimeValue {
    let value = gas_conductance(g, p) * (t_internal - g.temperature_k);
    RegimeValue {
        value,
        free_molecular: knudsen(g, p) >= 1.0,
    }
}

/// Linear coefficient `dP_gas/dT` in W/K.
pub fn gas_conductance(g: &GasEnvironment, p: &ParticleState) -> f64 {
    let gamma = g.heat_capacity_ratio;
    g.accommodation * (g.pressure_pa() * p.surface_area() / 4.0) * g.mean_speed() * (gamma + 1.0)
        / (gamma - 1.0)
        / g.temperature_k
}

/// `ε σ_SB A (T⁴ − T_env⁴)`.
pub fn radiative_power(p: &ParticleState, t_internal: f64, t_env: f64, emissivity: f64) -> f64 {
    emissivity * STEFAN_BOLTZMANN * p.surface_area() * (t_internal.powi(4) - t_env.powi(4))
}

/// Temperature at which absorption balances gas cooling plus radiation.
/// Bisection on `[T_gas, 5000 K]` run to floating-point resolution.
pub fn steady_state_temperature(
    b: &LaserBeam,
    a: &AbsorptionModel,
    g: &GasEnvironment,
    p: &ParticleState,
    emissivity: f64,
) -> Result<f64> {
    b.validate()?;
    a.validate()?;
    g.validate()?;
    if !(emissivity >= 0.0) {
        return Err(Error::invalid("emissivity", "must be >= 0"));
    }
    if g.pressure_mbar <= 0.0 && emissivity <= 0.0 {
        return Err(Error::invalid("cooling", "need p > 0 or emissivity > 0"));
    }
    let p_abs = absorbed_power(b, a);
    let t_gas = g.temperature_k;
    if p_abs == 0.0 {
        return Ok(t_gas);
    }
    let imbalance =
        |t: f64| gas_cooling_power(g, p, t).value + radiative_power(p, t, t_gas, emissivity) - p_abs;
    if imbalance(MAX_TEMPERATURE_K) < 0.0 {
        return Err(Error::ThermalRunaway {
            absorbed_w: p_abs,
            t_max_k: MAX_TEMPERATURE_K,
        });
    }
    Ok(bisect_increasing(imbalance, t_gas, MAX_TEMPERATURE_K))
}

/// Root of an increasing function with `f(lo) <= 0 <= f(hi)`, to the last
/// representable bit.
pub(crate) fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo).abs(), f(hi).abs());
    if flo <= fhi {
        lo
    } else {
        hi
    }
}

/// Back-solve the effective cross-section that puts the particle at
/// `target_k` for the given beam and gas (bisection in log σ).
pub fn calibrate_cross_section(
    target_k: f64,
    b: &LaserBeam,
    overlap: f64,
    g: &GasEnvironment,
    p: &ParticleState,
    emissivity: f64,
) -> Result<f64> {
    if !(target_k > g.temperature_k) {
        return Err(Error::invalid("target temperature", "must exceed the gas temperature"));
    }
    let temp_for = |log_sigma: f64| {
        let a = AbsorptionModel::constant(log_sigma.exp(), overlap);
        steady_state_temperature(b, &a, g, p, emissivity).unwrap_or(f64::INFINITY)
    };
    let (lo, hi) = ((1e-22f64).ln(), (1e-6f64).ln());
    if temp_for(lo) > target_k || temp_for(hi) < target_k {
        return Err(Error::Bracket("cross-section outside [1e-22, 1e-6] m²".into()));
    }
    Ok(bisect_increasing(|s| temp_for(s) - target_k, lo, hi).exp())
}

/// Overlap that puts the particle at `target_k` for a fixed cross-section.
pub fn calibrate_overlap(
    target_k: f64,
    b: &LaserBeam,
    cross_section_m2: f64,
    g: &GasEnvironment,
    p: &ParticleState,
    emissivity: f64,
) -> Result<f64> {
    let temp_for = |o: f64| {
        let a = AbsorptionModel::constant(cross_section_m2, o);
        steady_state_temperature(b, &a, g, p, emissivity).unwrap_or(f64::INFINITY)
    };
    if temp_for(1.0) < target_k {
        return Err(Error::Bracket(format!(
            "overlap 1 reaches only {:.1} K",
            temp_for(1.0)
        )));
    }
    Ok(bisect_increasing(|o| temp_for(o) - target_k, 1e-9, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmpiricalMode {
    /// `T = t0 + coefficient · P_laser`, origin fixed at 298 K.
    LinearPower,
    /// `T = t0 + coefficient / p`, t0 free.
    InversePressure,
}

/// Origin of the linear-in-power calibration.
pub const LINEAR_POWER_ORIGIN_K: f64 = 298.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalThermalModel {
    pub mode: EmpiricalMode,
    pub t0: f64,
    /// K/W (linear_power) or K·mbar (inverse_pressure).
    pub coefficient: f64,
}

impl EmpiricalThermalModel {
    /// Control is laser power in W or pressure in mbar.
    pub fn predict(&self, control: f64) -> f64 {
        match self.mode {
            EmpiricalMode::LinearPower => self.t0 + self.coefficient * control,
            EmpiricalMode::InversePressure => self.t0 + self.coefficient / control,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub control: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub model: EmpiricalThermalModel,
    pub residual_rms_k: f64,
}

pub fn calibrate_empirical(points: &[CalibrationPoint], mode: EmpiricalMode) -> Result<Calibration> {
    let degenerate = || Error::invalid("calibration points", "degenerate design (all controls equal)");
    let model = match mode {
        EmpiricalMode::LinearPower => {
            if points.is_empty() {
                return Err(Error::invalid("calibration points", "need at least one point"));
            }
            let sxx: f64 = points.iter().map(|p| p.control * p.control).sum();
            if sxx == 0.0 {
                return Err(degenerate());
            }
            let sxy: f64 = points
                .iter()
                .map(|p| p.control * (p.temperature_k - LINEAR_POWER_ORIGIN_K))
                .sum();
            EmpiricalThermalModel {
                mode,
                t0: LINEAR_POWER_ORIGIN_K,
                coefficient: sxy / sxx,
            }
        }
        EmpiricalMode::InversePressure => {
            if points.len() < 2 {
                return Err(Error::invalid("calibration points", "need at least two points"));
            }
            if points.iter().any(|p| !(p.control > 0.0)) {
                return Err(Error::invalid("pressure", "must be > 0 for inverse_pressure"));
            }
            let n = points.len() as f64;
            let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.control).collect();
            let xm = xs.iter().sum::<f64>() / n;
            let ym = points.iter().map(|p| p.temperature_k).sum::<f64>() / n;
            let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
            if sxx <= 1e-300 {
                return Err(degenerate());
            }
            let sxy: f64 = xs
                .iter()
                .zip(points)
                .map(|(x, p)| (x - xm) * (p.temperature_k - ym))
                .sum();
            let coefficient = sxy / sxx;
            EmpiricalThermalModel {
                mode,
                t0: ym - coefficient * xm,
                coefficient,
            }
        }
    };
    let residual_rms_k = (points
        .iter()
        .map(|p| (model.predict(p.control) - p.temperature_k).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(Calibration {
        model,
        residual_rms_k,
    })
}

/// Calibration file: `{mode, points: [{control, temperature_k}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub mode: EmpiricalMode,
    pub points: Vec<CalibrationPoint>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> ParticleState {
        ParticleState::ten_micron_diamond()
    }

    #[test]
    fn mean_free_path_examples() {
        let g = GasEnvironment {
            temperature_k: 300.0,
            ..GasEnvironment::air(1.0)
        };
        let l = mean_free_path(&g);
        assert!((l - 68e-6).abs() < 0.05 * 68e-6, "{l}");
        let l2 = mean_free_path(&g.with_pressure(2.0));
        assert!((l2 - l / 2.0).abs() < 1e-18);
        let hot = GasEnvironment {
            temperature_k: 600.0,
            ..g
        };
        assert!((mean_free_path(&hot) - 2.0 * l).abs() < 1e-18);
        assert!(mean_free_path(&g.with_pressure(0.0)).is_infinite());
    }

    #[test]
    fn knudsen_examples() {
        let g = GasEnvironment {
            temperature_k: 300.0,
            ..GasEnvironment::air(1.0)
        };
        let kn = knudsen(&g, &diamond());
        assert!((kn - 6.8).abs() < 0.35, "{kn}");
        assert!((knudsen(&g.with_pressure(2.0), &diamond()) - kn / 2.0).abs() < 1e-12);
        for p in [1.0, 0.5, 0.1, 1e-3] {
            for d in [1e-6, 5e-6, 10e-6] {
                let part = ParticleState::from_diameter(d, 3500.0, 1e-15).unwrap();
                assert!(knudsen(&g.with_pressure(p), &part) > 1.0);
            }
        }
    }

    #[test]
    fn absorbed_power_is_linear() {
        let a = AbsorptionModel::constant(1e-11, 1.0);
        assert_eq!(absorbed_power(&LaserBeam::green(0.0, 5e-6), &a), 0.0);
        let p1 = absorbed_power(&LaserBeam::green(1e-4, 5e-6), &a);
        let p2 = absorbed_power(&LaserBeam::green(2e-4, 5e-6), &a);
        assert!((p2 - 2.0 * p1).abs() < 1e-20);
        let half = AbsorptionModel::constant(1e-11, 0.5);
        assert!((absorbed_power(&LaserBeam::green(1e-4, 5e-6), &half) - 0.5 * p1).abs() < 1e-20);
    }

    #[test]
    fn micromotion_overlap_hook() {
        let a = AbsorptionModel {
            effective_cross_section_m2: 1e-11,
            intensity_overlap: IntensityOverlap::Micromotion(Arc::new(|amp| {
                (-2.0 * (amp / 5e-6).powi(2)).exp()
            })),
        };
        let b = LaserBeam::green(1e-4, 5e-6);
        let still = absorbed_power_with_micromotion(&b, &a, 0.0);
        let shaking = absorbed_power_with_micromotion(&b, &a, 5e-6);
        assert!((shaking / still - (-2f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn gas_cooling_examples() {
        let g = GasEnvironment::air(1.0);
        let p = diamond();
        assert_eq!(gas_cooling_power(&g, &p, g.temperature_k).value, 0.0);
        let c1 = gas_cooling_power(&g, &p, 400.0).value;
        let c2 = gas_cooling_power(&g.with_pressure(2.0), &p, 400.0).value;
        assert!((c2 - 2.0 * c1).abs() < 1e-15 * c1.abs().max(1.0));
        assert!(c1 > 0.0);
        assert!(gas_cooling_power(&g, &p, 450.0).value > c1);
        assert!(gas_cooling_power(&g, &p, 250.0).value < 0.0);
        assert!(gas_cooling_power(&g, &p, 400.0).free_molecular);
        assert!(!gas_cooling_power(&g.with_pressure(1000.0), &p, 400.0).free_molecular);
    }

    #[test]
    fn radiative_examples() {
        let p = diamond();
        assert_eq!(radiative_power(&p, 300.0, 300.0, 0.1), 0.0);
        let r1 = radiative_power(&p, 470.0, 298.0, 0.1);
        let r2 = radiative_power(&p, 470.0, 298.0, 0.2);
        assert!((r2 - 2.0 * r1).abs() < 1e-20);
        assert!(r1 > 1e-9 && r1 < 1e-6, "{r1}");
        // gas cooling dominates at 0.1 mbar already
        let g = gas_cooling_power(&GasEnvironment::air(0.1), &p, 470.0).value;
        assert!(g > 10.0 * r1);
    }

    #[test]
    fn steady_state_zero_power_is_gas_temperature() {
        let t = steady_state_temperature(
            &LaserBeam::green(0.0, 5e-6),
            &AbsorptionModel::default(),
            &GasEnvironment::air(1.0),
            &diamond(),
            0.1,
        )
        .unwrap();
        assert_eq!(t, 298.0);
    }

    #[test]
    fn shipped_cross_section_reaches_470k() {
        let t = steady_state_temperature(
            &LaserBeam::green(700e-6, DEFAULT_WAIST_M),
            &AbsorptionModel::default(),
            &GasEnvironment::air(1.0),
            &diamond(),
            DEFAULT_EMISSIVITY,
        )
        .unwrap();
        assert!((t - 470.0).abs() < 1e-3, "{t}");
        let solved = calibrate_cross_section(
            470.0,
            &LaserBeam::green(700e-6, DEFAULT_WAIST_M),
            DEFAULT_OVERLAP,
            &GasEnvironment::air(1.0),
            &diamond(),
            DEFAULT_EMISSIVITY,
        )
        .unwrap();
        assert!((solved / DEFAULT_CROSS_SECTION_M2 - 1.0).abs() < 1e-9, "{solved:e}");
    }

    #[test]
    fn steady_state_energy_balance() {
        let b = LaserBeam::green(400e-6, 5e-6);
        let a = AbsorptionModel::default();
        let g = GasEnvironment::air(0.5);
        let p = diamond();
        let t = steady_state_temperature(&b, &a, &g, &p, 0.1).unwrap();
        let p_abs = absorbed_power(&b, &a);
        let res = gas_cooling_power(&g, &p, t).value + radiative_power(&p, t, 298.0, 0.1) - p_abs;
        assert!(res.abs() < 1e-12 * p_abs, "{res}");
    }

    #[test]
    fn thermal_runaway_and_no_cooling() {
        let p = diamond();
        let big = AbsorptionModel::constant(1e-9, 1.0);
        let err = steady_state_temperature(&LaserBeam::green(1.0, 1e-6), &big, &GasEnvironment::air(1e-4), &p, 0.0);
        assert!(matches!(err, Err(Error::ThermalRunaway { .. })));
        let err = steady_state_temperature(
            &LaserBeam::green(1e-4, 5e-6),
            &AbsorptionModel::default(),
            &GasEnvironment::air(0.0),
            &p,
            0.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn small_signal_inverse_pressure_shape() {
        let b = LaserBeam::green(5e-6, 5e-6);
        let a = AbsorptionModel::default();
        let p = diamond();
        let dt: Vec<f64> = [0.2, 0.5, 1.0]
            .iter()
            .map(|&pr| (steady_state_temperature(&b, &a, &GasEnvironment::air(pr), &p, 0.0).unwrap() - 298.0) * pr)
            .collect();
        for w in dt.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 1e-9, "{dt:?}");
        }
        // closed form in the linear gas regime
        let k = gas_conductance(&GasEnvironment::air(1.0), &p);
        assert!((dt[2] - absorbed_power(&b, &a) / k).abs() < 1e-9);
    }

    #[test]
    fn calibrate_linear_power_single_point() {
        let c = calibrate_empirical(
            &[CalibrationPoint {
                control: 700e-6,
                temperature_k: 470.0,
            }],
            EmpiricalMode::LinearPower,
        )
        .unwrap();
        // 0.2457 K/µW
        assert!((c.model.coefficient * 1e-6 - 0.2457).abs() < 5e-5);
        assert_eq!(c.model.predict(0.0), 298.0);
        assert!(c.residual_rms_k < 1e-9);
        assert!(calibrate_empirical(
            &[CalibrationPoint {
                control: 0.0,
                temperature_k: 300.0
            }],
            EmpiricalMode::LinearPower
        )
        .is_err());
    }

    #[test]
    fn calibrate_inverse_pressure_two_points() {
        let pts = [
            CalibrationPoint {
                control: 0.2,
                temperature_k: 390.0,
            },
            CalibrationPoint {
                control: 0.9,
                temperature_k: 320.0,
            },
        ];
        let c = calibrate_empirical(&pts, EmpiricalMode::InversePressure).unwrap();
        for p in pts {
            assert!((c.model.predict(p.control) - p.temperature_k).abs() < 1e-9);
        }
        let same = [pts[0], pts[0]];
        assert!(calibrate_empirical(&same, EmpiricalMode::InversePressure).is_err());
        assert!(calibrate_empirical(&pts[..1], EmpiricalMode::InversePressure).is_err());
    }

    #[test]
    fn calibration_file_round_trip() {
        let text = r#"{"mode":"linear_power","points":[{"control":0.0007,"temperature_k":470.0}]}"#;
        let f: CalibrationFile = serde_json::from_str(text).unwrap();
        assert_eq!(f.mode, EmpiricalMode::LinearPower);
        assert!(serde_json::from_str::<CalibrationFile>(r#"{"mode":"linear_power","points":[],"x":1}"#).is_err());
    }
}
