use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{AIR_MOLECULE_DIAMETER, AIR_MOLECULE_MASS, DIAMOND_DENSITY, NV_GYROMAGNETIC_GHZ_PER_T};
use crate::error::{Error, Result};
use crate::odmr::{ContrastModel, FrequencyGrid, LineShape, NoiseKind, NoiseSpec, OdmrLine};
use crate::spin_model::{MagneticField, SpinParams, ZfsCoefficients};
use crate::thermal_model::{
    AbsorptionModel, DragReflection, GasEnvironment, LaserBeam, DEFAULT_CROSS_SECTION_M2, DEFAULT_EMISSIVITY,
    DEFAULT_OVERLAP, DEFAULT_WAIST_M,
};
use crate::trap_dynamics::{ParticleState, TrapConfig, Vec3};

/// Overlap that puts the default particle at 390 K under 40 µW at 0.2 mbar
/// with the shipped cross-section (the pressure-sweep calibration).
pub const PRESSURE_SWEEP_OVERLAP: f64 = 0.949_319_530_788;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SweepPower,
    SweepPressure,
    Preselect,
    Pumpdown,
    StabilityMap,
    SynthOdmr,
    FitOdmr,
    InvertTemp,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::SweepPower,
        Scenario::SweepPressure,
        Scenario::Preselect,
        Scenario::Pumpdown,
        Scenario::StabilityMap,
        Scenario::SynthOdmr,
        Scenario::FitOdmr,
        Scenario::InvertTemp,
    ];

    /// CLI subcommand name (`sweep-power`, ...).
    pub fn command(self) -> &'static str {
        match self {
            Scenario::SweepPower => "sweep-power",
            Scenario::SweepPressure => "sweep-pressure",
            Scenario::Preselect => "preselect",
            Scenario::Pumpdown => "pumpdown",
            Scenario::StabilityMap => "stability-map",
            Scenario::SynthOdmr => "synth-odmr",
            Scenario::FitOdmr => "fit-odmr",
            Scenario::InvertTemp => "invert-temp",
        }
    }

    pub fn from_command(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|c| c.command() == s)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.command())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub v_pp_volts: f64,
    pub drive_hz: f64,
    pub r0_m: f64,
    pub kappa: f64,
    pub v_dc_volts: f64,
    pub stray_field_v_per_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSection {
    pub diameter_m: f64,
    pub density_kg_per_m3: f64,
    pub charge_to_mass_c_per_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasSection {
    pub pressure_mbar: f64,
    pub temperature_k: f64,
    pub molecule_mass_kg: f64,
    pub molecule_diameter_m: f64,
    pub accommodation: f64,
    pub heat_capacity_ratio: f64,
    pub reflection: DragReflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub power_w: f64,
    pub waist_m: f64,
    pub wavelength_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionSection {
    pub cross_section_m2: f64,
    pub intensity_overlap: f64,
    pub emissivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    pub e_strain_ghz: f64,
    pub gyromagnetic_ghz_per_t: f64,
    /// Field along the NV axis, T.
    pub bz_t: f64,
    /// Subtracted from fitted `D` before inversion, GHz.
    pub d_offset_ghz: f64,
    pub a0_ghz: f64,
    pub a1_ghz_per_k: f64,
    pub a2_ghz_per_k2: f64,
    pub a3_ghz_per_k3: f64,
    pub t_min_k: f64,
    pub t_max_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrSection {
    pub s_max_cps: f64,
    pub sigma_ghz: f64,
    pub f_start_ghz: f64,
    pub f_stop_ghz: f64,
    pub n_points: usize,
    pub noise: NoiseKind,
    /// Relative to `s_max_cps`.
    pub noise_scale: f64,
    pub line_shape: LineShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastSection {
    pub c_ref: f64,
    pub t_ref_k: f64,
    pub slope_per_k: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSweepSection {
    pub powers_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureSweepSection {
    /// Descending.
    pub pressures_mbar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnsetMethod {
    /// Floquet classification of the (damped) Mathieu equation.
    Floquet,
    /// Integrate the particle and look for escape.
    Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreselectSection {
    pub v_pp_volts: f64,
    /// Sweep runs from `f_start_hz` down to `f_stop_hz`.
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_frequencies: usize,
    pub accept_hz: f64,
    pub method: OnsetMethod,
    /// Trajectory method only: drive periods simulated per frequency.
    pub trajectory_periods: usize,
    /// Trajectory method only: initial axial offset, m.
    pub initial_offset_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpdownSection {
    pub v_end_volts: f64,
    pub ramp_steps: usize,
    /// Pressure schedule after the ramp, descending.
    pub pressures_mbar: Vec<f64>,
    /// Time spent at each pressure, s.
    pub dwell_s: f64,
    pub stray_force_n: [f64; 3],
    pub gravity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityMapSection {
    pub q_min: f64,
    pub q_max: f64,
    pub n_q: usize,
    pub a_min: f64,
    pub a_max: f64,
    pub n_a: usize,
    pub gamma_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub d_zfs_ghz: f64,
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Spectrum CSV, relative to the config file.
    pub spectrum_path: String,
    pub line_shape: LineShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertSection {
    /// Either a fitted `D` ...
    pub d_ghz: Option<f64>,
    pub d_sigma_ghz: f64,
    /// ... or a spectrum to fit first, relative to the config file.
    pub spectrum_path: Option<String>,
}

/// Fully resolved protocol configuration. Every key carries its unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub trap: TrapSection,
    pub particle: ParticleSection,
    pub gas: GasSection,
    pub beam: BeamSection,
    pub absorption: AbsorptionSection,
    pub spin: SpinSection,
    pub odmr: OdmrSection,
    pub contrast: ContrastSection,
    pub sweep_power: PowerSweepSection,
    pub sweep_pressure: PressureSweepSection,
    pub preselect: PreselectSection,
    pub pumpdown: PumpdownSection,
    pub stability_map: StabilityMapSection,
    pub synth: SynthSection,
    pub fit: FitSection,
    pub invert: InvertSection,
    /// Directory relative paths are resolved against; not serialised.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl ProtocolConfig {
    /// Defaults for a scenario. The pressure sweep carries its own beam,
    /// overlap and contrast calibration; everything else shares one set.
    pub fn defaults(scenario: Scenario) -> Self {
        let zfs = ZfsCoefficients::default();
        let grid = FrequencyGrid::default();
        let line = OdmrLine::default();
        let contrast = ContrastModel::default();
        let mut c = ProtocolConfig {
            scenario,
            seed: 1,
            trap: TrapSection {
                v_pp_volts: 4000.0,
                drive_hz: 2000.0,
                r0_m: 700e-6,
                kappa: 1.0,
                v_dc_volts: 0.0,
                stray_field_v_per_m: [0.0; 3],
            },
            particle: ParticleSection {
                diameter_m: 10e-6,
                density_kg_per_m3: DIAMOND_DENSITY,
                charge_to_mass_c_per_kg: 4.39e-3,
            },
            gas: GasSection {
                pressure_mbar: 1.0,
                temperature_k: 298.0,
                molecule_mass_kg: AIR_MOLECULE_MASS,
                molecule_diameter_m: AIR_MOLECULE_DIAMETER,
                accommodation: 1.0,
                heat_capacity_ratio: 1.4,
                reflection: DragReflection::Diffuse,
            },
            beam: BeamSection {
                power_w: 450e-6,
                waist_m: DEFAULT_WAIST_M,
                wavelength_m: 532e-9,
            },
            absorption: AbsorptionSection {
                cross_section_m2: DEFAULT_CROSS_SECTION_M2,
                intensity_overlap: DEFAULT_OVERLAP,
                emissivity: DEFAULT_EMISSIVITY,
            },
            spin: SpinSection {
                e_strain_ghz: 0.005,
                gyromagnetic_ghz_per_t: NV_GYROMAGNETIC_GHZ_PER_T,
                bz_t: 0.0,
                d_offset_ghz: 0.0,
                a0_ghz: zfs.a0,
                a1_ghz_per_k: zfs.a1,
                a2_ghz_per_k2: zfs.a2,
                a3_ghz_per_k3: zfs.a3,
                t_min_k: zfs.valid_range.0,
                t_max_k: zfs.valid_range.1,
            },
            odmr: OdmrSection {
                s_max_cps: line.s_max,
                sigma_ghz: line.sigma,
                f_start_ghz: grid.f_start,
                f_stop_ghz: grid.f_stop,
                n_points: grid.n_points,
                noise: NoiseKind::Gaussian,
                noise_scale: 0.01,
                line_shape: LineShape::Gaussian,
            },
            contrast: ContrastSection {
                c_ref: contrast.c_ref,
                t_ref_k: contrast.t_ref,
                slope_per_k: contrast.slope,
                floor: contrast.floor,
            },
            sweep_power: PowerSweepSection {
                powers_w: (0..=14).map(|i| (50 * i) as f64 / 1e6).collect(),
            },
            sweep_pressure: PressureSweepSection {
                pressures_mbar: (2..=9).rev().map(|i| i as f64 / 10.0).collect(),
            },
            preselect: PreselectSection {
                v_pp_volts: 4000.0,
                f_start_hz: 3000.0,
                f_stop_hz: 100.0,
                n_frequencies: 59,
                accept_hz: 1000.0,
                method: OnsetMethod::Floquet,
                trajectory_periods: 400,
                initial_offset_m: 1e-6,
            },
            pumpdown: PumpdownSection {
                v_end_volts: 600.0,
                ramp_steps: 40,
                pressures_mbar: vec![1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01],
                dwell_s: 60.0,
                stray_force_n: [0.0, 0.0, 0.0],
                gravity: true,
            },
            stability_map: StabilityMapSection {
                q_min: 0.0,
                q_max: 1.2,
                n_q: 121,
                a_min: -0.3,
                a_max: 0.3,
                n_a: 61,
                gamma_norm: vec![0.0],
            },
            synth: SynthSection {
                d_zfs_ghz: 2.8558,
                contrast: 0.017,
            },
            fit: FitSection {
                spectrum_path: "spectrum.csv".into(),
                line_shape: LineShape::Gaussian,
            },
            invert: InvertSection {
                d_ghz: None,
                d_sigma_ghz: 0.0,
                spectrum_path: None,
            },
            base_dir: PathBuf::new(),
        };
        if scenario == Scenario::SweepPressure {
            c.beam.power_w = 40e-6;
            c.absorption.intensity_overlap = PRESSURE_SWEEP_OVERLAP;
            // 3.5 % near 0.9 mbar falling to 1.5 % at 390 K
            c.contrast = ContrastSection {
                c_ref: 0.035,
                t_ref_k: 318.0,
                slope_per_k: 0.02 / 72.0,
                floor: 0.005,
            };
        }
        c
    }

    /// Parse TOML over the scenario defaults. Keys absent from the file keep
    /// their default; keys the defaults do not know are rejected.
    pub fn from_toml_str(text: &str, scenario: Scenario) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        if let Some(s) = user.get("scenario") {
            let named = s.as_str().and_then(|s| Scenario::ALL.into_iter().find(|c| snake(*c) == s || c.command() == s));
            match named {
                Some(n) if n == scenario => {}
                Some(n) => return Err(Error::Config(format!("config is for scenario `{}`, not `{}`", snake(n), snake(scenario)))),
                None => return Err(Error::Config(format!("unknown scenario {s}"))),
            }
        }
        let defaults = ProtocolConfig::defaults(scenario);
        let mut merged = toml::Table::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user, "")?;
        merged.insert("scenario".into(), toml::Value::String(snake(scenario).into()));
        let cfg: ProtocolConfig = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, scenario: Scenario) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, scenario)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn trap_config(&self) -> TrapConfig {
        let t = &self.trap;
        TrapConfig {
            v_pp: t.v_pp_volts,
            omega_drive: 2.0 * std::f64::consts::PI * t.drive_hz,
            r0: t.r0_m,
            kappa: t.kappa,
            v_dc: t.v_dc_volts,
            dc_field: Vec3::from(t.stray_field_v_per_m),
        }
    }

    pub fn particle(&self) -> Result<ParticleState> {
        let p = &self.particle;
        Ok(ParticleState::from_diameter(p.diameter_m, p.density_kg_per_m3, 1.0)?.with_charge_to_mass(p.charge_to_mass_c_per_kg))
    }

    pub fn gas(&self) -> GasEnvironment {
        let g = &self.gas;
        GasEnvironment {
            pressure_mbar: g.pressure_mbar,
            temperature_k: g.temperature_k,
            molecule_mass_kg: g.molecule_mass_kg,
            molecule_diameter_m: g.molecule_diameter_m,
            accommodation: g.accommodation,
            heat_capacity_ratio: g.heat_capacity_ratio,
            reflection: g.reflection,
        }
    }

    pub fn beam(&self, power_w: f64) -> LaserBeam {
        LaserBeam {
            power_w,
            waist_m: self.beam.waist_m,
            wavelength_m: self.beam.wavelength_m,
        }
    }

    pub fn absorption(&self) -> AbsorptionModel {
        AbsorptionModel::constant(self.absorption.cross_section_m2, self.absorption.intensity_overlap)
    }

    pub fn spin_params(&self, d_zfs: f64) -> Result<SpinParams> {
        SpinParams::with_gyromagnetic_ratio(d_zfs, self.spin.e_strain_ghz, self.spin.gyromagnetic_ghz_per_t)
    }

    pub fn field(&self) -> Result<MagneticField> {
        MagneticField::new(0.0, 0.0, self.spin.bz_t)
    }

    pub fn zfs(&self) -> ZfsCoefficients {
        let s = &self.spin;
        ZfsCoefficients {
            a0: s.a0_ghz,
            a1: s.a1_ghz_per_k,
            a2: s.a2_ghz_per_k2,
            a3: s.a3_ghz_per_k3,
            valid_range: (s.t_min_k, s.t_max_k),
        }
    }

    pub fn line(&self, contrast: f64) -> OdmrLine {
        OdmrLine {
            contrast,
            s_max: self.odmr.s_max_cps,
            sigma: self.odmr.sigma_ghz,
            line_shape: self.odmr.line_shape,
        }
    }

    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid {
            f_start: self.odmr.f_start_ghz,
            f_stop: self.odmr.f_stop_ghz,
            n_points: self.odmr.n_points,
        }
    }

    /// Noise for row `index`; each row gets its own stream derived from the
    /// run seed so results do not depend on execution order.
    pub fn noise(&self, index: usize) -> NoiseSpec {
        NoiseSpec {
            kind: self.odmr.noise,
            seed: self.seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            scale: self.odmr.noise_scale,
        }
    }

    pub fn contrast_model(&self) -> ContrastModel {
        let c = &self.contrast;
        ContrastModel {
            c_ref: c.c_ref,
            t_ref: c.t_ref_k,
            slope: c.slope_per_k,
            floor: c.floor,
        }
    }

    /// Checks the shared sections plus the one the scenario uses.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.trap_config().validate().map_err(cfg)?;
        self.particle().map_err(cfg)?;
        self.gas().validate().map_err(cfg)?;
        self.beam(self.beam.power_w).validate().map_err(cfg)?;
        self.absorption().validate().map_err(cfg)?;
        if !(self.absorption.emissivity >= 0.0) {
            return Err(Error::Config("absorption.emissivity must be >= 0".into()));
        }
        self.zfs().validate().map_err(cfg)?;
        self.contrast_model().validate().map_err(cfg)?;
        self.field().map_err(cfg)?;
        if !(self.odmr.n_points >= 16 && self.odmr.f_start_ghz < self.odmr.f_stop_ghz) {
            return Err(Error::Config("odmr grid needs n_points >= 16 and f_start_ghz < f_stop_ghz".into()));
        }
        if !(self.odmr.sigma_ghz > 0.0 && self.odmr.s_max_cps > 0.0 && self.odmr.noise_scale >= 0.0) {
            return Err(Error::Config("odmr sigma_ghz and s_max_cps must be > 0, noise_scale >= 0".into()));
        }
        match self.scenario {
            Scenario::SweepPower => monotone("sweep_power.powers_w", &self.sweep_power.powers_w, false, true),
            Scenario::SweepPressure => monotone("sweep_pressure.pressures_mbar", &self.sweep_pressure.pressures_mbar, true, false),
            Scenario::Preselect => {
                let s = &self.preselect;
                if !(s.f_start_hz > s.f_stop_hz && s.f_stop_hz > 0.0 && s.n_frequencies >= 2) {
                    return Err(Error::Config("preselect needs f_start_hz > f_stop_hz > 0 and n_frequencies >= 2".into()));
                }
                if !(s.v_pp_volts > 0.0 && s.v_pp_volts <= 10_000.0) {
                    return Err(Error::Config("preselect.v_pp_volts must lie in (0, 10000]".into()));
                }
                Ok(())
            }
            Scenario::Pumpdown => {
                let s = &self.pumpdown;
                if !(s.v_end_volts > 0.0 && s.ramp_steps >= 1 && s.dwell_s >= 0.0) {
                    return Err(Error::Config("pumpdown needs v_end_volts > 0, ramp_steps >= 1, dwell_s >= 0".into()));
                }
                monotone("pumpdown.pressures_mbar", &s.pressures_mbar, true, false)
            }
            Scenario::StabilityMap => {
                let s = &self.stability_map;
                if !(s.n_q >= 1 && s.n_a >= 1 && s.q_min <= s.q_max && s.a_min <= s.a_max && !s.gamma_norm.is_empty()) {
                    return Err(Error::Config("stability_map needs n_q, n_a >= 1, ordered ranges and gamma_norm values".into()));
                }
                if s.gamma_norm.iter().any(|g| !(*g >= 0.0)) {
                    return Err(Error::Config("stability_map.gamma_norm must be >= 0".into()));
                }
                Ok(())
            }
            Scenario::SynthOdmr => {
                self.spin_params(self.synth.d_zfs_ghz).map_err(cfg)?;
                if !(0.0..=1.0).contains(&self.synth.contrast) {
                    return Err(Error::Config("synth.contrast must lie in [0, 1]".into()));
                }
                Ok(())
            }
            Scenario::FitOdmr => Ok(()),
            Scenario::InvertTemp => {
                if self.invert.d_ghz.is_none() == self.invert.spectrum_path.is_none() {
                    return Err(Error::Config("invert needs exactly one of d_ghz or spectrum_path".into()));
                }
                Ok(())
            }
        }
    }

    /// Stability-map grid points `(q, a)` in row-major order (a outer).
    pub fn map_points(&self) -> Vec<(f64, f64)> {
        let s = &self.stability_map;
        let qs = if s.n_q == 1 { vec![s.q_min] } else { linspace(s.q_min, s.q_max, s.n_q) };
        let as_ = if s.n_a == 1 { vec![s.a_min] } else { linspace(s.a_min, s.a_max, s.n_a) };
        as_.iter().flat_map(|&a| qs.iter().map(move |&q| (q, a))).collect()
    }
}

fn snake(s: Scenario) -> &'static str {
    match s {
        Scenario::SweepPower => "sweep_power",
        Scenario::SweepPressure => "sweep_pressure",
        Scenario::Preselect => "preselect",
        Scenario::Pumpdown => "pumpdown",
        Scenario::StabilityMap => "stability_map",
        Scenario::SynthOdmr => "synth_odmr",
        Scenario::FitOdmr => "fit_odmr",
        Scenario::InvertTemp => "invert_temp",
    }
}

fn monotone(name: &str, xs: &[f64], descending: bool, allow_zero: bool) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    let ok = xs.windows(2).all(|w| if descending { w[1] < w[0] } else { w[1] > w[0] });
    if !ok {
        let dir = if descending { "decreasing" } else { "increasing" };
        return Err(Error::Config(format!("{name} must be strictly {dir}")));
    }
    let bad = xs.iter().any(|x| !x.is_finite() || *x < 0.0 || (!allow_zero && *x == 0.0));
    if bad {
        return Err(Error::Config(format!("{name} must hold finite values {}", if allow_zero { ">= 0" } else { "> 0" })));
    }
    Ok(())
}

/// Overlay `user` onto `base`, refusing keys `base` lacks.
fn merge(base: &mut toml::Table, user: toml::Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if k == "scenario" && prefix.is_empty() {
            continue;
        }
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u, &path)?,
            (Some(toml::Value::Table(_)), _) => return Err(Error::Config(format!("`{path}` must be a table"))),
            (Some(slot), v) => *slot = v,
            (None, v) if is_optional(&path) => {
                base.insert(k, v);
            }
            (None, _) => return Err(Error::Config(format!("unknown key `{path}`"))),
        }
    }
    Ok(())
}

/// Keys that default to absent and are therefore missing from the template.
fn is_optional(path: &str) -> bool {
    matches!(path, "invert.d_ghz" | "invert.spectrum_path")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for s in Scenario::ALL {
            let c = ProtocolConfig::defaults(s);
            let text = c.to_toml().unwrap();
            let back = ProtocolConfig::from_toml_str(&text, s);
            match s {
                Scenario::InvertTemp => assert!(back.is_err()),
                _ => assert_eq!(back.unwrap(), c, "{s}"),
            }
        }
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = ProtocolConfig::from_toml_str("seed = 9\n[gas]\npressure_mbar = 0.5\n", Scenario::SweepPower).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.gas.pressure_mbar, 0.5);
        assert_eq!(c.gas.temperature_k, 298.0);
        let err = ProtocolConfig::from_toml_str("[gas]\npresure_mbar = 0.5\n", Scenario::SweepPower).unwrap_err();
        assert!(err.to_string().contains("gas.presure_mbar"), "{err}");
        assert!(ProtocolConfig::from_toml_str("bogus = 1\n", Scenario::SweepPower).is_err());
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        assert!(ProtocolConfig::from_toml_str("scenario = \"pumpdown\"\n", Scenario::SweepPower).is_err());
        ProtocolConfig::from_toml_str("scenario = \"sweep_power\"\n", Scenario::SweepPower).unwrap();
    }

    #[test]
    fn grids_must_be_monotone() {
        assert!(ProtocolConfig::from_toml_str("[sweep_power]\npowers_w = [1e-4, 5e-5]\n", Scenario::SweepPower).is_err());
        assert!(ProtocolConfig::from_toml_str("[sweep_power]\npowers_w = []\n", Scenario::SweepPower).is_err());
        assert!(ProtocolConfig::from_toml_str("[sweep_pressure]\npressures_mbar = [0.2, 0.9]\n", Scenario::SweepPressure).is_err());
    }

    #[test]
    fn invalid_physics_is_a_config_error() {
        let err = ProtocolConfig::from_toml_str("[gas]\naccommodation = 2.0\n", Scenario::SweepPower).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ProtocolConfig::from_toml_str("[spin]\na2_ghz_per_k2 = 1e-6\n", Scenario::SweepPower).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invert_needs_one_source() {
        ProtocolConfig::from_toml_str("[invert]\nd_ghz = 2.8558\n", Scenario::InvertTemp).unwrap();
        assert!(ProtocolConfig::from_toml_str("", Scenario::InvertTemp).is_err());
    }

    #[test]
    fn row_noise_streams_differ() {
        let c = ProtocolConfig::defaults(Scenario::SweepPower);
        assert_ne!(c.noise(0).seed, c.noise(1).seed);
        assert_eq!(c.noise(3), c.noise(3));
    }
}
