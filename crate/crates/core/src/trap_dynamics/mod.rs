//! Damped Mathieu dynamics of a charged particle in an ideal quadrupole
//! (ring Paul–Straubel) trap.
//!
//! Field convention: with `V(t) = v_dc + (v_pp/2)·cos(Ωt)` the trap field is
//!
//! ```text
//! E(r, t) = κ V(t) / (2 r0²) · (x, y, −2z) + E_stray
//! ```
//!
//! so the axial Mathieu parameter is `q = 2κ|Q|(v_pp/2) / (m Ω² r0²)` and the
//! radial one is `−q/2`. Note that `v_pp` is **peak-to-peak**; only half of
//! it enters the field amplitude.

mod analysis;
mod equilibrium;
mod floquet;
mod integrate;
mod mathieu;

use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::constants::{DIAMOND_DENSITY, STANDARD_GRAVITY};
use crate::error::{Error, Result};
use crate::thermal_model::{knudsen, GasEnvironment, RegimeValue};

pub use analysis::{analytic_secular_frequency, micromotion_amplitude, secular_frequency, secular_frequency_axis, MicromotionReport};
pub use equilibrium::{equilibrium_displacement, EquilibriumReport};
pub use floquet::{
    charge_to_mass_from_instability, classify_axis, floquet_secular_frequency, monodromy, stability_boundary,
    stability_classify, AxisStability, StabilityReport,
};
pub use integrate::{escapes, integrate_trajectory, Trajectory, TrajectoryStatus};
pub use mathieu::{iso_q_ramp, mathieu_q, AxisParams, MathieuParams};

pub type Vec3 = Vector3<f64>;

/// Escape radius in units of `r0`.
pub const ESCAPE_RADIUS_R0: f64 = 100.0;
/// Minimum integrator steps per drive period.
pub const MIN_STEPS_PER_PERIOD: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    /// Peak-to-peak drive voltage, V.
    pub v_pp: f64,
    /// Drive angular frequency Ω, rad/s.
    pub omega_drive: f64,
    /// Characteristic radius, m.
    pub r0: f64,
    /// Geometric efficiency of the electrode set; 1 for an ideal quadrupole,
    /// below 1 for real ring traps.
    pub kappa: f64,
    pub v_dc: f64,
    /// Stray static field, V/m.
    pub dc_field: Vec3,
}

impl TrapConfig {
    /// Ring trap of 700 µm inner radius with κ = 1.
    pub fn ring(v_pp: f64, drive_hz: f64) -> Self {
        TrapConfig {
            v_pp,
            omega_drive: 2.0 * PI * drive_hz,
            r0: 700e-6,
            kappa: 1.0,
            v_dc: 0.0,
            dc_field: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=10_000.0).contains(&self.v_pp) {
            return Err(Error::OutOfRange {
                quantity: "v_pp (V)",
                value: self.v_pp,
                min: 0.0,
                max: 10_000.0,
            });
        }
        if !(self.omega_drive > 0.0 && self.omega_drive.is_finite()) {
            return Err(Error::invalid("omega_drive", "must be > 0"));
        }
        if !(self.r0 > 0.0) {
            return Err(Error::invalid("r0", "must be > 0"));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(Error::invalid("kappa", "must lie in (0, 1]"));
        }
        if !self.v_dc.is_finite() || !self.dc_field.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("static field", "must be finite"));
        }
        Ok(())
    }

    pub fn drive_hz(&self) -> f64 {
        self.omega_drive / (2.0 * PI)
    }

    pub fn drive_period(&self) -> f64 {
        2.0 * PI / self.omega_drive
    }

    /// Instantaneous voltage `v_dc + (v_pp/2) cos(Ωt)`.
    pub fn voltage(&self, t: f64) -> f64 {
        self.v_dc + 0.5 * self.v_pp * (self.omega_drive * t).cos()
    }

    pub fn field(&self, r: &Vec3, t: f64) -> Vec3 {
        let s = self.kappa * self.voltage(t) / (2.0 * self.r0 * self.r0);
        Vec3::new(s * r.x, s * r.y, -2.0 * s * r.z) + self.dc_field
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub mass: f64,
    /// Coulombs. Positive charge is assumed by the Mathieu formulas, which use
    /// `|charge|`.
    pub charge: f64,
    pub diameter: f64,
    pub density: f64,
    pub position: Vec3,
    pub velocity: Vec3,
}

impl ParticleState {
    pub fn new(mass: f64, charge: f64, diameter: f64, density: f64) -> Result<Self> {
        let p = ParticleState {
            mass,
            charge,
            diameter,
            density,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Sphere of the given diameter and density; mass follows.
    pub fn from_diameter(diameter: f64, density: f64, charge: f64) -> Result<Self> {
        Self::new(sphere_mass(diameter, density), charge, diameter, density)
    }

    /// 10 µm diamond sphere with a charge-to-mass ratio of 4.39e-3 C/kg.
    pub fn ten_micron_diamond() -> Self {
        let mass = sphere_mass(10e-6, DIAMOND_DENSITY);
        ParticleState {
            mass,
            charge: 4.39e-3 * mass,
            diameter: 10e-6,
            density: DIAMOND_DENSITY,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
        }
    }

    pub fn with_charge_to_mass(self, q_over_m: f64) -> Self {
        ParticleState {
            charge: q_over_m * self.mass,
            ..self
        }
    }

    pub fn at(self, position: Vec3, velocity: Vec3) -> Self {
        ParticleState {
            position,
            velocity,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.diameter > 0.0 && self.density > 0.0) {
            return Err(Error::invalid("particle", "mass, diameter and density must be > 0"));
        }
        let expected = sphere_mass(self.diameter, self.density);
        if ((self.mass - expected) / expected).abs() > 1e-9 {
            return Err(Error::invalid(
                "particle mass",
                format!("{:e} kg inconsistent with density·(π/6)·d³ = {expected:e} kg", self.mass),
            ));
        }
        if !self.charge.is_finite() {
            return Err(Error::invalid("charge", "must be finite"));
        }
        Ok(())
    }

    pub fn charge_to_mass(&self) -> f64 {
        self.charge / self.mass
    }

    pub fn surface_area(&self) -> f64 {
        PI * self.diameter * self.diameter
    }
}

pub fn sphere_mass(diameter: f64, density: f64) -> f64 {
    density * PI / 6.0 * diameter.powi(3)
}

/// Static forcing applied on top of the trap field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    /// Gravity along −z.
    pub gravity: bool,
    pub static_force: Vec3,
}

impl Forcing {
    pub const NONE: Forcing = Forcing {
        gravity: false,
        static_force: Vec3::new(0.0, 0.0, 0.0),
    };

    pub fn force(static_force: Vec3) -> Self {
        Forcing {
            gravity: false,
            static_force,
        }
    }

    /// Total static force on the particle, excluding the stray field.
    pub fn total(&self, p: &ParticleState) -> Vec3 {
        let g = if self.gravity {
            Vec3::new(0.0, 0.0, -p.mass * STANDARD_GRAVITY)
        } else {
            Vec3::zeros()
        };
        self.static_force + g
    }
}

/// Epstein free-molecular drag rate `γ = (8δ/π) · p / (ρ_p · R · v̄)`, 1/s.
/// Flagged when `Kn < 1` (the value is still returned).
pub fn damping_rate(p: &ParticleState, g: &GasEnvironment) -> RegimeValue {
    let c_drag = 8.0 * g.reflection.epstein_delta() / PI;
    let radius = 0.5 * p.diameter;
    let value = if g.pressure_mbar > 0.0 {
        c_drag * g.pressure_pa() / (p.density * radius * g.mean_speed())
    } else {
        0.0
    };
    RegimeValue {
        value,
        free_molecular: knudsen(g, p) >= 1.0,
    }
}

/// Normalised damping `γ̃ = 2γ/Ω` used by the Floquet analysis.
pub fn normalized_damping(gamma: f64, omega_drive: f64) -> f64 {
    2.0 * gamma / omega_drive
}

/// Gas at the pressure that gives the requested damping rate.
pub fn gas_for_damping(p: &ParticleState, template: &GasEnvironment, gamma: f64) -> GasEnvironment {
    let per_mbar = damping_rate(p, &template.with_pressure(1.0)).value;
    template.with_pressure(gamma / per_mbar)
}
