//! One-period monodromy of the damped Mathieu equation
//!
//! ```text
//! u'' + γ̃ u' + (a − 2q cos 2ξ) u = 0,   ξ = Ωt/2,   γ̃ = 2γ/Ω
//! ```
//!
//! integrated with classical RK4 over ξ ∈ [0, π].

use std::f64::consts::PI;

use nalgebra::Matrix2;
use serde::Serialize;

use super::{damping_rate, mathieu_q, normalized_damping, AxisParams, ParticleState, TrapConfig};
use crate::error::{Error, Result};
use crate::thermal_model::GasEnvironment;

const RK4_STEPS: usize = 1000;
/// Allowed excess of the spectral radius over 1 when γ̃ = 0.
const UNDAMPED_TOLERANCE: f64 = 1e-9;
const BOUNDARY_TOLERANCE: f64 = 1e-6;
const Q_SEARCH_MAX: f64 = 50.0;

/// State-transition matrix over one drive period for `(u, u')`.
pub fn monodromy(a: f64, q: f64, gamma_norm: f64) -> Matrix2<f64> {
    let h = PI / RK4_STEPS as f64;
    let rhs = |xi: f64, s: [f64; 2]| -> [f64; 2] {
        [s[1], -gamma_norm * s[1] - (a - 2.0 * q * (2.0 * xi).cos()) * s[0]]
    };
    let mut cols = [[1.0, 0.0], [0.0, 1.0]];
    for col in cols.iter_mut() {
        let mut s = *col;
        for k in 0..RK4_STEPS {
            let xi = k as f64 * h;
            let k1 = rhs(xi, s);
            let k2 = rhs(xi + 0.5 * h, [s[0] + 0.5 * h * k1[0], s[1] + 0.5 * h * k1[1]]);
            let k3 = rhs(xi + 0.5 * h, [s[0] + 0.5 * h * k2[0], s[1] + 0.5 * h * k2[1]]);
            let k4 = rhs(xi + h, [s[0] + h * k3[0], s[1] + h * k3[1]]);
            for i in 0..2 {
                s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        *col = s;
    }
    Matrix2::new(cols[0][0], cols[1][0], cols[0][1], cols[1][1])
}

/// Floquet multipliers of a real 2×2 matrix as `(re, im)` pairs.
fn multipliers(m: &Matrix2<f64>) -> [(f64, f64); 2] {
    let half_tr = 0.5 * m.trace();
    let det = m.determinant();
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [(half_tr + s, 0.0), (half_tr - s, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [(half_tr, s), (half_tr, -s)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisStability {
    pub a: f64,
    pub q: f64,
    /// Largest Floquet multiplier magnitude.
    pub spectral_radius: f64,
    pub stable: bool,
}

pub fn classify_axis(a: f64, q: f64, gamma_norm: f64) -> AxisStability {
    let m = monodromy(a, q, gamma_norm);
    let rho = multipliers(&m)
        .iter()
        .map(|(re, im)| re.hypot(*im))
        .fold(0.0, f64::max);
    let stable = if gamma_norm > 0.0 {
        rho < 1.0
    } else {
        rho <= 1.0 + UNDAMPED_TOLERANCE
    };
    AxisStability {
        a,
        q,
        spectral_radius: rho,
        stable,
    }
}

/// Secular frequency (Hz) read off the phase of the Floquet multipliers:
/// `ω = β Ω / 2` with `πβ = arg μ`. Zero for real multipliers.
pub fn floquet_secular_frequency(axis: AxisParams, gamma_norm: f64, omega_drive: f64) -> f64 {
    let m = monodromy(axis.a, axis.q, gamma_norm);
    let (re, im) = multipliers(&m)[0];
    let beta = if im == 0.0 {
        if re >= 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        im.abs().atan2(re) / PI
    };
    beta * omega_drive / 2.0 / (2.0 * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub axial: AxisStability,
    pub radial: AxisStability,
    pub gamma_norm: f64,
    pub stable: bool,
    /// Ω / ω_sec of the axial motion, a diagnostic only; `None` when there is
    /// no oscillatory secular motion.
    pub drive_to_secular_ratio: Option<f64>,
}

pub fn stability_classify(t: &TrapConfig, p: &ParticleState, g: &GasEnvironment) -> StabilityReport {
    let m = mathieu_q(t, p);
    let gamma_norm = normalized_damping(damping_rate(p, g).value, t.omega_drive);
    let axial = classify_axis(m.axial.a, m.axial.q, gamma_norm);
    let radial = classify_axis(m.radial.a, m.radial.q, gamma_norm);
    let f_sec = floquet_secular_frequency(m.axial, gamma_norm, t.omega_drive);
    StabilityReport {
        axial,
        radial,
        gamma_norm,
        stable: axial.stable && radial.stable,
        drive_to_secular_ratio: (f_sec > 0.0).then(|| t.drive_hz() / f_sec),
    }
}

/// Upper edge of the first stable interval of `is_stable(q)`: scan up to the
/// first stable q, march to the first unstable one, then bisect.
fn first_region_upper_edge(is_stable: impl Fn(f64) -> bool) -> Result<f64> {
    let step = 0.01;
    let mut q = step;
    while !is_stable(q) {
        q += step;
        if q > Q_SEARCH_MAX {
            return Err(Error::Bracket("no stable q found; a outside the first stability region".into()));
        }
    }
    let mut lo = q;
    let mut hi = q + step;
    while is_stable(hi) {
        lo = hi;
        hi += step;
        if hi > Q_SEARCH_MAX {
            return Err(Error::Bracket(format!("still stable at q = {Q_SEARCH_MAX}")));
        }
    }
    while hi - lo > BOUNDARY_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if is_stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest q of the first stability region at fixed `a` and normalised
/// damping, to 1e-6.
pub fn stability_boundary(a: f64, gamma_norm: f64) -> Result<f64> {
    if !(gamma_norm >= 0.0) {
        return Err(Error::invalid("gamma_norm", "must be >= 0"));
    }
    first_region_upper_edge(|q| classify_axis(a, q, gamma_norm).stable)
}

/// Charge-to-mass ratio from the drive frequency at which the particle
/// becomes unstable at fixed `v_pp`:
/// `Q/m = q_max(γ̃)·Ω_c²·r0² / (2κ·v_pp/2)`.
///
/// The particle supplies only geometry for the damping rate; its charge is
/// ignored. A DC offset is handled by searching along the line
/// `a_z = 2q·v_dc/(v_pp/2)` with both axes required stable.
pub fn charge_to_mass_from_instability(omega_c: f64, t: &TrapConfig, gas: &GasEnvironment, particle: &ParticleState) -> Result<f64> {
    t.validate()?;
    if !(omega_c > 0.0) {
        return Err(Error::invalid("omega_c", "must be > 0"));
    }
    let gamma_norm = normalized_damping(damping_rate(particle, gas).value, omega_c);
    let a_per_q = 2.0 * t.v_dc / (0.5 * t.v_pp);
    let q_max = if t.v_dc == 0.0 {
        // radial q is half the axial one, the axis sets the edge
        stability_boundary(0.0, gamma_norm)?
    } else {
        first_region_upper_edge(|q| {
            classify_axis(a_per_q * q, q, gamma_norm).stable
                && classify_axis(-0.5 * a_per_q * q, -0.5 * q, gamma_norm).stable
        })?
    };
    Ok(q_max * omega_c * omega_c * t.r0 * t.r0 / (2.0 * t.kappa * 0.5 * t.v_pp))
}
