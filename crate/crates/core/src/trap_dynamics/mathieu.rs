use serde::Serialize;

use super::{ParticleState, TrapConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisParams {
    pub a: f64,
    pub q: f64,
}

/// Mathieu parameters of the axial (z) and radial (x, y) motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MathieuParams {
    pub axial: AxisParams,
    pub radial: AxisParams,
}

impl MathieuParams {
    /// Per-axis parameters in `(x, y, z)` order.
    pub fn per_axis(&self) -> [AxisParams; 3] {
        [self.radial, self.radial, self.axial]
    }
}

/// `q = 2κ|Q|(v_pp/2) / (m Ω² r0²)` on the axis, `−q/2` radially; the same
/// geometry gives `a_z = 4κ Q v_dc / (m Ω² r0²)` and `a_r = −a_z/2`.
pub fn mathieu_q(t: &TrapConfig, p: &ParticleState) -> MathieuParams {
    let scale = t.kappa * p.charge.abs() / (p.mass * t.omega_drive.powi(2) * t.r0.powi(2));
    let q = 2.0 * scale * 0.5 * t.v_pp;
    let a = 4.0 * scale * t.v_dc;
    MathieuParams {
        axial: AxisParams { a, q },
        radial: AxisParams {
            a: -0.5 * a,
            q: -0.5 * q,
        },
    }
}

/// Geometric voltage schedule from `start.v_pp` to `v_pp_end` with
/// `Ω_i = Ω_start·√(v_i / v_start)`, which keeps q fixed. The start point is
/// not included; the last entry is exactly `v_pp_end`.
pub fn iso_q_ramp(start: &TrapConfig, v_pp_end: f64, steps: usize) -> Result<Vec<TrapConfig>> {
    start.validate()?;
    if steps == 0 {
        return Err(Error::invalid("steps", "must be >= 1"));
    }
    if !(v_pp_end > 0.0) {
        return Err(Error::invalid("v_pp_end", "must be > 0"));
    }
    let ratio = v_pp_end / start.v_pp;
    Ok((1..=steps)
        .map(|i| {
            let v = if i == steps {
                v_pp_end
            } else {
                start.v_pp * ratio.powf(i as f64 / steps as f64)
            };
            TrapConfig {
                v_pp: v,
                omega_drive: start.omega_drive * (v / start.v_pp).sqrt(),
                ..*start
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn q_is_linear_in_voltage() {
        let p = ParticleState::ten_micron_diamond();
        let q1 = mathieu_q(&TrapConfig::ring(1000.0, 1000.0), &p).axial.q;
        let q2 = mathieu_q(&TrapConfig::ring(2000.0, 1000.0), &p).axial.q;
        assert!((q2 - 2.0 * q1).abs() < 1e-15);
    }

    #[test]
    fn iso_q_pair() {
        let p = ParticleState::ten_micron_diamond();
        let a = mathieu_q(&TrapConfig::ring(4000.0, 2000.0), &p).axial.q;
        let b = mathieu_q(&TrapConfig::ring(1000.0, 1000.0), &p).axial.q;
        assert!((a - b).abs() < 1e-15 * a);
    }

    #[test]
    fn ring_trap_charge_to_mass() {
        // q = 0.908 at 4000 V, 1 kHz, 700 µm, κ = 1 ⇔ Q/m = 4.39e-3 C/kg
        let qm = 0.908 * (2.0 * PI * 1000.0f64).powi(2) * 700e-6f64.powi(2) / (2.0 * 2000.0);
        assert!((qm - 4.39e-3).abs() < 0.005e-3, "{qm}");
        let p = ParticleState::ten_micron_diamond().with_charge_to_mass(qm);
        let q = mathieu_q(&TrapConfig::ring(4000.0, 1000.0), &p);
        assert!((q.axial.q - 0.908).abs() < 1e-12);
        assert!((q.radial.q + 0.454).abs() < 1e-12);
        assert_eq!(q.axial.a, 0.0);
    }

    #[test]
    fn dc_offset_gives_a() {
        let p = ParticleState::ten_micron_diamond();
        let t = TrapConfig {
            v_dc: 10.0,
            ..TrapConfig::ring(1000.0, 1000.0)
        };
        let m = mathieu_q(&t, &p);
        // a_z / q_z = 2 v_dc / (v_pp/2)
        assert!((m.axial.a / m.axial.q - 2.0 * 10.0 / 500.0).abs() < 1e-12);
        assert!((m.radial.a + 0.5 * m.axial.a).abs() < 1e-18);
    }

    #[test]
    fn ramp_keeps_q() {
        let p = ParticleState::ten_micron_diamond();
        let start = TrapConfig::ring(4000.0, 2000.0);
        let q0 = mathieu_q(&start, &p).axial.q;
        let ramp = iso_q_ramp(&start, 600.0, 10).unwrap();
        assert_eq!(ramp.len(), 10);
        for c in &ramp {
            assert!((mathieu_q(c, &p).axial.q / q0 - 1.0).abs() < 1e-12);
        }
        let end = ramp.last().unwrap();
        assert_eq!(end.v_pp, 600.0);
        assert!((end.omega_drive / (start.omega_drive * 0.15f64.sqrt()) - 1.0).abs() < 1e-15);

        let one = iso_q_ramp(&start, 600.0, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].v_pp, 600.0);

        let back = iso_q_ramp(end, 4000.0, 10).unwrap();
        let restored = back.last().unwrap();
        assert_eq!(restored.v_pp, start.v_pp);
        assert!((restored.omega_drive / start.omega_drive - 1.0).abs() <= 4.0 * f64::EPSILON);
        assert!(iso_q_ramp(&start, 600.0, 0).is_err());
    }
}
