use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use super::integrate::{record, Integrator};
use super::{
    damping_rate, floquet_secular_frequency, mathieu_q, micromotion_amplitude, normalized_damping, stability_classify,
    Forcing, MicromotionReport, ParticleState, TrapConfig, Vec3,
};
use crate::error::{Error, Result};
use crate::thermal_model::GasEnvironment;

const STEPS_PER_PERIOD: usize = 100;
const TRANSIENT_SECULAR_PERIODS: f64 = 20.0;
const WINDOW_SECULAR_PERIODS: f64 = 20.0;
const MIN_WINDOW_PERIODS: usize = 20;
const MAX_PERIODS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// Time-averaged position, m.
    pub displacement: [f64; 3],
    pub magnitude: f64,
    /// Field-free pseudo-potential prediction `F/(m ω_sec²)` per axis, m.
    pub pseudo_potential: [f64; 3],
    pub micromotion: MicromotionReport,
    pub gamma: f64,
    pub gamma_norm: f64,
    /// Floquet secular frequency per axis, Hz.
    pub secular_hz: [f64; 3],
}

/// Time-averaged position of the particle on its driven periodic orbit under
/// a static force (plus the stray field of the trap).
///
/// The integrator's one-period map is affine in the state, so the periodic
/// orbit is found by solving `(I − M) s = b` with `M`, `b` obtained from the
/// integrator itself. The run then discards 20 secular periods and averages
/// over a whole number of drive periods spanning at least 20 more.
pub fn equilibrium_displacement(t: &TrapConfig, p: &ParticleState, g: &GasEnvironment, forcing: &Forcing) -> Result<EquilibriumReport> {
    let report = stability_classify(t, p, g);
    if !report.stable {
        return Err(Error::Unstable);
    }
    let gamma = damping_rate(p, g).value;
    let gamma_norm = normalized_damping(gamma, t.omega_drive);
    let dt = t.drive_period() / STEPS_PER_PERIOD as f64;
    let integ = Integrator::new(t, p, gamma, forcing, dt)?;

    let propagate = |s: &SVector<f64, 6>, with_force: bool| -> SVector<f64, 6> {
        let mut it = integ;
        if !with_force {
            it.static_accel = Vec3::zeros();
            it.trap.dc_field = Vec3::zeros();
        }
        let mut r = Vec3::new(s[0], s[1], s[2]);
        let mut v = Vec3::new(s[3], s[4], s[5]);
        for k in 0..STEPS_PER_PERIOD {
            it.step(&mut r, &mut v, k as f64 * dt);
        }
        SVector::<f64, 6>::from_column_slice(&[r.x, r.y, r.z, v.x, v.y, v.z])
    };
    let b = propagate(&SVector::zeros(), true);
    let mut m = SMatrix::<f64, 6, 6>::zeros();
    for j in 0..6 {
        let mut e = SVector::<f64, 6>::zeros();
        e[j] = 1.0;
        m.set_column(j, &propagate(&e, false));
    }
    let s0 = (SMatrix::<f64, 6, 6>::identity() - m)
        .lu()
        .solve(&b)
        .ok_or(Error::Unstable)?;

    let mathieu = mathieu_q(t, p);
    let axes = mathieu.per_axis();
    let secular_hz = axes.map(|ax| floquet_secular_frequency(ax, gamma_norm, t.omega_drive));
    let slowest = secular_hz.iter().cloned().fold(f64::INFINITY, f64::min);
    let periods_for = |n_secular: f64| -> usize {
        if slowest > 0.0 {
            ((n_secular * t.drive_hz() / slowest).ceil() as usize).min(MAX_PERIODS)
        } else {
            MAX_PERIODS / 10
        }
    };
    let transient = periods_for(TRANSIENT_SECULAR_PERIODS);
    let window = periods_for(WINDOW_SECULAR_PERIODS).max(MIN_WINDOW_PERIODS);

    let mut r = Vec3::new(s0[0], s0[1], s0[2]);
    let mut v = Vec3::new(s0[3], s0[4], s0[5]);
    let first = transient * STEPS_PER_PERIOD;
    for k in 0..first {
        integ.step(&mut r, &mut v, k as f64 * dt);
    }
    let tr = record(&integ, r, v, first, window * STEPS_PER_PERIOD, mathieu);
    if tr.escaped() {
        return Err(Error::Unstable);
    }
    // drop the duplicated end point so the window is exactly `window` periods
    let n = tr.positions.len() - 1;
    let mean = |axis: usize| tr.positions[..n].iter().map(|r| r[axis]).sum::<f64>() / n as f64;
    let displacement = [mean(0), mean(1), mean(2)];
    let micromotion = micromotion_amplitude(&tr)?;

    let force = forcing.total(p) + t.dc_field * p.charge;
    let quarter_omega2 = 0.25 * t.omega_drive * t.omega_drive;
    let mut pseudo_potential = [0.0; 3];
    for i in 0..3 {
        let w2 = (axes[i].a + 0.5 * axes[i].q * axes[i].q) * quarter_omega2;
        pseudo_potential[i] = force[i] / (p.mass * w2);
    }
    Ok(EquilibriumReport {
        displacement,
        magnitude: displacement.iter().map(|x| x * x).sum::<f64>().sqrt(),
        pseudo_potential,
        micromotion,
        gamma,
        gamma_norm,
        secular_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap_dynamics::gas_for_damping;

    fn setup(q: f64) -> (TrapConfig, ParticleState) {
        let p = ParticleState::ten_micron_diamond();
        let t = TrapConfig::ring(4000.0, 2000.0);
        let q0 = mathieu_q(&t, &p).axial.q;
        (TrapConfig { v_pp: 4000.0 * q / q0, ..t }, p)
    }

    #[test]
    fn no_force_no_displacement() {
        let (t, p) = setup(0.2);
        let r = equilibrium_displacement(&t, &p, &GasEnvironment::air(1.0), &Forcing::NONE).unwrap();
        assert!(r.magnitude < 1e-15, "{}", r.magnitude);
        assert!(r.micromotion.amplitude < 1e-15);
    }

    #[test]
    fn small_force_is_linear_and_matches_pseudo_potential() {
        let (t, p) = setup(0.2);
        let g = GasEnvironment::air(0.01);
        let f = Vec3::new(0.0, 0.0, 1e-13);
        let r1 = equilibrium_displacement(&t, &p, &g, &Forcing::force(f)).unwrap();
        let r2 = equilibrium_displacement(&t, &p, &g, &Forcing::force(2.0 * f)).unwrap();
        assert!((r2.displacement[2] / r1.displacement[2] - 2.0).abs() < 0.01);
        assert!((r1.displacement[2] / r1.pseudo_potential[2] - 1.0).abs() < 0.05);
        // micromotion ≈ (q/2)·z̄ at small q
        let mm = r1.micromotion.per_axis[2];
        assert!((mm / (0.1 * r1.displacement[2]) - 1.0).abs() < 0.1, "{mm}");
    }

    #[test]
    fn unstable_configuration_is_rejected() {
        let (t, p) = setup(1.1);
        let err = equilibrium_displacement(&t, &p, &GasEnvironment::air(0.0), &Forcing::force(Vec3::new(0.0, 0.0, 1e-13)));
        assert!(matches!(err, Err(Error::Unstable)));
    }

    #[test]
    fn displacement_monotone_in_damping() {
        let (t, p) = setup(0.3);
        let f = Forcing::force(Vec3::new(0.0, 0.0, -1e-12));
        let mut prev_d = 0.0;
        let mut prev_m = 0.0;
        for gamma in [100.0, 300.0, 1000.0, 3000.0, 10_000.0] {
            let g = gas_for_damping(&p, &GasEnvironment::air(1.0), gamma);
            let r = equilibrium_displacement(&t, &p, &g, &f).unwrap();
            assert!(r.magnitude > prev_d);
            assert!(r.micromotion.amplitude > prev_m);
            prev_d = r.magnitude;
            prev_m = r.micromotion.amplitude;
        }
    }
}
