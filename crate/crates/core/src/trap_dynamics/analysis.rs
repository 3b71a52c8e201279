use std::f64::consts::TAU;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use super::{mathieu_q, ParticleState, Trajectory, TrapConfig};
use crate::error::{Error, Result};

/// Minimum number of secular periods the record must span.
const MIN_SECULAR_PERIODS: f64 = 50.0;
/// Peak-to-median power ratio required for a secular line.
const LINE_THRESHOLD: f64 = 100.0;

/// Small-q estimate `q Ω / (2√2)` of the axial secular frequency, Hz.
pub fn analytic_secular_frequency(t: &TrapConfig, p: &ParticleState) -> f64 {
    let q = mathieu_q(t, p).axial.q;
    q * t.omega_drive / (2.0 * 2f64.sqrt()) / TAU
}

fn hann_power(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let w = 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos();
            Complex64::new((x - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2].iter().map(|z| z.norm_sqr()).collect()
}

/// Dominant sub-drive line of a summed Hann periodogram, refined by a
/// parabola through the log-power of the peak bin and its neighbours.
fn dominant_line(power: &[f64], n: usize, dt: f64, drive_hz: f64) -> Result<f64> {
    let df = 1.0 / (n as f64 * dt);
    let top = ((0.5 * drive_hz / df).floor() as usize).min(power.len().saturating_sub(2));
    if top < 4 {
        return Err(Error::NoSecularLine);
    }
    let band = &power[1..=top];
    let (k_rel, &peak) = band
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoSecularLine)?;
    let k = k_rel + 1;
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if !(peak > 0.0) || peak < LINE_THRESHOLD * median {
        return Err(Error::NoSecularLine);
    }
    let (l, c, r) = (power[k - 1].ln(), peak.ln(), power[k + 1].ln());
    let denom = l - 2.0 * c + r;
    let delta = if denom.is_finite() && denom < 0.0 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Ok((k as f64 + delta) * df)
}

fn check_span(f: f64, tr: &Trajectory) -> Result<f64> {
    if f * tr.duration() < MIN_SECULAR_PERIODS {
        return Err(Error::invalid(
            "trajectory",
            format!(
                "spans {:.1} secular periods, need {MIN_SECULAR_PERIODS}",
                f * tr.duration()
            ),
        ));
    }
    Ok(f)
}

/// Secular frequency (Hz) from the position record, all axes summed.
pub fn secular_frequency(tr: &Trajectory) -> Result<f64> {
    let n = tr.positions.len();
    if n < 16 {
        return Err(Error::NoSecularLine);
    }
    let mut total = vec![0.0; n / 2];
    for axis in 0..3 {
        let xs: Vec<f64> = tr.positions.iter().map(|r| r[axis]).collect();
        for (acc, p) in total.iter_mut().zip(hann_power(&xs)) {
            *acc += p;
        }
    }
    let f = dominant_line(&total, n, tr.dt, tr.omega_drive / TAU)?;
    check_span(f, tr)
}

/// Secular frequency of one axis (0 = x, 1 = y, 2 = z).
pub fn secular_frequency_axis(tr: &Trajectory, axis: usize) -> Result<f64> {
    let n = tr.positions.len();
    if n < 16 || axis > 2 {
        return Err(Error::NoSecularLine);
    }
    let xs: Vec<f64> = tr.positions.iter().map(|r| r[axis]).collect();
    let f = dominant_line(&hann_power(&xs), n, tr.dt, tr.omega_drive / TAU)?;
    check_span(f, tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MicromotionReport {
    /// Amplitude of the drive-synchronous component per axis, m.
    pub per_axis: [f64; 3],
    /// Euclidean norm of `per_axis`.
    pub amplitude: f64,
    /// Mean position over the analysed window, m.
    pub mean_position: [f64; 3],
    /// Small-q prediction `|q_i|/2 · |⟨x_i⟩|` per axis.
    pub analytic_per_axis: [f64; 3],
}

/// Lock-in at the drive frequency over the last whole number of drive
/// periods of the record.
pub fn micromotion_amplitude(tr: &Trajectory) -> Result<MicromotionReport> {
    if tr.escaped() {
        return Err(Error::Unstable);
    }
    let per_period = TAU / (tr.omega_drive * tr.dt);
    let available = tr.positions.len().saturating_sub(1);
    let periods = (available as f64 / per_period).floor();
    if periods < 1.0 {
        return Err(Error::invalid("trajectory", "shorter than one drive period"));
    }
    let m = (periods * per_period).round() as usize;
    let window = &tr.positions[tr.positions.len() - m..];
    let times = &tr.times[tr.times.len() - m..];
    let q = tr.mathieu.per_axis();
    let mut per_axis = [0.0; 3];
    let mut mean_position = [0.0; 3];
    let mut analytic = [0.0; 3];
    for axis in 0..3 {
        let mean = window.iter().map(|r| r[axis]).sum::<f64>() / m as f64;
        let (mut c, mut s) = (0.0, 0.0);
        for (r, t) in window.iter().zip(times) {
            let ph = tr.omega_drive * t;
            c += (r[axis] - mean) * ph.cos();
            s += (r[axis] - mean) * ph.sin();
        }
        per_axis[axis] = 2.0 * c.hypot(s) / m as f64;
        mean_position[axis] = mean;
        analytic[axis] = 0.5 * q[axis].q.abs() * mean.abs();
    }
    let amplitude = per_axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(MicromotionReport {
        per_axis,
        amplitude,
        mean_position,
        analytic_per_axis: analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal_model::GasEnvironment;
    use crate::trap_dynamics::{integrate_trajectory, Forcing, Vec3};

    fn trap_with_q(q: f64, drive_hz: f64) -> (TrapConfig, ParticleState) {
        let p = ParticleState::ten_micron_diamond();
        let t = TrapConfig::ring(4000.0, drive_hz);
        let q0 = mathieu_q(&t, &p).axial.q;
        (TrapConfig { v_pp: 4000.0 * q / q0, ..t }, p)
    }

    fn secular_run(q: f64) -> (f64, f64) {
        let (t, p) = trap_with_q(q, 2000.0);
        let p = p.at(Vec3::new(0.0, 0.0, 1e-5), Vec3::zeros());
        let f_est = analytic_secular_frequency(&t, &p);
        let duration = 80.0 / f_est;
        let tr = integrate_trajectory(&t, &p, &GasEnvironment::air(0.0), &Forcing::NONE, duration, t.drive_period() / 64.0).unwrap();
        (secular_frequency(&tr).unwrap(), f_est)
    }

    #[test]
    fn secular_line_q02() {
        let (f, est) = secular_run(0.2);
        assert!((est - 141.4).abs() < 0.1);
        assert!((f / est - 1.0).abs() < 0.05, "{f} vs {est}");
    }

    #[test]
    fn secular_vanishes_with_q() {
        let p = ParticleState::ten_micron_diamond();
        assert!(analytic_secular_frequency(&TrapConfig::ring(1e-6, 2000.0), &p) < 1e-6);
        let (f1, _) = secular_run(0.05);
        let (f2, _) = secular_run(0.1);
        assert!(f1 < f2);
    }

    #[test]
    fn no_line_for_a_resting_particle() {
        let (t, p) = trap_with_q(0.2, 2000.0);
        let tr = integrate_trajectory(&t, &p, &GasEnvironment::air(0.0), &Forcing::NONE, 0.5, t.drive_period() / 64.0).unwrap();
        assert!(matches!(secular_frequency(&tr), Err(Error::NoSecularLine)));
        let mm = micromotion_amplitude(&tr).unwrap();
        assert_eq!(mm.amplitude, 0.0);
    }

    #[test]
    fn record_too_short() {
        let (t, p) = trap_with_q(0.2, 2000.0);
        let p = p.at(Vec3::new(0.0, 0.0, 1e-5), Vec3::zeros());
        let tr = integrate_trajectory(&t, &p, &GasEnvironment::air(0.0), &Forcing::NONE, 10.0 / 141.0, t.drive_period() / 64.0).unwrap();
        assert!(secular_frequency(&tr).is_err());
    }

    #[test]
    fn lock_in_recovers_a_synthetic_tone() {
        let (t, p) = trap_with_q(0.2, 2000.0);
        let mut tr = integrate_trajectory(&t, &p, &GasEnvironment::air(0.0), &Forcing::NONE, 20.0 * t.drive_period(), t.drive_period() / 50.0).unwrap();
        for (r, time) in tr.positions.iter_mut().zip(&tr.times) {
            *r = Vec3::new(3e-6 + 1e-7 * (t.omega_drive * time + 0.3).cos(), 0.0, 0.0);
        }
        let mm = micromotion_amplitude(&tr).unwrap();
        assert!((mm.per_axis[0] - 1e-7).abs() < 1e-10, "{:?}", mm.per_axis);
        assert!((mm.mean_position[0] - 3e-6).abs() < 1e-10);
    }
}
