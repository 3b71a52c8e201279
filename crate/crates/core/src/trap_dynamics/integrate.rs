use std::f64::consts::TAU;

use super::{damping_rate, mathieu_q, Forcing, MathieuParams, ParticleState, TrapConfig, Vec3, ESCAPE_RADIUS_R0, MIN_STEPS_PER_PERIOD};
use crate::error::{Error, Result};
use crate::thermal_model::GasEnvironment;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryStatus {
    Completed,
    /// `|r|` exceeded the escape radius at the given time; the record stops
    /// at the last finite sample.
    Escaped { time: f64 },
}

/// Uniformly sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub omega_drive: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// `Ωt mod 2π` at each sample.
    pub drive_phase: Vec<f64>,
    pub status: TrajectoryStatus,
    pub mathieu: MathieuParams,
    pub gamma: f64,
}

impl Trajectory {
    pub fn escaped(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Escaped { .. })
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    /// Samples from `start` onwards, rebased in time.
    pub fn tail(&self, start: usize) -> Trajectory {
        let start = start.min(self.times.len());
        Trajectory {
            times: self.times[start..].to_vec(),
            positions: self.positions[start..].to_vec(),
            velocities: self.velocities[start..].to_vec(),
            drive_phase: self.drive_phase[start..].to_vec(),
            ..self.clone()
        }
    }

    /// `t_s,x_m,y_m,z_m,vx,vy,vz`
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_s", "x_m", "y_m", "z_m", "vx", "vy", "vz"])?;
        for ((t, r), v) in self.times.iter().zip(&self.positions).zip(&self.velocities) {
            out.write_record(
                [*t, r.x, r.y, r.z, v.x, v.y, v.z]
                    .iter()
                    .map(|x| format!("{x:e}")),
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fixed-step kick-drift-kick integrator with the drag applied as exact
/// exponential half-steps and the trap field evaluated at the substep times.
#[derive(Debug, Clone, Copy)]
pub(super) struct Integrator {
    pub trap: TrapConfig,
    pub charge_to_mass: f64,
    pub gamma: f64,
    pub static_accel: Vec3,
    pub dt: f64,
    half_decay: f64,
}

impl Integrator {
    pub fn new(t: &TrapConfig, p: &ParticleState, gamma: f64, forcing: &Forcing, dt: f64) -> Result<Self> {
        t.validate()?;
        p.validate()?;
        let limit = TAU / (MIN_STEPS_PER_PERIOD * t.omega_drive);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(Error::Resolution { dt, limit });
        }
        Ok(Integrator {
            trap: *t,
            charge_to_mass: p.charge_to_mass(),
            gamma,
            static_accel: forcing.total(p) / p.mass,
            dt,
            half_decay: (-0.5 * gamma * dt).exp(),
        })
    }

    fn accel(&self, r: &Vec3, time: f64) -> Vec3 {
        self.trap.field(r, time) * self.charge_to_mass + self.static_accel
    }

    /// Advance one step from `time`.
    pub fn step(&self, r: &mut Vec3, v: &mut Vec3, time: f64) {
        let h = self.dt;
        *v *= self.half_decay;
        *v += self.accel(r, time) * (0.5 * h);
        *r += *v * h;
        *v += self.accel(r, time + h) * (0.5 * h);
        *v *= self.half_decay;
    }

    pub fn escape_radius(&self) -> f64 {
        ESCAPE_RADIUS_R0 * self.trap.r0
    }
}

fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    Ok((duration / dt).round() as usize)
}

/// Integrate `m r̈ = Q E(r, t) − m γ ṙ + F_static (+ m g)` from the particle's
/// initial state, with γ from [`damping_rate`].
pub fn integrate_trajectory(
    t: &TrapConfig,
    p: &ParticleState,
    g: &GasEnvironment,
    forcing: &Forcing,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    let gamma = damping_rate(p, g).value;
    let integ = Integrator::new(t, p, gamma, forcing, dt)?;
    let n = step_count(duration, dt)?;
    Ok(record(&integ, p.position, p.velocity, 0, n, mathieu_q(t, p)))
}

pub(super) fn record(integ: &Integrator, r0: Vec3, v0: Vec3, first_step: usize, n: usize, mathieu: MathieuParams) -> Trajectory {
    let dt = integ.dt;
    let omega = integ.trap.omega_drive;
    let mut tr = Trajectory {
        dt,
        omega_drive: omega,
        times: Vec::with_capacity(n + 1),
        positions: Vec::with_capacity(n + 1),
        velocities: Vec::with_capacity(n + 1),
        drive_phase: Vec::with_capacity(n + 1),
        status: TrajectoryStatus::Completed,
        mathieu,
        gamma: integ.gamma,
    };
    let (mut r, mut v) = (r0, v0);
    let esc = integ.escape_radius();
    let push = |tr: &mut Trajectory, k: usize, r: Vec3, v: Vec3| {
        let time = k as f64 * dt;
        tr.times.push(time);
        tr.positions.push(r);
        tr.velocities.push(v);
        tr.drive_phase.push((omega * time).rem_euclid(TAU));
    };
    push(&mut tr, first_step, r, v);
    for k in first_step..first_step + n {
        integ.step(&mut r, &mut v, k as f64 * dt);
        if !(r.norm() <= esc) {
            tr.status = TrajectoryStatus::Escaped {
                time: (k + 1) as f64 * dt,
            };
            break;
        }
        push(&mut tr, k + 1, r, v);
    }
    tr
}

/// Escape time, if the particle leaves within `duration`. Nothing is recorded.
pub fn escapes(
    t: &TrapConfig,
    p: &ParticleState,
    g: &GasEnvironment,
    forcing: &Forcing,
    duration: f64,
    dt: f64,
) -> Result<Option<f64>> {
    let gamma = damping_rate(p, g).value;
    let integ = Integrator::new(t, p, gamma, forcing, dt)?;
    let n = step_count(duration, dt)?;
    let (mut r, mut v) = (p.position, p.velocity);
    let esc = integ.escape_radius();
    for k in 0..n {
        integ.step(&mut r, &mut v, k as f64 * dt);
        if !(r.norm() <= esc) {
            return Ok(Some((k + 1) as f64 * dt));
        }
    }
    Ok(None)
}
