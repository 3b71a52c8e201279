use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::{OnsetMethod, ProtocolConfig, Scenario};
use super::par_map;
use crate::error::{Error, Result, Stage};
use crate::trap_dynamics::{
    charge_to_mass_from_instability, classify_axis, damping_rate, equilibrium_displacement, escapes, iso_q_ramp,
    mathieu_q, normalized_damping, stability_classify, Forcing, ParticleState, TrapConfig, Vec3,
};

/// Relative frequency resolution of the onset bisection.
const ONSET_REL_TOL: f64 = 1e-5;
/// Largest tolerated relative drift of q along the iso-q ramp.
const RAMP_Q_TOL: f64 = 1e-9;
const TRAJECTORY_STEPS_PER_PERIOD: f64 = 100.0;

fn check_scenario(c: &ProtocolConfig, want: Scenario) -> Result<()> {
    if c.scenario != want {
        return Err(Error::Config(format!("protocol needs scenario {want}, got {}", c.scenario)));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub drive_hz: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreselectionResult {
    pub v_pp_volts: f64,
    pub method: OnsetMethod,
    /// Drive frequency below which the particle is lost.
    pub onset_frequency_hz: Option<f64>,
    pub q_over_m_c_per_kg: Option<f64>,
    /// Set instead of the estimate when the particle is already unstable at
    /// the top of the grid.
    pub q_over_m_lower_bound_c_per_kg: Option<f64>,
    pub onset_above_grid: bool,
    pub accept: bool,
    pub accept_hz: f64,
    /// Grid points visited, top down, ending at the first unstable one.
    pub scan: Vec<ScanPoint>,
}

struct Onset<'a> {
    c: &'a ProtocolConfig,
    base: TrapConfig,
    particle: ParticleState,
}

impl Onset<'_> {
    fn trap(&self, f_hz: f64) -> TrapConfig {
        TrapConfig {
            omega_drive: 2.0 * PI * f_hz,
            ..self.base
        }
    }

    fn stable(&self, f_hz: f64) -> Result<bool> {
        let t = self.trap(f_hz);
        let gas = self.c.gas();
        match self.c.preselect.method {
            OnsetMethod::Floquet => Ok(stability_classify(&t, &self.particle, &gas).stable),
            OnsetMethod::Trajectory => {
                let d = self.c.preselect.initial_offset_m;
                let p = self.particle.at(Vec3::new(d, d, d), Vec3::zeros());
                let period = t.drive_period();
                let duration = self.c.preselect.trajectory_periods as f64 * period;
                Ok(escapes(&t, &p, &gas, &Forcing::NONE, duration, period / TRAJECTORY_STEPS_PER_PERIOD)?.is_none())
            }
        }
    }
}

/// Sweep the drive frequency downward at fixed `v_pp` until the particle is
/// lost, refine the onset by bisection and convert it to a charge-to-mass
/// ratio. Accepts the particle when the onset lies at or above `accept_hz`.
pub fn run_preselection(c: &ProtocolConfig) -> Result<PreselectionResult> {
    check_scenario(c, Scenario::Preselect)?;
    let s = &c.preselect;
    let base = TrapConfig {
        v_pp: s.v_pp_volts,
        ..c.trap_config()
    };
    let onset = Onset {
        c,
        base,
        particle: c.particle()?,
    };
    let grid: Vec<f64> = (0..s.n_frequencies)
        .map(|i| s.f_start_hz * (s.f_stop_hz / s.f_start_hz).powf(i as f64 / (s.n_frequencies - 1) as f64))
        .collect();
    let mut result = PreselectionResult {
        v_pp_volts: s.v_pp_volts,
        method: s.method,
        onset_frequency_hz: None,
        q_over_m_c_per_kg: None,
        q_over_m_lower_bound_c_per_kg: None,
        onset_above_grid: false,
        accept: false,
        accept_hz: s.accept_hz,
        scan: Vec::new(),
    };
    let gas = c.gas();
    let mut bracket = None;
    for (i, &f) in grid.iter().enumerate() {
        let stable = onset.stable(f).map_err(|e| e.at(Stage::Trap))?;
        result.scan.push(ScanPoint { drive_hz: f, stable });
        if !stable {
            if i == 0 {
                result.onset_above_grid = true;
                result.accept = s.f_start_hz >= s.accept_hz;
                result.q_over_m_lower_bound_c_per_kg =
                    Some(charge_to_mass_from_instability(2.0 * PI * f, &base, &gas, &onset.particle).map_err(|e| e.at(Stage::Trap))?);
                return Ok(result);
            }
            bracket = Some((f, grid[i - 1]));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Bracket(format!("onset not bracketed: stable down to {} Hz", s.f_stop_hz)).at(Stage::Trap)
    })?;
    while hi - lo > ONSET_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if onset.stable(mid).map_err(|e| e.at(Stage::Trap))? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let f_c = 0.5 * (lo + hi);
    result.onset_frequency_hz = Some(f_c);
    result.q_over_m_c_per_kg =
        Some(charge_to_mass_from_instability(2.0 * PI * f_c, &base, &gas, &onset.particle).map_err(|e| e.at(Stage::Trap))?);
    result.accept = f_c >= s.accept_hz;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampRow {
    pub step: usize,
    pub v_pp_volts: f64,
    pub drive_hz: f64,
    pub q_axial: f64,
    /// `|q/q_start − 1|`.
    pub q_rel_dev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpdownRow {
    pub time_s: f64,
    pub pressure_mbar: f64,
    pub gamma_per_s: f64,
    pub gamma_norm: f64,
    pub f_secular_hz: Option<f64>,
    pub equilibrium_shift_m: Option<f64>,
    pub displacement_m: Option<[f64; 3]>,
    pub micromotion_m: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpdownResult {
    pub ramp: Vec<RampRow>,
    pub max_q_rel_dev: f64,
    pub rows: Vec<PumpdownRow>,
}

/// Iso-q ramp from the configured trap down to `v_end_volts`, then the
/// pressure schedule at the final voltage. An unstable or failing pressure
/// step is tagged in its row and the schedule carries on.
pub fn run_pumpdown(c: &ProtocolConfig) -> Result<PumpdownResult> {
    check_scenario(c, Scenario::Pumpdown)?;
    let s = &c.pumpdown;
    let start = c.trap_config();
    let particle = c.particle()?;
    let q0 = mathieu_q(&start, &particle).axial.q;
    let schedule = iso_q_ramp(&start, s.v_end_volts, s.ramp_steps).map_err(|e| e.at(Stage::Trap))?;
    let ramp: Vec<RampRow> = schedule
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let q = mathieu_q(t, &particle).axial.q;
            RampRow {
                step: i + 1,
                v_pp_volts: t.v_pp,
                drive_hz: t.drive_hz(),
                q_axial: q,
                q_rel_dev: (q / q0 - 1.0).abs(),
            }
        })
        .collect();
    let max_q_rel_dev = ramp.iter().map(|r| r.q_rel_dev).fold(0.0, f64::max);
    if !(max_q_rel_dev <= RAMP_Q_TOL) {
        return Err(Error::Bracket(format!("q drifts by {max_q_rel_dev:e} along the ramp")).at(Stage::Trap));
    }
    let trap = *schedule.last().expect("ramp has at least one step");
    let forcing = Forcing {
        gravity: s.gravity,
        static_force: Vec3::from(s.stray_force_n),
    };
    let rows = par_map(&s.pressures_mbar, |i, &p| {
        let gas = c.gas().with_pressure(p);
        let gamma = damping_rate(&particle, &gas).value;
        let mut row = PumpdownRow {
            time_s: i as f64 * s.dwell_s,
            pressure_mbar: p,
            gamma_per_s: gamma,
            gamma_norm: normalized_damping(gamma, trap.omega_drive),
            f_secular_hz: None,
            equilibrium_shift_m: None,
            displacement_m: None,
            micromotion_m: None,
            status: "ok".into(),
        };
        match equilibrium_displacement(&trap, &particle, &gas, &forcing) {
            Ok(eq) => {
                row.f_secular_hz = Some(eq.secular_hz[2]);
                row.equilibrium_shift_m = Some(eq.magnitude);
                row.displacement_m = Some(eq.displacement);
                row.micromotion_m = Some(eq.micromotion.amplitude);
            }
            Err(e) => row.status = e.at(Stage::Trap).to_string(),
        }
        row
    });
    Ok(PumpdownResult {
        ramp,
        max_q_rel_dev,
        rows,
    })
}

impl PumpdownResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "time_s",
            "pressure_mbar",
            "gamma_per_s",
            "gamma_norm",
            "f_secular_hz",
            "equilibrium_shift_m",
            "micromotion_m",
            "status",
        ])?;
        let cell = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            out.write_record([
                r.time_s.to_string(),
                r.pressure_mbar.to_string(),
                r.gamma_per_s.to_string(),
                r.gamma_norm.to_string(),
                cell(r.f_secular_hz),
                cell(r.equilibrium_shift_m),
                cell(r.micromotion_m),
                r.status.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_ramp_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "v_pp_volts", "drive_hz", "q_axial", "q_rel_dev"])?;
        for r in &self.ramp {
            out.write_record([
                r.step.to_string(),
                r.v_pp_volts.to_string(),
                r.drive_hz.to_string(),
                r.q_axial.to_string(),
                r.q_rel_dev.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub q: f64,
    pub a: f64,
    pub gamma_norm: f64,
    pub stable: bool,
}

/// Floquet classification of one Mathieu axis over the configured
/// `(q, a, γ̃)` grid, ordered by γ̃, then a, then q.
pub fn run_stability_map(c: &ProtocolConfig) -> Result<Vec<MapPoint>> {
    check_scenario(c, Scenario::StabilityMap)?;
    let points = c.map_points();
    let jobs: Vec<(f64, f64, f64)> = c
        .stability_map
        .gamma_norm
        .iter()
        .flat_map(|&g| points.iter().map(move |&(q, a)| (q, a, g)))
        .collect();
    Ok(par_map(&jobs, |_, &(q, a, g)| MapPoint {
        q,
        a,
        gamma_norm: g,
        stable: classify_axis(a, q, g).stable,
    }))
}

pub fn write_map_csv<W: Write>(points: &[MapPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["q", "a", "gamma_norm", "stable"])?;
    for p in points {
        out.write_record([p.q.to_string(), p.a.to_string(), p.gamma_norm.to_string(), p.stable.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preselect(q_over_m: f64) -> ProtocolConfig {
        let mut c = ProtocolConfig::defaults(Scenario::Preselect);
        c.particle.charge_to_mass_c_per_kg = q_over_m;
        c
    }

    #[test]
    fn onset_scales_with_root_charge_to_mass() {
        let a = run_preselection(&preselect(4.39e-3)).unwrap();
        let b = run_preselection(&preselect(4.39e-4)).unwrap();
        let (fa, fb) = (a.onset_frequency_hz.unwrap(), b.onset_frequency_hz.unwrap());
        assert!((fa - 1000.0).abs() < 20.0, "{fa}");
        // damping shifts the edge slightly, so √10 holds only approximately
        assert!((fa / fb / 10f64.sqrt() - 1.0).abs() < 0.02, "{fa} {fb}");
        assert!(!b.accept);
        assert!((a.q_over_m_c_per_kg.unwrap() / 4.39e-3 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn huge_charge_is_accepted_above_grid() {
        let r = run_preselection(&preselect(1.0)).unwrap();
        assert!(r.onset_above_grid && r.accept);
        assert!(r.onset_frequency_hz.is_none());
        assert!(r.q_over_m_lower_bound_c_per_kg.unwrap() < 1.0);
    }

    #[test]
    fn stable_everywhere_is_not_bracketed() {
        let err = run_preselection(&preselect(1e-7)).unwrap_err();
        assert!(err.to_string().contains("onset not bracketed"), "{err}");
    }

    #[test]
    fn ramp_keeps_q() {
        let mut c = ProtocolConfig::defaults(Scenario::Pumpdown);
        c.pumpdown.pressures_mbar = vec![1.0];
        let r = run_pumpdown(&c).unwrap();
        assert_eq!(r.ramp.len(), c.pumpdown.ramp_steps);
        assert!(r.max_q_rel_dev <= 1e-12, "{}", r.max_q_rel_dev);
        assert_eq!(r.ramp.last().unwrap().v_pp_volts, 600.0);
        assert!(r.rows[0].status == "ok", "{:?}", r.rows[0]);
    }

    #[test]
    fn unstable_pressure_step_is_tagged() {
        let mut c = ProtocolConfig::defaults(Scenario::Pumpdown);
        // q ≈ 1.3 after the ramp: lost at every pressure
        c.particle.charge_to_mass_c_per_kg = 2.5e-2;
        c.pumpdown.pressures_mbar = vec![1.0, 0.1];
        let r = run_pumpdown(&c).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.rows.iter().all(|row| row.status != "ok" && row.micromotion_m.is_none()));
    }

    #[test]
    fn map_matches_first_region() {
        let mut c = ProtocolConfig::defaults(Scenario::StabilityMap);
        c.stability_map.n_a = 1;
        c.stability_map.a_min = 0.0;
        let map = run_stability_map(&c).unwrap();
        assert_eq!(map.len(), c.stability_map.n_q);
        for p in map.iter().filter(|p| p.q > 0.0) {
            assert_eq!(p.stable, p.q < 0.908, "{p:?}");
        }
    }
}
