//! Temperature from the fitted zero-field splitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};
use crate::odmr::{fit_double_gaussian, FitOptions, OdmrFit, Spectrum};
use crate::spin_model::{Flagged, ZfsCoefficients, EXTRAPOLATION_BAND_K};

/// Accepted excursion of a measured `D` beyond the calibrated interval, GHz.
pub const D_SLACK_GHZ: f64 = 0.002;
const TOLERANCE_K: f64 = 1e-3;
const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoEstimate {
    pub temperature_k: f64,
    pub sigma_t_k: f64,
    /// `D` used for the inversion (after the per-particle offset), GHz.
    pub d_ghz: f64,
    pub extrapolated: bool,
}

/// Bisection for `D(T) = d_meas` on the decreasing branch.
///
/// Values inside `[D(T_max), D(T_min)]` invert on the valid range. Values up
/// to [`D_SLACK_GHZ`] outside it invert on the range widened by the
/// extrapolation band and come back flagged.
pub fn invert_zfs(c: &ZfsCoefficients, d_meas: f64) -> Result<Flagged> {
    let (d_lo, d_hi) = c.d_interval();
    let non_invertible = || Error::NonInvertible {
        d_ghz: d_meas,
        min_ghz: d_lo - D_SLACK_GHZ,
        max_ghz: d_hi + D_SLACK_GHZ,
    };
    if !d_meas.is_finite() || d_meas < d_lo - D_SLACK_GHZ || d_meas > d_hi + D_SLACK_GHZ {
        return Err(non_invertible());
    }
    let (t_min, t_max) = c.valid_range;
    let extrapolated = d_meas < d_lo || d_meas > d_hi;
    let (mut lo, mut hi) = if !extrapolated {
        (t_min, t_max)
    } else if d_meas > d_hi {
        ((t_min - EXTRAPOLATION_BAND_K).max(1e-3), t_min)
    } else {
        (t_max, t_max + EXTRAPOLATION_BAND_K)
    };
    let f = |t: f64| c.eval_unchecked(t) - d_meas;
    // the widened bracket must still straddle the root on a decreasing branch
    if extrapolated && !(f(lo) >= 0.0 && f(hi) <= 0.0 && c.slope_unchecked(lo) < 0.0 && c.slope_unchecked(hi) < 0.0) {
        return Err(non_invertible());
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo < 0.5 * TOLERANCE_K * 1e-3 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Flagged {
        value: 0.5 * (lo + hi),
        extrapolated,
    })
}

/// First-order propagation `σ_T = σ_D / |dD/dT|`.
pub fn temperature_from_fit(fit: &OdmrFit, c: &ZfsCoefficients, d_offset_ghz: f64) -> Result<ThermoEstimate> {
    if !fit.converged {
        return Err(Error::FitFailed(fit.status.clone()).at(Stage::Fit));
    }
    let d = fit.d_fit - d_offset_ghz;
    let t = invert_zfs(c, d).map_err(|e| e.at(Stage::Inversion))?;
    let slope = c.slope_unchecked(t.value).abs();
    Ok(ThermoEstimate {
        temperature_k: t.value,
        sigma_t_k: fit.d_sigma / slope,
        d_ghz: d,
        extrapolated: t.extrapolated,
    })
}

/// Fit then invert. `d_offset_ghz` is subtracted from the fitted `D` to
/// account for a particle whose room-temperature splitting differs from the
/// coefficient set.
pub fn temperature_from_spectrum(s: &Spectrum, c: &ZfsCoefficients, d_offset_ghz: f64) -> Result<ThermoEstimate> {
    let fit = fit_double_gaussian(s, &FitOptions::default()).map_err(|e| e.at(Stage::Fit))?;
    temperature_from_fit(&fit, c, d_offset_ghz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odmr::{synthesize_spectrum, FrequencyGrid, NoiseSpec, OdmrLine};
    use crate::spin_model::{zfs_of_temperature, MagneticField, SpinParams};
    use proptest::prelude::*;

    #[test]
    fn round_trip_at_300() {
        let c = ZfsCoefficients::default();
        let t = invert_zfs(&c, c.eval_unchecked(300.0)).unwrap();
        assert!((t.value - 300.0).abs() < 1e-3);
        assert!(!t.extrapolated);
    }

    #[test]
    fn fig2_splitting_inverts_near_435() {
        // oracle: Newton on the cubic from a far start
        let c = ZfsCoefficients::default();
        let mut t: f64 = 600.0;
        for _ in 0..50 {
            t -= (c.eval_unchecked(t) - 2.8558) / c.slope_unchecked(t);
        }
        let got = invert_zfs(&c, 2.8558).unwrap().value;
        assert!((got - t).abs() < 1e-3);
        assert!((got - 435.0).abs() < 2.0, "{got}");
    }

    #[test]
    fn outside_interval_is_rejected_with_bounds() {
        let c = ZfsCoefficients::default();
        match invert_zfs(&c, 2.90) {
            Err(Error::NonInvertible { min_ghz, max_ghz, .. }) => {
                let (lo, hi) = c.d_interval();
                assert!((min_ghz - (lo - 0.002)).abs() < 1e-12 && (max_ghz - (hi + 0.002)).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn slack_is_flagged() {
        let c = ZfsCoefficients::default();
        let (lo, hi) = c.d_interval();
        let above = invert_zfs(&c, hi + 0.001).unwrap();
        assert!(above.extrapolated && above.value < 298.0);
        let below = invert_zfs(&c, lo - 0.001).unwrap();
        assert!(below.extrapolated && below.value > 700.0);
        assert!((c.eval_unchecked(below.value) - (lo - 0.001)).abs() < 1e-9);
    }

    fn spectrum_at(t: f64, noise: NoiseSpec) -> Spectrum {
        let c = ZfsCoefficients::default();
        let d = zfs_of_temperature(&c, t).unwrap().value;
        let sp = SpinParams::new(d, 0.005).unwrap();
        synthesize_spectrum(&sp, &MagneticField::ZERO, &OdmrLine::default(), &FrequencyGrid::default(), &noise).unwrap()
    }

    #[test]
    fn noiseless_spectrum_recovers_temperature() {
        for t in [300.0, 390.0, 470.0, 600.0] {
            let est = temperature_from_spectrum(&spectrum_at(t, NoiseSpec::NONE), &ZfsCoefficients::default(), 0.0).unwrap();
            assert!((est.temperature_k - t).abs() < 0.1, "{t}: {est:?}");
        }
    }

    #[test]
    fn noisy_spectrum_at_390() {
        let est = temperature_from_spectrum(&spectrum_at(390.0, NoiseSpec::gaussian(4, 0.01)), &ZfsCoefficients::default(), 0.0).unwrap();
        assert!((est.temperature_k - 390.0).abs() < 10.0, "{est:?}");
        assert!(est.sigma_t_k > 0.0 && est.sigma_t_k < 10.0);
    }

    #[test]
    fn flat_spectrum_is_a_fit_stage_error() {
        let c = ZfsCoefficients::default();
        let sp = SpinParams::new(2.87, 0.005).unwrap();
        let line = OdmrLine {
            contrast: 0.0,
            ..OdmrLine::default()
        };
        let s = synthesize_spectrum(&sp, &MagneticField::ZERO, &line, &FrequencyGrid::default(), &NoiseSpec::gaussian(1, 0.01)).unwrap();
        let err = temperature_from_spectrum(&s, &c, 0.0).unwrap_err();
        assert_eq!(err.stage(), Some(Stage::Fit));
    }

    #[test]
    fn offset_shifts_the_inversion() {
        let c = ZfsCoefficients::default();
        let s = spectrum_at(400.0, NoiseSpec::NONE);
        let est = temperature_from_spectrum(&s, &c, -0.001).unwrap();
        assert!(est.temperature_k < 400.0);
        let d = c.eval_unchecked(400.0) + 0.001;
        assert!((est.d_ghz - d).abs() < 1e-8);
    }

    #[test]
    fn sigma_t_is_linear_in_sigma_d() {
        let c = ZfsCoefficients::default();
        let mut fit = crate::odmr::fit_spectrum(&spectrum_at(420.0, NoiseSpec::gaussian(2, 0.01))).unwrap();
        let a = temperature_from_fit(&fit, &c, 0.0).unwrap();
        fit.d_sigma *= 2.0;
        let b = temperature_from_fit(&fit, &c, 0.0).unwrap();
        assert!((b.sigma_t_k / a.sigma_t_k - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identity_on_one_kelvin_grid() {
        let c = ZfsCoefficients::default();
        for k in 298..=700 {
            let t = k as f64;
            let back = invert_zfs(&c, c.eval_unchecked(t)).unwrap().value;
            assert!((back - t).abs() < 1e-3, "{t} -> {back}");
        }
    }

    proptest! {
        #[test]
        fn inversion_is_decreasing(d1 in 2.845f64..2.870, d2 in 2.845f64..2.870) {
            prop_assume!(d1 < d2);
            let c = ZfsCoefficients::default();
            let (lo, hi) = c.d_interval();
            prop_assume!(d1 >= lo && d2 <= hi);
            prop_assert!(invert_zfs(&c, d1).unwrap().value > invert_zfs(&c, d2).unwrap().value);
        }
    }
}
