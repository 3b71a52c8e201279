//! NV⁻ ground-state spin Hamiltonian and the temperature-dependent
//! zero-field splitting.
//!
//! Everything is expressed in frequency units (GHz, ħ = 1) in the basis
//! `{|+1⟩, |0⟩, |−1⟩}` quantised along the NV axis. An ensemble of centres is
//! represented by one effective spin-1 with a scalar gyromagnetic ratio.

use nalgebra::{Matrix3, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::NV_GYROMAGNETIC_GHZ_PER_T;
use crate::error::{Error, Result};

/// Index of `|0⟩` in the basis `{|+1⟩, |0⟩, |−1⟩}`.
const ZERO_STATE: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinParams {
    /// Zero-field splitting D, GHz.
    pub d_zfs: f64,
    /// Strain splitting E, GHz.
    pub e_strain: f64,
    /// GHz/T.
    pub gyromagnetic_ratio: f64,
}

impl SpinParams {
    pub fn new(d_zfs: f64, e_strain: f64) -> Result<Self> {
        Self::with_gyromagnetic_ratio(d_zfs, e_strain, NV_GYROMAGNETIC_GHZ_PER_T)
    }

    pub fn with_gyromagnetic_ratio(d_zfs: f64, e_strain: f64, gyromagnetic_ratio: f64) -> Result<Self> {
        let p = SpinParams {
            d_zfs,
            e_strain,
            gyromagnetic_ratio,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_zfs > 2.5 && self.d_zfs < 3.2) {
            return Err(Error::OutOfRange {
                quantity: "d_zfs",
                value: self.d_zfs,
                min: 2.5,
                max: 3.2,
            });
        }
        if !(self.e_strain >= 0.0 && self.e_strain < 0.1 * self.d_zfs) {
            return Err(Error::invalid("e_strain", "must satisfy 0 <= E < 0.1 D"));
        }
        if !(self.gyromagnetic_ratio > 0.0 && self.gyromagnetic_ratio.is_finite()) {
            return Err(Error::invalid("gyromagnetic_ratio", "must be positive"));
        }
        Ok(())
    }
}

impl Default for SpinParams {
    fn default() -> Self {
        SpinParams {
            d_zfs: 2.87,
            e_strain: 0.005,
            gyromagnetic_ratio: NV_GYROMAGNETIC_GHZ_PER_T,
        }
    }
}

/// Magnetic field in the NV frame (z along the NV axis), tesla.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MagneticField {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl MagneticField {
    pub const ZERO: MagneticField = MagneticField {
        bx: 0.0,
        by: 0.0,
        bz: 0.0,
    };

    /// Weak-field regime only: |B| < 0.1 T.
    pub fn new(bx: f64, by: f64, bz: f64) -> Result<Self> {
        let b = MagneticField { bx, by, bz };
        if !(b.magnitude() < 0.1) {
            return Err(Error::OutOfRange {
                quantity: "|B| (T)",
                value: b.magnitude(),
                min: 0.0,
                max: 0.1,
            });
        }
        Ok(b)
    }

    /// Field along the NV axis producing a Zeeman shift `gamma_b_ghz` for the
    /// given gyromagnetic ratio.
    pub fn axial_from_shift(gamma_b_ghz: f64, gyromagnetic_ratio: f64) -> Result<Self> {
        Self::new(0.0, 0.0, gamma_b_ghz / gyromagnetic_ratio)
    }

    pub fn magnitude(&self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }
}

/// Spin-1 operators in the `{|+1⟩, |0⟩, |−1⟩}` basis.
pub fn spin_operators() -> [Matrix3<Complex64>; 3] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = Complex64::new(0.0, 0.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    let im = |x: f64| Complex64::new(0.0, x);
    let sx = Matrix3::new(z, re(r), z, re(r), z, re(r), z, re(r), z);
    let sy = Matrix3::new(z, im(-r), z, im(r), z, im(-r), z, im(r), z);
    let sz = Matrix3::new(re(1.0), z, z, z, z, z, z, z, re(-1.0));
    [sx, sy, sz]
}

/// `H = D Sz² + E (Sx² − Sy²) + γ B·S`, GHz.
pub fn build_hamiltonian(p: &SpinParams, b: &MagneticField) -> Matrix3<Complex64> {
    let [sx, sy, sz] = spin_operators();
    let c = |x: f64| Complex64::new(x, 0.0);
    let zeeman = sx * c(b.bx) + sy * c(b.by) + sz * c(b.bz);
    (sz * sz) * c(p.d_zfs) + (sx * sx - sy * sy) * c(p.e_strain) + zeeman * c(p.gyromagnetic_ratio)
}

/// Eigenvalues (ascending) and the `|0⟩` population of each eigenvector.
fn eigensystem(h: Matrix3<Complex64>) -> [(f64, f64); 3] {
    let eig = SymmetricEigen::new(h);
    let mut out = [(0.0, 0.0); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let pop = eig.eigenvectors[(ZERO_STATE, k)].norm_sqr();
        *slot = (eig.eigenvalues[k], pop);
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// The two ESR lines `(f_minus, f_plus)` in GHz, measured from the
/// `|0⟩`-dominated eigenstate. Ties in `|0⟩` population go to the lowest
/// eigenvalue.
pub fn transition_frequencies(p: &SpinParams, b: &MagneticField) -> (f64, f64) {
    let levels = eigensystem(build_hamiltonian(p, b));
    let mut ground = 0;
    for k in 1..3 {
        if levels[k].1 > levels[ground].1 + 1e-12 {
            ground = k;
        }
    }
    let mut f: Vec<f64> = (0..3)
        .filter(|&k| k != ground)
        .map(|k| (levels[k].0 - levels[ground].0).abs())
        .collect();
    f.sort_by(f64::total_cmp);
    (f[0], f[1])
}

/// Cubic `D(T) = a0 + a1 T + a2 T² + a3 T³` (GHz, T in kelvin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZfsCoefficients {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Not printed alongside a0..a2 in the usual tables; the shipped value
    /// makes the slope at 300 K exactly −80 kHz/K. Override freely.
    pub a3: f64,
    pub valid_range: (f64, f64),
}

/// Extrapolation band accepted outside `valid_range`, kelvin.
pub const EXTRAPOLATION_BAND_K: f64 = 50.0;

impl Default for ZfsCoefficients {
    fn default() -> Self {
        ZfsCoefficients {
            a0: 2.8697,
            a1: 9.7e-5,
            a2: -3.7e-7,
            a3: 1.6667e-10,
            valid_range: (298.0, 700.0),
        }
    }
}

/// Result of evaluating a quantity that may lie in the extrapolation band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub extrapolated: bool,
}

impl ZfsCoefficients {
    /// Rejects coefficient sets whose `D(T)` is not strictly decreasing on
    /// the valid range.
    pub fn new(a0: f64, a1: f64, a2: f64, a3: f64, valid_range: (f64, f64)) -> Result<Self> {
        let c = ZfsCoefficients {
            a0,
            a1,
            a2,
            a3,
            valid_range,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.valid_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && lo > 0.0) {
            return Err(Error::invalid("valid_range", "need 0 < T_min < T_max"));
        }
        const SAMPLES: usize = 2000;
        for i in 0..=SAMPLES {
            let t = lo + (hi - lo) * i as f64 / SAMPLES as f64;
            if !(self.slope_unchecked(t) < 0.0) {
                return Err(Error::invalid(
                    "zfs coefficients",
                    format!("D(T) not strictly decreasing at T = {t:.2} K"),
                ));
            }
        }
        Ok(())
    }

    pub fn eval_unchecked(&self, t: f64) -> f64 {
        self.a0 + t * (self.a1 + t * (self.a2 + t * self.a3))
    }

    pub fn slope_unchecked(&self, t: f64) -> f64 {
        self.a1 + t * (2.0 * self.a2 + 3.0 * self.a3 * t)
    }

    /// `D` at the ends of the valid range: `(D(T_max), D(T_min))`.
    pub fn d_interval(&self) -> (f64, f64) {
        (
            self.eval_unchecked(self.valid_range.1),
            self.eval_unchecked(self.valid_range.0),
        )
    }

    fn check_temperature(&self, t: f64) -> Result<bool> {
        let (lo, hi) = self.valid_range;
        if t >= lo && t <= hi {
            return Ok(false);
        }
        if t >= lo - EXTRAPOLATION_BAND_K && t <= hi + EXTRAPOLATION_BAND_K {
            return Ok(true);
        }
        Err(Error::OutOfRange {
            quantity: "temperature (K)",
            value: t,
            min: lo - EXTRAPOLATION_BAND_K,
            max: hi + EXTRAPOLATION_BAND_K,
        })
    }
}

/// `D(T)` in GHz; flagged when `t` lies in the ±50 K extrapolation band.
pub fn zfs_of_temperature(c: &ZfsCoefficients, t: f64) -> Result<Flagged> {
    let extrapolated = c.check_temperature(t)?;
    Ok(Flagged {
        value: c.eval_unchecked(t),
        extrapolated,
    })
}

/// `dD/dT` in GHz/K.
pub fn zfs_slope(c: &ZfsCoefficients, t: f64) -> Result<Flagged> {
    let extrapolated = c.check_temperature(t)?;
    Ok(Flagged {
        value: c.slope_unchecked(t),
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form eigenvalues of a Hermitian 3×3 matrix from its invariants
    /// (trigonometric solution of the characteristic cubic).
    fn hermitian_eigenvalues_oracle(h: &Matrix3<Complex64>) -> [f64; 3] {
        let tr = (h[(0, 0)] + h[(1, 1)] + h[(2, 2)]).re;
        let q = tr / 3.0;
        let shifted = h - Matrix3::identity() * Complex64::new(q, 0.0);
        let p2: f64 = shifted.iter().map(|z| z.norm_sqr()).sum::<f64>() / 6.0;
        let p = p2.sqrt();
        if p < 1e-15 {
            return [q, q, q];
        }
        let bm = shifted / Complex64::new(p, 0.0);
        let r = (bm.determinant().re / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let l1 = q + 2.0 * p * phi.cos();
        let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        let l2 = 3.0 * q - l1 - l3;
        let mut v = [l1, l2, l3];
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn zero_field_hamiltonian_is_diagonal() {
        let p = SpinParams::new(2.87, 0.0).unwrap();
        let h = build_hamiltonian(&p, &MagneticField::ZERO);
        let expected = [2.87, 0.0, 2.87];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { expected[i] } else { 0.0 };
                assert!((h[(i, j)] - Complex64::new(want, 0.0)).norm() < 1e-15);
            }
        }
        let tr = h.trace().re;
        assert!((tr - 2.0 * 2.87).abs() < 1e-14);
    }

    #[test]
    fn strain_splits_the_upper_pair() {
        let p = SpinParams::new(2.87, 0.005).unwrap();
        let ev = eigensystem(build_hamiltonian(&p, &MagneticField::ZERO));
        let got: Vec<f64> = ev.iter().map(|e| e.0).collect();
        for (g, w) in got.iter().zip([0.0, 2.865, 2.875]) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn axial_field_matches_eigenvalue_oracle() {
        let p = SpinParams::new(2.87, 0.005).unwrap();
        let b = MagneticField::axial_from_shift(0.010, p.gyromagnetic_ratio).unwrap();
        let h = build_hamiltonian(&p, &b);
        let oracle = hermitian_eigenvalues_oracle(&h);
        let split = (0.005f64.powi(2) + 0.010f64.powi(2)).sqrt();
        assert!(oracle[0].abs() < 1e-12);
        assert!((oracle[1] - (2.87 - split)).abs() < 1e-12);
        assert!((oracle[2] - (2.87 + split)).abs() < 1e-12);
        let ev = eigensystem(h);
        for k in 0..3 {
            assert!((ev[k].0 - oracle[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn transition_examples() {
        let (fm, fp) = transition_frequencies(&SpinParams::new(2.87, 0.0).unwrap(), &MagneticField::ZERO);
        assert_eq!((fm, fp), (2.87, 2.87));

        let (fm, fp) = transition_frequencies(&SpinParams::new(2.8558, 0.005).unwrap(), &MagneticField::ZERO);
        assert!((fm - 2.8508).abs() < 1e-12 && (fp - 2.8608).abs() < 1e-12);

        let p = SpinParams::new(2.87, 0.003).unwrap();
        let b = MagneticField::axial_from_shift(0.004, p.gyromagnetic_ratio).unwrap();
        let (fm, fp) = transition_frequencies(&p, &b);
        assert!((fm - 2.865).abs() < 1e-12 && (fp - 2.875).abs() < 1e-12, "{fm} {fp}");
    }

    #[test]
    fn transverse_field_uses_the_zero_dominated_state() {
        // A transverse field mixes |0⟩ weakly; the lines stay near D ± E and
        // their midpoint moves up by second-order shifts only.
        let p = SpinParams::new(2.87, 0.0).unwrap();
        let b = MagneticField::new(1e-3, 0.0, 0.0).unwrap();
        let (fm, fp) = transition_frequencies(&p, &b);
        assert!(fm > 2.87 - 1e-3 && fp < 2.87 + 1e-2);
        let h = build_hamiltonian(&p, &b);
        let oracle = hermitian_eigenvalues_oracle(&h);
        assert!(((fp - fm) - (oracle[2] - oracle[1])).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SpinParams::new(3.5, 0.0).is_err());
        assert!(SpinParams::new(2.87, -0.001).is_err());
        assert!(SpinParams::new(2.87, 0.3).is_err());
        assert!(SpinParams::with_gyromagnetic_ratio(2.87, 0.0, 0.0).is_err());
        assert!(MagneticField::new(0.0, 0.0, 0.2).is_err());
    }

    #[test]
    fn zfs_polynomial_examples() {
        let c = ZfsCoefficients::default();
        let d300 = zfs_of_temperature(&c, 300.0).unwrap();
        assert!((d300.value - 2.8700).abs() < 0.5e-3);
        assert!(!d300.extrapolated);

        let flat = ZfsCoefficients {
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            ..c
        };
        assert_eq!(flat.eval_unchecked(0.0), flat.a0);
        assert_eq!(flat.slope_unchecked(123.0), 0.0);
        // constant D is not strictly monotone
        assert!(flat.validate().is_err());

        let d435 = zfs_of_temperature(&c, 435.0).unwrap().value;
        assert!((d435 - 2.8556).abs() < 5e-5, "{d435}");
    }

    #[test]
    fn zfs_slope_examples() {
        let c = ZfsCoefficients::default();
        let s300 = zfs_slope(&c, 300.0).unwrap().value;
        assert!((s300 + 8.0e-5).abs() < 1e-8, "{s300}");
        let s435 = zfs_slope(&c, 435.0).unwrap().value;
        let h = 1e-3;
        let fd = (c.eval_unchecked(435.0 + h) - c.eval_unchecked(435.0 - h)) / (2.0 * h);
        assert!((s435 - fd).abs() < 1e-9);
        assert!((s435 + 1.3e-4).abs() < 0.05e-4, "{s435}");
    }

    #[test]
    fn extrapolation_band() {
        let c = ZfsCoefficients::default();
        assert!(zfs_of_temperature(&c, 260.0).unwrap().extrapolated);
        assert!(zfs_of_temperature(&c, 740.0).unwrap().extrapolated);
        assert!(matches!(
            zfs_of_temperature(&c, 200.0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(zfs_slope(&c, 800.0).is_err());
    }

    #[test]
    fn default_coefficients_are_monotone() {
        let c = ZfsCoefficients::default();
        c.validate().unwrap();
        let mut prev = c.eval_unchecked(298.0);
        for t in 299..=700 {
            let d = c.eval_unchecked(t as f64);
            assert!(d < prev);
            prev = d;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field() -> impl Strategy<Value = MagneticField> {
            (-0.05f64..0.05, -0.05f64..0.05, -0.05f64..0.05)
                .prop_map(|(x, y, z)| MagneticField::new(x, y, z).unwrap())
        }

        proptest! {
            #[test]
            fn hamiltonian_is_hermitian(d in 2.6f64..3.1, e in 0.0f64..0.02, b in field()) {
                let h = build_hamiltonian(&SpinParams::new(d, e).unwrap(), &b);
                let diff = (h - h.adjoint()).norm();
                prop_assert!(diff <= 1e-12 * h.norm());
                prop_assert!((h.trace().re - 2.0 * d).abs() < 1e-12);
            }

            #[test]
            fn spectrum_even_in_field(d in 2.6f64..3.1, e in 0.0f64..0.02, b in field()) {
                let p = SpinParams::new(d, e).unwrap();
                let neg = MagneticField::new(-b.bx, -b.by, -b.bz).unwrap();
                let a = eigensystem(build_hamiltonian(&p, &b));
                let c = eigensystem(build_hamiltonian(&p, &neg));
                for k in 0..3 {
                    prop_assert!((a[k].0 - c[k].0).abs() < 1e-12);
                }
            }

            #[test]
            fn zero_field_zero_strain_is_degenerate(d in 2.6f64..3.1) {
                let (fm, fp) = transition_frequencies(&SpinParams::new(d, 0.0).unwrap(), &MagneticField::ZERO);
                prop_assert_eq!(fm, d);
                prop_assert_eq!(fp, d);
            }

            #[test]
            fn zero_field_midpoint_is_d(d in 2.6f64..3.1, e in 0.0f64..0.02) {
                let (fm, fp) = transition_frequencies(&SpinParams::new(d, e).unwrap(), &MagneticField::ZERO);
                prop_assert!((0.5 * (fm + fp) - d).abs() < 1e-12);
            }

            #[test]
            fn slope_matches_central_difference(t in 298.0f64..700.0) {
                let c = ZfsCoefficients::default();
                let h = 1e-3;
                let fd = (c.eval_unchecked(t + h) - c.eval_unchecked(t - h)) / (2.0 * h);
                prop_assert!((zfs_slope(&c, t).unwrap().value - fd).abs() < 1e-9);
            }
        }
    }
}
