//! ESR/ODMR spectra: synthesis from spin parameters, a seven-parameter
//! double-dip least-squares fit, and the empirical contrast-vs-temperature
//! model.

mod fit;
mod guess;

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spin_model::{transition_frequencies, MagneticField, SpinParams};

pub use fit::{contrast_of_fit, fit_double_gaussian, fit_spectrum, Dip, FitOptions, OdmrFit, OdmrFitRecord};
pub use guess::{initial_guess, InitialGuess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    #[default]
    Gaussian,
    Lorentzian,
}

impl LineShape {
    /// Unit-peak profile and its derivative at `u = (f − c)/σ`. For the
    /// Lorentzian, σ is the half width at half maximum.
    #[inline]
    pub fn eval(self, u: f64) -> (f64, f64) {
        match self {
            LineShape::Gaussian => {
                let g = (-0.5 * u * u).exp();
                (g, -u * g)
            }
            LineShape::Lorentzian => {
                let d = 1.0 / (1.0 + u * u);
                (d, -2.0 * u * d * d)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub laser_power_w: Option<f64>,
    pub pressure_mbar: Option<f64>,
    pub integration: String,
}

/// Photoluminescence (counts/s) against microwave frequency (GHz).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub pl: Vec<f64>,
    pub meta: SpectrumMeta,
}

pub const MIN_SPECTRUM_POINTS: usize = 8;

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, pl: Vec<f64>, meta: SpectrumMeta) -> Result<Self> {
        let s = Spectrum { frequencies, pl, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.pl.len() {
            return Err(Error::invalid("spectrum", "frequency and PL lengths differ"));
        }
        if self.frequencies.len() < MIN_SPECTRUM_POINTS {
            return Err(Error::invalid("spectrum", format!("need at least {MIN_SPECTRUM_POINTS} points")));
        }
        if !self.frequencies.iter().all(|f| f.is_finite()) || !self.frequencies.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::invalid("spectrum", "frequencies must be finite and strictly increasing"));
        }
        if !self.pl.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::invalid("spectrum", "PL must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn window(&self) -> (f64, f64) {
        (self.frequencies[0], *self.frequencies.last().unwrap())
    }

    /// Same spectrum with PL multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Spectrum {
        Spectrum {
            pl: self.pl.iter().map(|x| x * factor).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `freq_ghz,pl_cps`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["freq_ghz", "pl_cps"])?;
        for (f, p) in self.frequencies.iter().zip(&self.pl) {
            out.write_record([f.to_string(), p.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["freq_ghz", "pl_cps"] {
            return Err(Error::Config(format!(
                "spectrum header must be `freq_ghz,pl_cps`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut frequencies = Vec::new();
        let mut pl = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("bad number in spectrum row {:?}", rec.position())))
            };
            frequencies.push(parse(0)?);
            pl.push(parse(1)?);
        }
        Spectrum::new(frequencies, pl, SpectrumMeta::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_start: f64,
    pub f_stop: f64,
    pub n_points: usize,
}

impl FrequencyGrid {
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        let step = (self.f_stop - self.f_start) / (n - 1) as f64;
        (0..n).map(|i| self.f_start + step * i as f64).collect()
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            f_start: 2.82,
            f_stop: 2.90,
            n_points: 8001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// Additive white Gaussian noise with standard deviation `scale·s_max`.
    #[default]
    Gaussian,
    /// Counting noise: each point is Poisson with mean `pl/scale²`, rescaled,
    /// so the relative noise at `s_max` is `scale`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
    /// Relative to `s_max`.
    pub scale: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        seed: 0,
        scale: 0.0,
    };

    pub fn gaussian(seed: u64, scale: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Gaussian,
            seed,
            scale,
        }
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::gaussian(0, 0.01)
    }
}

/// Forward-model parameters of a synthetic spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdmrLine {
    /// Normalised depth `(S_max − S_min)/S_max` of the noiseless model.
    pub contrast: f64,
    pub s_max: f64,
    /// Gaussian standard deviation (or Lorentzian HWHM), GHz.
    pub sigma: f64,
    pub line_shape: LineShape,
}

impl Default for OdmrLine {
    fn default() -> Self {
        OdmrLine {
            contrast: 0.017,
            s_max: 8000.0,
            sigma: 0.004,
            line_shape: LineShape::Gaussian,
        }
    }
}

/// Maximum of `L(x) + L(x − s)` for unit-peak profiles separated by `s`
/// widths, found by golden-section search on `[0, s/2]`.
pub(crate) fn pair_peak(separation: f64, shape: LineShape) -> f64 {
    let h = |x: f64| shape.eval(x).0 + shape.eval(x - separation).0;
    let (mut lo, mut hi) = (0.0, 0.5 * separation.abs());
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        let x1 = hi - inv_phi * (hi - lo);
        let x2 = lo + inv_phi * (hi - lo);
        if h(x1) < h(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    h(0.5 * (lo + hi)).max(h(0.0)).max(h(0.5 * separation.abs()))
}

/// Noiseless model `s_max·[1 − contrast·(L₋ + L₊)/peak]`, normalised so the
/// deepest point sits at `s_max·(1 − contrast)`.
pub fn model_pl(f: f64, f_minus: f64, f_plus: f64, line: &OdmrLine) -> f64 {
    let peak = pair_peak((f_plus - f_minus) / line.sigma, line.line_shape);
    let shape = line.line_shape.eval((f - f_minus) / line.sigma).0 + line.line_shape.eval((f - f_plus) / line.sigma).0;
    line.s_max * (1.0 - line.contrast * shape / peak)
}

/// Sample the forward model on `grid` and add seeded noise. Identical seeds
/// give bit-identical spectra.
pub fn synthesize_spectrum(
    sp: &SpinParams,
    b: &MagneticField,
    line: &OdmrLine,
    grid: &FrequencyGrid,
    noise: &NoiseSpec,
) -> Result<Spectrum> {
    sp.validate()?;
    if !(line.sigma > 0.0) {
        return Err(Error::invalid("sigma", "must be > 0"));
    }
    if !(0.0..=1.0).contains(&line.contrast) {
        return Err(Error::invalid("contrast", "must lie in [0, 1]"));
    }
    if !(line.s_max > 0.0) {
        return Err(Error::invalid("s_max", "must be > 0"));
    }
    if grid.n_points < 16 {
        return Err(Error::invalid("n_points", "must be >= 16"));
    }
    if !(grid.f_start < grid.f_stop) {
        return Err(Error::invalid("grid", "f_start must be below f_stop"));
    }
    let (f_minus, f_plus) = transition_frequencies(sp, b);
    if f_minus < grid.f_start || f_plus > grid.f_stop {
        return Err(Error::invalid(
            "grid",
            format!(
                "[{}, {}] GHz does not bracket the lines at {f_minus:.6} and {f_plus:.6} GHz",
                grid.f_start, grid.f_stop
            ),
        ));
    }
    let freqs = grid.points();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let noise_sd = noise.scale * line.s_max;
    let mut pl = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        let clean = model_pl(f, f_minus, f_plus, line);
        let v = match noise.kind {
            NoiseKind::None => clean,
            _ if noise.scale <= 0.0 => clean,
            NoiseKind::Gaussian => {
                let n = Normal::new(0.0, noise_sd).map_err(|e| Error::invalid("noise", e.to_string()))?;
                clean + n.sample(&mut rng)
            }
            NoiseKind::Poisson => {
                let per_count = noise.scale * noise.scale * line.s_max;
                let mean = clean / per_count;
                if mean > 0.0 {
                    let d = Poisson::new(mean).map_err(|e| Error::invalid("noise", e.to_string()))?;
                    d.sample(&mut rng) * per_count
                } else {
                    0.0
                }
            }
        };
        pl.push(v.max(0.0));
    }
    Spectrum::new(freqs, pl, SpectrumMeta::default())
}

/// Linear-with-clamp contrast against temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastModel {
    pub c_ref: f64,
    pub t_ref: f64,
    /// Contrast lost per kelvin above `t_ref`.
    pub slope: f64,
    pub floor: f64,
}

impl Default for ContrastModel {
    /// 2.5 % at 310 K falling to 1.0 % at 470 K, floor 0.5 %.
    fn default() -> Self {
        ContrastModel {
            c_ref: 0.025,
            t_ref: 310.0,
            slope: 9.375e-5,
            floor: 0.005,
        }
    }
}

impl ContrastModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_ref > 0.0 && self.c_ref <= 0.2) {
            return Err(Error::invalid("c_ref", "must lie in (0, 0.2]"));
        }
        if !(self.floor >= 0.0 && self.floor <= self.c_ref) {
            return Err(Error::invalid("floor", "must lie in [0, c_ref]"));
        }
        if !(self.slope >= 0.0) {
            return Err(Error::invalid("slope", "must be >= 0"));
        }
        Ok(())
    }
}

pub fn contrast_model_predict(m: &ContrastModel, t: f64) -> Result<f64> {
    if t < m.t_ref {
        return Err(Error::OutOfRange {
            quantity: "temperature (K)",
            value: t,
            min: m.t_ref,
            max: f64::INFINITY,
        });
    }
    Ok((m.c_ref - m.slope * (t - m.t_ref)).clamp(m.floor, m.c_ref))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_params() -> SpinParams {
        SpinParams::new(2.8558, 0.005).unwrap()
    }

    #[test]
    fn zero_contrast_is_flat() {
        let line = OdmrLine {
            contrast: 0.0,
            ..OdmrLine::default()
        };
        let s = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &line, &FrequencyGrid::default(), &NoiseSpec::gaussian(7, 0.01)).unwrap();
        let mean = s.pl.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 8000.0).abs() < 3.0 * 80.0 / (s.len() as f64).sqrt() * 2.0, "{mean}");
        let clean = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &line, &FrequencyGrid::default(), &NoiseSpec::NONE).unwrap();
        assert!(clean.pl.iter().all(|&x| x == 8000.0));
    }

    #[test]
    fn noiseless_minimum_matches_closed_form() {
        let line = OdmrLine::default();
        let sp = fig2_params();
        let (fm, fp) = transition_frequencies(&sp, &MagneticField::ZERO);
        // value at the lower line from the closed form
        let sep = (fp - fm) / line.sigma;
        let kappa = (1.0 + (-0.5 * sep * sep).exp()) / pair_peak(sep, LineShape::Gaussian);
        let at_line = model_pl(fm, fm, fp, &line);
        assert!((at_line - 8000.0 * (1.0 - 0.017 * kappa)).abs() < 1e-9);
        assert!(kappa <= 1.0 && kappa > 0.99);
        // the deepest point of the noiseless model is exactly s_max(1 − c)
        let dense: f64 = (0..200_001)
            .map(|i| model_pl(2.84 + 0.03 * i as f64 / 200_000.0, fm, fp, &line))
            .fold(f64::INFINITY, f64::min);
        assert!((dense - 8000.0 * (1.0 - 0.017)).abs() < 1e-6, "{dense}");
    }

    #[test]
    fn pair_peak_limits() {
        assert!((pair_peak(0.0, LineShape::Gaussian) - 2.0).abs() < 1e-12);
        assert!((pair_peak(40.0, LineShape::Gaussian) - 1.0).abs() < 1e-12);
        assert!((pair_peak(0.0, LineShape::Lorentzian) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let a = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &FrequencyGrid::default(), &NoiseSpec::gaussian(3, 0.01)).unwrap();
        let b = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &FrequencyGrid::default(), &NoiseSpec::gaussian(3, 0.01)).unwrap();
        assert!(a.pl.iter().zip(&b.pl).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &FrequencyGrid::default(), &NoiseSpec::gaussian(4, 0.01)).unwrap();
        assert_ne!(a.pl, c.pl);
    }

    #[test]
    fn poisson_noise_has_requested_scale() {
        let line = OdmrLine {
            contrast: 0.0,
            ..OdmrLine::default()
        };
        let noise = NoiseSpec {
            kind: NoiseKind::Poisson,
            seed: 11,
            scale: 0.02,
        };
        let s = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &line, &FrequencyGrid::default(), &noise).unwrap();
        let n = s.len() as f64;
        let mean = s.pl.iter().sum::<f64>() / n;
        let sd = (s.pl.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((sd / (0.02 * 8000.0) - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn grid_must_bracket_lines() {
        let grid = FrequencyGrid {
            f_start: 2.855,
            f_stop: 2.9,
            n_points: 100,
        };
        assert!(synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &grid, &NoiseSpec::NONE).is_err());
        let few = FrequencyGrid {
            n_points: 10,
            ..FrequencyGrid::default()
        };
        assert!(synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &few, &NoiseSpec::NONE).is_err());
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0; 8], vec![1.0; 8], SpectrumMeta::default()).is_err());
        let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert!(Spectrum::new(f.clone(), vec![-1.0; 8], SpectrumMeta::default()).is_err());
        assert!(Spectrum::new(f[..7].to_vec(), vec![1.0; 7], SpectrumMeta::default()).is_err());
        Spectrum::new(f, vec![1.0; 8], SpectrumMeta::default()).unwrap();
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = synthesize_spectrum(&fig2_params(), &MagneticField::ZERO, &OdmrLine::default(), &FrequencyGrid::default(), &NoiseSpec::gaussian(1, 0.01)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"freq_ghz,pl_cps\n"));
        let back = Spectrum::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.frequencies, s.frequencies);
        assert_eq!(back.pl, s.pl);
        assert!(Spectrum::read_csv("f,p\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn contrast_model_examples() {
        let m = ContrastModel::default();
        assert_eq!(contrast_model_predict(&m, 310.0).unwrap(), 0.025);
        assert!((contrast_model_predict(&m, 470.0).unwrap() - 0.010).abs() < 1e-12);
        assert_eq!(contrast_model_predict(&m, 1000.0).unwrap(), 0.005);
        assert!(contrast_model_predict(&m, 300.0).is_err());
        m.validate().unwrap();
        assert!(ContrastModel { c_ref: 0.3, ..m }.validate().is_err());
    }
}
