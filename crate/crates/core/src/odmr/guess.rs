use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{Error, Result};

/// Starting point for the double-dip fit, natural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub s_max: f64,
    pub centers: [f64; 2],
    pub sigmas: [f64; 2],
    pub depths: [f64; 2],
}

impl InitialGuess {
    pub fn swapped(self) -> Self {
        InitialGuess {
            s_max: self.s_max,
            centers: [self.centers[1], self.centers[0]],
            sigmas: [self.sigmas[1], self.sigmas[0]],
            depths: [self.depths[1], self.depths[0]],
        }
    }
}

/// Features of the dominant dip used to seed the fit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DipFeatures {
    pub baseline: f64,
    pub center: f64,
    pub depth: f64,
    pub fwhm: f64,
    /// Smoothing window, GHz.
    pub window: f64,
    pub second: Option<(f64, f64)>,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Point-to-point noise from the median absolute first difference.
fn noise_sd(pl: &[f64]) -> f64 {
    let mut d: Vec<f64> = pl.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    1.4826 * median(&mut d) / 2f64.sqrt()
}

fn boxcar(xs: &[f64], half: usize) -> Vec<f64> {
    let n = xs.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + xs[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub(crate) fn dip_features(s: &Spectrum) -> Result<DipFeatures> {
    let n = s.len();
    let f = &s.frequencies;
    let window = (n / 20).max(5);
    let half = window / 2;
    let smooth = boxcar(&s.pl, half);
    let sd = noise_sd(&s.pl) / ((2 * half + 1) as f64).sqrt();

    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let baseline = sorted[(0.9 * (n - 1) as f64).round() as usize];

    let (imin, &smin) = smooth
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoDip)?;
    let depth = baseline - smin;
    if !(depth > 4.0 * sd && depth > 1e-9 * baseline.abs()) {
        return Err(Error::NoDip);
    }

    let half_level = baseline - 0.5 * depth;
    let crossing = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = imin;
        for i in range {
            if smooth[i] >= half_level {
                let (a, b) = (smooth[prev], smooth[i]);
                let t = if b != a { (half_level - a) / (b - a) } else { 0.0 };
                return Some(f[prev] + t * (f[i] - f[prev]));
            }
            prev = i;
        }
        None
    };
    let left = crossing(&mut (0..imin).rev()).unwrap_or(f[0]);
    let right = crossing(&mut (imin + 1..n)).unwrap_or(f[n - 1]);
    let step = (f[n - 1] - f[0]) / (n - 1) as f64;
    let fwhm = (right - left).max(2.0 * step);

    // deepest other local minimum of the smoothed trace, at least a third as
    // deep as the first and separated from it by a bump
    let mut second: Option<(f64, f64)> = None;
    for i in 1..n - 1 {
        let v = smooth[i];
        if i.abs_diff(imin) <= half || baseline - v < depth / 3.0 {
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        if !(lo..=hi).all(|j| smooth[j] >= v) {
            continue;
        }
        let (a, b) = (i.min(imin), i.max(imin));
        let ridge = smooth[a..=b].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if ridge - v > 2.0 * sd && second.is_none_or(|(_, d)| baseline - v > d) {
            second = Some((f[i], baseline - v));
        }
    }
    Ok(DipFeatures {
        baseline,
        center: f[imin],
        depth,
        fwhm,
        window: window as f64 * step,
        second,
    })
}

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Seed from a boxcar-smoothed trace (window `max(5, n/20)` points): upper
/// decile as baseline, the two deepest separated minima as centers, or the
/// global minimum ± one smoothing window when only one minimum is resolved.
pub fn initial_guess(s: &Spectrum) -> Result<InitialGuess> {
    s.validate()?;
    let feat = dip_features(s)?;
    Ok(guess_from(&feat, feat.window))
}

pub(crate) fn guess_from(feat: &DipFeatures, offset: f64) -> InitialGuess {
    let sigma_eff = feat.fwhm / FWHM_PER_SIGMA;
    match feat.second {
        Some((c2, d2)) => {
            let sep = (c2 - feat.center).abs();
            let sigma = sigma_eff.min(0.6 * sep);
            let g = InitialGuess {
                s_max: feat.baseline,
                centers: [feat.center, c2],
                sigmas: [sigma, sigma],
                depths: [feat.depth, d2],
            };
            if c2 < feat.center {
                g.swapped()
            } else {
                g
            }
        }
        None => {
            // two lines ±δ apart have a combined variance of about σ² + δ²
            let sigma = (sigma_eff * sigma_eff - offset * offset).max(sigma_eff * sigma_eff / 9.0).sqrt();
            InitialGuess {
                s_max: feat.baseline,
                centers: [feat.center - offset, feat.center + offset],
                sigmas: [sigma, sigma],
                depths: [0.6 * feat.depth, 0.6 * feat.depth],
            }
        }
    }
}

/// Extra seeds tried by the fit after the primary guess.
pub(crate) fn alternative_guesses(feat: &DipFeatures) -> Vec<InitialGuess> {
    let single = DipFeatures { second: None, ..*feat };
    let mut v: Vec<InitialGuess> = [0.1, 0.25, 0.4].iter().map(|&k| guess_from(&single, k * feat.fwhm)).collect();
    if feat.second.is_some() {
        v.push(guess_from(&single, feat.window));
    }
    v
}
