use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::guess::{alternative_guesses, dip_features, guess_from, InitialGuess};
use super::{LineShape, Spectrum};
use crate::error::{Error, Result};

type Vec7 = SVector<f64, 7>;
type Mat7 = SMatrix<f64, 7, 7>;

const MAX_ITERATIONS: usize = 200;
const REL_COST_TOL: f64 = 1e-10;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dip {
    pub center: f64,
    pub sigma: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub line_shape: LineShape,
    /// Single starting point. Without one, the fit runs from the automatic
    /// guess and a few symmetric splits and keeps the lowest cost.
    pub initial: Option<InitialGuess>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            line_shape: LineShape::Gaussian,
            initial: None,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

/// Result of the double-dip fit. Dips are ordered by center frequency and the
/// covariance rows follow `[s_max, c1, c2, σ1, σ2, d1, d2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdmrFit {
    pub s_max: f64,
    pub dips: [Dip; 2],
    pub d_fit: f64,
    pub e_fit: f64,
    /// Standard error of `d_fit`, GHz.
    pub d_sigma: f64,
    pub contrast: f64,
    pub covariance: [[f64; 7]; 7],
    pub converged: bool,
    pub status: String,
    pub iterations: usize,
    pub residual_rms: f64,
    pub n_points: usize,
    pub window: (f64, f64),
    pub line_shape: LineShape,
    /// Cost `½Σr²` after each accepted step of the winning start.
    pub cost_history: Vec<f64>,
}

/// Flat JSON form of [`OdmrFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdmrFitRecord {
    pub s_max_cps: f64,
    pub center1_ghz: f64,
    pub sigma1_ghz: f64,
    pub depth1_cps: f64,
    pub center2_ghz: f64,
    pub sigma2_ghz: f64,
    pub depth2_cps: f64,
    pub d_ghz: f64,
    pub e_ghz: f64,
    pub d_sigma_ghz: f64,
    pub contrast: f64,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub status: String,
    pub iterations: usize,
    pub residual_rms_cps: f64,
    pub n_points: usize,
    pub f_min_ghz: f64,
    pub f_max_ghz: f64,
    pub line_shape: LineShape,
}

impl OdmrFit {
    pub fn record(&self) -> OdmrFitRecord {
        let [a, b] = self.dips;
        OdmrFitRecord {
            s_max_cps: self.s_max,
            center1_ghz: a.center,
            sigma1_ghz: a.sigma,
            depth1_cps: a.depth,
            center2_ghz: b.center,
            sigma2_ghz: b.sigma,
            depth2_cps: b.depth,
            d_ghz: self.d_fit,
            e_ghz: self.e_fit,
            d_sigma_ghz: self.d_sigma,
            contrast: self.contrast,
            covariance: self.covariance.iter().map(|r| r.to_vec()).collect(),
            converged: self.converged,
            status: self.status.clone(),
            iterations: self.iterations,
            residual_rms_cps: self.residual_rms,
            n_points: self.n_points,
            f_min_ghz: self.window.0,
            f_max_ghz: self.window.1,
            line_shape: self.line_shape,
        }
    }

    /// Noiseless fitted model at `f`.
    pub fn model(&self, f: f64) -> f64 {
        let mut m = self.s_max;
        for d in &self.dips {
            m -= d.depth * self.line_shape.eval((f - d.center) / d.sigma).0;
        }
        m
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.record())?)
    }
}

/// Internal parameters `[s, c1, c2, ln σ1, ln σ2, ln d1, ln d2]`.
fn to_theta(g: &InitialGuess) -> Vec7 {
    Vec7::from([
        g.s_max,
        g.centers[0],
        g.centers[1],
        g.sigmas[0].max(1e-9).ln(),
        g.sigmas[1].max(1e-9).ln(),
        g.depths[0].max(1e-9 * g.s_max.abs()).ln(),
        g.depths[1].max(1e-9 * g.s_max.abs()).ln(),
    ])
}

struct Problem<'a> {
    f: &'a [f64],
    y: &'a [f64],
    shape: LineShape,
}

impl Problem<'_> {
    fn cost(&self, th: &Vec7) -> f64 {
        let (s1, s2) = (th[3].exp(), th[4].exp());
        let (d1, d2) = (th[5].exp(), th[6].exp());
        let mut c = 0.0;
        for (&f, &y) in self.f.iter().zip(self.y) {
            let m = th[0] - d1 * self.shape.eval((f - th[1]) / s1).0 - d2 * self.shape.eval((f - th[2]) / s2).0;
            c += (y - m) * (y - m);
        }
        0.5 * c
    }

    /// `JᵀJ`, `Jᵀr` and the cost, with `J` the model Jacobian.
    fn normal_equations(&self, th: &Vec7) -> (Mat7, Vec7, f64) {
        let sig = [th[3].exp(), th[4].exp()];
        let dep = [th[5].exp(), th[6].exp()];
        let mut a = Mat7::zeros();
        let mut g = Vec7::zeros();
        let mut cost = 0.0;
        for (&f, &y) in self.f.iter().zip(self.y) {
            let mut row = Vec7::zeros();
            row[0] = 1.0;
            let mut m = th[0];
            for k in 0..2 {
                let u = (f - th[1 + k]) / sig[k];
                let (l, dl) = self.shape.eval(u);
                m -= dep[k] * l;
                row[1 + k] = dep[k] * dl / sig[k];
                row[3 + k] = dep[k] * dl * u;
                row[5 + k] = -dep[k] * l;
            }
            let r = y - m;
            cost += r * r;
            a += row * row.transpose();
            g += row * r;
        }
        (a, g, 0.5 * cost)
    }
}

struct Outcome {
    theta: Vec7,
    cost: f64,
    iterations: usize,
    converged: bool,
    status: &'static str,
    history: Vec<f64>,
}

fn levenberg_marquardt(p: &Problem, start: Vec7, max_iter: usize) -> Outcome {
    let mut theta = start;
    let (mut a, mut g, mut cost) = p.normal_equations(&theta);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let floor = 1e-30 * p.y.iter().map(|y| y * y).sum::<f64>();
    let mut history = vec![cost];
    macro_rules! done {
        ($conv:expr, $status:expr) => {
            return Outcome { theta, cost, iterations, converged: $conv, status: $status, history }
        };
    }
    while iterations < max_iter {
        if !cost.is_finite() {
            done!(false, "non-finite cost");
        }
        if cost <= floor {
            done!(true, "exact fit");
        }
        iterations += 1;
        let mut damped = a;
        for i in 0..7 {
            damped[(i, i)] += lambda * a[(i, i)].max(1e-300);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&g),
            None => {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    done!(false, "singular normal equations");
                }
                continue;
            }
        };
        let trial = theta + step;
        let trial_cost = p.cost(&trial);
        if trial_cost.is_finite() && trial_cost < cost {
            let rel = (cost - trial_cost) / cost;
            theta = trial;
            (a, g, cost) = p.normal_equations(&theta);
            history.push(cost);
            lambda = (lambda / 10.0).max(1e-12);
            let tiny_step = step.iter().zip(theta.iter()).all(|(d, t)| d.abs() <= 1e-12 * t.abs().max(1e-12));
            if rel < REL_COST_TOL || tiny_step {
                done!(true, "converged");
            }
        } else {
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                // no descent direction left at machine precision
                done!(true, "converged (stationary)");
            }
        }
    }
    done!(false, "iteration cap reached")
}

/// Fit `s_max − d1·L((f−c1)/σ1) − d2·L((f−c2)/σ2)` by damped least squares
/// (Levenberg–Marquardt), widths and depths in log space.
pub fn fit_double_gaussian(s: &Spectrum, opts: &FitOptions) -> Result<OdmrFit> {
    s.validate()?;
    if s.len() <= 7 {
        return Err(Error::invalid("spectrum", "fewer points than fit parameters"));
    }
    let starts: Vec<InitialGuess> = match opts.initial {
        Some(g) => vec![g],
        None => {
            let feat = dip_features(s)?;
            let mut v = vec![guess_from(&feat, 0.25)];
            v.extend(alternative_guesses(&feat));
            v
        }
    };
    let problem = Problem {
        f: &s.frequencies,
        y: &s.pl,
        shape: opts.line_shape,
    };
    let mut best: Option<Outcome> = None;
    let mut total_iterations = 0;
    for g in &starts {
        let out = levenberg_marquardt(&problem, to_theta(g), opts.max_iterations);
        total_iterations += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => (out.converged && !b.converged) || (out.converged == b.converged && out.cost < b.cost),
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| Error::FitFailed("no starting point".into()))?;
    Ok(finish(s, &problem, best, total_iterations))
}

/// [`fit_double_gaussian`] with default options.
pub fn fit_spectrum(s: &Spectrum) -> Result<OdmrFit> {
    fit_double_gaussian(s, &FitOptions::default())
}

fn finish(s: &Spectrum, problem: &Problem, out: Outcome, total_iterations: usize) -> OdmrFit {
    let mut th = out.theta;
    let (a, _, _) = problem.normal_equations(&th);
    let n = s.len();
    let s2 = 2.0 * out.cost / (n - 7) as f64;
    let cov_theta = a.try_inverse().map(|inv| inv * s2).unwrap_or_else(|| Mat7::from_element(f64::NAN));
    let mut jac = Mat7::identity();
    for i in 3..7 {
        jac[(i, i)] = th[i].exp();
    }
    let mut cov = jac * cov_theta * jac;
    if th[1] > th[2] {
        let perm = [0usize, 2, 1, 4, 3, 6, 5];
        th = Vec7::from_fn(|i, _| th[perm[i]]);
        cov = Mat7::from_fn(|i, j| cov[(perm[i], perm[j])]);
    }
    let dip = |k: usize| Dip {
        center: th[1 + k],
        sigma: th[3 + k].exp(),
        depth: th[5 + k].exp(),
    };
    let dips = [dip(0), dip(1)];
    let window = s.window();
    let mut converged = out.converged;
    let mut status = out.status.to_string();
    if dips.iter().any(|d| d.center < window.0 || d.center > window.1) {
        converged = false;
        status = "dip center outside the frequency window".into();
    } else if dips.iter().any(|d| d.depth > th[0]) {
        converged = false;
        status = "dip depth exceeds baseline".into();
    }
    let var_d = 0.25 * (cov[(1, 1)] + cov[(2, 2)] + 2.0 * cov[(1, 2)]);
    let mut covariance = [[0.0; 7]; 7];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = cov[(i, j)];
        }
    }
    let mut fit = OdmrFit {
        s_max: th[0],
        dips,
        d_fit: 0.5 * (dips[0].center + dips[1].center),
        e_fit: 0.5 * (dips[1].center - dips[0].center),
        d_sigma: var_d.max(0.0).sqrt(),
        contrast: 0.0,
        covariance,
        converged,
        status,
        iterations: total_iterations,
        residual_rms: (2.0 * out.cost / n as f64).sqrt(),
        n_points: n,
        window,
        line_shape: problem.shape,
        cost_history: out.history,
    };
    fit.contrast = contrast_of_fit(&fit);
    fit
}

/// `(S_max − S_min)/S_max` of the fitted model, with `S_min` the model's
/// minimum over the fitted window.
pub fn contrast_of_fit(fit: &OdmrFit) -> f64 {
    let (lo, hi) = fit.window;
    let n = 4001;
    let step = (hi - lo) / (n - 1) as f64;
    let (i_min, _) = (0..n)
        .map(|i| fit.model(lo + step * i as f64))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let (mut a, mut b) = (lo + step * i_min.saturating_sub(1) as f64, (lo + step * (i_min + 1) as f64).min(hi));
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = b - inv_phi * (b - a);
        let x2 = a + inv_phi * (b - a);
        if fit.model(x1) < fit.model(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let s_min = fit.model(0.5 * (a + b)).min(fit.model(lo + step * i_min as f64));
    ((fit.s_max - s_min) / fit.s_max).clamp(0.0, 1.0)
}
