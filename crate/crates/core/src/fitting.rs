//! Least-squares fit of the detector response model
//! `a_i |<i|out(x, lambda phi + mu)>|^2 + b_i` to measured traces.
//!
//! `(a_i, b_i)` enter linearly and are eliminated per iterate; the outer
//! damped Gauss-Newton search runs over `lambda`, the plate phases and
//! optionally `mu`. Shifting `mu` by `d` while moving `(x1, x2, x4)` by
//! `(-d, -d, +d)` leaves every curve unchanged, so `mu` is held at its
//! initial value unless [`FitOptions::fit_mu`] is set.

use std::f64::consts::{FRAC_PI_2, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{wrap_phase, wrap_signed, xf, ExperimentConfig, Pipeline};
use crate::lm::{self, LmSettings};
use crate::trace::DetectorTrace;
use crate::{Error, Result};

/// Minimum number of samples accepted by [`fit`].
pub const MIN_POINTS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub scale: [f64; 3],
    pub bias: [f64; 3],
    pub lambda: f64,
    pub mu: f64,
    pub x: [f64; 4],
}

impl Default for FitModel {
    fn default() -> Self {
        Self {
            scale: [1.0; 3],
            bias: [0.0; 3],
            lambda: 1.0,
            mu: 0.0,
            x: [0.0; 4],
        }
    }
}

impl FitModel {
    /// Unit response at the configuration's Fourier setting.
    pub fn at_fourier_point(cfg: &ExperimentConfig) -> Self {
        Self {
            x: xf(cfg),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Offsets from the Fourier setting tried for every plate; the start
    /// grid is their 4-fold product. Empty means start from `init.x` only.
    pub start_offsets: Vec<f64>,
    pub fit_mu: bool,
    pub fit_x: bool,
    pub max_iter: usize,
    pub step_tol: f64,
    pub jacobian_step: f64,
    /// Iterations every start gets before the field is narrowed.
    pub screen_iter: usize,
    /// Starts carried on to convergence after screening.
    pub survivors: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            start_offsets: vec![-FRAC_PI_2, 0.0, FRAC_PI_2],
            fit_mu: false,
            fit_x: true,
            max_iter: 200,
            step_tol: 1e-10,
            jacobian_step: 1e-6,
            screen_iter: 8,
            survivors: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// Sum of squared residuals over all detectors and samples.
    pub residual: f64,
    pub detector_residuals: [f64; 3],
    pub iterations: usize,
    pub converged: bool,
    pub final_step: f64,
    /// Fitted plates relative to the Fourier setting, in `(-pi, pi]`.
    pub delta_x: [f64; 4],
    pub starts: usize,
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Response `(p0, p1, p2)` of the model at platform phase `phi`.
pub fn model_predict(model: &FitModel, cfg: &ExperimentConfig, phi: f64) -> Result<[f64; 3]> {
    let p = Pipeline::new(cfg, model.x)?;
    Ok(respond(model, &p, phi))
}

fn respond(model: &FitModel, p: &Pipeline, phi: f64) -> [f64; 3] {
    let clean = p.intensities(model.lambda * phi + model.mu);
    std::array::from_fn(|i| model.scale[i] * clean[i] + model.bias[i])
}

/// Model response over a whole grid.
pub fn predict_trace(model: &FitModel, cfg: &ExperimentConfig, grid: &[f64]) -> Result<DetectorTrace> {
    let p = Pipeline::new(cfg, model.x)?;
    let rows = grid.iter().map(|&phi| respond(model, &p, phi).map(|v| v.max(0.0))).collect();
    DetectorTrace::new(grid.to_vec(), rows)
}

/// Least-squares `(a, b)` for `data ~ a clean + b` with `b >= 0`.
pub fn solve_scale_bias(clean: &[f64], data: &[f64]) -> (f64, f64) {
    let n = clean.len() as f64;
    let (sx, sy) = (clean.iter().sum::<f64>(), data.iter().sum::<f64>());
    let sxx: f64 = clean.iter().map(|c| c * c).sum();
    let sxy: f64 = clean.iter().zip(data).map(|(c, d)| c * d).sum();
    let det = n * sxx - sx * sx;
    if det.abs() > 1e-300 {
        let a = (n * sxy - sx * sy) / det;
        let b = (sy - a * sx) / n;
        if b >= 0.0 {
            return (a, b);
        }
    }
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (a, 0.0)
}

struct Problem<'a> {
    trace: &'a DetectorTrace,
    columns: [Vec<f64>; 3],
    cfg: &'a ExperimentConfig,
    init: &'a FitModel,
    fit_mu: bool,
    fit_x: bool,
}

impl Problem<'_> {
    fn pack(&self, model: &FitModel) -> Vec<f64> {
        let mut p = vec![model.lambda];
        if self.fit_x {
            p.extend_from_slice(&model.x);
        }
        if self.fit_mu {
            p.push(model.mu);
        }
        p
    }

    fn unpack(&self, p: &[f64]) -> FitModel {
        let mut model = self.init.clone();
        model.lambda = p[0];
        let mut k = 1;
        if self.fit_x {
            model.x.copy_from_slice(&p[1..5]);
            k = 5;
        }
        if self.fit_mu {
            model.mu = p[k];
        }
        model
    }

    /// Plate and phase-scale parameters to a full model with the linear
    /// part solved in closed form.
    fn complete(&self, p: &[f64]) -> Option<(FitModel, [Vec<f64>; 3])> {
        let mut model = self.unpack(p);
        let pipeline = Pipeline::new(self.cfg, model.x).ok()?;
        let mut clean: [Vec<f64>; 3] = Default::default();
        for &phi in self.trace.phi() {
            let v = pipeline.intensities(model.lambda * phi + model.mu);
            for i in 0..3 {
                clean[i].push(v[i]);
            }
        }
        for i in 0..3 {
            let (a, b) = solve_scale_bias(&clean[i], &self.columns[i]);
            model.scale[i] = a;
            model.bias[i] = b;
        }
        Some((model, clean))
    }

    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        let n = self.trace.len();
        let Some((model, clean)) = self.complete(p) else {
            return vec![f64::NAN; 3 * n];
        };
        let mut r = Vec::with_capacity(3 * n);
        for i in 0..3 {
            for k in 0..n {
                r.push(model.scale[i] * clean[i][k] + model.bias[i] - self.columns[i][k]);
            }
        }
        r
    }
}

fn check_trace(trace: &DetectorTrace) -> Result<()> {
    let n = trace.len();
    if n < MIN_POINTS {
        return Err(Error::Fit(format!("trace has {n} points, need at least {MIN_POINTS}")));
    }
    let phi = trace.phi();
    let span = phi[n - 1] - phi[0];
    if span * (n as f64) / ((n - 1) as f64) < TAU - 1e-9 {
        return Err(Error::Fit(format!("trace spans {span:.4} rad, less than one period")));
    }
    let flat = (0..3).all(|i| {
        let col = trace.detector(i);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        hi - lo <= 1e-12 * hi.abs().max(1.0)
    });
    if flat {
        return Err(Error::Fit("trace is constant on every detector".into()));
    }
    Ok(())
}

/// Fit the response model to `trace`. Multi-start over the offset grid in
/// `options`; the lowest-residual local fit wins.
pub fn fit(trace: &DetectorTrace, cfg: &ExperimentConfig, init: &FitModel, options: &FitOptions) -> Result<FitResult> {
    cfg.validate()?;
    check_trace(trace)?;
    let finite = init.lambda.is_finite() && init.mu.is_finite() && init.x.iter().all(|v| v.is_finite());
    if !finite || init.lambda <= 0.0 {
        return Err(Error::Fit("initial model must be finite with lambda > 0".into()));
    }
    let problem = Problem {
        trace,
        columns: std::array::from_fn(|i| trace.detector(i)),
        cfg,
        init,
        fit_mu: options.fit_mu,
        fit_x: options.fit_x,
    };

    let centre = xf(cfg);
    let starts: Vec<[f64; 4]> = if options.start_offsets.is_empty() || !options.fit_x {
        vec![init.x]
    } else {
        let o = &options.start_offsets;
        let m = o.len();
        (0..m.pow(4))
            .map(|mut k| {
                std::array::from_fn(|i| {
                    let d = o[k % m];
                    k /= m;
                    centre[i] + d
                })
            })
            .collect()
    };
    let settings = LmSettings {
        max_iter: options.max_iter,
        step_tol: options.step_tol,
        jac_step: options.jacobian_step,
    };
    let screen = LmSettings {
        max_iter: options.screen_iter.min(options.max_iter),
        ..settings
    };
    let mut screened: Vec<_> = starts
        .par_iter()
        .map(|x0| {
            let start = problem.pack(&FitModel { x: *x0, ..init.clone() });
            lm::minimize(|p| problem.residuals(p), &start, screen)
        })
        .collect();
    screened.retain(|o| o.cost.is_finite());
    // stable sort keeps the grid order among ties
    screened.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    screened.truncate(options.survivors.max(1));
    let outcomes: Vec<_> = screened
        .par_iter()
        .map(|o| {
            if o.converged {
                return o.clone();
            }
            let mut out = lm::minimize(|p| problem.residuals(p), &o.params, settings);
            out.iterations += o.iterations;
            out
        })
        .collect();
    let best = outcomes
        .iter()
        .filter(|o| o.cost.is_finite())
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or_else(|| Error::Fit("every start diverged".into()))?;

    let (mut model, clean) = problem
        .complete(&best.params)
        .ok_or_else(|| Error::Fit("best parameters are invalid".into()))?;
    model.x = model.x.map(wrap_phase);
    let columns = &problem.columns;
    let detector_residuals = std::array::from_fn(|i| {
        clean[i]
            .iter()
            .zip(&columns[i])
            .map(|(c, d)| (model.scale[i] * c + model.bias[i] - d).powi(2))
            .sum::<f64>()
    });
    Ok(FitResult {
        delta_x: std::array::from_fn(|i| wrap_signed(model.x[i] - centre[i])),
        model,
        residual: best.cost,
        detector_residuals,
        iterations: best.iterations,
        converged: best.converged,
        final_step: best.last_step,
        starts: starts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// RMS residual divided by the data's peak-to-peak swing.
    pub normalized_rms: [f64; 3],
    /// `(max - min) / (max + min - 2 b_i)` of the data.
    pub visibility: [f64; 3],
}

pub fn residual_report(result: &FitResult, trace: &DetectorTrace, cfg: &ExperimentConfig) -> Result<ResidualReport> {
    let pipeline = Pipeline::new(cfg, result.model.x)?;
    let model: Vec<[f64; 3]> = trace.phi().iter().map(|&phi| respond(&result.model, &pipeline, phi)).collect();
    let mut normalized_rms = [0.0; 3];
    let mut visibility = [0.0; 3];
    for i in 0..3 {
        let data = trace.detector(i);
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        let sse: f64 = data.iter().zip(&model).map(|(d, m)| (m[i] - d).powi(2)).sum();
        let rms = (sse / data.len() as f64).sqrt();
        normalized_rms[i] = if hi > lo { rms / (hi - lo) } else { 0.0 };
        let denom = hi + lo - 2.0 * result.model.bias[i];
        visibility[i] = if denom > 0.0 { (hi - lo) / denom } else { 0.0 };
    }
    Ok(ResidualReport {
        normalized_rms,
        visibility,
    })
}
