//! Step-by-step adjustment of the four tunable plates.
//!
//! Each step turns one plate while watching one intermediate beam. The
//! target reading is the value the beam takes when the plate sits at its
//! Fourier setting (`dx = 0`), computed from the closed-form curve in the
//! canonical frame; the plate is then driven to the matching root of the
//! physical signal on the selected slope.

use std::f64::consts::{FRAC_PI_3, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::experiment::{
    canonical_blocks, primary_blocks, prepare_state, reference_state, wrap_phase, wrap_signed, xf,
    ExperimentConfig,
};
use crate::optics::{apply, CircuitDescription};
use crate::roots::{periodic_extrema, periodic_roots};
use crate::synthesis::CHI_TILDE;
use crate::{Error, Result};

/// Platform phase held throughout the adjustment.
pub const CALIBRATION_PHI: f64 = FRAC_PI_3;

/// Grid used to bracket roots and extrema.
pub const SCAN_POINTS: usize = 2048;

/// Bisection tolerance on the plate phase.
pub const ROOT_TOL: f64 = 1e-10;

/// Below this peak-to-peak swing a monitored signal is treated as flat.
pub const DEGENERATE_RANGE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "f", rename_all = "snake_case")]
pub enum TargetRule {
    Minimum,
    FractionOfRange(f64),
}

impl TargetRule {
    /// Expected position of the target within the curve's range.
    pub fn fraction(self) -> f64 {
        match self {
            TargetRule::Minimum => 0.0,
            TargetRule::FractionOfRange(f) => f,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentStep {
    pub index: u8,
    /// Beam read after the step's splitter.
    pub monitored_mode: usize,
    pub rule: TargetRule,
    /// Sign of the signal's slope at the correct root.
    pub branch: i8,
}

/// The four steps. Branch signs are the slopes of the target curves at
/// `dx = 0` under the default constants, see `pinned_branch_signs`.
pub const STEPS: [AdjustmentStep; 4] = [
    AdjustmentStep {
        index: 1,
        monitored_mode: 1,
        rule: TargetRule::FractionOfRange(0.75),
        branch: -1,
    },
    AdjustmentStep {
        index: 2,
        monitored_mode: 0,
        rule: TargetRule::Minimum,
        branch: 1,
    },
    AdjustmentStep {
        index: 3,
        monitored_mode: 0,
        rule: TargetRule::FractionOfRange(0.60),
        branch: -1,
    },
    AdjustmentStep {
        index: 4,
        monitored_mode: 1,
        rule: TargetRule::FractionOfRange(0.64),
        branch: -1,
    },
];

pub fn step(index: u8) -> Result<AdjustmentStep> {
    STEPS
        .iter()
        .copied()
        .find(|s| s.index == index)
        .ok_or_else(|| Error::domain("step", index as f64, "1..=4"))
}

fn trig(cfg: &ExperimentConfig) -> (f64, f64) {
    cfg.chi0.sin_cos()
}

/// Probability of finding the light in `|1>` after BS1.
pub fn p1_closed_form(dx: f64, phi: f64, cfg: &ExperimentConfig) -> f64 {
    let (s, c) = trig(cfg);
    let (tps, tp, t2p) = (cfg.t_ps, cfg.t_phi, cfg.t_2phi);
    s * s * c * c * (tps * t2p * (tps * t2p + 2.0 * tp * s * (dx + phi).cos()) + tp * tp * s * s)
}

/// Probability of finding the light in `|0>` after BS2.
pub fn p2_closed_form(dx: f64, phi: f64, cfg: &ExperimentConfig) -> f64 {
    let (s, c) = trig(cfg);
    let x = cfg.chi0;
    let (tps, tp, t2p) = (cfg.t_ps, cfg.t_phi, cfg.t_2phi);
    s * s
        * c
        * c
        * (c * c
            + 0.5
                * tps
                * tps
                * s
                * s
                * (tp * tp + 2.0 * tps * tps * t2p * t2p - tp * tp * (2.0 * x).cos()
                    + 4.0 * tps * tp * t2p * s * phi.cos())
            - 2.0 * tps * c * s * (tps * t2p * (dx + 2.0 * phi).sin() + tp * (dx + phi).sin() * s))
}

/// Probability of finding the light in `|0>` after BS3.
pub fn p3_closed_form(dx: f64, phi: f64, cfg: &ExperimentConfig) -> f64 {
    let x = cfg.chi0;
    let (s, c) = trig(cfg);
    let a = CHI_TILDE;
    let (t, tp, t2p) = (cfg.t_ps, cfg.t_phi, cfg.t_2phi);
    let (sin, cos) = (f64::sin, f64::cos);

    let term1 = t * t * c.powi(4);
    let term2 = t * t
        * s
        * c.powi(3)
        * (-2.0 * t * (t * t2p * sin(2.0 * phi) + tp * s * sin(phi) + t2p * sin(dx - 2.0 * (phi + a)))
            - tp * cos(-x + dx - phi - 2.0 * a)
            + tp * cos(x + dx - phi - 2.0 * a));
    let term3 = t
        * s.powi(3)
        * c
        * (-2.0 * t * t * t2p * sin(dx + 2.0 * phi - 2.0 * a) + 2.0 * t * t2p * sin(2.0 * phi)
            - t * tp * cos(-x + dx + phi - 2.0 * a)
            + t * tp * cos(x + dx + phi - 2.0 * a)
            + 2.0 * tp * s * sin(phi));
    let inner = 2.0 * t.powi(4) * t2p * t2p
        + 4.0 * t.powi(3) * tp * t2p * s * cos(phi)
        + t * t * tp * tp
        + 2.0 * t * t * t2p * t2p
        + 8.0 / 3.0 * t * t * tp * t2p * s * cos(dx) * cos(phi)
        - 16.0 / 3.0 * SQRT_2 * t * t * tp * t2p * s * sin(dx) * cos(phi)
        + 4.0 * t * tp * t2p * s * cos(phi)
        + t * tp * tp * cos(2.0 * x + dx - 2.0 * a)
        + t * tp * tp * cos(dx - 2.0 * (x + a))
        + tp * tp;
    let term4 = 0.5
        * t
        * s
        * s
        * c
        * c
        * (-t * (t * t + 1.0) * tp * tp * cos(2.0 * x)
            - 2.0 * (2.0 * t.powi(4) * t2p * t2p + t * t * tp * tp - 2.0) * cos(dx - 2.0 * a)
            + t * inner);
    s * s * c * c * (term1 + term2 + term3 + term4 + s.powi(4))
}

/// Literal closed form for the reading after BS4.
///
/// Kept as transcribed. It does not depend on `dx` and does not agree with
/// the simulated block-4 signal, so calibration does not use it; see
/// [`target_curve`].
pub fn p4_closed_form(_dx: f64, phi: f64, cfg: &ExperimentConfig) -> f64 {
    let x = cfg.chi0;
    let (s, c) = trig(cfg);
    let a = CHI_TILDE;
    let (t, tp, t2p) = (cfg.t_ps, cfg.t_phi, cfg.t_2phi);
    let (sin, cos) = (f64::sin, f64::cos);
    let s2x = sin(2.0 * x);

    let l1 = 2.0 * t.powi(4) * t2p * t2p * cos(2.0 * phi).powi(2)
        * (t * (6.0 * t * s.powi(4) - s2x * s2x) + 6.0 * c.powi(4));
    let l2 = -8.0
        * t.powi(3)
        * t2p
        * cos(2.0 * phi)
        * (cos(phi) * (2.0 * t * tp * s.powi(3) * c * c - 3.0 * tp * s * c.powi(4)) + SQRT_2 * s2x);
    let l3 = 12.0
        * t
        * t
        * c.powi(4)
        * (t * t * t2p * t2p * sin(2.0 * phi).powi(2)
            + tp * s * (4.0 * t * t2p * sin(phi).powi(2) * cos(phi) + tp * s));
    let l4 = -8.0
        * t
        * t
        * s.powi(3)
        * c
        * (2.0 * cos(phi) * (t * (3.0 * t + 1.0) * t2p * sin(phi) + SQRT_2 * tp * s)
            + (3.0 * t + 1.0) * tp * s * sin(phi));
    let l5 = 12.0
        * s
        * s
        * c
        * c
        * (2.0 * t.powi(5) * t2p * t2p * sin(2.0 * phi).powi(2) * cos(2.0 * a)
            - t.powi(3) * tp * tp * cos(2.0 * x) * cos(2.0 * a)
            + 1.0);
    let l6 = t
        * (24.0 * t.powi(4) * tp * t2p * s.powi(5) * cos(phi) + 6.0 * t.powi(3) * tp * tp * s.powi(6)
            - 4.0 * t.powi(3) * tp * t2p * s2x * s2x * s * sin(phi) * sin(2.0 * phi)
            + (-t * t * tp * tp + 3.0 * t + 2.0) * s2x * s2x
            - 3.0
                * t.powi(3)
                * s.powi(4)
                * (2.0 * t * t * t2p * t2p * cos(4.0 * phi) - 2.0 * t * t * t2p * t2p + tp * tp * cos(2.0 * x)
                    - tp * tp));
    let l7 = 8.0
        * t
        * s
        * c.powi(3)
        * (3.0 * tp * s * (sin(phi) - t * sin(phi + 2.0 * a)) + t * (t + 3.0) * t2p * sin(2.0 * phi));
    s * s * c * c * (l1 + l2 + l3 + l4 + l5 + l6 + l7) / 12.0
}

pub fn closed_form(index: u8, dx: f64, phi: f64, cfg: &ExperimentConfig) -> Result<f64> {
    Ok(match index {
        1 => p1_closed_form(dx, phi, cfg),
        2 => p2_closed_form(dx, phi, cfg),
        3 => p3_closed_form(dx, phi, cfg),
        4 => p4_closed_form(dx, phi, cfg),
        _ => return Err(Error::domain("step", index as f64, "1..=4")),
    })
}

fn prefix_circuit(blocks: [CircuitDescription; 4], count: usize) -> CircuitDescription {
    CircuitDescription {
        dim: 3,
        elements: blocks.into_iter().take(count).flat_map(|b| b.elements).collect(),
    }
}

/// Monitored reading of `step` in the canonical frame, with plate offset
/// `dx` on this step and all earlier offsets zero.
pub fn reference_probability(index: u8, dx: f64, phi: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let s = step(index)?;
    let mut offsets = [0.0; 4];
    offsets[index as usize - 1] = dx;
    let m = prefix_circuit(canonical_blocks(cfg, offsets), index as usize).compose()?;
    Ok(apply(&m, &reference_state(phi, cfg))?.get(s.monitored_mode).norm_sqr())
}

/// Monitored reading of `step` in the physical setup with this step's plate
/// at `x` and earlier plates at `cfg.x`.
pub fn physical_probability(index: u8, x: f64, phi: f64, cfg: &ExperimentConfig) -> Result<f64> {
    let s = step(index)?;
    let mut c = cfg.clone();
    c.x[index as usize - 1] = x;
    let m = prefix_circuit(primary_blocks(&c), index as usize).compose()?;
    Ok(apply(&m, &prepare_state(phi, cfg)?)?.get(s.monitored_mode).norm_sqr())
}

/// The curve the target is read from: the closed form for steps 1 to 3 and
/// the canonical-frame simulation for step 4.
pub fn target_curve(index: u8, dx: f64, phi: f64, cfg: &ExperimentConfig) -> Result<f64> {
    match index {
        1..=3 => closed_form(index, dx, phi, cfg),
        _ => reference_probability(index, dx, phi, cfg),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Reading to aim for, the curve value at `dx = 0`.
    pub value: f64,
    pub min: f64,
    pub max: f64,
    /// Position of `value` within `[min, max]`.
    pub fraction: f64,
    /// Fraction the step's rule prescribes.
    pub rule_fraction: f64,
}

impl Target {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// `min + f (max - min)` with the rule's fraction.
    pub fn rule_value(&self) -> f64 {
        self.min + self.rule_fraction * self.range()
    }
}

/// Target reading for a step. Fails with [`Error::Degenerate`] when the
/// curve does not depend on the plate.
pub fn target_intensity(index: u8, cfg: &ExperimentConfig, phi: f64) -> Result<Target> {
    let s = step(index)?;
    cfg.validate()?;
    let curve = |dx: f64| target_curve(index, dx, phi, cfg).unwrap_or(f64::NAN);
    let ((_, min), (_, max)) = periodic_extrema(&curve, SCAN_POINTS);
    let value = curve(0.0);
    if !(max - min > DEGENERATE_RANGE) {
        return Err(Error::Degenerate {
            step: index,
            range: max - min,
        });
    }
    Ok(Target {
        value,
        min,
        max,
        fraction: (value - min) / (max - min),
        rule_fraction: s.rule.fraction(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub step: u8,
    pub monitored_mode: usize,
    pub target: Target,
    /// Plate settings in `[0, 2 pi)` where the reading equals the target.
    pub roots: Vec<f64>,
    /// The same roots as offsets from the Fourier setting, in `(-pi, pi]`.
    pub roots_dx: Vec<f64>,
    pub selected: f64,
    pub selected_dx: f64,
    /// Reading minus target at the selected root.
    pub residual: f64,
}

/// Turn the plate of `index` with earlier plates fixed at `cfg.x` until the
/// monitored reading hits the target on the step's branch.
pub fn solve_step(index: u8, cfg: &ExperimentConfig, phi: f64) -> Result<StepSolution> {
    let s = step(index)?;
    let target = target_intensity(index, cfg, phi)?;
    let signal = |x: f64| physical_probability(index, x, phi, cfg).unwrap_or(f64::NAN);

    let ((_, lo), (_, hi)) = periodic_extrema(&signal, SCAN_POINTS);
    if !(hi - lo > DEGENERATE_RANGE) {
        return Err(Error::Degenerate {
            step: index,
            range: hi - lo,
        });
    }
    let roots = periodic_roots(&|x| signal(x) - target.value, SCAN_POINTS, ROOT_TOL);
    if roots.is_empty() {
        return Err(Error::Calibration {
            step: index,
            reason: format!(
                "target {:.6} outside the reachable range [{lo:.6}, {hi:.6}]",
                target.value
            ),
        });
    }
    let h = 1e-6;
    let slope = |x: f64| (signal(x + h) - signal(x - h)) / (2.0 * h);
    let selected = roots
        .iter()
        .copied()
        .filter(|&x| slope(x).signum() as i8 == s.branch)
        .max_by(|a, b| slope(*a).abs().total_cmp(&slope(*b).abs()))
        .ok_or_else(|| Error::Calibration {
            step: index,
            reason: "no root on the expected slope".into(),
        })?;
    let xf_i = xf(cfg)[index as usize - 1];
    Ok(StepSolution {
        step: index,
        monitored_mode: s.monitored_mode,
        target,
        roots_dx: roots.iter().map(|r| wrap_signed(r - xf_i)).collect(),
        roots,
        selected,
        selected_dx: wrap_signed(selected - xf_i),
        residual: signal(selected) - target.value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub phi: f64,
    pub steps: Vec<StepSolution>,
    /// Calibrated plate settings.
    pub x: [f64; 4],
    /// Fourier setting implied by the configuration.
    pub xf: [f64; 4],
    /// `x - xf` wrapped to `(-pi, pi]`.
    pub residual: [f64; 4],
}

impl CalibrationReport {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Run steps 1 to 4 in order at `phi = pi/3`. The incoming `cfg.x` only
/// serves as a starting point and does not affect the result.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    calibrate_at(cfg, CALIBRATION_PHI)
}

pub fn calibrate_at(cfg: &ExperimentConfig, phi: f64) -> Result<CalibrationReport> {
    cfg.validate()?;
    let mut working = cfg.clone();
    let mut steps = Vec::with_capacity(4);
    for s in STEPS {
        let sol = solve_step(s.index, &working, phi)?;
        working.x[s.index as usize - 1] = sol.selected;
        steps.push(sol);
    }
    let x = working.x.map(wrap_phase);
    let target = xf(cfg);
    Ok(CalibrationReport {
        phi,
        steps,
        x,
        xf: target,
        residual: std::array::from_fn(|i| wrap_signed(x[i] - target[i])),
    })
}
