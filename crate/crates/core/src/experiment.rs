//! Lossy model of the qutrit phase-estimation setup: a two-splitter state
//! preparation stage, the platform phases `(0, phi, 2 phi)`, and a primary
//! module of four splitter blocks with tunable phase plates `x_1..x_4`.
//!
//! The primary module is written as four blocks, each ending in one splitter:
//!
//! ```text
//! block 1: mirror psi1, plate x1, loss t_ps  on mode 2, then BS1 on (1, 2)
//! block 2: mirror psi2, loss t_ps, plate x2  on mode 1, then BS2 on (0, 1)
//! block 3: mirror psi3, loss t_ps, plate x3  on mode 0, mirror psi4 on 1, BS3 on (0, 1)
//! block 4: mirror psi5, loss t_ps, plate x4  on mode 1, mirror psi6 on 2, BS4 on (1, 2)
//! ```

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::optics::{apply, split_angle, AmplitudeVector, CircuitDescription, OpticalElement, TransferMatrix};
use crate::synthesis::{qft3_circuit, CHI_TILDE};
use crate::trace::DetectorTrace;
use crate::{Error, Result};

/// Default number of grid points over one period of `phi`.
pub const DEFAULT_GRID: usize = 720;

/// Wrap an angle to `[0, 2 pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_signed(x: f64) -> f64 {
    let r = wrap_phase(x);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Smallest distance between two angles.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    wrap_signed(a - b).abs()
}

/// `n` equally spaced points over `[0, 2 pi)`.
pub fn phi_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * i as f64 / n as f64).collect()
}

/// Physical parameters of the setup. Angles in radians, transmissions are
/// amplitude moduli.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Split angle of every splitter, `T = cos^2 chi0`.
    pub chi0: f64,
    /// Transmission of the tunable plates PS1..PS4.
    pub t_ps: f64,
    pub t_phi: f64,
    pub t_2phi: f64,
    /// Incidental phases of BS1..BS4.
    pub alpha: [f64; 4],
    pub theta: [f64; 4],
    pub alpha_a: f64,
    pub theta_a: f64,
    pub alpha_b: f64,
    pub theta_b: f64,
    /// Mirror phases M1..M6.
    pub psi: [f64; 6],
    pub psi_a: f64,
    /// Tunable plate phases.
    pub x: [f64; 4],
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            chi0: split_angle(0.445, 0.555).expect("valid constants"),
            t_ps: 0.935,
            t_phi: 0.922,
            t_2phi: 0.894,
            alpha: [0.0; 4],
            theta: [0.0; 4],
            alpha_a: 0.0,
            theta_a: 0.0,
            alpha_b: 0.0,
            theta_b: 0.0,
            psi: [0.0; 6],
            psi_a: 0.0,
            x: [0.0; 4],
        }
    }
}

impl ExperimentConfig {
    /// Lossless optics with symmetric splitters and no incidental phases.
    pub fn lossless_symmetric() -> Self {
        Self {
            chi0: std::f64::consts::FRAC_PI_4,
            t_ps: 1.0,
            t_phi: 1.0,
            t_2phi: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi0 > 0.0 && self.chi0 < FRAC_PI_2) {
            return Err(Error::domain("chi0", self.chi0, "(0, pi/2)"));
        }
        for (name, t) in [("t_ps", self.t_ps), ("t_phi", self.t_phi), ("t_2phi", self.t_2phi)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::domain(name, t, "[0, 1]"));
            }
        }
        let angles = self
            .alpha
            .iter()
            .map(|v| ("alpha", *v))
            .chain(self.theta.iter().map(|v| ("theta", *v)))
            .chain(self.psi.iter().map(|v| ("psi", *v)))
            .chain(self.x.iter().map(|v| ("x", *v)))
            .chain([
                ("alpha_a", self.alpha_a),
                ("theta_a", self.theta_a),
                ("alpha_b", self.alpha_b),
                ("theta_b", self.theta_b),
                ("psi_a", self.psi_a),
            ]);
        for (name, v) in angles {
            if !v.is_finite() {
                return Err(Error::domain(name, v, "a finite angle"));
            }
        }
        Ok(())
    }

    /// Copy with every incidental phase and plate drawn uniformly from
    /// `[-pi, pi)`.
    pub fn with_random_phases<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut angle = || rng.random_range(-PI..PI);
        Self {
            alpha: [angle(), angle(), angle(), angle()],
            theta: [angle(), angle(), angle(), angle()],
            alpha_a: angle(),
            theta_a: angle(),
            alpha_b: angle(),
            theta_b: angle(),
            psi: [angle(), angle(), angle(), angle(), angle(), angle()],
            psi_a: angle(),
            x: [angle(), angle(), angle(), angle()],
            ..self.clone()
        }
    }

    pub fn with_x(&self, x: [f64; 4]) -> Self {
        Self { x, ..self.clone() }
    }

    /// Copy with the tunable phases set to the Fourier operating point.
    pub fn at_fourier_point(&self) -> Self {
        self.with_x(xf(self))
    }

    /// `T = cos^2 chi0`.
    pub fn transmission(&self) -> f64 {
        self.chi0.cos().powi(2)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn splitter(j: usize, k: usize, chi: f64, alpha: f64, theta: f64) -> OpticalElement {
    OpticalElement::Splitter {
        j,
        k,
        chi,
        alpha,
        theta,
    }
}

/// The preparation stage in physical order, starting from a single beam in
/// mode 2: BS_b on (0, 2), BS_a on (0, 1), platform plates, mirror M_a.
pub fn preparation_circuit(phi: f64, cfg: &ExperimentConfig) -> CircuitDescription {
    CircuitDescription {
        dim: 3,
        elements: vec![
            splitter(0, 2, cfg.chi0, cfg.alpha_b, cfg.theta_b),
            splitter(0, 1, cfg.chi0, cfg.alpha_a, cfg.theta_a),
            OpticalElement::phase(2, 2.0 * phi),
            OpticalElement::loss(2, cfg.t_2phi),
            OpticalElement::phase(1, phi),
            OpticalElement::loss(1, cfg.t_phi),
            OpticalElement::mirror(0, cfg.psi_a),
        ],
    }
}

/// State delivered by the preparation stage at platform phase `phi`.
pub fn prepare_state(phi: f64, cfg: &ExperimentConfig) -> Result<AmplitudeVector> {
    let m = preparation_circuit(phi, cfg).compose()?;
    apply(&m, &AmplitudeVector::basis(3, 2)?)
}

/// Prepared amplitudes with the incidental phases stripped: real magnitudes
/// times the ideal phase ramp `(1, e^{i phi}, e^{2 i phi})`. This is the
/// frame the canonical module [`f_exp_matrix`] expects.
pub fn reference_state(phi: f64, cfg: &ExperimentConfig) -> AmplitudeVector {
    let (s, c) = cfg.chi0.sin_cos();
    AmplitudeVector::new(vec![
        Complex64::new(c * s, 0.0),
        Complex64::from_polar(s * s * cfg.t_phi, phi),
        Complex64::from_polar(c * cfg.t_2phi, 2.0 * phi),
    ])
}

/// The four blocks of the primary module, each in physical order.
pub fn primary_blocks(cfg: &ExperimentConfig) -> [CircuitDescription; 4] {
    let (a, t, p, x) = (&cfg.alpha, &cfg.theta, &cfg.psi, &cfg.x);
    let block = |elements| CircuitDescription { dim: 3, elements };
    [
        block(vec![
            OpticalElement::mirror(2, p[0]),
            OpticalElement::phase(2, x[0]),
            OpticalElement::loss(2, cfg.t_ps),
            splitter(1, 2, cfg.chi0, a[0], t[0]),
        ]),
        block(vec![
            OpticalElement::mirror(1, p[1]),
            OpticalElement::loss(1, cfg.t_ps),
            OpticalElement::phase(1, x[1]),
            splitter(0, 1, cfg.chi0, a[1], t[1]),
        ]),
        block(vec![
            OpticalElement::mirror(0, p[2]),
            OpticalElement::loss(0, cfg.t_ps),
            OpticalElement::phase(0, x[2]),
            OpticalElement::mirror(1, p[3]),
            splitter(0, 1, cfg.chi0, a[2], t[2]),
        ]),
        block(vec![
            OpticalElement::mirror(1, p[4]),
            OpticalElement::loss(1, cfg.t_ps),
            OpticalElement::phase(1, x[3]),
            OpticalElement::mirror(2, p[5]),
            splitter(1, 2, cfg.chi0, a[3], t[3]),
        ]),
    ]
}

pub fn primary_module_circuit(cfg: &ExperimentConfig) -> CircuitDescription {
    CircuitDescription {
        dim: 3,
        elements: primary_blocks(cfg)
            .into_iter()
            .flat_map(|b| b.elements)
            .collect(),
    }
}

/// Transfer matrix of the whole primary module, `block4 block3 block2 block1`.
pub fn primary_module_matrix(cfg: &ExperimentConfig) -> Result<TransferMatrix> {
    primary_module_circuit(cfg).compose()
}

/// Partial products after blocks 1, 2, 3 and 4.
pub fn block_prefixes(cfg: &ExperimentConfig) -> Result<[TransferMatrix; 4]> {
    let blocks = primary_blocks(cfg);
    let mut acc = TransferMatrix::identity(3);
    let mut out: [TransferMatrix; 4] = std::array::from_fn(|_| TransferMatrix::identity(3));
    for (slot, block) in out.iter_mut().zip(&blocks) {
        acc = &block.compose()? * &acc;
        *slot = acc.clone();
    }
    Ok(out)
}

/// The canonical module with all splitters at `(alpha, theta) = (pi/2, 0)`,
/// each tunable plate offset by `dx[i]` from its Fourier setting.
pub fn canonical_blocks(cfg: &ExperimentConfig, dx: [f64; 4]) -> [CircuitDescription; 4] {
    let chi = cfg.chi0;
    let block = |elements| CircuitDescription { dim: 3, elements };
    [
        block(vec![
            OpticalElement::phase(2, 1.5 * PI + dx[0]),
            OpticalElement::loss(2, cfg.t_ps),
            OpticalElement::splitter(1, 2, chi),
        ]),
        block(vec![
            OpticalElement::loss(1, cfg.t_ps),
            OpticalElement::phase(1, dx[1]),
            OpticalElement::splitter(0, 1, chi),
        ]),
        block(vec![
            OpticalElement::loss(0, cfg.t_ps),
            OpticalElement::phase(0, PI - 2.0 * CHI_TILDE + dx[2]),
            OpticalElement::splitter(0, 1, chi),
        ]),
        block(vec![
            OpticalElement::loss(1, cfg.t_ps),
            OpticalElement::phase(1, FRAC_PI_2 + CHI_TILDE + dx[3]),
            OpticalElement::splitter(1, 2, chi),
        ]),
    ]
}

/// The Fourier transform as realised by the lossy module with output phases
/// dropped.
pub fn f_exp_matrix(cfg: &ExperimentConfig) -> Result<TransferMatrix> {
    CircuitDescription {
        dim: 3,
        elements: canonical_blocks(cfg, [0.0; 4])
            .into_iter()
            .flat_map(|b| b.elements)
            .collect(),
    }
    .compose()
}

/// Plate settings at which the primary module acts as [`f_exp_matrix`] on
/// the reference-frame state, up to output phases. Each entry is in `[0, 2 pi)`.
///
/// Obtained by requiring that the two beams entering each splitter carry the
/// relative phase of the canonical module, given the phases accumulated in
/// preparation and in earlier blocks.
pub fn xf(cfg: &ExperimentConfig) -> [f64; 4] {
    let (a, t, p) = (&cfg.alpha, &cfg.theta, &cfg.psi);
    [
        PI - a[0] - p[0] + cfg.theta_a - cfg.alpha_a + cfg.alpha_b,
        -FRAC_PI_2 - a[1] - t[0] + cfg.alpha_a - p[1] + cfg.psi_a,
        PI - a[1] + a[2] - p[2] + p[3] - 2.0 * CHI_TILDE,
        PI + CHI_TILDE - a[0] + a[1] + a[3] - cfg.alpha_a + t[0] - t[1] - t[2] - p[3] - p[4]
            + p[5]
            - cfg.psi_a,
    ]
    .map(wrap_phase)
}

/// The literal closed-form plate settings, transcribed term by term.
///
/// These coincide with [`xf`] when `alpha_a = alpha_b`, `theta_a = theta_b`
/// and `psi[5] = 0`. In general they correspond to the preparation splitters
/// being met in the opposite order and to M6 entering with opposite sign.
pub fn xf_literal(cfg: &ExperimentConfig) -> [f64; 4] {
    let (a, t, p) = (&cfg.alpha, &cfg.theta, &cfg.psi);
    [
        -a[0] + cfg.alpha_a - cfg.alpha_b + cfg.theta_b - p[0] + PI,
        -a[1] + cfg.alpha_b - t[0] + cfg.psi_a - p[1] - FRAC_PI_2,
        -a[1] + a[2] - p[2] + p[3] + PI - 2.0 * CHI_TILDE,
        -a[0] + a[1] + a[3] - cfg.alpha_b + t[0] - t[1] - t[2] - p[3] - p[4] - p[5] - cfg.psi_a
            - PI
            + CHI_TILDE,
    ]
    .map(wrap_phase)
}

/// `U(x) |prep(phi)>` with the plate phases taken from `x` (not `cfg.x`).
pub fn output_state(x: [f64; 4], phi: f64, cfg: &ExperimentConfig) -> Result<AmplitudeVector> {
    let u = primary_module_matrix(&cfg.with_x(x))?;
    apply(&u, &prepare_state(phi, cfg)?)
}

pub fn detector_intensities(x: [f64; 4], phi: f64, cfg: &ExperimentConfig) -> Result<[f64; 3]> {
    let v = output_state(x, phi, cfg)?.intensities();
    Ok([v[0], v[1], v[2]])
}

type Mat3 = [[Complex64; 3]; 3];

fn to_mat3(m: &TransferMatrix) -> Mat3 {
    std::array::from_fn(|r| std::array::from_fn(|c| m.get(r, c)))
}

/// Precomputed forward model for evaluating many `phi` values at fixed
/// optics. Equivalent to [`detector_intensities`] but avoids rebuilding the
/// module for every grid point.
#[derive(Clone, Debug)]
pub struct Pipeline {
    module: Mat3,
    /// Amplitudes after the two preparation splitters, before the platform.
    split: [Complex64; 3],
    t_phi: f64,
    t_2phi: f64,
    mirror_a: Complex64,
}

impl Pipeline {
    /// Physical pipeline with plate phases `x`.
    pub fn new(cfg: &ExperimentConfig, x: [f64; 4]) -> Result<Self> {
        let module = primary_module_matrix(&cfg.with_x(x))?;
        Self::with_module(cfg, &module, false)
    }

    /// Canonical module on the reference-frame state.
    pub fn canonical(cfg: &ExperimentConfig) -> Result<Self> {
        Self::with_module(cfg, &f_exp_matrix(cfg)?, true)
    }

    fn with_module(cfg: &ExperimentConfig, module: &TransferMatrix, reference: bool) -> Result<Self> {
        let (split, mirror_a) = if reference {
            let (s, c) = cfg.chi0.sin_cos();
            (
                [c * s, s * s, c].map(|v| Complex64::new(v, 0.0)),
                Complex64::new(1.0, 0.0),
            )
        } else {
            let stage = CircuitDescription {
                dim: 3,
                elements: preparation_circuit(0.0, cfg).elements[..2].to_vec(),
            }
            .compose()?;
            let v = apply(&stage, &AmplitudeVector::basis(3, 2)?)?;
            (
                [v.get(0), v.get(1), v.get(2)],
                Complex64::from_polar(1.0, cfg.psi_a),
            )
        };
        Ok(Self {
            module: to_mat3(module),
            split,
            t_phi: cfg.t_phi,
            t_2phi: cfg.t_2phi,
            mirror_a,
        })
    }

    pub fn amplitudes(&self, phi: f64) -> [Complex64; 3] {
        let input = [
            self.mirror_a * self.split[0],
            Complex64::from_polar(self.t_phi, phi) * self.split[1],
            Complex64::from_polar(self.t_2phi, 2.0 * phi) * self.split[2],
        ];
        std::array::from_fn(|r| {
            self.module[r][0] * input[0] + self.module[r][1] * input[1] + self.module[r][2] * input[2]
        })
    }

    pub fn intensities(&self, phi: f64) -> [f64; 3] {
        self.amplitudes(phi).map(|z| z.norm_sqr())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    /// Lossless four-splitter Fourier circuit on the uniform phase ramp.
    Ideal,
    /// Lossy canonical module on the prepared amplitudes.
    Fixed,
}

impl std::str::FromStr for CurveMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(CurveMode::Ideal),
            "fixed" => Ok(CurveMode::Fixed),
            other => Err(format!("unknown mode `{other}`, expected ideal or fixed")),
        }
    }
}

/// Theoretical detector curves over `grid`.
pub fn theoretical_curves(cfg: &ExperimentConfig, mode: CurveMode, grid: &[f64]) -> Result<DetectorTrace> {
    cfg.validate()?;
    let rows = match mode {
        CurveMode::Ideal => {
            let f = qft3_circuit().compose()?;
            grid.iter()
                .map(|&phi| {
                    let v = apply(&f, &AmplitudeVector::phase_ramp(3, phi))?.intensities();
                    Ok([v[0], v[1], v[2]])
                })
                .collect::<Result<Vec<_>>>()?
        }
        CurveMode::Fixed => {
            let p = Pipeline::canonical(cfg)?;
            grid.iter().map(|&phi| p.intensities(phi)).collect()
        }
    };
    DetectorTrace::new(grid.to_vec(), rows)
}

/// Parameters of the detector response used to generate synthetic data:
/// `a_i |<i|out(lambda phi + mu)>|^2 + b_i` plus Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub scale: [f64; 3],
    pub bias: [f64; 3],
    pub lambda: f64,
    pub mu: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            scale: [1.0; 3],
            bias: [0.0; 3],
            lambda: 1.0,
            mu: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

/// Simulated measurement at the plate phases in `cfg.x`. Deterministic for a
/// given seed; negative noisy samples are clipped to zero.
pub fn synthesize_measured_trace(
    cfg: &ExperimentConfig,
    params: &SynthParams,
    grid: &[f64],
) -> Result<DetectorTrace> {
    cfg.validate()?;
    for (i, a) in params.scale.iter().enumerate() {
        if !(*a > 0.0) {
            return Err(Error::domain(format!("scale[{i}]"), *a, "> 0"));
        }
    }
    for (i, b) in params.bias.iter().enumerate() {
        if !(*b >= 0.0) {
            return Err(Error::domain(format!("bias[{i}]"), *b, ">= 0"));
        }
    }
    if !(params.noise_sigma >= 0.0) {
        return Err(Error::domain("noise_sigma", params.noise_sigma, ">= 0"));
    }
    let pipeline = Pipeline::new(cfg, cfg.x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sigma).expect("sigma checked");
    let rows = grid
        .iter()
        .map(|&phi| {
            let clean = pipeline.intensities(params.lambda * phi + params.mu);
            std::array::from_fn(|i| {
                let mut v = params.scale[i] * clean[i] + params.bias[i];
                if params.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                v.max(0.0)
            })
        })
        .collect();
    DetectorTrace::new(grid.to_vec(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::equal_up_to_output_phases;

    fn random_config(rng: &mut impl Rng) -> ExperimentConfig {
        ExperimentConfig::default().with_random_phases(rng)
    }

    #[test]
    fn wrap_helpers() {
        assert_eq!(wrap_phase(-1e-20), 0.0);
        assert!((wrap_phase(-FRAC_PI_2) - 1.5 * PI).abs() < 1e-15);
        assert!((wrap_signed(1.5 * PI) + FRAC_PI_2).abs() < 1e-15);
        assert!((phase_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn default_constants() {
        let cfg = ExperimentConfig::default();
        assert!((cfg.transmission() - 0.445).abs() < 1e-12);
        assert_eq!((cfg.t_ps, cfg.t_phi, cfg.t_2phi), (0.935, 0.922, 0.894));
        cfg.validate().unwrap();
    }

    #[test]
    fn config_validation_names_key() {
        let cfg = ExperimentConfig {
            t_phi: 1.3,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::Domain { name, .. }) => assert_eq!(name, "t_phi"),
            other => panic!("{other:?}"),
        }
        let cfg = ExperimentConfig {
            chi0: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_keys() {
        let text = ExperimentConfig::default().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["chi0", "t_ps", "t_phi", "t_2phi", "alpha", "theta", "psi", "psi_a", "x"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let partial = ExperimentConfig::from_json(r#"{"t_ps": 0.9}"#).unwrap();
        assert_eq!(partial.t_ps, 0.9);
        assert!(ExperimentConfig::from_json(r#"{"t_pss": 0.9}"#).is_err());
    }

    #[test]
    fn xf_zero_incidental() {
        let x = xf(&ExperimentConfig::default());
        let expected = [PI, -FRAC_PI_2, PI - 2.0 * CHI_TILDE, -PI + CHI_TILDE].map(wrap_phase);
        for i in 0..4 {
            assert!(phase_distance(x[i], expected[i]) < 1e-12);
        }
        assert_eq!(xf_literal(&ExperimentConfig::default()), x);
    }

    #[test]
    fn xf_periodic_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = random_config(&mut rng);
        let mut shifted = cfg.clone();
        shifted.alpha[0] += TAU;
        for (a, b) in xf(&cfg).iter().zip(xf(&shifted)) {
            assert!(phase_distance(*a, b) < 1e-12);
        }
    }

    #[test]
    fn literal_xf_pinned_difference() {
        // xf - xf_literal = (theta_a - theta_b - 2 alpha_a + 2 alpha_b,
        //                      alpha_a - alpha_b, 0, alpha_b - alpha_a + 2 psi6)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let cfg = random_config(&mut rng);
            let (m, p) = (xf(&cfg), xf_literal(&cfg));
            let expected = [
                cfg.theta_a - cfg.theta_b - 2.0 * cfg.alpha_a + 2.0 * cfg.alpha_b,
                cfg.alpha_a - cfg.alpha_b,
                0.0,
                cfg.alpha_b - cfg.alpha_a + 2.0 * cfg.psi[5],
            ];
            for i in 0..4 {
                assert!(phase_distance(m[i] - p[i], expected[i]) < 1e-9, "x{}", i + 1);
            }
            let mut tied = cfg.clone();
            tied.alpha_b = tied.alpha_a;
            tied.theta_b = tied.theta_a;
            tied.psi[5] = 0.0;
            for (a, b) in xf(&tied).iter().zip(xf_literal(&tied)) {
                assert!(phase_distance(*a, b) < 1e-12);
            }
        }
    }

    #[test]
    fn prepared_state_structure() {
        let cfg = ExperimentConfig::default();
        let phi = 0.7;
        let v = prepare_state(phi, &cfg).unwrap();
        let r = reference_state(phi, &cfg);
        for k in 0..3 {
            assert!((v.get(k).norm() - r.get(k).norm()).abs() < 1e-14);
        }
        // zero incidental phases: mode 1 carries an extra sign
        assert!((v.get(1) / v.get(0) + Complex64::from_polar(r.get(1).norm() / r.get(0).norm(), phi)).norm() < 1e-12);
        assert!((v.get(2) / v.get(0) - Complex64::from_polar(r.get(2).norm() / r.get(0).norm(), 2.0 * phi)).norm() < 1e-12);
        let zero = prepare_state(0.0, &cfg).unwrap();
        let ratio = zero.get(1).norm() / zero.get(0).norm();
        let s = cfg.chi0.sin();
        assert!((ratio - 0.922 * s / cfg.chi0.cos()).abs() < 1e-12);
        for phi in phi_grid(64) {
            assert!(prepare_state(phi, &cfg).unwrap().norm_sqr() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn lossless_prep_is_phase_ramp_shape() {
        let cfg = ExperimentConfig::lossless_symmetric();
        let v = reference_state(0.4, &cfg);
        assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((v.get(1).arg() - 0.4).abs() < 1e-12);
        assert!((v.get(2).arg() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn module_unitary_when_lossless() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = ExperimentConfig {
            x: [0.3, 1.0, -2.0, 0.5],
            ..ExperimentConfig {
                chi0: 0.7,
                t_ps: 1.0,
                t_phi: 1.0,
                t_2phi: 1.0,
                ..random_config(&mut rng)
            }
        };
        assert!(primary_module_matrix(&cfg).unwrap().unitarity_defect() < 1e-12);
        let lossy = ExperimentConfig::default().at_fourier_point();
        assert!(primary_module_matrix(&lossy).unwrap().singular_values()[0] < 1.0);
        let fexp = f_exp_matrix(&ExperimentConfig::default()).unwrap();
        assert!(fexp.singular_values().iter().all(|s| *s <= 1.0 + 1e-12));
    }

    #[test]
    fn prefixes_end_at_full_module() {
        let cfg = ExperimentConfig::default().at_fourier_point();
        let pre = block_prefixes(&cfg).unwrap();
        assert!(pre[3].max_abs_diff(&primary_module_matrix(&cfg).unwrap()) < 1e-15);
    }

    #[test]
    fn f_exp_matches_qft_circuit_when_ideal() {
        let cfg = ExperimentConfig::lossless_symmetric();
        let fexp = f_exp_matrix(&cfg).unwrap();
        let qft = qft3_circuit().compose().unwrap();
        assert!(equal_up_to_output_phases(&fexp, &qft, 1e-12));
    }

    #[test]
    fn pipeline_matches_matrix_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let cfg = random_config(&mut rng);
        let x = [0.2, 2.1, -0.4, 1.7];
        let p = Pipeline::new(&cfg, x).unwrap();
        for phi in [0.0, 0.5, 2.0, 4.4] {
            let direct = detector_intensities(x, phi, &cfg).unwrap();
            let fast = p.intensities(phi);
            for i in 0..3 {
                assert!((direct[i] - fast[i]).abs() < 1e-14);
            }
        }
        let canon = Pipeline::canonical(&cfg).unwrap();
        let fexp = f_exp_matrix(&cfg).unwrap();
        let v = apply(&fexp, &reference_state(1.1, &cfg)).unwrap().intensities();
        let fast = canon.intensities(1.1);
        for i in 0..3 {
            assert!((v[i] - fast[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn curves_ideal_and_fixed() {
        let cfg = ExperimentConfig::default();
        let grid: Vec<f64> = (0..3).map(|m| TAU * m as f64 / 3.0).collect();
        let ideal = theoretical_curves(&cfg, CurveMode::Ideal, &grid).unwrap();
        for (m, row) in ideal.intensities().iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let want = if i == m { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
        let fixed = theoretical_curves(&cfg, CurveMode::Fixed, &phi_grid(DEFAULT_GRID)).unwrap();
        assert!(fixed.intensities().iter().flatten().all(|v| *v < 1.0));
    }

    #[test]
    fn synth_identity_and_seed() {
        let cfg = ExperimentConfig::default().at_fourier_point();
        let grid = phi_grid(50);
        let clean = synthesize_measured_trace(&cfg, &SynthParams::default(), &grid).unwrap();
        for (phi, row) in grid.iter().zip(clean.intensities()) {
            let direct = detector_intensities(cfg.x, *phi, &cfg).unwrap();
            for i in 0..3 {
                assert!((row[i] - direct[i]).abs() < 1e-14);
            }
        }
        let noisy = SynthParams {
            bias: [0.1, 0.2, 0.05],
            noise_sigma: 0.01,
            seed: 9,
            ..SynthParams::default()
        };
        let t1 = synthesize_measured_trace(&cfg, &noisy, &grid).unwrap();
        let t2 = synthesize_measured_trace(&cfg, &noisy, &grid).unwrap();
        assert_eq!(t1.to_csv_string().unwrap(), t2.to_csv_string().unwrap());
        for row in t1.intensities() {
            for i in 0..3 {
                assert!(row[i] >= noisy.bias[i] - 3.0 * 0.01 * 1.5);
            }
        }
        let bad = SynthParams {
            scale: [0.0, 1.0, 1.0],
            ..SynthParams::default()
        };
        assert!(synthesize_measured_trace(&cfg, &bad, &grid).is_err());
    }
}
