//! Circuit synthesis: the base-`d` Fourier matrix, the qutrit Fourier
//! circuit built from four symmetric splitters, the Mach-Zehnder variable
//! splitter and a triangular decomposition of arbitrary unitaries.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::optics::{apply, AmplitudeVector, CircuitDescription, OpticalElement, TransferMatrix};
use crate::{Error, Result};

/// `atan(sqrt 2)`: split angle of the variable splitter in the qutrit
/// Fourier factorization (`cos^2 = 1/3`).
pub const CHI_TILDE: f64 = 0.955_316_618_124_509_3;

/// `F[n][k] = exp(-2 pi i n k / d) / sqrt(d)`.
pub fn qft_matrix(d: usize) -> Result<TransferMatrix> {
    if d < 2 {
        return Err(Error::domain("d", d as f64, ">= 2"));
    }
    let norm = (d as f64).sqrt().recip();
    Ok(TransferMatrix::from_fn(d, |n, k| {
        // reduce n*k mod d first to keep the angle small
        let angle = -TAU * ((n * k) % d) as f64 / d as f64;
        Complex64::from_polar(norm, angle)
    }))
}

/// Result of running the Fourier phase-estimation algorithm once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseEstimate {
    /// Mode with the largest output intensity.
    pub index: usize,
    pub intensity: f64,
}

/// Apply the base-`d` Fourier transform to `sum_k e^{i k phi} |k> / sqrt(d)`
/// with `phi = 2 pi m / d` and report the brightest output mode.
///
/// Perfect discrimination needs the `2 pi m / d` spacing; with `m pi / d`
/// the output is spread over several modes.
pub fn phase_estimation_outcome(d: usize, m: usize) -> Result<PhaseEstimate> {
    if m >= d {
        return Err(Error::domain("m", m as f64, format!("[0, {d})")));
    }
    let f = qft_matrix(d)?;
    let state = AmplitudeVector::phase_ramp(d, TAU * m as f64 / d as f64);
    let out = apply(&f, &state)?.intensities();
    let (index, intensity) = out
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("d >= 2");
    Ok(PhaseEstimate { index, intensity })
}

fn check_mz_angle(chi: f64) -> Result<()> {
    if (0.0..=FRAC_PI_2).contains(&chi) {
        Ok(())
    } else {
        Err(Error::domain("chi", chi, "[0, pi/2]"))
    }
}

/// Variable-ratio splitter on modes (0, 1) assembled from two symmetric
/// splitters, composing exactly to `splitter_matrix(2, 0, 1, chi, pi/2, 0)`.
///
/// The mode-1 output phase is `chi + 3 pi / 2`; with `chi + pi` (the form in
/// [`mz_variable_splitter_literal`]) the product is off by `diag(1, -i)`.
pub fn mz_variable_splitter(chi: f64) -> Result<CircuitDescription> {
    check_mz_angle(chi)?;
    mz_chain(chi, chi + 1.5 * PI)
}

/// The textbook listing of the Mach-Zehnder splitter. Equal to the target
/// splitter only up to an output phase of `-pi/2` on mode 1.
pub fn mz_variable_splitter_literal(chi: f64) -> Result<CircuitDescription> {
    check_mz_angle(chi)?;
    mz_chain(chi, chi + PI)
}

fn mz_chain(chi: f64, out1: f64) -> Result<CircuitDescription> {
    CircuitDescription::with_elements(
        2,
        vec![
            OpticalElement::phase(1, FRAC_PI_2),
            OpticalElement::symmetric(0, 1),
            OpticalElement::phase(0, PI - 2.0 * chi),
            OpticalElement::symmetric(0, 1),
            OpticalElement::phase(1, out1),
            OpticalElement::phase(0, chi + PI),
        ],
    )
}

/// Qutrit Fourier transform from four symmetric splitters and phase plates,
/// in physical order. Composes to [`qft_matrix`]`(3)` up to a global phase.
pub fn qft3_circuit() -> CircuitDescription {
    CircuitDescription::with_elements(
        3,
        vec![
            OpticalElement::phase(2, 1.5 * PI),
            OpticalElement::symmetric(1, 2),
            OpticalElement::symmetric(0, 1),
            OpticalElement::phase(0, PI - 2.0 * CHI_TILDE),
            OpticalElement::symmetric(0, 1),
            OpticalElement::phase(1, FRAC_PI_2 + CHI_TILDE),
            OpticalElement::symmetric(1, 2),
            OpticalElement::phase(1, FRAC_PI_2),
            OpticalElement::phase(0, CHI_TILDE + PI),
        ],
    )
    .expect("static circuit is valid")
}

/// The same transform with a single variable-ratio splitter at `CHI_TILDE`
/// in the middle instead of a Mach-Zehnder pair.
pub fn qft3_circuit_compact() -> CircuitDescription {
    CircuitDescription::with_elements(
        3,
        vec![
            OpticalElement::phase(2, 1.5 * PI),
            OpticalElement::symmetric(1, 2),
            OpticalElement::phase(1, FRAC_PI_2),
            OpticalElement::phase(0, PI),
            OpticalElement::splitter(0, 1, CHI_TILDE),
            OpticalElement::phase(0, PI),
            OpticalElement::symmetric(1, 2),
            OpticalElement::phase(1, FRAC_PI_2),
        ],
    )
    .expect("static circuit is valid")
}

/// Decompose a unitary into adjacent-mode splitters followed by one output
/// phase per mode.
///
/// Row by row from the bottom, the sub-diagonal entries are nulled by
/// right-multiplying column rotations `G`, leaving `U G_1 .. G_n = D`. The
/// circuit is then `G_1^dagger, .., G_n^dagger, D` in physical order.
pub fn reck_decompose(u: &TransferMatrix, tol: f64) -> Result<CircuitDescription> {
    let defect = u.unitarity_defect();
    if !(defect <= tol) {
        return Err(Error::NonUnitary { defect });
    }
    let d = u.dim();
    let mut w: DMatrix<Complex64> = u.as_matrix().clone();
    let mut elements = Vec::with_capacity(d * (d - 1) / 2 + d);

    for r in (1..d).rev() {
        for c in 0..r {
            let (a, b) = (w[(r, c)], w[(r, c + 1)]);
            let (chi, alpha) = if a.norm() == 0.0 && b.norm() == 0.0 {
                (0.0, 0.0)
            } else {
                (a.norm().atan2(b.norm()), b.arg() - a.arg())
            };
            right_rotate(&mut w, c, c + 1, chi, alpha);
            // inverse of S(chi, alpha, 0) is S(chi, alpha + pi, 0)
            elements.push(OpticalElement::Splitter {
                j: c,
                k: c + 1,
                chi,
                alpha: alpha + PI,
                theta: 0.0,
            });
        }
    }
    for j in 0..d {
        elements.push(OpticalElement::phase(j, w[(j, j)].arg()));
    }
    CircuitDescription::with_elements(d, elements)
}

/// `w <- w S` for the splitter `S(chi, alpha, 0)` on columns `(j, k)`.
fn right_rotate(w: &mut DMatrix<Complex64>, j: usize, k: usize, chi: f64, alpha: f64) {
    let (s, c) = chi.sin_cos();
    let g_jj = Complex64::new(c, 0.0);
    let g_jk = Complex64::from_polar(s, alpha);
    let g_kj = -Complex64::from_polar(s, -alpha);
    let g_kk = Complex64::new(c, 0.0);
    for row in 0..w.nrows() {
        let (x, y) = (w[(row, j)], w[(row, k)]);
        w[(row, j)] = x * g_jj + y * g_kj;
        w[(row, k)] = x * g_jk + y * g_kk;
    }
}

/// Haar-random unitary via QR of a complex Gaussian matrix, with the phases
/// of `R`'s diagonal folded back into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> TransferMatrix {
    let z = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 {
            rjj / rjj.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        q.column_mut(j).iter_mut().for_each(|e| *e *= phase);
    }
    TransferMatrix::from_matrix(q).expect("square")
}
