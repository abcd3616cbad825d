use std::ops::Mul;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

/// A `dim x dim` complex matrix mapping input beam amplitudes to output
/// amplitudes. Sub-unitary when the optics are lossy.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix(DMatrix<Complex64>);

impl TransferMatrix {
    pub fn identity(dim: usize) -> Self {
        Self(DMatrix::identity(dim, dim))
    }

    /// Build from row-major rows. Every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        Ok(Self(DMatrix::from_fn(dim, dim, |r, c| rows[r][c])))
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self(DMatrix::from_fn(dim, dim, f))
    }

    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        Ok(Self(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub(crate) fn as_matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.0
    }

    pub fn rows(&self) -> Vec<Vec<Complex64>> {
        (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| self.0[(r, c)]).collect())
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    /// Largest elementwise deviation of `M^dagger M` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let gram = self.0.adjoint() * &self.0;
        let n = self.dim();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((gram[(r, c)] - target).norm());
            }
        }
        worst
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.0.clone().singular_values().iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    pub fn max_abs_diff(&self, other: &TransferMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl Mul for &TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: &TransferMatrix) -> TransferMatrix {
        TransferMatrix(&self.0 * &rhs.0)
    }
}

impl Mul for TransferMatrix {
    type Output = TransferMatrix;

    fn mul(self, rhs: TransferMatrix) -> TransferMatrix {
        TransferMatrix(self.0 * rhs.0)
    }
}

/// Complex field amplitudes of `dim` coherent beams, one entry per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeVector(DVector<Complex64>);

impl AmplitudeVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self(DVector::from_vec(amplitudes))
    }

    /// Unit amplitude in mode `k`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::ModeIndex { index: k, dim });
        }
        let mut v = DVector::zeros(dim);
        v[k] = Complex64::new(1.0, 0.0);
        Ok(Self(v))
    }

    /// The uniform phase-ramped superposition `sum_k e^{i k phi} |k> / sqrt(d)`.
    pub fn phase_ramp(dim: usize, phi: f64) -> Self {
        let norm = (dim as f64).sqrt().recip();
        Self(DVector::from_fn(dim, |k, _| {
            Complex64::from_polar(norm, k as f64 * phi)
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, k: usize) -> Complex64 {
        self.0[k]
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    /// Squared moduli, i.e. the intensity seen by a detector on each mode.
    pub fn intensities(&self) -> Vec<f64> {
        self.0.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

impl From<DVector<Complex64>> for AmplitudeVector {
    fn from(v: DVector<Complex64>) -> Self {
        Self(v)
    }
}

/// Matrix-vector product `M v`.
pub fn apply(m: &TransferMatrix, v: &AmplitudeVector) -> Result<AmplitudeVector> {
    if m.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: v.dim(),
        });
    }
    Ok(AmplitudeVector(&m.0 * &v.0))
}

/// True iff `a = e^{i gamma} b` elementwise to `tol` for some real `gamma`.
pub fn equal_up_to_global_phase(a: &TransferMatrix, b: &TransferMatrix, tol: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let (idx, pivot) = b
        .0
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .map(|(i, z)| (i, *z))
        .expect("non-empty matrix");
    if pivot.norm() <= tol {
        return a.0.iter().all(|z| z.norm() <= tol);
    }
    let ratio = a.0.as_slice()[idx] / pivot;
    if ratio.norm() <= f64::EPSILON {
        return false;
    }
    let phase = ratio / ratio.norm();
    a.0.iter()
        .zip(b.0.iter())
        .all(|(x, y)| (x - phase * y).norm() <= tol)
}

/// True iff `a = D b` for some diagonal unitary `D`, i.e. the matrices differ
/// only by a phase on each output row.
pub fn equal_up_to_output_phases(a: &TransferMatrix, b: &TransferMatrix, tol: f64) -> bool {
    if a.dim() != b.dim() {
        return false;
    }
    let n = a.dim();
    for r in 0..n {
        let pivot = (0..n).max_by(|&x, &y| b.0[(r, x)].norm().total_cmp(&b.0[(r, y)].norm()));
        let Some(p) = pivot else { continue };
        let (ap, bp) = (a.0[(r, p)], b.0[(r, p)]);
        if bp.norm() <= tol {
            if (0..n).any(|c| a.0[(r, c)].norm() > tol) {
                return false;
            }
            continue;
        }
        if (ap.norm() - bp.norm()).abs() > tol {
            return false;
        }
        let phase = ap * bp.conj() / (ap.norm() * bp.norm());
        if !(0..n).all(|c| (a.0[(r, c)] - phase * b.0[(r, c)]).norm() <= tol) {
            return false;
        }
    }
    true
}
