use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::matrix::TransferMatrix;
use crate::{Error, Result};

/// One element of a linear-optical network.
///
/// A `Mirror` composes exactly like a `Phase`; it is kept as its own tag so
/// that netlists can follow the physical layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OpticalElement {
    /// Two-mode beam splitter with split angle `chi` (`sqrt(T) = cos chi`,
    /// `sqrt(R) = sin chi`) and phases `alpha`, `theta`.
    Splitter {
        j: usize,
        k: usize,
        chi: f64,
        alpha: f64,
        theta: f64,
    },
    Phase {
        j: usize,
        beta: f64,
    },
    /// Amplitude transmission `t` in `[0, 1]` on mode `j`.
    Loss {
        j: usize,
        t: f64,
    },
    Mirror {
        j: usize,
        psi: f64,
    },
}

impl OpticalElement {
    /// Splitter in the canonical `(alpha, theta) = (pi/2, 0)` setting.
    pub fn splitter(j: usize, k: usize, chi: f64) -> Self {
        OpticalElement::Splitter {
            j,
            k,
            chi,
            alpha: std::f64::consts::FRAC_PI_2,
            theta: 0.0,
        }
    }

    /// Symmetric 50:50 splitter in the canonical setting.
    pub fn symmetric(j: usize, k: usize) -> Self {
        Self::splitter(j, k, std::f64::consts::FRAC_PI_4)
    }

    pub fn phase(j: usize, beta: f64) -> Self {
        OpticalElement::Phase { j, beta }
    }

    pub fn loss(j: usize, t: f64) -> Self {
        OpticalElement::Loss { j, t }
    }

    pub fn mirror(j: usize, psi: f64) -> Self {
        OpticalElement::Mirror { j, psi }
    }

    pub fn is_splitter(&self) -> bool {
        matches!(self, OpticalElement::Splitter { .. })
    }

    /// Check mode indices and parameter domains against a circuit dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check = |index: usize| {
            if index < dim {
                Ok(())
            } else {
                Err(Error::ModeIndex { index, dim })
            }
        };
        match *self {
            OpticalElement::Splitter { j, k, .. } => {
                check(j)?;
                check(k)?;
                if j == k {
                    return Err(Error::SameMode(j));
                }
            }
            OpticalElement::Phase { j, .. } | OpticalElement::Mirror { j, .. } => check(j)?,
            OpticalElement::Loss { j, t } => {
                check(j)?;
                check_transmission("t", t)?;
            }
        }
        Ok(())
    }

    /// Left-multiply `m` by this element's matrix in place (rows only).
    pub(crate) fn left_apply(&self, m: &mut DMatrix<Complex64>) {
        match *self {
            OpticalElement::Splitter {
                j,
                k,
                chi,
                alpha,
                theta,
            } => {
                let [a, b, c, d] = splitter_block(chi, alpha, theta);
                for col in 0..m.ncols() {
                    let (uj, uk) = (m[(j, col)], m[(k, col)]);
                    m[(j, col)] = a * uj + b * uk;
                    m[(k, col)] = c * uj + d * uk;
                }
            }
            OpticalElement::Phase { j, beta: angle } | OpticalElement::Mirror { j, psi: angle } => {
                let z = Complex64::from_polar(1.0, angle);
                m.row_mut(j).iter_mut().for_each(|e| *e *= z);
            }
            OpticalElement::Loss { j, t } => {
                m.row_mut(j).iter_mut().for_each(|e| *e *= t);
            }
        }
    }

    /// The element as a full `dim x dim` matrix.
    pub fn matrix(&self, dim: usize) -> Result<TransferMatrix> {
        self.validate(dim)?;
        let mut m = TransferMatrix::identity(dim);
        self.left_apply(m.as_matrix_mut());
        Ok(m)
    }
}

/// Row-major 2x2 block `[[c e^{i th}, s e^{i(th+a)}], [-s e^{i(th-a)}, c e^{i th}]]`.
fn splitter_block(chi: f64, alpha: f64, theta: f64) -> [Complex64; 4] {
    let (s, c) = chi.sin_cos();
    [
        Complex64::from_polar(c, theta),
        Complex64::from_polar(s, theta + alpha),
        -Complex64::from_polar(s, theta - alpha),
        Complex64::from_polar(c, theta),
    ]
}

fn check_transmission(name: &str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(name, t, "[0, 1]"))
    }
}

pub fn splitter_matrix(
    dim: usize,
    j: usize,
    k: usize,
    chi: f64,
    alpha: f64,
    theta: f64,
) -> Result<TransferMatrix> {
    OpticalElement::Splitter {
        j,
        k,
        chi,
        alpha,
        theta,
    }
    .matrix(dim)
}

pub fn phase_matrix(dim: usize, j: usize, beta: f64) -> Result<TransferMatrix> {
    OpticalElement::Phase { j, beta }.matrix(dim)
}

pub fn loss_matrix(dim: usize, j: usize, t: f64) -> Result<TransferMatrix> {
    OpticalElement::Loss { j, t }.matrix(dim)
}

/// Split angle from intensity transmission and reflection, `chi = atan2(sqrt R, sqrt T)`.
/// `T + R` must equal 1 to within 1e-9.
pub fn split_angle(transmission: f64, reflection: f64) -> Result<f64> {
    check_transmission("T", transmission)?;
    check_transmission("R", reflection)?;
    let total = transmission + reflection;
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain("T + R", total, "1 +/- 1e-9"));
    }
    Ok(reflection.sqrt().atan2(transmission.sqrt()))
}

/// An ordered list of elements in the order the light meets them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitDescription {
    pub dim: usize,
    pub elements: Vec<OpticalElement>,
}

impl CircuitDescription {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            elements: Vec::new(),
        }
    }

    pub fn with_elements(dim: usize, elements: Vec<OpticalElement>) -> Result<Self> {
        let circuit = Self { dim, elements };
        circuit.validate()?;
        Ok(circuit)
    }

    pub fn push(&mut self, element: OpticalElement) -> &mut Self {
        self.elements.push(element);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        self.elements.iter().try_for_each(|e| e.validate(self.dim))
    }

    pub fn splitter_count(&self) -> usize {
        self.elements.iter().filter(|e| e.is_splitter()).count()
    }

    /// `M_n .. M_2 M_1` with `M_1` the first element in physical order.
    pub fn compose(&self) -> Result<TransferMatrix> {
        self.validate()?;
        let mut m = TransferMatrix::identity(self.dim);
        for e in &self.elements {
            e.left_apply(m.as_matrix_mut());
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let circuit: Self = serde_json::from_str(text)?;
        circuit.validate()?;
        Ok(circuit)
    }
}
