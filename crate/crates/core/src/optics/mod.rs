//! Complex transfer-matrix algebra and the elementary optical elements.
//!
//! Conventions: amplitudes are column vectors and elements act by left
//! multiplication, so a circuit listed in physical order `e1, e2, .., en`
//! composes to `M(en) .. M(e2) M(e1)`.

mod element;
mod matrix;

pub use element::{
    loss_matrix, phase_matrix, splitter_matrix, split_angle, CircuitDescription, OpticalElement,
};
pub use matrix::{
    apply, equal_up_to_global_phase, equal_up_to_output_phases, AmplitudeVector, TransferMatrix,
};

/// Default tolerance for identities that hold exactly in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

/// Compose a circuit into its transfer matrix.
pub fn compose(circuit: &CircuitDescription) -> crate::Result<TransferMatrix> {
    circuit.compose()
}
