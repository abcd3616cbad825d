//! Simulation, calibration and fitting for linear-optical interferometers
//! that implement the qudit Fourier phase-estimation algorithm.

pub mod calibration;
pub mod error;
pub mod experiment;
pub mod fitting;
pub mod optics;
pub mod synthesis;
pub mod trace;

mod lm;
mod roots;

pub use error::{Error, Result};
pub use optics::{
    apply, compose, equal_up_to_global_phase, equal_up_to_output_phases, AmplitudeVector,
    CircuitDescription, OpticalElement, TransferMatrix,
};
pub use experiment::{CurveMode, ExperimentConfig};
pub use trace::DetectorTrace;
