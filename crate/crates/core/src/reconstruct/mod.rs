//! Inversion: Fourier magnitudes from fermion maps, phase retrieval, the
//! per-pixel component solve, sample rotation and filtered back-projection.

mod magnitude;
pub mod phase;
mod rotate;
mod solve;
mod tomo;

pub use magnitude::{image_from_fourier, magnitude_from_correlation, MagnitudeImage};
pub use phase::{
    conjugate_flip, phase_retrieve, phase_retrieve_array, register_and_score, shift_and_phase, ObjectConstraint, PhaseParams,
    PhaseRetrieval, Registration, RestartResult, SupportMask,
};
pub use rotate::{rotate_sample, rotate_vector, rotation_matrix, RotationAxis, SampleRotation};
pub use solve::{solve_components, ComponentMaps, ComponentsMeta, COMPONENT_NAMES};
pub use tomo::{angle_coverage, tomo_fbp, Filter, Projection, Volume};

use ndarray::{Array2, Zip};
use num_complex::Complex64;

/// `‖x - truth‖ / ‖truth‖`, or the plain norm of `x` when the truth is zero.
pub fn nrmse(x: &Array2<f64>, truth: &Array2<f64>) -> f64 {
    let num = Zip::from(x).and(truth).fold(0.0, |a, x, t| a + (x - t).powi(2)).sqrt();
    let den = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// [`nrmse`] for complex images, without any alignment.
pub fn nrmse_complex(x: &Array2<Complex64>, truth: &Array2<Complex64>) -> f64 {
    let num = Zip::from(x).and(truth).fold(0.0, |a, x, t| a + (x - t).norm_sqr()).sqrt();
    let den = truth.iter().map(|t| t.norm_sqr()).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
