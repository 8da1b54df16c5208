use ndarray::{Array2, Array3};
use num_complex::Complex64;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinor::{coefficient_matrix, THETA_FLOOR};

/// Per-pixel projected `(Mx, My, Mz, A)` with `β` divided out of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMaps {
    pub mx: Array2<f64>,
    pub my: Array2<f64>,
    pub mz: Array2<f64>,
    pub a: Array2<f64>,
    /// 2-norm of the stacked 10-row residual.
    pub residual: Array2<f64>,
    /// Of the real-stacked 10×4 system.
    pub condition_number: f64,
    pub theta: f64,
}

/// Summary written next to saved component maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentsMeta {
    pub theta: f64,
    pub beta: f64,
    pub pitch: f64,
    pub condition_number: f64,
    pub max_residual: f64,
    /// Order of the leading axis of the stacked array.
    pub components: Vec<String>,
    /// Sample rotation the images were taken at, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<crate::reconstruct::SampleRotation>,
}

pub const COMPONENT_NAMES: [&str; 4] = ["Mx", "My", "Mz", "A"];

impl ComponentMaps {
    /// `(4, nx, nz)` in the order `Mx, My, Mz, A`.
    pub fn stacked(&self) -> Array3<f64> {
        let (nx, nz) = self.a.dim();
        let parts = [&self.mx, &self.my, &self.mz, &self.a];
        Array3::from_shape_fn((4, nx, nz), |(c, i, l)| parts[c][[i, l]])
    }

    pub fn from_stacked(stack: &Array3<f64>, theta: f64) -> Result<ComponentMaps> {
        if stack.dim().0 != 4 {
            return Err(Error::Format(format!("component stack needs 4 planes (got {})", stack.dim().0)));
        }
        let plane = |c: usize| stack.index_axis(ndarray::Axis(0), c).to_owned();
        Ok(ComponentMaps {
            mx: plane(0),
            my: plane(1),
            mz: plane(2),
            a: plane(3),
            residual: Array2::zeros(plane(0).dim()),
            condition_number: f64::NAN,
            theta,
        })
    }

    pub fn component(&self, c: usize) -> &Array2<f64> {
        [&self.mx, &self.my, &self.mz, &self.a][c]
    }
}

/// Least-squares solve of the five-channel system at every pixel.
///
/// The unknowns are real, so the five complex equations are stacked as ten
/// real ones and solved through a QR factorization of the 10×4 matrix.
/// `images` are in channel order `S1↑, S1↓, S2↓, S3↑, S3↓`.
pub fn solve_components(images: &[Array2<Complex64>; 5], theta: f64, beta: f64) -> Result<ComponentMaps> {
    if theta < THETA_FLOOR {
        return Err(Error::Geometry(format!("theta {theta} below conditioning floor {THETA_FLOOR}")));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive (got {beta})")));
    }
    let dim = images[0].dim();
    if let Some(bad) = images.iter().find(|im| im.dim() != dim) {
        return Err(Error::Format(format!("S-image dimension mismatch: {:?} vs {:?}", bad.dim(), dim)));
    }
    let c = coefficient_matrix(theta)?;
    let rows = c.real_stacked();
    let a = SMatrix::<f64, 10, 4>::from_fn(|r, k| rows[r][k]);
    let sv = a.singular_values();
    let condition_number = sv.max() / sv.min();
    let qr = a.qr();
    let q = qr.q();
    let r = qr.r();
    let qt = q.transpose();

    let mut out = [(); 5].map(|_| Array2::<f64>::zeros(dim));
    for ((i, l), _) in images[0].indexed_iter() {
        let b = SVector::<f64, 10>::from_fn(|row, _| {
            let v = images[row % 5][[i, l]];
            if row < 5 {
                v.re
            } else {
                v.im
            }
        });
        let x = r.solve_upper_triangular(&(qt * b)).expect("full column rank");
        let res = (b - a * x).norm();
        out[0][[i, l]] = x[0] / beta;
        out[1][[i, l]] = x[1] / beta;
        out[2][[i, l]] = x[2] / beta;
        out[3][[i, l]] = x[3];
        out[4][[i, l]] = res;
    }
    let [mx, my, mz, a, residual] = out;
    Ok(ComponentMaps { mx, my, mz, a, residual, condition_number, theta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinor::forward_s_vector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forward_images(truth: &[Array2<f64>; 4], theta: f64, beta: f64) -> [Array2<Complex64>; 5] {
        let dim = truth[0].dim();
        let mut out = [(); 5].map(|_| Array2::zeros(dim));
        for ((i, l), _) in truth[0].indexed_iter() {
            let s = forward_s_vector(truth[0][[i, l]], truth[1][[i, l]], truth[2][[i, l]], truth[3][[i, l]], theta, beta).unwrap();
            for k in 0..5 {
                out[k][[i, l]] = s[k];
            }
        }
        out
    }

    #[test]
    fn forward_then_solve_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = [(); 4].map(|_| Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0)));
        let (theta, beta) = (0.3, 0.7);
        let sol = solve_components(&forward_images(&truth, theta, beta), theta, beta).unwrap();
        for c in 0..4 {
            for (x, y) in sol.component(c).iter().zip(truth[c].iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(sol.residual.iter().all(|&r| r < 1e-12));
        assert!(sol.condition_number > 1.0 && sol.condition_number.is_finite());
    }

    #[test]
    fn zero_images_give_zero_components() {
        let z = [(); 5].map(|_| Array2::zeros((3, 2)));
        let sol = solve_components(&z, 0.2, 1.0).unwrap();
        assert!(sol.stacked().iter().all(|&v| v == 0.0));
        assert!(sol.residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn input_validation() {
        let z = [(); 5].map(|_| Array2::zeros((3, 2)));
        assert_eq!(solve_components(&z, 5e-4, 1.0).unwrap_err().exit_code(), 5);
        let mut bad = z.clone();
        bad[4] = Array2::zeros((2, 2));
        assert!(solve_components(&bad, 0.2, 1.0).unwrap_err().to_string().contains("mismatch"));
    }

    #[test]
    fn stacked_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = [(); 4].map(|_| Array2::from_shape_fn((3, 5), |_| rng.random_range(-1.0..1.0)));
        let sol = solve_components(&forward_images(&truth, 0.4, 1.0), 0.4, 1.0).unwrap();
        let back = ComponentMaps::from_stacked(&sol.stacked(), 0.4).unwrap();
        assert_eq!(back.mx, sol.mx);
        assert_eq!(back.a, sol.a);
    }
}
