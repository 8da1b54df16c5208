//! Parallel-beam filtered back-projection.
//!
//! A projection at angle `φ` is `project_y` of the sample rotated by `φ`
//! (see [`rotate_sample`](super::rotate_sample)). For rotation about `z` the
//! slices are `z = const` and the detector coordinate of a sample point is
//! `x cos φ - y sin φ`; about `x` the slices are `x = const` and the
//! detector coordinate along `z` is `y sin φ + z cos φ`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::rotate::{rotation_matrix, RotationAxis};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filter {
    RamLak,
    SheppLogan,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Filter::RamLak => "ram-lak",
            Filter::SheppLogan => "shepp-logan",
        })
    }
}

impl FromStr for Filter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" => Ok(Filter::RamLak),
            "shepp-logan" | "shepp-logan-window" => Ok(Filter::SheppLogan),
            _ => Err(Error::Usage(format!("unknown filter {s:?}"))),
        }
    }
}

/// One parallel-beam projection, indexed `(x, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Radians.
    pub angle: f64,
    pub image: Array2<f64>,
}

/// Reconstructed scalar field indexed `(x, y, z)`, centered like a
/// [`SampleGrid`](crate::scene::SampleGrid).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub values: Array3<f64>,
    pub pitch: f64,
    pub axis: RotationAxis,
}

/// Spatial kernel `h(n)`, `n = 0..len`, for detector pitch `tau`.
fn kernel(filter: Filter, n: i64, tau: f64) -> f64 {
    match filter {
        Filter::RamLak => {
            if n == 0 {
                1.0 / (4.0 * tau * tau)
            } else if n % 2 == 0 {
                0.0
            } else {
                -1.0 / ((n * n) as f64 * PI * PI * tau * tau)
            }
        }
        Filter::SheppLogan => -2.0 / (PI * PI * tau * tau * (4 * n * n - 1) as f64),
    }
}

/// `tau * Σ_k h(i - k) p(k)` for every row, by zero-padded FFT convolution.
struct RowFilter {
    len: usize,
    n: usize,
    response: Vec<Complex64>,
    fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl RowFilter {
    fn new(filter: Filter, n: usize, tau: f64) -> Self {
        let len = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let mut response = vec![Complex64::new(0.0, 0.0); len];
        for k in 0..n as i64 {
            let v = Complex64::new(tau * kernel(filter, k, tau), 0.0);
            response[k as usize] = v;
            if k > 0 {
                response[len - k as usize] = v;
            }
        }
        fwd.process(&mut response);
        RowFilter { len, n, response, fwd, inv }
    }

    fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.inv.process(&mut buf);
        buf[..self.n].iter().map(|v| v.re / self.len as f64).collect()
    }
}

/// Angular coverage `(max - min) * n / (n - 1)` of the sorted angle set,
/// the span of the equivalent uniform grid.
pub fn angle_coverage(angles: &[f64]) -> f64 {
    if angles.len() < 2 {
        return 0.0;
    }
    let lo = angles.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = angles.len() as f64;
    (hi - lo) * n / (n - 1.0)
}

fn lerp(row: &[f64], u: f64) -> f64 {
    let f = u.floor();
    let i = f as i64;
    let w = u - f;
    let at = |k: i64| if k >= 0 && (k as usize) < row.len() { row[k as usize] } else { 0.0 };
    at(i) * (1.0 - w) + at(i + 1) * w
}

/// Filtered back-projection of `projections` about `axis`. Output pitch is
/// the projection pixel pitch.
pub fn tomo_fbp(projections: &[Projection], axis: RotationAxis, filter: Filter, pitch: f64) -> Result<Volume> {
    if projections.len() < 2 {
        return Err(Error::Geometry("angle coverage: need at least two projections".into()));
    }
    let angles: Vec<f64> = projections.iter().map(|p| p.angle).collect();
    let coverage = angle_coverage(&angles);
    if coverage < PI * (1.0 - 1e-9) {
        return Err(Error::Geometry(format!(
            "angle coverage {:.6} deg is below 180 deg",
            coverage.to_degrees()
        )));
    }
    let (nx, nz) = projections[0].image.dim();
    if projections.iter().any(|p| p.image.dim() != (nx, nz)) {
        return Err(Error::Format("projections differ in shape".into()));
    }
    if !(pitch > 0.0) {
        return Err(Error::Config("pitch must be positive".into()));
    }
    // Detector axis, slice axis and volume shape per rotation axis.
    let (n_det, n_slices, dims) = match axis {
        RotationAxis::Z => (nx, nz, (nx, nx, nz)),
        RotationAxis::X => (nz, nx, (nx, nz, nz)),
    };
    let rf = RowFilter::new(filter, n_det, pitch);
    let weight = PI / projections.len() as f64 * (PI / coverage);
    let c = (n_det as f64 - 1.0) / 2.0;

    // filtered[k][slice] is one filtered detector row.
    let filtered: Vec<Vec<Vec<f64>>> = projections
        .iter()
        .map(|p| {
            (0..n_slices)
                .map(|s| {
                    let row: Vec<f64> = match axis {
                        RotationAxis::Z => p.image.column(s).to_vec(),
                        RotationAxis::X => p.image.row(s).to_vec(),
                    };
                    rf.apply(&row)
                })
                .collect()
        })
        .collect();
    let mats: Vec<[[f64; 3]; 3]> = angles.iter().map(|&a| rotation_matrix(axis, a)).collect();

    let slices: Vec<Array2<f64>> = (0..n_slices)
        .into_par_iter()
        .map(|s| {
            // Slice plane coordinates (u, v): (x, y) about z, (y, z) about x.
            let mut out = Array2::zeros((n_det, n_det));
            for ((i, j), o) in out.indexed_iter_mut() {
                let (u, v) = (i as f64 - c, j as f64 - c);
                let mut acc = 0.0;
                for (k, r) in mats.iter().enumerate() {
                    let t = match axis {
                        RotationAxis::Z => r[0][0] * u + r[0][1] * v,
                        RotationAxis::X => r[2][1] * u + r[2][2] * v,
                    };
                    acc += lerp(&filtered[k][s], t + c);
                }
                *o = acc * weight;
            }
            out
        })
        .collect();

    let mut values = Array3::zeros(dims);
    for (s, sl) in slices.iter().enumerate() {
        match axis {
            RotationAxis::Z => values.index_axis_mut(Axis(2), s).assign(sl),
            RotationAxis::X => values.index_axis_mut(Axis(0), s).assign(sl),
        }
    }
    Ok(Volume { values, pitch, axis })
}
