use std::fmt;
use std::str::FromStr;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{SampleGrid, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationAxis {
    X,
    Z,
}

impl fmt::Display for RotationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RotationAxis::X => "x",
            RotationAxis::Z => "z",
        })
    }
}

impl FromStr for RotationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(RotationAxis::X),
            "z" | "Z" => Ok(RotationAxis::Z),
            _ => Err(Error::Usage(format!("rotation axis must be x or z (got {s:?})"))),
        }
    }
}

/// Orientation of a sample relative to its reference pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRotation {
    pub axis: RotationAxis,
    pub angle_deg: f64,
}

fn snap(v: f64) -> f64 {
    for t in [-1.0, 0.0, 1.0] {
        if (v - t).abs() < 1e-12 {
            return t;
        }
    }
    v
}

/// Right-handed rotation by `angle` radians. Cosines and sines within
/// `1e-12` of `0` or `±1` are snapped so quarter turns are exact.
pub fn rotation_matrix(axis: RotationAxis, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let (s, c) = (snap(s), snap(c));
    match axis {
        RotationAxis::X => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        RotationAxis::Z => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// `R v`, summing only nonzero coefficients so signed permutations are exact.
pub fn rotate_vector(r: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(r) {
        let mut acc: Option<f64> = None;
        for (c, x) in row.iter().zip(v) {
            if *c != 0.0 {
                let t = c * x;
                acc = Some(acc.map_or(t, |a| a + t));
            }
        }
        *o = acc.unwrap_or(0.0);
    }
    out
}

fn transpose(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = r[j][i];
        }
    }
    t
}

/// Trilinear weights and indices for a fractional index along one axis.
fn taps(u: f64, n: usize) -> [(usize, f64); 2] {
    let f = u.floor();
    let w = u - f;
    let i = f as i64;
    let tap = |k: i64, w: f64| if k >= 0 && (k as usize) < n && w != 0.0 { (k as usize, w) } else { (usize::MAX, 0.0) };
    [tap(i, 1.0 - w), tap(i + 1, w)]
}

/// The sample after a rigid rotation about its center: each output voxel
/// takes the trilinear interpolation of `A` and `M` at the back-rotated
/// position, and `M` is turned by the same rotation. Material rotated out
/// of the lattice is lost and empty regions are filled with zero.
pub fn rotate_sample(grid: &SampleGrid, angle: f64, axis: RotationAxis) -> Result<SampleGrid> {
    let r = rotation_matrix(axis, angle);
    let rt = transpose(&r);
    let [nx, ny, nz] = grid.dims();
    let center = [(nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0, (nz as f64 - 1.0) / 2.0];
    let (a_in, m_in) = (grid.a(), grid.m());
    let mut a = Array3::zeros((nx, ny, nz));
    let mut m = Array3::from_elem((nx, ny, nz), [0.0; 3]);
    for ((i, j, k), av) in a.indexed_iter_mut() {
        // Index-space coordinates relative to the center are exact half-integers.
        let u = [i as f64 - center[0], j as f64 - center[1], k as f64 - center[2]];
        let src = rotate_vector(&rt, u);
        let tx = taps(src[0] + center[0], nx);
        let ty = taps(src[1] + center[1], ny);
        let tz = taps(src[2] + center[2], nz);
        let mut acc_a: Option<f64> = None;
        let mut acc_m: Option<Vec3> = None;
        for &(x, wx) in &tx {
            for &(y, wy) in &ty {
                for &(z, wz) in &tz {
                    if wx == 0.0 || wy == 0.0 || wz == 0.0 {
                        continue;
                    }
                    let w = wx * wy * wz;
                    let ta = w * a_in[[x, y, z]];
                    let v = m_in[[x, y, z]];
                    let tm = [w * v[0], w * v[1], w * v[2]];
                    acc_a = Some(acc_a.map_or(ta, |s| s + ta));
                    acc_m = Some(acc_m.map_or(tm, |s| [s[0] + tm[0], s[1] + tm[1], s[2] + tm[2]]));
                }
            }
        }
        *av = acc_a.unwrap_or(0.0);
        m[[i, j, k]] = rotate_vector(&r, acc_m.unwrap_or([0.0; 3]));
    }
    SampleGrid::new(grid.pitch(), a, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn phantom() -> SampleGrid {
        let a = Array3::from_shape_fn((6, 6, 3), |(i, j, k)| (i * 7 + j * 3 + k) as f64 * 0.25 - 1.0);
        let m = Array3::from_shape_fn((6, 6, 3), |(i, j, k)| [i as f64 * 0.1, -(j as f64) * 0.2, k as f64 + 0.5]);
        SampleGrid::new(1.5, a, m).unwrap()
    }

    #[test]
    fn zero_angle_is_bitwise_identity() {
        let g = phantom();
        for axis in [RotationAxis::X, RotationAxis::Z] {
            let r = rotate_sample(&g, 0.0, axis).unwrap();
            assert_eq!(r, g);
        }
    }

    #[test]
    fn quarter_turns_compose() {
        let g = phantom();
        let twice = rotate_sample(&rotate_sample(&g, FRAC_PI_2, RotationAxis::Z).unwrap(), FRAC_PI_2, RotationAxis::Z).unwrap();
        let half = rotate_sample(&g, PI, RotationAxis::Z).unwrap();
        assert_eq!(twice, half);
    }

    #[test]
    fn vector_field_rotates_right_handed() {
        let g = SampleGrid::new(1.0, Array3::zeros((4, 4, 4)), Array3::from_elem((4, 4, 4), [1.0, 0.0, 0.0])).unwrap();
        let r = rotate_sample(&g, FRAC_PI_2, RotationAxis::Z).unwrap();
        assert!(r.m().iter().all(|&v| v == [0.0, 1.0, 0.0]));
        let gy = SampleGrid::new(1.0, Array3::zeros((4, 4, 4)), Array3::from_elem((4, 4, 4), [0.0, 1.0, 0.0])).unwrap();
        let r = rotate_sample(&gy, FRAC_PI_2, RotationAxis::X).unwrap();
        assert!(r.m().iter().all(|&v| v == [0.0, 0.0, 1.0]));
    }

    #[test]
    fn quarter_turn_moves_voxels() {
        let mut a = Array3::zeros((4, 4, 1));
        a[[3, 1, 0]] = 1.0;
        let g = SampleGrid::new(1.0, a, Array3::from_elem((4, 4, 1), [0.0; 3])).unwrap();
        let r = rotate_sample(&g, FRAC_PI_2, RotationAxis::Z).unwrap();
        // (x, y) = (1.5, -0.5) goes to (0.5, 1.5).
        assert_eq!(r.a()[[2, 3, 0]], 1.0);
        assert_eq!(r.a().sum(), 1.0);
    }
}
