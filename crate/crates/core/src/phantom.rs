//! Test objects: a binary phase-retrieval phantom, Shepp-Logan-style
//! ellipse phantoms with exact parallel-beam projections, and a small
//! magnetic sample.

use ndarray::{Array2, Array3};

use crate::error::Result;
use crate::reconstruct::Projection;
use crate::scene::{SampleGrid, Vec3};

/// Real nonnegative `n × n` phantom with value 1 on a union of an L-shaped
/// bar, a disc, a triangle and a small square, and 0 elsewhere. No point
/// symmetry, so the conjugate flip is distinguishable.
pub fn binary_phantom(n: usize) -> Array2<f64> {
    let s = n as f64;
    Array2::from_shape_fn((n, n), |(i, l)| {
        let (x, z) = ((i as f64 + 0.5) / s, (l as f64 + 0.5) / s);
        let bar = (x < 0.22 && z < 0.9) || (z < 0.2 && x < 0.7);
        let disc = (x - 0.62).powi(2) + (z - 0.58).powi(2) < 0.22f64.powi(2);
        let tri = x > 0.3 && z > 0.75 && (x - 0.3) < (z - 0.75) * 1.6;
        let sq = (0.82..0.97).contains(&x) && (0.05..0.2).contains(&z);
        if bar || disc || tri || sq {
            1.0
        } else {
            0.0
        }
    })
}

/// `value` inside an ellipse with semi-axes `semi` rotated by `angle`
/// (radians, counter-clockwise) about `center`, in units of the half width
/// of the field of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi: [f64; 2],
    pub angle: f64,
    pub value: f64,
}

impl Ellipse {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi[0]).powi(2) + (v / self.semi[1]).powi(2) <= 1.0
    }

    /// Line integral along the line `{r : r·n = t}` with unit normal `n`.
    pub fn line_integral(&self, n: [f64; 2], t: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        // Normal expressed in the ellipse frame.
        let nu = c * n[0] + s * n[1];
        let nv = -s * n[0] + c * n[1];
        let a2 = (self.semi[0] * nu).powi(2) + (self.semi[1] * nv).powi(2);
        let d = t - (self.center[0] * n[0] + self.center[1] * n[1]);
        if d * d >= a2 {
            return 0.0;
        }
        2.0 * self.value * self.semi[0] * self.semi[1] * (a2 - d * d).sqrt() / a2
    }
}

/// Shepp-Logan head with the higher-contrast intensities commonly used for
/// numerical tests.
pub fn shepp_logan() -> Vec<Ellipse> {
    let e = |cx: f64, cy: f64, a: f64, b: f64, deg: f64, v: f64| Ellipse {
        center: [cx, cy],
        semi: [a, b],
        angle: deg.to_radians(),
        value: v,
    };
    vec![
        e(0.0, 0.0, 0.69, 0.92, 90.0, 1.0),
        e(0.0, -0.0184, 0.6624, 0.874, 90.0, -0.8),
        e(0.22, 0.0, 0.11, 0.31, 72.0, -0.2),
        e(-0.22, 0.0, 0.16, 0.41, 108.0, -0.2),
        e(0.0, 0.35, 0.21, 0.25, 90.0, 0.1),
        e(0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
        e(0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
        e(-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
        e(0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
        e(0.06, -0.605, 0.023, 0.046, 90.0, 0.1),
    ]
}

/// Pixel-center coordinate in units of the field-of-view half width.
fn unit_coord(i: usize, n: usize) -> f64 {
    (2.0 * i as f64 + 1.0) / n as f64 - 1.0
}

/// `n × n` raster indexed `(x, y)`, each pixel the mean of `sub × sub`
/// point samples.
pub fn rasterize(ellipses: &[Ellipse], n: usize, sub: usize) -> Array2<f64> {
    let sub = sub.max(1);
    Array2::from_shape_fn((n, n), |(i, j)| {
        let mut acc = 0.0;
        for a in 0..sub {
            for b in 0..sub {
                let x = unit_coord(i, n) + (2.0 * a as f64 + 1.0 - sub as f64) / (n * sub) as f64;
                let y = unit_coord(j, n) + (2.0 * b as f64 + 1.0 - sub as f64) / (n * sub) as f64;
                acc += ellipses.iter().filter(|e| e.contains([x, y])).map(|e| e.value).sum::<f64>();
            }
        }
        acc / (sub * sub) as f64
    })
}

/// Exact projections of an ellipse phantom stacked `nz` times along `z`,
/// for rotation about `z` with pixel pitch `2 / n`. A sample point `(x, y)`
/// lands at detector coordinate `x cos φ - y sin φ`, matching
/// [`tomo_fbp`](crate::reconstruct::tomo_fbp).
pub fn ellipse_projections(ellipses: &[Ellipse], n: usize, nz: usize, angles: &[f64]) -> Vec<Projection> {
    angles
        .iter()
        .map(|&phi| {
            let normal = [phi.cos(), -phi.sin()];
            let row: Vec<f64> =
                (0..n).map(|i| ellipses.iter().map(|e| e.line_integral(normal, unit_coord(i, n))).sum()).collect();
            Projection { angle: phi, image: Array2::from_shape_fn((n, nz), |(i, _)| row[i]) }
        })
        .collect()
}

/// Ellipsoidal nuclear density with a magnetic vortex core and a uniformly
/// magnetized inclusion, on an `n × n × n` lattice of pitch `pitch`.
pub fn magnetic_sample(n: usize, pitch: f64) -> Result<SampleGrid> {
    let c = (n as f64 - 1.0) / 2.0;
    let r = n as f64 / 2.0;
    let mut a = Array3::zeros((n, n, n));
    let mut m = Array3::from_elem((n, n, n), [0.0; 3]);
    for ((i, j, k), v) in a.indexed_iter_mut() {
        let (x, y, z) = ((i as f64 - c) / r, (j as f64 - c) / r, (k as f64 - c) / r);
        if (x / 0.85).powi(2) + (y / 0.6).powi(2) + (z / 0.75).powi(2) <= 1.0 {
            *v = 1.0 + 0.3 * x;
            let rho = (x * x + z * z).sqrt().max(1e-12);
            let core = (-(rho / 0.25).powi(2)).exp();
            // Circulation in the x-z plane around a core polarized along y.
            let mv: Vec3 = [-z / rho * (1.0 - core) * 0.6, core * 0.8, x / rho * (1.0 - core) * 0.6];
            m[[i, j, k]] = mv;
        }
        if (x - 0.35).powi(2) + (y + 0.1).powi(2) + (z + 0.3).powi(2) <= 0.15f64.powi(2) {
            *v = 0.4;
            m[[i, j, k]] = [0.5, -0.3, 0.2];
        }
    }
    SampleGrid::new(pitch, a, m)
}
