//! Wave kernels: the incident spherical wave, the paraxial Fresnel kernel,
//! and the first-Born sample-arm impulse response as a voxel sum.
//!
//! Transverse points are `[x, z]`; in one-transverse-dimension mode the `z`
//! entry is zero. Source plane is `y = 0`, sample center `r_c = (0, d1, 0)`,
//! detector plane `y = d1 + d2`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fft2;
use crate::scene::{chirp_pitch_bound, Scene, Transverse, Vec3};
use crate::spinor::{Spin, SpinorVolume};

/// `exp(i k d)` with the phase reduced modulo `2 pi` before evaluation.
pub fn carrier(d: f64, lambda: f64) -> Complex64 {
    let cycles = d / lambda;
    Complex64::from_polar(1.0, 2.0 * PI * (cycles - cycles.round()))
}

/// Spin-up component of the incident spherical wave,
/// `exp(i k |r - r0|) / (i λ |r - r0|)`.
pub fn spherical_kernel(r: Vec3, r0: Vec3, k: f64, lambda: f64) -> Result<Complex64> {
    let d = ((r[0] - r0[0]).powi(2) + (r[1] - r0[1]).powi(2) + (r[2] - r0[2]).powi(2)).sqrt();
    if d == 0.0 {
        return Err(Error::Geometry("spherical kernel evaluated at coincident points".into()));
    }
    debug_assert!((k * lambda - 2.0 * PI).abs() < 1e-12 * k * lambda);
    Ok(carrier(d, lambda) / (Complex64::i() * lambda * d))
}

/// Fresnel chirp without the constant `e^{ikd}`:
/// `exp(i π |ξ - η|^2 / (λ d)) / (i λ d)`.
pub fn fresnel_kernel_reduced(xi: [f64; 2], eta: [f64; 2], d: f64, lambda: f64) -> Complex64 {
    let s2 = (xi[0] - eta[0]).powi(2) + (xi[1] - eta[1]).powi(2);
    Complex64::from_polar(1.0, PI * s2 / (lambda * d)) / (Complex64::i() * lambda * d)
}

/// `e^{ikd} / (i λ d) · exp(i π |ξ - η|^2 / (λ d))`.
pub fn fresnel_kernel(xi: [f64; 2], eta: [f64; 2], d: f64, lambda: f64, k: f64) -> Complex64 {
    debug_assert!((k * lambda - 2.0 * PI).abs() < 1e-12 * k * lambda);
    carrier(d, lambda) * fresnel_kernel_reduced(xi, eta, d, lambda)
}

/// Uniform transverse grid: `origin + (i, l) * pitch`, `n = [nx, nz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneGrid {
    pub origin: [f64; 2],
    pub pitch: f64,
    pub n: [usize; 2],
}

impl PlaneGrid {
    pub fn point(&self, i: usize, l: usize) -> [f64; 2] {
        [self.origin[0] + i as f64 * self.pitch, self.origin[1] + l as f64 * self.pitch]
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|i| self.origin[axis] + i as f64 * self.pitch).collect()
    }

    pub fn transverse(&self) -> Transverse {
        if self.n[1] == 1 && self.origin[1] == 0.0 {
            Transverse::OneD
        } else {
            Transverse::TwoD
        }
    }
}

/// Complex field sampled on a plane `y = plane_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    /// Indexed `(x, z)`.
    pub values: Array2<Complex64>,
    pub grid: PlaneGrid,
    pub plane_y: f64,
    pub spin: Spin,
}

impl FieldGrid {
    pub fn new(values: Array2<Complex64>, grid: PlaneGrid, plane_y: f64, spin: Spin) -> Result<Self> {
        if values.dim() != (grid.n[0], grid.n[1]) {
            return Err(Error::Config(format!(
                "field shape {:?} does not match grid {:?}",
                values.dim(),
                grid.n
            )));
        }
        if !values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Config("field values must be finite".into()));
        }
        Ok(FieldGrid { values, grid, plane_y, spin })
    }
}

/// Sample-arm geometry with the voxels of one spinor component flattened in
/// `(x, y, z)` row-major order. Zero-valued voxels are dropped.
pub struct TargetArm {
    lambda: f64,
    d1: f64,
    d2: f64,
    weight: Complex64,
    voxels: Vec<(Vec3, Complex64)>,
}

impl TargetArm {
    pub fn new(scene: &Scene, volume: &SpinorVolume, spin: Spin) -> Result<Self> {
        let s = volume.component(spin);
        let sample = &scene.sample;
        if s.dim() != sample.a().dim() {
            return Err(Error::Config("spinor volume does not match sample dims".into()));
        }
        let g = &scene.geometry;
        let a = sample.pitch();
        let coords: Vec<Vec<f64>> = (0..3).map(|ax| sample.axis_coords(ax)).collect();
        let voxels = s
            .indexed_iter()
            .filter(|(_, v)| **v != Complex64::new(0.0, 0.0))
            .map(|((i, j, l), v)| ([coords[0][i], coords[1][j], coords[2][l]], *v))
            .collect();
        let measure = a.powi(scene.dims() as i32 + 1);
        Ok(TargetArm {
            lambda: g.lambda(),
            d1: g.d1(),
            d2: g.d2(),
            weight: Complex64::i() / g.lambda() * measure,
            voxels,
        })
    }

    /// `h_t` without the constant `e^{ik(d1+d2)}`.
    ///
    /// Path lengths are taken relative to `r_c`; each `r - d` is formed as
    /// `(r^2 - d^2) / (r + d)` so no large numbers cancel.
    pub fn reduced(&self, xi_t: [f64; 2], eta: [f64; 2]) -> Result<Complex64> {
        let k = 2.0 * PI / self.lambda;
        let mut acc = Complex64::new(0.0, 0.0);
        for &(r, s) in &self.voxels {
            let (dx1, dz1) = (r[0] - eta[0], r[2] - eta[1]);
            let e1 = dx1 * dx1 + dz1 * dz1 + r[1] * (2.0 * self.d1 + r[1]);
            let r1 = (e1 + self.d1 * self.d1).sqrt();
            let (dx2, dz2) = (xi_t[0] - r[0], xi_t[1] - r[2]);
            let e2 = dx2 * dx2 + dz2 * dz2 + r[1] * (r[1] - 2.0 * self.d2);
            let r2 = (e2 + self.d2 * self.d2).sqrt();
            if r1 == 0.0 || r2 == 0.0 {
                return Err(Error::Geometry("voxel coincides with a source or detector point".into()));
            }
            let excess = e1 / (r1 + self.d1) + e2 / (r2 + self.d2);
            acc += s * Complex64::from_polar(1.0 / (r1 * r2), k * excess);
        }
        Ok(acc * self.weight)
    }

    /// `h_t(ξ_t, η)` for every source point, in input order.
    pub fn row(&self, xi_t: [f64; 2], etas: &[[f64; 2]]) -> Result<Vec<Complex64>> {
        etas.par_iter().map(|&e| self.reduced(xi_t, e)).collect()
    }
}

/// `(i/λ) Σ_voxels exp[ik(r1 + r2)] / (r1 r2) · S^p(r') · a^(D+1)` with exact
/// distances.
pub fn h_target_exact(xi_t: [f64; 2], eta: [f64; 2], scene: &Scene, volume: &SpinorVolume, spin: Spin) -> Result<Complex64> {
    let g = &scene.geometry;
    let arm = TargetArm::new(scene, volume, spin)?;
    Ok(carrier(g.d1() + g.d2(), g.lambda()) * arm.reduced(xi_t, eta)?)
}

/// Paraxial, y-projected counterpart of [`TargetArm::reduced`]:
/// `(i/λ)/(d1 d2) Σ_ζ exp[iπ(|ζ-η|²/(λd1) + |ξ_t-ζ|²/(λd2))] P S(ζ) a^D`.
/// `image` is indexed `(x, z)` with centered coordinates at `pitch`.
pub fn h_target_paraxial(
    xi_t: [f64; 2],
    eta: [f64; 2],
    image: &Array2<Complex64>,
    pitch: f64,
    lambda: f64,
    d1: f64,
    d2: f64,
    dims: usize,
) -> Complex64 {
    let (nx, nz) = image.dim();
    let cx = (nx as f64 - 1.0) / 2.0;
    let cz = (nz as f64 - 1.0) / 2.0;
    let mut acc = Complex64::new(0.0, 0.0);
    for ((i, l), v) in image.indexed_iter() {
        let zeta = [(i as f64 - cx) * pitch, (l as f64 - cz) * pitch];
        let s1 = (zeta[0] - eta[0]).powi(2) + (zeta[1] - eta[1]).powi(2);
        let s2 = (xi_t[0] - zeta[0]).powi(2) + (xi_t[1] - zeta[1]).powi(2);
        acc += v * Complex64::from_polar(1.0, PI * (s1 / (lambda * d1) + s2 / (lambda * d2)));
    }
    acc * Complex64::i() / (lambda * d1 * d2) * pitch.powi(dims as i32)
}

fn check_chirp(src: &PlaneGrid, dst: &PlaneGrid, d: f64, lambda: f64) -> Result<()> {
    for axis in 0..2 {
        if src.n[axis] == 1 && dst.n[axis] == 1 {
            continue;
        }
        let s = src.axis(axis);
        let t = dst.axis(axis);
        let sep = (t[t.len() - 1] - s[0]).abs().max((s[s.len() - 1] - t[0]).abs());
        if sep == 0.0 {
            continue;
        }
        let bound = chirp_pitch_bound(lambda, d.abs(), sep);
        if src.pitch > bound {
            return Err(Error::Geometry(format!(
                "aliasing: propagation pitch {} exceeds chirp bound {bound} along axis {axis}",
                src.pitch
            )));
        }
    }
    Ok(())
}

/// Precomputed Toeplitz convolution for repeated propagation between two
/// fixed grids of equal pitch.
#[derive(Clone)]
pub struct FresnelPropagator {
    src: PlaneGrid,
    target: PlaneGrid,
    d: f64,
    kernel_hat: Array2<Complex64>,
    plan: Fft2,
    weight: f64,
}

fn transverse_dims(src: &PlaneGrid, target: &PlaneGrid) -> i32 {
    if src.n[1] == 1 && target.n[1] == 1 && src.origin[1] == target.origin[1] {
        1
    } else {
        2
    }
}

impl FresnelPropagator {
    pub fn new(src: PlaneGrid, target: PlaneGrid, d: f64, lambda: f64) -> Result<Self> {
        if d == 0.0 {
            return Err(Error::Geometry("propagation distance must be nonzero".into()));
        }
        if (target.pitch - src.pitch).abs() > 1e-12 * src.pitch {
            return Err(Error::Config(format!(
                "fast propagation needs equal pitches (input {}, target {})",
                src.pitch, target.pitch
            )));
        }
        check_chirp(&src, &target, d, lambda)?;
        let p = src.pitch;
        let [nxi, nzi] = src.n;
        let lx = nxi + target.n[0] - 1;
        let lz = nzi + target.n[1] - 1;
        let ox = target.origin[0] - src.origin[0];
        let oz = target.origin[1] - src.origin[1];
        let k = 2.0 * PI / lambda;
        // Lag t covers target index minus source index, shifted by nxi - 1.
        let mut kernel_hat = Array2::from_shape_fn((lx, lz), |(t, u)| {
            let sx = ox + (t as f64 - (nxi as f64 - 1.0)) * p;
            let sz = oz + (u as f64 - (nzi as f64 - 1.0)) * p;
            fresnel_kernel([sx, sz], [0.0, 0.0], d, lambda, k)
        });
        let mut plan = Fft2::new(lx, lz);
        plan.forward(&mut kernel_hat);
        Ok(FresnelPropagator { src, target, d, kernel_hat, plan, weight: p.powi(transverse_dims(&src, &target)) })
    }

    pub fn target(&self) -> PlaneGrid {
        self.target
    }

    /// Propagates values laid out on the source grid.
    pub fn apply(&self, values: &Array2<Complex64>) -> Array2<Complex64> {
        let [nxi, nzi] = self.src.n;
        let [nxo, nzo] = self.target.n;
        let mut buf = Array2::zeros(self.kernel_hat.dim());
        buf.slice_mut(ndarray::s![..nxi, ..nzi]).assign(values);
        let mut plan = self.plan.clone();
        plan.forward(&mut buf);
        buf.zip_mut_with(&self.kernel_hat, |b, k| *b *= k);
        plan.inverse(&mut buf);
        let w = self.weight;
        buf.slice(ndarray::s![nxi - 1..nxi - 1 + nxo, nzi - 1..nzi - 1 + nzo]).mapv(|v| v * w)
    }
}

/// `out(ξ) = Σ_η K_d(ξ, η) in(η) Δη^D` onto `target` by Toeplitz FFT
/// convolution. The target pitch must equal the input pitch. Negative `d`
/// propagates backwards.
pub fn fresnel_propagate(field: &FieldGrid, d: f64, lambda: f64, target: PlaneGrid) -> Result<FieldGrid> {
    let prop = FresnelPropagator::new(field.grid, target, d, lambda)?;
    FieldGrid::new(prop.apply(&field.values), target, field.plane_y + prop.d, field.spin)
}

/// Direct double sum, the oracle for [`fresnel_propagate`].
pub fn fresnel_propagate_direct(field: &FieldGrid, d: f64, lambda: f64, target: PlaneGrid) -> Result<FieldGrid> {
    let src = field.grid;
    let w = src.pitch.powi(transverse_dims(&src, &target));
    let k = 2.0 * PI / lambda;
    let out = Array2::from_shape_fn((target.n[0], target.n[1]), |(i, l)| {
        let xi = target.point(i, l);
        let mut acc = Complex64::new(0.0, 0.0);
        for ((j, m), v) in field.values.indexed_iter() {
            acc += fresnel_kernel(xi, src.point(j, m), d, lambda, k) * v;
        }
        acc * w
    });
    FieldGrid::new(out, target, field.plane_y + d, field.spin)
}
