//! Probed sample functions for a spin-up polarized beam.
//!
//! For scattering direction `κ̂`, the perpendicular magnetization
//! `M⊥ = κ̂ × (M × κ̂) = M - (M·κ̂) κ̂` enters through `β σ·M⊥ + A` acting on
//! the spin-up spinor `(1, 0)`, which in closed form is
//!
//! ```text
//! S↑ = β M⊥_z + A
//! S↓ = β (M⊥_x + i M⊥_y)
//! ```

use std::fmt;
use std::ops::{Add, Mul};
use std::str::FromStr;

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Position, SampleGrid, Vec3};

/// Smallest angle accepted by the component solve.
pub const THETA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Up,
    Down,
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Spin::Up => "up",
            Spin::Down => "down",
        })
    }
}

/// The five measured (position, spin) channels, in coefficient-matrix row
/// order. Spin-up at position 2 is not used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    S1Up,
    S1Down,
    S2Down,
    S3Up,
    S3Down,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::S1Up, Channel::S1Down, Channel::S2Down, Channel::S3Up, Channel::S3Down];

    pub fn position(self) -> Position {
        match self {
            Channel::S1Up | Channel::S1Down => Position::P1,
            Channel::S2Down => Position::P2,
            Channel::S3Up | Channel::S3Down => Position::P3,
        }
    }

    pub fn spin(self) -> Spin {
        match self {
            Channel::S1Up | Channel::S3Up => Spin::Up,
            _ => Spin::Down,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::S1Up => "S1_up",
            Channel::S1Down => "S1_down",
            Channel::S2Down => "S2_down",
            Channel::S3Up => "S3_up",
            Channel::S3Down => "S3_down",
        }
    }

    pub fn from_parts(position: Position, spin: Spin) -> Option<Channel> {
        Channel::ALL.into_iter().find(|c| c.position() == position && c.spin() == spin)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown channel {s:?}")))
    }
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Unit scattering direction `normalize(k̂_i - k̂_f)` with `k̂_i = ŷ` and
/// `k̂_f = cos θ ŷ + sin θ û`, where `û` is the transverse direction of the
/// detector at `position`.
pub fn kappa_hat(theta: f64, position: Position) -> Result<Vec3> {
    if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_2) {
        return Err(Error::Geometry(format!("kappa_hat needs 0 < theta <= π/2 (got {theta})")));
    }
    let [ux, uz] = position.direction();
    let (s, c) = theta.sin_cos();
    let v = [-s * ux, 1.0 - c, -s * uz];
    let n = norm(v);
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

/// `M - (M·κ̂) κ̂`.
pub fn perpendicular(m: Vec3, khat: Vec3) -> Vec3 {
    let p = dot(m, khat);
    [m[0] - p * khat[0], m[1] - p * khat[1], m[2] - p * khat[2]]
}

/// `(S↑, S↓)` for one voxel.
#[inline]
pub fn spinor_components(a: f64, m: Vec3, khat: Vec3, beta: f64) -> (Complex64, Complex64) {
    let mp = perpendicular(m, khat);
    (Complex64::new(beta * mp[2] + a, 0.0), Complex64::new(beta * mp[0], beta * mp[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorVolume {
    pub up: Array3<Complex64>,
    pub down: Array3<Complex64>,
    pub kappa_hat: Vec3,
    pub position: Option<Position>,
    pub pitch: f64,
}

impl SpinorVolume {
    pub fn component(&self, spin: Spin) -> &Array3<Complex64> {
        match spin {
            Spin::Up => &self.up,
            Spin::Down => &self.down,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinorImage {
    /// Axes `(x, z)`.
    pub up: Array2<Complex64>,
    pub down: Array2<Complex64>,
    pub pitch: f64,
    pub position: Option<Position>,
}

impl SpinorImage {
    pub fn component(&self, spin: Spin) -> &Array2<Complex64> {
        match spin {
            Spin::Up => &self.up,
            Spin::Down => &self.down,
        }
    }
}

/// Builds `(S↑, S↓)` on every voxel for a fixed `κ̂`.
pub fn sample_function(grid: &SampleGrid, khat: Vec3, beta: f64) -> Result<SpinorVolume> {
    if (norm(khat) - 1.0).abs() > 1e-9 {
        return Err(Error::Geometry(format!("khat must be a unit vector (|khat| = {})", norm(khat))));
    }
    let dim = grid.a().dim();
    let mut up = Array3::zeros(dim);
    let mut down = Array3::zeros(dim);
    Zip::from(&mut up)
        .and(&mut down)
        .and(grid.a())
        .and(grid.m())
        .for_each(|u, d, &a, &m| {
            let (su, sd) = spinor_components(a, m, khat, beta);
            *u = su;
            *d = sd;
        });
    Ok(SpinorVolume { up, down, kappa_hat: khat, position: None, pitch: grid.pitch() })
}

/// [`sample_function`] at the `κ̂` of a detector position.
pub fn sample_function_at(grid: &SampleGrid, theta: f64, position: Position, beta: f64) -> Result<SpinorVolume> {
    let mut v = sample_function(grid, kappa_hat(theta, position)?, beta)?;
    v.position = Some(position);
    Ok(v)
}

/// `pitch * Σ_y v(x, y, z)`, summed in increasing `y` order.
pub fn project_y<T>(volume: &Array3<T>, pitch: f64) -> Array2<T>
where
    T: Copy + Zero + Add<Output = T> + Mul<f64, Output = T>,
{
    let (nx, _, nz) = volume.dim();
    let mut out = Array2::from_elem((nx, nz), T::zero());
    for plane in volume.axis_iter(Axis(1)) {
        Zip::from(&mut out).and(&plane).for_each(|o, &v| *o = *o + v);
    }
    out.mapv_inplace(|v| v * pitch);
    out
}

pub fn project_spinor(volume: &SpinorVolume) -> SpinorImage {
    SpinorImage {
        up: project_y(&volume.up, volume.pitch),
        down: project_y(&volume.down, volume.pitch),
        pitch: volume.pitch,
        position: volume.position,
    }
}

/// Projected `(A, Mx, My, Mz)` images of a sample.
pub struct ProjectedComponents {
    pub a: Array2<f64>,
    pub m: [Array2<f64>; 3],
}

pub fn project_components(grid: &SampleGrid) -> ProjectedComponents {
    let p = grid.pitch();
    let mc = |c: usize| project_y(&grid.m().mapv(|m| m[c]), p);
    ProjectedComponents { a: project_y(grid.a(), p), m: [mc(0), mc(1), mc(2)] }
}

/// The 5×4 system relating `(βMx, βMy, βMz, A)` to the five channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    pub entries: [[Complex64; 4]; 5],
    pub theta: f64,
}

impl CoefficientMatrix {
    pub fn apply(&self, x: [f64; 4]) -> [Complex64; 5] {
        let mut out = [Complex64::zero(); 5];
        for (o, row) in out.iter_mut().zip(&self.entries) {
            *o = row.iter().zip(x).map(|(c, v)| c * v).sum();
        }
        out
    }

    /// Rows `[re(row 0..5), im(row 0..5)]` as a 10×4 real matrix.
    pub fn real_stacked(&self) -> [[f64; 4]; 10] {
        let mut out = [[0.0; 4]; 10];
        for (r, row) in self.entries.iter().enumerate() {
            for c in 0..4 {
                out[r][c] = row[c].re;
                out[r + 5][c] = row[c].im;
            }
        }
        out
    }

    /// Rows with 15 significant digits, one row per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# theta = {:.15e}\n# columns: beta*Mx beta*My beta*Mz A\n", self.theta);
        for (row, ch) in self.entries.iter().zip(Channel::ALL) {
            s.push_str(&format!("{:8}", ch.name()));
            for v in row {
                s.push_str(&format!("  ({:+.14e} {:+.14e}i)", v.re, v.im));
            }
            s.push('\n');
        }
        s
    }
}

pub fn coefficient_matrix(theta: f64) -> Result<CoefficientMatrix> {
    if !(theta > 0.0 && theta < std::f64::consts::FRAC_PI_2) {
        return Err(Error::Geometry(format!("coefficient matrix needs 0 < theta < π/2 (got {theta})")));
    }
    let i = Complex64::i();
    let zero = Complex64::zero();
    let one = Complex64::new(1.0, 0.0);
    let (s, c) = (theta / 2.0).sin_cos();
    let em = i * Complex64::from_polar(1.0, -theta / 2.0);
    let ep = i * Complex64::from_polar(1.0, theta / 2.0);
    let r = |v: f64| Complex64::new(v, 0.0);
    let entries = [
        [zero, zero, one, one],
        [em * s, em * c, zero, zero],
        [-ep * s, ep * c, zero, zero],
        [zero, r(0.5 * theta.sin()), r(s * s), one],
        [one, i * (c * c), i * (0.5 * theta.sin()), zero],
    ];
    Ok(CoefficientMatrix { entries, theta })
}

/// `C(θ) · (β Mx, β My, β Mz, A)`.
pub fn forward_s_vector(mx: f64, my: f64, mz: f64, a: f64, theta: f64, beta: f64) -> Result<[Complex64; 5]> {
    Ok(coefficient_matrix(theta)?.apply([beta * mx, beta * my, beta * mz, a]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn kappa_hat_examples() {
        let k = kappa_hat(0.2, Position::P1).unwrap();
        assert!((k[0] + 0.995004).abs() < 1e-6 && (k[1] - 0.099833).abs() < 1e-6 && k[2] == 0.0);
        // Norm of ŷ - k̂_f is 2 sin(θ/2); the unit vector is (-cos θ/2, sin θ/2, 0).
        assert!((k[0] + 0.1f64.cos()).abs() < 1e-15 && (k[1] - 0.1f64.sin()).abs() < 1e-15);
        let k2 = kappa_hat(0.2, Position::P2).unwrap();
        assert_eq!(k2[0], -k[0]);
        assert_eq!((k2[1], k2[2]), (k[1], k[2]));
        let k3 = kappa_hat(0.2, Position::P3).unwrap();
        assert!(k3[0] == 0.0 && (k3[1] - 0.099833).abs() < 1e-6 && (k3[2] + 0.995004).abs() < 1e-6);
        assert!(kappa_hat(0.0, Position::P1).is_err());
    }

    #[test]
    fn unit_norm() {
        for &t in &[1e-3, 0.01, 0.5, 1.2, PI / 2.0] {
            for p in Position::ALL {
                assert!((norm(kappa_hat(t, p).unwrap()) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sample_function_examples() {
        let beta = 0.7;
        let grid = SampleGrid::new(
            1.0,
            Array3::from_elem((1, 1, 1), 2.5),
            Array3::from_elem((1, 1, 1), [0.0, 0.0, 0.0]),
        )
        .unwrap();
        let v = sample_function(&grid, kappa_hat(0.3, Position::P1).unwrap(), beta).unwrap();
        assert_eq!(v.up[[0, 0, 0]], Complex64::new(2.5, 0.0));
        assert_eq!(v.down[[0, 0, 0]], Complex64::zero());

        let k = kappa_hat(0.3, Position::P1).unwrap();
        let (u, d) = spinor_components(1.5, [0.0, 0.0, 2.0], k, beta);
        assert!(close(u, Complex64::new(beta * 2.0 + 1.5, 0.0), 1e-15));
        assert!(close(d, Complex64::zero(), 1e-15));

        // θ = π/2 at P1: κ̂ = (-√2/2, √2/2, 0), M⊥ = (0.5, 0.5, 0).
        let k = kappa_hat(PI / 2.0, Position::P1).unwrap();
        assert!((k[0] + 0.5f64.sqrt()).abs() < 1e-15 && (k[1] - 0.5f64.sqrt()).abs() < 1e-15);
        let (u, d) = spinor_components(0.0, [1.0, 0.0, 0.0], k, beta);
        assert!(close(u, Complex64::zero(), 1e-15));
        assert!(close(d, Complex64::new(0.5, 0.5) * beta, 1e-15));
        assert!(sample_function(&grid, [1.0, 1.0, 0.0], beta).is_err());
    }

    #[test]
    fn project_y_examples() {
        let v = Array3::from_elem((3, 4, 2), 1.0f64);
        let img = project_y(&v, 0.5);
        assert!(img.iter().all(|&x| x == 2.0));

        let mut v = Array3::zeros((3, 4, 2));
        v[[1, 2, 0]] = 3.0f64;
        let img = project_y(&v, 0.5);
        for ((i, k), &x) in img.indexed_iter() {
            assert_eq!(x, if (i, k) == (1, 0) { 1.5 } else { 0.0 });
        }
    }

    #[test]
    fn project_y_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let u = Array3::from_shape_fn((4, 5, 3), |_| Complex64::new(rng.random(), rng.random()));
        let v = Array3::from_shape_fn((4, 5, 3), |_| Complex64::new(rng.random(), rng.random()));
        let (al, be) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let lhs = project_y(&(u.mapv(|x| x * al) + v.mapv(|x| x * be)), 0.7);
        let rhs = project_y(&u, 0.7).mapv(|x| x * al) + project_y(&v, 0.7).mapv(|x| x * be);
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!(close(*a, *b, 1e-13));
        }
    }

    #[test]
    fn coefficient_matrix_examples() {
        let c = coefficient_matrix(1e-9).unwrap();
        assert!(close(c.entries[1][0], Complex64::zero(), 1e-8));
        assert!(close(c.entries[1][1], Complex64::i(), 1e-8));

        let c = coefficient_matrix(PI / 3.0).unwrap();
        assert!(close(c.entries[1][0], Complex64::new(0.25, 0.4330127), 1e-6));
        assert!(close(c.entries[1][1], Complex64::new(0.4330127, 0.75), 1e-6));
        let s = c.apply([1.0, 0.0, 0.0, 0.0]);
        let expect = [
            Complex64::zero(),
            Complex64::new(0.25, 0.4330127),
            Complex64::new(0.25, -0.4330127),
            Complex64::zero(),
            Complex64::new(1.0, 0.0),
        ];
        for (a, b) in s.iter().zip(expect) {
            assert!(close(*a, b, 1e-6));
        }
        for t in [0.01, 0.7, 1.5] {
            let c = coefficient_matrix(t).unwrap();
            let one = Complex64::new(1.0, 0.0);
            assert_eq!(c.entries[0], [Complex64::zero(), Complex64::zero(), one, one]);
        }
        assert!(coefficient_matrix(0.0).is_err());
        assert!(coefficient_matrix(PI / 2.0).is_err());
    }

    #[test]
    fn forward_vector_structure() {
        let s = forward_s_vector(0.0, 0.0, 0.0, 0.0, 0.4, 1.0).unwrap();
        assert!(s.iter().all(|v| *v == Complex64::zero()));
        let s = forward_s_vector(0.0, 0.0, 2.0, 0.5, 0.4, 0.3).unwrap();
        assert!(close(s[0], Complex64::new(0.3 * 2.0 + 0.5, 0.0), 1e-15));
        assert_eq!(s[1], Complex64::zero());
        assert_eq!(s[2], Complex64::zero());
    }

    /// Explicit Pauli algebra: `(β σ·M⊥ + A) (1, 0)ᵀ`.
    fn pauli_oracle(a: f64, m: Vec3, khat: Vec3, beta: f64) -> (Complex64, Complex64) {
        let i = Complex64::i();
        let o = Complex64::new(1.0, 0.0);
        let z = Complex64::zero();
        let sx = [[z, o], [o, z]];
        let sy = [[z, -i], [i, z]];
        let sz = [[o, z], [z, -o]];
        // κ̂ × (M × κ̂) by explicit cross products.
        let cross = |u: Vec3, v: Vec3| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
        let mp = cross(khat, cross(m, khat));
        let mut op = [[z; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                op[r][c] = (sx[r][c] * mp[0] + sy[r][c] * mp[1] + sz[r][c] * mp[2]) * beta;
            }
            op[r][r] += a;
        }
        (op[0][0], op[1][0])
    }

    proptest! {
        #[test]
        fn closed_form_matches_pauli_algebra(
            a in -2.0f64..2.0, mx in -2.0f64..2.0, my in -2.0f64..2.0, mz in -2.0f64..2.0,
            theta in 0.01f64..1.5, beta in 0.1f64..2.0, pos in 0usize..3,
        ) {
            let k = kappa_hat(theta, Position::ALL[pos]).unwrap();
            let (u, d) = spinor_components(a, [mx, my, mz], k, beta);
            let (ou, od) = pauli_oracle(a, [mx, my, mz], k, beta);
            prop_assert!(close(u, ou, 1e-13) && close(d, od, 1e-13));
        }

        #[test]
        fn transversality(mx in -3.0f64..3.0, my in -3.0f64..3.0, mz in -3.0f64..3.0, theta in 0.001f64..1.57, pos in 0usize..3) {
            let k = kappa_hat(theta, Position::ALL[pos]).unwrap();
            let m = [mx, my, mz];
            let mp = perpendicular(m, k);
            prop_assert!(dot(mp, k).abs() < 1e-12);
            prop_assert!(norm(mp) <= norm(m) + 1e-12);
        }
    }

    #[test]
    fn projection_commutes_with_sample_function() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Array3::from_shape_fn((4, 6, 3), |_| rng.random_range(-1.0..1.0));
        let m = Array3::from_shape_fn((4, 6, 3), |_| {
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        });
        let grid = SampleGrid::new(0.8, a, m).unwrap();
        let k = kappa_hat(0.4, Position::P3).unwrap();
        let beta = 0.9;
        let img = project_spinor(&sample_function(&grid, k, beta).unwrap());
        let pc = project_components(&grid);
        for ((i, l), &pa) in pc.a.indexed_iter() {
            let m = [pc.m[0][[i, l]], pc.m[1][[i, l]], pc.m[2][[i, l]]];
            let (u, d) = spinor_components(pa, m, k, beta);
            assert!(close(u, img.up[[i, l]], 1e-12));
            assert!(close(d, img.down[[i, l]], 1e-12));
        }
    }

    #[test]
    fn channel_mapping() {
        assert_eq!(Channel::from_parts(Position::P2, Spin::Up), None);
        assert_eq!(Channel::from_parts(Position::P3, Spin::Down), Some(Channel::S3Down));
        assert_eq!("S2_down".parse::<Channel>().unwrap(), Channel::S2Down);
    }
}
