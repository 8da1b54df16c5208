//! Fourier conventions shared by every module.
//!
//! The transverse transform is `F[f](q) = Σ_ζ f(ζ) exp(+i q·ζ) a^D`. The sign
//! lives in [`FOURIER_SIGN`]; nothing else hard-codes it.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Sign of the exponent in the forward transverse transform.
pub const FOURIER_SIGN: f64 = 1.0;

fn direction(sign: f64) -> FftDirection {
    if sign > 0.0 {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    }
}

/// Unnormalized 1D DFT with exponent `sign * 2 pi i j m / n`.
pub fn dft_in_place(buf: &mut [Complex64], sign: f64) {
    let mut planner = FftPlanner::new();
    planner.plan_fft(buf.len(), direction(sign)).process(buf);
}

/// Cached plans for repeated 2D transforms of one shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut p = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: p.plan_fft(cols, direction(FOURIER_SIGN)),
            row_inv: p.plan_fft(cols, direction(-FOURIER_SIGN)),
            col_fwd: p.plan_fft(rows, direction(FOURIER_SIGN)),
            col_inv: p.plan_fft(rows, direction(-FOURIER_SIGN)),
            scratch: vec![Complex64::new(0.0, 0.0); rows.max(cols)],
        }
    }

    fn run(&mut self, a: &mut Array2<Complex64>, inverse: bool) {
        assert_eq!(a.dim(), (self.rows, self.cols));
        let (row, col) = if inverse {
            (self.row_inv.clone(), self.col_inv.clone())
        } else {
            (self.row_fwd.clone(), self.col_fwd.clone())
        };
        for mut r in a.axis_iter_mut(Axis(0)) {
            let s = r.as_slice_mut().expect("standard layout");
            row.process(s);
        }
        let buf = &mut self.scratch[..self.rows];
        for mut c in a.axis_iter_mut(Axis(1)) {
            for (b, v) in buf.iter_mut().zip(c.iter()) {
                *b = *v;
            }
            col.process(buf);
            for (v, b) in c.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
        if inverse {
            let n = (self.rows * self.cols) as f64;
            a.mapv_inplace(|v| v / n);
        }
    }

    /// Unnormalized transform with exponent sign [`FOURIER_SIGN`].
    pub fn forward(&mut self, a: &mut Array2<Complex64>) {
        self.run(a, false);
    }

    /// Exact inverse of [`Fft2::forward`] (includes `1/(rows*cols)`).
    pub fn inverse(&mut self, a: &mut Array2<Complex64>) {
        self.run(a, true);
    }
}

/// `Σ_{j<m} exp(i φ j)`, the periodic kernel that interpolates a length-`m`
/// DFT back to its DTFT.
fn dirichlet(phi: f64, m: usize) -> Complex64 {
    let phi = phi - 2.0 * PI * (phi / (2.0 * PI)).round();
    let half = 0.5 * phi;
    let s = half.sin();
    if s == 0.0 {
        return Complex64::new(m as f64, 0.0);
    }
    let amp = (m as f64 * half).sin() / s;
    Complex64::from_polar(amp, half * (m as f64 - 1.0))
}

/// Interpolation weights from the `m` DFT bins onto each `theta` (radians
/// per sample). Points that sit on a bin get a one-hot row so on-grid
/// evaluation reproduces the FFT exactly.
fn weights(theta: &[f64], m: usize) -> Array2<Complex64> {
    let mut w = Array2::zeros((theta.len(), m));
    for (i, &t) in theta.iter().enumerate() {
        let pos = t * m as f64 / (2.0 * PI);
        let bin = pos.round();
        if (pos - bin).abs() < 1e-9 {
            w[[i, (bin as i64).rem_euclid(m as i64) as usize]] = Complex64::new(1.0, 0.0);
        } else {
            for k in 0..m {
                w[[i, k]] = dirichlet(FOURIER_SIGN * (t - 2.0 * PI * k as f64 / m as f64), m) / m as f64;
            }
        }
    }
    w
}

/// Pad length along one axis. Uses the requested grid's own period when the
/// spacing is commensurate with a DFT of at least `n` points, else `2n`
/// rounded up to a power of two.
fn pad_len(n: usize, theta: &[f64]) -> usize {
    if theta.len() >= 2 {
        let dt = theta[1] - theta[0];
        if dt > 0.0 {
            let m = 2.0 * PI / dt;
            let mr = m.round();
            if (m - mr).abs() < 1e-9 * m && mr as usize >= n {
                return mr as usize;
            }
        }
    }
    (2 * n).next_power_of_two()
}

/// `Σ_{j,l} f[j,l] exp(i (qx_p (x0 + j a) + qz_r (z0 + l a)))` on the product
/// grid `qx × qz`. No `a^D` factor is applied.
///
/// Evaluated by a zero-padded FFT followed by exact trigonometric
/// (Dirichlet-kernel) interpolation, so off-bin points carry no
/// interpolation error beyond roundoff.
pub fn dtft_grid(
    f: &Array2<Complex64>,
    origin: [f64; 2],
    pitch: f64,
    qx: &[f64],
    qz: &[f64],
) -> Array2<Complex64> {
    let (nx, nz) = f.dim();
    let tx: Vec<f64> = qx.iter().map(|q| q * pitch).collect();
    let tz: Vec<f64> = qz.iter().map(|q| q * pitch).collect();
    let mx = pad_len(nx, &tx);
    let mz = pad_len(nz, &tz);
    let mut padded = Array2::zeros((mx, mz));
    padded.slice_mut(ndarray::s![..nx, ..nz]).assign(f);
    Fft2::new(mx, mz).forward(&mut padded);
    let wx = weights(&tx, mx);
    let wz = weights(&tz, mz);
    let mut out = wx.dot(&padded).dot(&wz.t());
    for ((i, l), v) in out.indexed_iter_mut() {
        let phase = FOURIER_SIGN * (qx[i] * origin[0] + qz[l] * origin[1]);
        *v *= Complex64::from_polar(1.0, phase);
    }
    out
}

/// Inverse of [`dtft_grid`] on a full DFT grid: `values[i, l]` is the
/// transform at `q = 2 pi (i - nx/2) / (nx a)` (same for z), and the result
/// is the frame `f[j, l]` at `origin + (j, l) a` (`a^D` not applied).
pub fn inverse_dtft_grid(values: &Array2<Complex64>, origin: [f64; 2], pitch: f64) -> Array2<Complex64> {
    let (nx, nz) = values.dim();
    let qx = dft_q_grid(nx, pitch);
    let qz = dft_q_grid(nz, pitch);
    // Undo the origin phase, then move bins into FFT order.
    let mut bins = Array2::zeros((nx, nz));
    for ((i, l), v) in values.indexed_iter() {
        let phase = -FOURIER_SIGN * (qx[i] * origin[0] + qz[l] * origin[1]);
        let bi = (i as i64 - (nx / 2) as i64).rem_euclid(nx as i64) as usize;
        let bl = (l as i64 - (nz / 2) as i64).rem_euclid(nz as i64) as usize;
        bins[[bi, bl]] = v * Complex64::from_polar(1.0, phase);
    }
    Fft2::new(nx, nz).inverse(&mut bins);
    bins
}

/// `q_i = 2 pi (i - n/2) / (n a)`; the DFT grid of an `n`-pixel frame in
/// centered order.
pub fn dft_q_grid(n: usize, pitch: f64) -> Vec<f64> {
    let half = (n / 2) as f64;
    (0..n).map(|i| 2.0 * PI * (i as f64 - half) / (n as f64 * pitch)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct(f: &Array2<Complex64>, origin: [f64; 2], a: f64, qx: &[f64], qz: &[f64]) -> Array2<Complex64> {
        Array2::from_shape_fn((qx.len(), qz.len()), |(i, l)| {
            let mut s = Complex64::new(0.0, 0.0);
            for ((j, k), v) in f.indexed_iter() {
                let x = origin[0] + j as f64 * a;
                let z = origin[1] + k as f64 * a;
                s += v * Complex64::from_polar(1.0, qx[i] * x + qz[l] * z);
            }
            s
        })
    }

    fn sample(nx: usize, nz: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((nx, nz), |(j, k)| {
            Complex64::new((j as f64 * 0.7 + k as f64).sin(), (j * k) as f64 * 0.1 - 0.3)
        })
    }

    #[test]
    fn off_grid_matches_direct_sum() {
        let f = sample(7, 5);
        let qx: Vec<f64> = (0..9).map(|i| -1.3 + 0.31 * i as f64).collect();
        let qz: Vec<f64> = (0..4).map(|i| 0.2 - 0.45 * i as f64).collect();
        let fast = dtft_grid(&f, [-3.0, -2.0], 0.9, &qx, &qz);
        let slow = direct(&f, [-3.0, -2.0], 0.9, &qx, &qz);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()), "{a} vs {b}");
        }
    }

    #[test]
    fn on_grid_matches_direct_sum() {
        let f = sample(6, 1);
        let qx = dft_q_grid(16, 2.0);
        let fast = dtft_grid(&f, [-5.0, 0.0], 2.0, &qx, &[0.0]);
        let slow = direct(&f, [-5.0, 0.0], 2.0, &qx, &[0.0]);
        for (a, b) in fast.iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn inverse_recovers_frame() {
        let f = sample(5, 3);
        let (n, m) = (8, 8);
        let qx = dft_q_grid(n, 1.5);
        let qz = dft_q_grid(m, 1.5);
        let origin = [-3.0, 1.5];
        let g = dtft_grid(&f, origin, 1.5, &qx, &qz);
        let back = inverse_dtft_grid(&g, origin, 1.5);
        for ((j, k), v) in back.indexed_iter() {
            let expect = if j < 5 && k < 3 { f[[j, k]] } else { Complex64::new(0.0, 0.0) };
            assert!((v - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn fft2_roundtrip() {
        let f = sample(4, 6);
        let mut g = f.clone();
        let mut plan = Fft2::new(4, 6);
        plan.forward(&mut g);
        plan.inverse(&mut g);
        for (a, b) in f.iter().zip(g.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
