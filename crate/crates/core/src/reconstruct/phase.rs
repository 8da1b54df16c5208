//! Fourier-modulus phase retrieval and ambiguity-aware scoring.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::magnitude::MagnitudeImage;
use crate::error::{Error, Result};
use crate::fourier::Fft2;

/// Object-plane support. Same shape as the magnitude frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportMask {
    mask: Array2<bool>,
}

impl SupportMask {
    pub fn new(mask: Array2<bool>) -> Result<Self> {
        if !mask.iter().any(|&m| m) {
            return Err(Error::Config("support mask is empty".into()));
        }
        Ok(SupportMask { mask })
    }

    /// Rectangle of `size` pixels starting at `corner` inside a `frame`.
    pub fn rect(frame: (usize, usize), corner: (usize, usize), size: (usize, usize)) -> Result<Self> {
        if corner.0 + size.0 > frame.0 || corner.1 + size.1 > frame.1 {
            return Err(Error::Geometry("support larger than frame".into()));
        }
        let mask = Array2::from_shape_fn(frame, |(i, l)| {
            (corner.0..corner.0 + size.0).contains(&i) && (corner.1..corner.1 + size.1).contains(&l)
        });
        SupportMask::new(mask)
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn dim(&self) -> (usize, usize) {
        self.mask.dim()
    }

    /// Inclusive bounding box `(lo, hi)`.
    pub fn bounds(&self) -> ([usize; 2], [usize; 2]) {
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for ((i, l), &m) in self.mask.indexed_iter() {
            if m {
                lo = [lo[0].min(i), lo[1].min(l)];
                hi = [hi[0].max(i), hi[1].max(l)];
            }
        }
        (lo, hi)
    }

    /// Frame extent over support bounding-box extent, per axis.
    pub fn oversampling(&self) -> [f64; 2] {
        let (nx, nz) = self.mask.dim();
        let (lo, hi) = self.bounds();
        [nx as f64 / (hi[0] - lo[0] + 1) as f64, nz as f64 / (hi[1] - lo[1] + 1) as f64]
    }

    /// The support without the far corner `u + v > cut` of its bounding box.
    pub fn corner_cut(&self, cut: f64) -> Array2<bool> {
        let (lo, hi) = self.bounds();
        let w = [(hi[0] - lo[0] + 1) as f64, (hi[1] - lo[1] + 1) as f64];
        Array2::from_shape_fn(self.mask.dim(), |(i, l)| {
            let u = (i as f64 - lo[0] as f64 + 0.5) / w[0];
            let v = (l as f64 - lo[1] as f64 + 0.5) / w[1];
            self.mask[[i, l]] && u + v <= cut
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectConstraint {
    /// Real and nonnegative inside the support.
    RealNonnegative,
    /// Support only.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    pub n_iter: usize,
    pub beta_feedback: f64,
    pub hio_iters: usize,
    pub er_iters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub constraint: ObjectConstraint,
    /// Iterations run with the corner of the support beyond
    /// `u + v > symmetry_cut` removed (`u, v` in units of the support's
    /// bounding box), which breaks the twin-image symmetry of centrosymmetric
    /// supports. 0 disables.
    pub symmetry_break_iters: usize,
    pub symmetry_cut: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        PhaseParams {
            n_iter: 2000,
            beta_feedback: 0.9,
            hio_iters: 40,
            er_iters: 10,
            restarts: 8,
            seed: 0,
            constraint: ObjectConstraint::RealNonnegative,
            symmetry_break_iters: 50,
            symmetry_cut: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RestartResult {
    pub object: Array2<Complex64>,
    /// `‖|F[x]| - mag‖ / ‖mag‖` of the returned object.
    pub residual: f64,
    /// Residual of the iterate at every iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PhaseRetrieval {
    pub restarts: Vec<RestartResult>,
    /// Index of the restart with the lowest residual.
    pub best: usize,
}

impl PhaseRetrieval {
    pub fn best(&self) -> &RestartResult {
        &self.restarts[self.best]
    }
}

/// Moves a centered-order array (zero frequency at `n/2`) into FFT order.
pub fn ifftshift<T: Copy>(a: &Array2<T>) -> Array2<T> {
    let (nx, nz) = a.dim();
    Array2::from_shape_fn((nx, nz), |(i, l)| a[[(i + nx / 2) % nx, (l + nz / 2) % nz]])
}

/// Inverse of [`ifftshift`].
pub fn fftshift<T: Copy>(a: &Array2<T>) -> Array2<T> {
    let (nx, nz) = a.dim();
    Array2::from_shape_fn((nx, nz), |(i, l)| a[[(i + nx - nx / 2) % nx, (l + nz - nz / 2) % nz]])
}

fn residual(f: &Array2<Complex64>, mag: &Array2<f64>, mag_norm: f64) -> f64 {
    let s: f64 = Zip::from(f).and(mag).fold(0.0, |acc, f, m| acc + (f.norm() - m).powi(2));
    s.sqrt() / mag_norm
}

fn impose_modulus(f: &mut Array2<Complex64>, mag: &Array2<f64>) {
    Zip::from(f).and(mag).for_each(|f, &m| {
        let n = f.norm();
        *f = if n > 0.0 { *f * (m / n) } else { Complex64::new(m, 0.0) };
    });
}

fn one_restart(mag: &Array2<f64>, full: &SupportMask, p: &PhaseParams, restart: usize) -> RestartResult {
    let cut = full.corner_cut(p.symmetry_cut);
    let (nx, nz) = mag.dim();
    let mut fft = Fft2::new(nx, nz);
    let mag_norm = mag.iter().map(|m| m * m).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let real = p.constraint == ObjectConstraint::RealNonnegative;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(restart as u64);

    let mut f = mag.mapv(|m| Complex64::from_polar(m, rng.random_range(0.0..2.0 * PI)));
    fft.inverse(&mut f);
    let initial = if p.symmetry_break_iters > 0 { &cut } else { full.mask() };
    let mut x = Zip::from(&f).and(initial).map_collect(|&v, &s| {
        let v = if real { Complex64::new(v.re.max(0.0), 0.0) } else { v };
        if s { v } else { Complex64::new(0.0, 0.0) }
    });

    let block = p.hio_iters + p.er_iters;
    let mut trace = Vec::with_capacity(p.n_iter);
    for it in 0..p.n_iter {
        let hio = block > 0 && it % block < p.hio_iters;
        let support = if it < p.symmetry_break_iters { &cut } else { full.mask() };
        let mut g = x.clone();
        fft.forward(&mut g);
        trace.push(residual(&g, mag, mag_norm));
        impose_modulus(&mut g, mag);
        fft.inverse(&mut g);
        Zip::from(&mut x).and(&g).and(support).for_each(|x, &y, &s| {
            let y = if real { Complex64::new(y.re, 0.0) } else { y };
            let ok = s && (!real || y.re >= 0.0);
            *x = match (ok, hio) {
                (true, _) => y,
                (false, true) => *x - y * p.beta_feedback,
                (false, false) => Complex64::new(0.0, 0.0),
            };
        });
    }
    // Project onto the object constraints for output.
    Zip::from(&mut x).and(full.mask()).for_each(|x, &s| {
        if !s {
            *x = Complex64::new(0.0, 0.0);
        } else if real {
            *x = Complex64::new(x.re.max(0.0), 0.0);
        }
    });
    let mut g = x.clone();
    fft.forward(&mut g);
    RestartResult { residual: residual(&g, mag, mag_norm), object: x, trace }
}

/// Hybrid input-output / error-reduction phase retrieval on a frame whose
/// DFT modulus is `mag`, given in centered order (`q = 0` at `n/2`).
///
/// Blocks of `hio_iters` HIO steps with feedback `beta_feedback` alternate
/// with `er_iters` error-reduction steps. Each restart starts from random
/// Fourier phases drawn from its own stream of a ChaCha8 generator keyed by
/// `seed`; restarts run in parallel.
pub fn phase_retrieve_array(mag: &Array2<f64>, support: &SupportMask, params: &PhaseParams) -> Result<PhaseRetrieval> {
    if support.dim() != mag.dim() {
        return Err(Error::Geometry(format!(
            "support larger than frame: support {:?} vs frame {:?}",
            support.dim(),
            mag.dim()
        )));
    }
    let (nx, nz) = mag.dim();
    let over = support.oversampling();
    for (axis, n) in [nx, nz].into_iter().enumerate() {
        if n > 1 && over[axis] < 2.0 {
            return Err(Error::Geometry(format!("oversampling {} < 2 on axis {axis}", over[axis])));
        }
    }
    if params.restarts == 0 || params.n_iter == 0 {
        return Err(Error::Config("phase retrieval needs at least one restart and one iteration".into()));
    }
    if mag.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::Format("magnitudes must be finite and nonnegative".into()));
    }
    let mag = ifftshift(mag);
    let restarts: Vec<RestartResult> =
        (0..params.restarts).into_par_iter().map(|r| one_restart(&mag, support, params, r)).collect();
    let best = restarts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.residual.total_cmp(&b.1.residual))
        .map(|(i, _)| i)
        .expect("at least one restart");
    Ok(PhaseRetrieval { restarts, best })
}

/// [`phase_retrieve_array`] on a measured magnitude image.
pub fn phase_retrieve(mag: &MagnitudeImage, support: &SupportMask, params: &PhaseParams) -> Result<PhaseRetrieval> {
    mag.frame_pitch()?;
    phase_retrieve_array(&mag.values, support, params)
}

/// Best alignment of a reconstruction to the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub nrmse: f64,
    /// Circular shift applied to the (possibly flipped) reconstruction.
    pub shift: [usize; 2],
    pub flipped: bool,
    pub phase: f64,
}

/// `conj(x(-r))` with indices taken modulo the frame.
pub fn conjugate_flip(x: &Array2<Complex64>) -> Array2<Complex64> {
    let (nx, nz) = x.dim();
    Array2::from_shape_fn((nx, nz), |(i, l)| x[[(nx - i) % nx, (nz - l) % nz]].conj())
}

/// `e^{i phase} x(r - shift)`, circular.
pub fn shift_and_phase(x: &Array2<Complex64>, shift: [usize; 2], phase: f64) -> Array2<Complex64> {
    let (nx, nz) = x.dim();
    let w = Complex64::from_polar(1.0, phase);
    Array2::from_shape_fn((nx, nz), |(i, l)| x[[(i + nx - shift[0]) % nx, (l + nz - shift[1]) % nz]] * w)
}

/// NRMSE `‖x' - truth‖ / ‖truth‖` minimized over circular translations,
/// global phase and conjugate flip of `recon`. Translations are searched
/// exhaustively through an FFT cross-correlation.
pub fn register_and_score(recon: &Array2<Complex64>, truth: &Array2<Complex64>) -> Result<Registration> {
    if recon.dim() != truth.dim() {
        return Err(Error::Format(format!("shape mismatch {:?} vs {:?}", recon.dim(), truth.dim())));
    }
    let tnorm = truth.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if tnorm == 0.0 {
        return Err(Error::Format("truth has zero norm".into()));
    }
    let (nx, nz) = truth.dim();
    let mut fft = Fft2::new(nx, nz);
    let mut t = truth.clone();
    fft.forward(&mut t);
    let mut best: Option<Registration> = None;
    for flipped in [false, true] {
        let cand = if flipped { conjugate_flip(recon) } else { recon.clone() };
        let mut r = cand.clone();
        fft.forward(&mut r);
        // c(s) = Σ_x truth(x) conj(cand(x - s)).
        let mut c = Zip::from(&t).and(&r).map_collect(|a, b| a * b.conj());
        fft.inverse(&mut c);
        let (mut arg, mut peak) = ((0, 0), -1.0);
        for ((i, l), v) in c.indexed_iter() {
            if v.norm() > peak {
                peak = v.norm();
                arg = (i, l);
            }
        }
        let shift = [arg.0, arg.1];
        let phase = c[[arg.0, arg.1]].arg();
        let aligned = shift_and_phase(&cand, shift, phase);
        let err = Zip::from(&aligned).and(truth).fold(0.0, |acc, a, b| acc + (a - b).norm_sqr()).sqrt() / tnorm;
        if best.is_none_or(|b| err < b.nrmse) {
            best = Some(Registration { nrmse: err, shift, flipped, phase });
        }
    }
    Ok(best.expect("two candidates"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(nx: usize, nz: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((nx, nz), |(i, l)| {
            Complex64::new((i as f64 * 0.37).sin() + l as f64 * 0.1, (i * l) as f64 * 0.05 - 0.2)
        })
    }

    #[test]
    fn identity_scores_zero() {
        let t = blob(8, 6);
        assert!(register_and_score(&t, &t).unwrap().nrmse < 1e-14);
    }

    #[test]
    fn phase_and_shift_absorbed() {
        let t = blob(8, 6);
        // Shift by (3, -2).
        let r = shift_and_phase(&t, [3, 4], 1.1);
        let s = register_and_score(&r, &t).unwrap();
        assert!(s.nrmse < 1e-12, "{s:?}");
    }

    #[test]
    fn conjugate_flip_absorbed() {
        let t = blob(7, 5);
        let s = register_and_score(&conjugate_flip(&t), &t).unwrap();
        assert!(s.nrmse < 1e-12 && s.flipped);
    }

    #[test]
    fn zero_truth_rejected() {
        let t = Array2::zeros((4, 4));
        assert!(register_and_score(&blob(4, 4), &t).is_err());
    }

    #[test]
    fn point_object_from_flat_modulus() {
        let mag = Array2::from_elem((16, 16), 1.0);
        let support = SupportMask::rect((16, 16), (0, 0), (4, 4)).unwrap();
        let params = PhaseParams { n_iter: 200, restarts: 2, seed: 3, ..PhaseParams::default() };
        let out = phase_retrieve_array(&mag, &support, &params).unwrap();
        let x = &out.best().object;
        let total: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let peak = x.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        assert!(peak / total > 0.999, "{}", peak / total);
    }

    #[test]
    fn rejects_bad_support() {
        let mag = Array2::from_elem((16, 16), 1.0);
        let small = SupportMask::rect((8, 8), (0, 0), (4, 4)).unwrap();
        assert!(phase_retrieve_array(&mag, &small, &PhaseParams::default()).is_err());
        let wide = SupportMask::rect((16, 16), (0, 0), (10, 4)).unwrap();
        assert!(phase_retrieve_array(&mag, &wide, &PhaseParams::default()).is_err());
        assert!(SupportMask::rect((8, 8), (6, 0), (4, 4)).is_err());
    }

    #[test]
    fn deterministic_across_threads() {
        let mut truth = Array2::zeros((16, 16));
        for (i, l) in [(1, 1), (2, 1), (1, 3), (4, 2), (3, 3)] {
            truth[[i, l]] = Complex64::new(1.0 + i as f64 * 0.1, 0.0);
        }
        let mut f = truth.clone();
        Fft2::new(16, 16).forward(&mut f);
        let mag = crate::reconstruct::phase::fftshift(&f.mapv(|v| v.norm()));
        let support = SupportMask::rect((16, 16), (0, 0), (6, 6)).unwrap();
        let params = PhaseParams { n_iter: 100, restarts: 3, seed: 5, ..PhaseParams::default() };
        let a = phase_retrieve_array(&mag, &support, &params).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| phase_retrieve_array(&mag, &support, &params).unwrap());
        for (x, y) in a.restarts.iter().zip(&b.restarts) {
            assert_eq!(x.object, y.object);
            assert_eq!(x.trace, y.trace);
        }
    }
}
