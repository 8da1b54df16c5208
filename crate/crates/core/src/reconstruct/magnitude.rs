use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;

use crate::correlator::{fourier_image, q_axis, CorrelationMap, Statistics};
use crate::error::{Error, Result};
use crate::fourier::inverse_dtft_grid;
use crate::scene::Position;
use crate::spinor::Spin;

/// `|F[P S]|` on the q grid of a correlation map. Indexed like the map, so
/// `q = 0` sits at index `n/2` of each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeImage {
    pub values: Array2<f64>,
    pub qx: Vec<f64>,
    pub qz: Vec<f64>,
    pub spin: Spin,
    pub position: Position,
    /// Pitch of the sample image the map encodes.
    pub sample_pitch: f64,
    pub transverse_dims: usize,
    /// Pixels with a positive excursion beyond `3 * stderr`, clamped to 0.
    pub clamped: usize,
}

/// `sqrt(max(0, -value) / prefactor)` per pixel.
pub fn magnitude_from_correlation(map: &CorrelationMap) -> Result<MagnitudeImage> {
    let meta = &map.meta;
    if meta.statistics != Statistics::Fermion {
        return Err(Error::Format(format!("magnitude extraction needs a fermion map (got {})", meta.statistics)));
    }
    if !(meta.prefactor.is_finite() && meta.prefactor > 0.0 && meta.lambda > 0.0 && meta.d2 > 0.0) {
        return Err(Error::Format("missing normalization metadata (prefactor, lambda, d2)".into()));
    }
    let mut clamped = 0;
    let mut values = Array2::zeros(map.values.dim());
    match &map.stderr {
        Some(se) => Zip::from(&mut values).and(&map.values).and(se).for_each(|m, &v, &s| {
            if v > 3.0 * s {
                clamped += 1;
            }
            *m = ((-v).max(0.0) / meta.prefactor).sqrt();
        }),
        None => Zip::from(&mut values).and(&map.values).for_each(|m, &v| {
            if v > 0.0 {
                clamped += 1;
            }
            *m = ((-v).max(0.0) / meta.prefactor).sqrt();
        }),
    }
    if clamped > 0 {
        log::warn!("{clamped} pixels of a fermion map exceed +3 stderr; clamped to 0");
    }
    let qx = q_axis(&meta.grid, 0, meta.lambda, meta.d2);
    let qz = if meta.transverse_dims == 2 { q_axis(&meta.grid, 1, meta.lambda, meta.d2) } else { vec![0.0] };
    Ok(MagnitudeImage {
        values,
        qx,
        qz,
        spin: meta.spin,
        position: meta.position,
        sample_pitch: meta.sample_pitch,
        transverse_dims: meta.transverse_dims,
        clamped,
    })
}

fn axis_step(q: &[f64]) -> Result<Option<f64>> {
    if q.len() < 2 {
        return Ok(None);
    }
    let dq = q[1] - q[0];
    let uniform = q.windows(2).all(|w| ((w[1] - w[0]) - dq).abs() <= 1e-9 * dq.abs());
    if !(dq > 0.0 && uniform) {
        return Err(Error::Geometry("non-uniform q grid".into()));
    }
    Ok(Some(dq))
}

impl MagnitudeImage {
    /// Object-frame pitch `2 pi / (n dq)` per axis; `None` for a single-point axis.
    pub fn frame_pitch(&self) -> Result<[Option<f64>; 2]> {
        let px = axis_step(&self.qx)?.map(|dq| 2.0 * PI / (self.qx.len() as f64 * dq));
        let pz = axis_step(&self.qz)?.map(|dq| 2.0 * PI / (self.qz.len() as f64 * dq));
        Ok([px, pz])
    }

    /// Requires the q grid to be the full DFT grid of an image at
    /// `sample_pitch`, which holds when the detector extent is `λ d2 / a`.
    pub fn check_dft_grid(&self) -> Result<()> {
        for (axis, p) in self.frame_pitch()?.iter().enumerate() {
            if let Some(p) = p {
                if (p / self.sample_pitch - 1.0).abs() > 1e-9 {
                    return Err(Error::Geometry(format!(
                        "q grid on axis {axis} is not the DFT grid of the sample pitch (frame pitch {p}, sample pitch {})",
                        self.sample_pitch
                    )));
                }
            }
        }
        if self.transverse_dims == 2 && self.qz.len() < 2 {
            return Err(Error::Geometry("2D map needs at least two q points along z".into()));
        }
        Ok(())
    }

    /// Attaches the phase of `F[truth]` to the measured modulus.
    pub fn with_oracle_phase(&self, truth: &Array2<Complex64>) -> Array2<Complex64> {
        let f = fourier_image(truth, self.sample_pitch, self.transverse_dims, &self.qx, &self.qz);
        Zip::from(&f).and(&self.values).map_collect(|&f, &m| {
            if f.norm() > 0.0 {
                f / f.norm() * m
            } else {
                Complex64::new(m, 0.0)
            }
        })
    }
}

/// Inverts `F` on the full DFT grid into an image of `dims` pixels whose
/// first pixel sits at the sample's first pixel center. `values` is indexed
/// like a [`MagnitudeImage`].
pub fn image_from_fourier(values: &Array2<Complex64>, pitch: f64, transverse_dims: usize, dims: (usize, usize)) -> Array2<Complex64> {
    let origin = [-(dims.0 as f64 - 1.0) / 2.0 * pitch, -(dims.1 as f64 - 1.0) / 2.0 * pitch];
    let (nx, nz) = values.dim();
    // A single q point along z means the map integrated that axis: every
    // row of the result carries the same z-summed value.
    let origin = if nz == 1 { [origin[0], 0.0] } else { origin };
    let frame = inverse_dtft_grid(values, origin, pitch);
    let measure = pitch.powi(transverse_dims as i32);
    let (cx, cz) = (dims.0.min(nx), if nz == 1 { 1 } else { dims.1.min(nz) });
    frame.slice(ndarray::s![..cx, ..cz]).mapv(|v| v / measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::testing::small_scene;
    use crate::correlator::{correlation_closed_form, correlation_closed_form_image, DeltaGrid};
    use crate::spinor::{project_spinor, sample_function_at};

    #[test]
    fn arithmetic_inversion() {
        let s = small_scene();
        let grid = DeltaGrid::from_scene(&s);
        let mut m = correlation_closed_form(&s, Spin::Up, Position::P1, Statistics::Fermion, grid).unwrap();
        m.values.fill(-m.meta.prefactor * 4.0);
        let mag = magnitude_from_correlation(&m).unwrap();
        assert!(mag.values.iter().all(|&v| (v - 2.0).abs() < 1e-15));
        m.values.fill(0.0);
        assert!(magnitude_from_correlation(&m).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_boson_and_missing_normalization() {
        let s = small_scene();
        let grid = DeltaGrid::from_scene(&s);
        let mut m = correlation_closed_form(&s, Spin::Up, Position::P1, Statistics::Boson, grid).unwrap();
        assert!(magnitude_from_correlation(&m).is_err());
        m.meta.statistics = Statistics::Fermion;
        m.meta.prefactor = f64::NAN;
        assert!(magnitude_from_correlation(&m).unwrap_err().to_string().contains("normalization"));
    }

    #[test]
    fn positive_excursions_are_clamped_and_counted() {
        let s = small_scene();
        let grid = DeltaGrid::from_scene(&s);
        let mut m = correlation_closed_form(&s, Spin::Up, Position::P1, Statistics::Fermion, grid).unwrap();
        m.stderr = Some(Array2::from_elem(m.values.dim(), 1.0));
        m.values[[0, 0]] = 2.0;
        m.values[[1, 0]] = 5.0;
        let mag = magnitude_from_correlation(&m).unwrap();
        assert_eq!(mag.clamped, 1);
        assert_eq!(mag.values[[0, 0]], 0.0);
        assert_eq!(mag.values[[1, 0]], 0.0);
    }

    #[test]
    fn round_trip_matches_fourier_modulus() {
        let s = small_scene();
        let grid = DeltaGrid::from_scene(&s);
        let vol = sample_function_at(&s.sample, s.geometry.theta(), Position::P2, s.beta()).unwrap();
        let img = project_spinor(&vol);
        let m = correlation_closed_form_image(&s, &img.down, Spin::Down, Position::P2, Statistics::Fermion, grid).unwrap();
        let mag = magnitude_from_correlation(&m).unwrap();
        let f = fourier_image(&img.down, s.sample.pitch(), 1, &mag.qx, &mag.qz);
        for (a, b) in mag.values.iter().zip(f.iter()) {
            assert!((a - b.norm()).abs() <= 1e-12 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn oracle_phase_inverts_on_dft_grid() {
        // 1D map: the recovered profile is the z-sum of the image.
        let s = small_scene();
        let a = s.sample.pitch();
        let n = 16;
        let pitch = s.geometry.lambda() * s.geometry.d2() / (n as f64 * a);
        let grid = DeltaGrid { pitch, n: [n, 1] };
        let vol = sample_function_at(&s.sample, s.geometry.theta(), Position::P1, s.beta()).unwrap();
        let img = project_spinor(&vol);
        let m = correlation_closed_form_image(&s, &img.up, Spin::Up, Position::P1, Statistics::Fermion, grid).unwrap();
        let mag = magnitude_from_correlation(&m).unwrap();
        mag.check_dft_grid().unwrap();
        let back = image_from_fourier(&mag.with_oracle_phase(&img.up), a, 1, img.up.dim());
        for j in 0..img.up.dim().0 {
            let expect: Complex64 = img.up.row(j).sum();
            assert!((back[[j, 0]] - expect).norm() < 1e-12 * (1.0 + expect.norm()));
        }
    }
}
