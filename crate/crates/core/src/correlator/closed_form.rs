use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use super::{base_meta, CorrelationMap, DeltaGrid, Provenance, Statistics};
use crate::error::{Error, Result};
use crate::fourier::dtft_grid;
use crate::scene::{Position, Scene};
use crate::spinor::{project_spinor, sample_function_at, Spin};

/// `q = 2 pi Δξ / (λ d2)` along one axis of the grid.
pub fn q_axis(grid: &DeltaGrid, axis: usize, lambda: f64, d2: f64) -> Vec<f64> {
    grid.axis(axis).into_iter().map(|d| 2.0 * PI * d / (lambda * d2)).collect()
}

/// Rejects any `|q|` beyond the Nyquist band `pi / a` of the image.
pub fn check_band(q: &[f64], pitch: f64) -> Result<()> {
    let band = PI / pitch;
    if let Some(bad) = q.iter().find(|v| v.abs() > band * (1.0 + 1e-12)) {
        return Err(Error::Geometry(format!(
            "requested |q| = {} beyond the representable band pi/a = {band}",
            bad.abs()
        )));
    }
    Ok(())
}

/// `F[f](q) = Σ_ζ f(ζ) e^{+i q·ζ} a^D` on the product grid of `qx × qz`.
/// `image` is indexed `(x, z)` with coordinates centered on the sample.
pub fn fourier_image(image: &Array2<Complex64>, pitch: f64, dims: usize, qx: &[f64], qz: &[f64]) -> Array2<Complex64> {
    let (nx, nz) = image.dim();
    let origin = [-(nx as f64 - 1.0) / 2.0 * pitch, -(nz as f64 - 1.0) / 2.0 * pitch];
    let measure = pitch.powi(dims as i32);
    dtft_grid(image, origin, pitch, qx, qz).mapv(|v| v * measure)
}

/// `sign · χ' · |F[P S^p](q)|²` for a projected image.
pub fn correlation_closed_form_image(
    scene: &Scene,
    image: &Array2<Complex64>,
    spin: Spin,
    position: Position,
    statistics: Statistics,
    grid: DeltaGrid,
) -> Result<CorrelationMap> {
    let g = &scene.geometry;
    let a = scene.sample.pitch();
    let qx = q_axis(&grid, 0, g.lambda(), g.d2());
    let qz = if scene.dims() == 2 { q_axis(&grid, 1, g.lambda(), g.d2()) } else { vec![0.0] };
    check_band(&qx, a)?;
    check_band(&qz, a)?;
    let f = fourier_image(image, a, scene.dims(), &qx, &qz);
    let meta = base_meta(scene, spin, position, statistics, Provenance::ClosedForm, grid);
    let scale = statistics.sign() * meta.prefactor;
    Ok(CorrelationMap { values: f.mapv(|v| scale * v.norm_sqr()), stderr: None, meta })
}

/// Closed-form map of the scene's own sample.
pub fn correlation_closed_form(
    scene: &Scene,
    spin: Spin,
    position: Position,
    statistics: Statistics,
    grid: DeltaGrid,
) -> Result<CorrelationMap> {
    let g = &scene.geometry;
    let vol = sample_function_at(&scene.sample, g.theta(), position, scene.beta())?;
    let img = project_spinor(&vol);
    correlation_closed_form_image(scene, img.component(spin), spin, position, statistics, grid)
}
