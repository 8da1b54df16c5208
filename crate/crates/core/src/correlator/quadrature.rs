use ndarray::Array2;
use num_complex::Complex64;

use super::{base_meta, source_axes, source_weights, CorrelationMap, DeltaGrid, Provenance, Statistics};
use crate::error::Result;
use crate::propagation::{fresnel_kernel_reduced, TargetArm};
use crate::scene::{validate_sampling_for, Method, Position, Scene};
use crate::spinor::{sample_function_at, Spin};

/// `sign · v² I0² |Σ_η w(η) h_r*(ξ_r, η) h_t(ξ_t, η) Δη^D|²` for every `ξ_r` of
/// the scan, with `h_t` the exact-distance voxel sum and `w` the relative
/// source intensity (1 unless the aperture is tapered).
///
/// The constant phases `e^{ik d_r}` and `e^{ik(d1+d2)}` are equal and cancel
/// in the product, so both kernels are used in reduced form.
pub fn correlation_quadrature(
    scene: &Scene,
    spin: Spin,
    position: Position,
    statistics: Statistics,
    grid: DeltaGrid,
) -> Result<CorrelationMap> {
    validate_sampling_for(scene, &[position]).require(Method::Quadrature)?;
    let g = &scene.geometry;
    let volume = sample_function_at(&scene.sample, g.theta(), position, scene.beta())?;
    let arm = TargetArm::new(scene, &volume, spin)?;
    let xi_t = position.detector_offset(g.theta(), g.d2());

    let [ex, ez] = source_axes(scene);
    let etas: Vec<[f64; 2]> = ex.iter().flat_map(|&x| ez.iter().map(move |&z| [x, z])).collect();
    let mut ht = Array2::from_shape_vec((ex.len(), ez.len()), arm.row(xi_t, &etas)?).expect("row length");
    ht.zip_mut_with(&source_weights(scene), |h, w| *h *= *w);

    // The reference chirp factorizes over the transverse axes, so the source
    // sum is a pair of matrix products.
    let (lambda, dr) = (g.lambda(), g.d_r());
    let chirp = |axis: usize, es: &[f64]| {
        let offsets = grid.axis(axis);
        Array2::from_shape_fn((offsets.len(), es.len()), |(j, i)| {
            let c = fresnel_kernel_reduced([xi_t[axis] + offsets[j], 0.0], [es[i], 0.0], dr, lambda);
            // Keep only the unimodular chirp; the 1/(iλd_r) factor is applied once below.
            (c * Complex64::i() * lambda * dr).conj()
        })
    };
    let cx = chirp(0, &ex);
    let cz = chirp(1, &ez);
    let sums = cx.dot(&ht).dot(&cz.t());

    let deta = scene.source.pitch().powi(scene.dims() as i32);
    let hr_scale = (Complex64::new(1.0, 0.0) / (Complex64::i() * lambda * dr)).conj() * deta;
    let v = scene.velocity();
    let i0 = g.i0();
    let scale = statistics.sign() * v * v * i0 * i0;
    let values = sums.mapv(|s| scale * (s * hr_scale).norm_sqr());
    Ok(CorrelationMap { values, stderr: None, meta: base_meta(scene, spin, position, statistics, Provenance::Quadrature, grid) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::testing::small_scene;
    use crate::scene::SampleGrid;
    use ndarray::Array3;

    #[test]
    fn zero_sample_gives_zero_map() {
        let s = small_scene();
        let zero = s.with_sample(SampleGrid::zeros([4, 4, 1], 1.0).unwrap()).unwrap();
        let m = correlation_quadrature(&zero, Spin::Up, Position::P1, Statistics::Fermion, DeltaGrid::from_scene(&zero)).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quadratic_in_sample() {
        let s = small_scene();
        let grid = DeltaGrid::from_scene(&s);
        let base = correlation_quadrature(&s, Spin::Down, Position::P1, Statistics::Boson, grid).unwrap();
        let c = 2.5;
        let a = s.sample.a().mapv(|v| v * c);
        let m = s.sample.m().mapv(|m| [m[0] * c, m[1] * c, m[2] * c]);
        let scaled = s.with_sample(SampleGrid::new(1.0, a, m).unwrap()).unwrap();
        let m2 = correlation_quadrature(&scaled, Spin::Down, Position::P1, Statistics::Boson, grid).unwrap();
        for (x, y) in base.values.iter().zip(m2.values.iter()) {
            assert!((y - c * c * x).abs() <= 1e-12 * y.abs().max(1e-300));
        }
        let f = correlation_quadrature(&s, Spin::Down, Position::P1, Statistics::Fermion, grid).unwrap();
        assert!(f.values.iter().all(|&v| v <= 0.0));
        assert!(base.values.iter().zip(f.values.iter()).all(|(b, f)| *b == -*f));
    }

    #[test]
    fn single_voxel_map_is_flat() {
        // A point object has a flat Fourier modulus.
        let s = small_scene();
        let mut a = Array3::zeros((4, 4, 1));
        a[[1, 2, 0]] = 1.0;
        let one = s.with_sample(SampleGrid::new(1.0, a, Array3::from_elem((4, 4, 1), [0.0; 3])).unwrap()).unwrap();
        let m = correlation_quadrature(&one, Spin::Up, Position::P2, Statistics::Fermion, DeltaGrid::from_scene(&one)).unwrap();
        let mean = m.values.mean().unwrap();
        for v in m.values.iter() {
            assert!((v / mean - 1.0).abs() < 0.02, "{v} vs {mean}");
        }
    }
}
