//! Embedded invariant suite run by `ngi selftest`.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::correlator::{
    correlation_closed_form, correlation_quadrature, speckle_mc, DeltaGrid, Statistics,
};
use crate::error::Result;
use crate::io::ngi::{self, NgiArray};
use crate::reconstruct::{
    conjugate_flip, rotate_sample, register_and_score, solve_components, tomo_fbp, Filter, Projection, RotationAxis,
};
use crate::scene::{build_scene, parse_config, Position, SampleGrid, Scene};
use crate::spinor::{
    coefficient_matrix, forward_s_vector, kappa_hat, spinor_components, Channel, Spin,
};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn small_scene() -> Result<Scene> {
    let cfg = parse_config(
        r#"{
        "mode": "normalized",
        "geometry": {"lambda": 1.0, "d1": 10000.0, "d2": 10000.0, "theta": 0.002, "transverse": "1d"},
        "source": {"extent": 16.0, "n_points": 32},
        "detector": {"extent": 16.0, "n_pixels": 32},
        "sample": {"pitch": 1.0, "dims": [4, 4, 1],
                   "blobs": [{"center": [0.0, 0.0, 0.0], "semi_axes": [1.6, 1.6, 1.0], "a": 1.0, "m": [0.3, 0.2, 0.5]}]}
    }"#,
    )?;
    build_scene(&cfg, std::path::Path::new("."))
}

fn matrix_oracle() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = rng.random_range(1e-3..std::f64::consts::FRAC_PI_2 - 1e-3);
        let beta = rng.random_range(0.1..2.0);
        let m = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = rng.random_range(-1.0..1.0);
        let lhs = forward_s_vector(m[0], m[1], m[2], a, theta, beta)?;
        for (k, ch) in Channel::ALL.iter().enumerate() {
            let (up, down) = spinor_components(a, m, kappa_hat(theta, ch.position())?, beta);
            let v = if ch.spin() == Spin::Up { up } else { down };
            worst = worst.max((v - lhs[k]).norm());
        }
    }
    Ok((worst < 1e-12, format!("max |C x - S| = {worst:.2e} over 1000 draws")))
}

fn first_row() -> Result<(bool, String)> {
    let ok = [0.05, 0.7, 1.5].iter().all(|&t| {
        coefficient_matrix(t).map(|c| c.entries[0] == [0.0, 0.0, 1.0, 1.0].map(|v| Complex64::new(v, 0.0))).unwrap_or(false)
    });
    Ok((ok, "S1 up row equals (0, 0, 1, 1)".into()))
}

fn fermion_sign(scene: &Scene) -> Result<(bool, String)> {
    let grid = DeltaGrid::from_scene(scene);
    let mut worst = f64::NEG_INFINITY;
    for ch in Channel::ALL {
        let q = correlation_quadrature(scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let c = correlation_closed_form(scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        for v in q.values.iter().chain(c.values.iter()) {
            worst = worst.max(*v);
        }
    }
    Ok((worst <= 0.0, format!("max fermion map value {worst:.3e}")))
}

fn quadrature_vs_closed() -> Result<(bool, String)> {
    let scene = &build_scene(&parse_config(include_str!("../configs/canonical_1d.json"))?, std::path::Path::new("."))?;
    let grid = DeltaGrid::from_scene(scene);
    let q = correlation_quadrature(scene, Spin::Up, Position::P1, Statistics::Fermion, grid)?;
    let c = correlation_closed_form(scene, Spin::Up, Position::P1, Statistics::Fermion, grid)?;
    let err = crate::reconstruct::nrmse(&q.values, &c.values);
    Ok((err < 0.02, format!("relative L2 {err:.3e} on the canonical scene (tolerance 2e-2)")))
}

fn mc_threads(scene: &Scene) -> Result<(bool, String)> {
    let grid = DeltaGrid::from_scene(scene);
    let a = speckle_mc(scene, Spin::Up, Position::P1, 64, 1, grid)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| crate::Error::Check(e.to_string()))?;
    let b = pool.install(|| speckle_mc(scene, Spin::Up, Position::P1, 64, 1, grid))?;
    let same = a.boson.values == b.boson.values && a.boson.stderr == b.boson.stderr;
    let neg = a.fermion.values.iter().zip(a.boson.values.iter()).all(|(f, b)| *f == -*b);
    Ok((same && neg, "bit-identical across thread counts; fermion = -boson".into()))
}

fn solve_round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (theta, beta) = (0.2, 0.956);
    let truth: Vec<[f64; 4]> = (0..256).map(|_| [0; 4].map(|_| rng.random_range(-1.0..1.0))).collect();
    let mut images = [(); 5].map(|_| Array2::zeros((16, 16)));
    for (p, t) in truth.iter().enumerate() {
        let s = forward_s_vector(t[0], t[1], t[2], t[3], theta, beta)?;
        for k in 0..5 {
            images[k][[p / 16, p % 16]] = s[k];
        }
    }
    let sol = solve_components(&images, theta, beta)?;
    let mut worst: f64 = 0.0;
    for (p, t) in truth.iter().enumerate() {
        for c in 0..4 {
            worst = worst.max((sol.component(c)[[p / 16, p % 16]] - t[c]).abs());
        }
    }
    Ok((worst < 1e-10, format!("max component error {worst:.2e}")))
}

fn ngi_round_trip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let real = NgiArray::Real(Array3::from_shape_fn((3, 4, 2), |_| rng.random::<f64>() - 0.5).into_dyn());
    let cplx = NgiArray::Complex(
        Array2::from_shape_fn((5, 3), |_| Complex64::new(rng.random(), rng.random())).into_dyn(),
    );
    let ok = [real, cplx].iter().all(|a| {
        let bytes = ngi::encode(a);
        ngi::decode(&bytes).map(|b| ngi::encode(&b) == bytes).unwrap_or(false)
    });
    Ok((ok, "encode(decode(bytes)) == bytes".into()))
}

fn rotation_exact() -> Result<(bool, String)> {
    let g = SampleGrid::new(1.0, Array3::zeros((4, 4, 4)), Array3::from_elem((4, 4, 4), [1.0, 0.0, 0.0]))?;
    let r = rotate_sample(&g, std::f64::consts::FRAC_PI_2, RotationAxis::Z)?;
    let ok = r.m().iter().all(|&v| v == [0.0, 1.0, 0.0]) && rotate_sample(&g, 0.0, RotationAxis::X)? == g;
    Ok((ok, "M=(1,0,0) turns to (0,1,0) under +90 deg about z; 0 deg is identity".into()))
}

fn registration() -> Result<(bool, String)> {
    let t = Array2::from_shape_fn((8, 8), |(i, l)| Complex64::new((i as f64).sin() + l as f64 * 0.2, (i * l) as f64 * 0.03));
    let flipped = conjugate_flip(&t).mapv(|v| v * Complex64::from_polar(1.0, 0.4));
    let s = register_and_score(&flipped, &t)?;
    Ok((s.nrmse < 1e-12, format!("flip + phase residual {:.2e}", s.nrmse)))
}

fn fbp_linearity() -> Result<(bool, String)> {
    let angles: Vec<f64> = (0..36).map(|k| std::f64::consts::PI * k as f64 / 36.0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let make = |rng: &mut ChaCha8Rng| -> Vec<Projection> {
        angles
            .iter()
            .map(|&a| Projection { angle: a, image: Array2::from_shape_fn((12, 2), |_| rng.random::<f64>()) })
            .collect()
    };
    let p = make(&mut rng);
    let q = make(&mut rng);
    let s: Vec<Projection> =
        p.iter().zip(&q).map(|(a, b)| Projection { angle: a.angle, image: &a.image + &b.image }).collect();
    let rp = tomo_fbp(&p, RotationAxis::Z, Filter::RamLak, 1.0)?;
    let rq = tomo_fbp(&q, RotationAxis::Z, Filter::RamLak, 1.0)?;
    let rs = tomo_fbp(&s, RotationAxis::Z, Filter::RamLak, 1.0)?;
    let worst = rp
        .values
        .iter()
        .zip(rq.values.iter())
        .zip(rs.values.iter())
        .map(|((a, b), c)| (a + b - c).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-10, format!("max |R(p)+R(q)-R(p+q)| = {worst:.2e}")))
}

/// Runs every check; individual failures are reported, not raised.
pub fn run_selftest() -> Vec<CheckResult> {
    let scene = small_scene();
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(CheckResult { name, pass, detail });
    };
    push("spinor_matrix_oracle", matrix_oracle());
    push("matrix_first_row", first_row());
    match &scene {
        Ok(s) => {
            push("fermion_sign", fermion_sign(s));
            push("mc_thread_independence", mc_threads(s));
        }
        Err(e) => push("scene", Err(crate::Error::Check(e.to_string()))),
    }
    push("quadrature_vs_closed_form", quadrature_vs_closed());
    push("solve_round_trip", solve_round_trip());
    push("ngi_round_trip", ngi_round_trip());
    push("rotation_exact", rotation_exact());
    push("registration_ambiguities", registration());
    push("fbp_linearity", fbp_linearity());
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
