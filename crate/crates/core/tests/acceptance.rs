//! Acceptance harness: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3, Axis};
use ngi::correlator::{correlation_closed_form, correlation_quadrature, speckle_mc, DeltaGrid, Statistics};
use ngi::fourier::Fft2;
use ngi::io::{read_json, RunManifest};
use ngi::phantom::{binary_phantom, ellipse_projections, rasterize, shepp_logan};
use ngi::reconstruct::phase::fftshift;
use ngi::reconstruct::{
    image_from_fourier, magnitude_from_correlation, nrmse, phase_retrieve_array, register_and_score, rotate_sample,
    solve_components, tomo_fbp, Filter, PhaseParams, RotationAxis, SupportMask,
};
use ngi::scene::{load_scene, Position, SampleGrid, Scene};
use ngi::spinor::{
    forward_s_vector, kappa_hat, project_components, project_spinor, sample_function_at, spinor_components, Channel,
    Spin,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = ngi::Result<(bool, String)>;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn scene(name: &str) -> ngi::Result<Scene> {
    load_scene(&config(name))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let theta = rng.random_range(1e-3..std::f64::consts::FRAC_PI_2 - 1e-3);
        let beta = rng.random_range(0.1..2.0);
        let m = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = rng.random_range(-1.0..1.0);
        let s = forward_s_vector(m[0], m[1], m[2], a, theta, beta)?;
        for (k, ch) in Channel::ALL.iter().enumerate() {
            let (up, down) = spinor_components(a, m, kappa_hat(theta, ch.position())?, beta);
            let v = if ch.spin() == Spin::Up { up } else { down };
            worst = worst.max((v - s[k]).norm());
        }
    }
    let t = start.elapsed();
    Ok((worst < 1e-12 && t < Duration::from_secs(1), format!("max error {worst:.2e} over 1000 draws in {t:.2?}")))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let s = scene("canonical_1d.json")?;
    let grid = DeltaGrid::from_scene(&s);
    let mut parts = Vec::new();
    let mut ok = true;
    for ch in Channel::ALL.into_iter().filter(|c| s.positions.contains(&c.position())) {
        let q = correlation_quadrature(&s, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let c = correlation_closed_form(&s, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let e = nrmse(&q.values, &c.values);
        ok &= e < 0.02;
        parts.push(format!("{} {:.2}%", ch.name(), 100.0 * e));
    }
    let t = start.elapsed();
    ok &= t < Duration::from_secs(120);
    Ok((ok, format!("relative L2 over the half-band: {} ({t:.2?})", parts.join(", "))))
}

/// Criteria 3 and 4 share one Monte-Carlo ensemble.
fn criteria_3_4() -> ngi::Result<((bool, String), (bool, String))> {
    let start = Instant::now();
    let mut worst_exact = f64::NEG_INFINITY;
    for name in ["canonical_1d.json", "mc_small_1d.json"] {
        let s = scene(name)?;
        let grid = DeltaGrid::from_scene(&s);
        for ch in Channel::ALL.into_iter().filter(|c| s.positions.contains(&c.position())) {
            let q = correlation_quadrature(&s, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
            let c = correlation_closed_form(&s, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
            worst_exact = q.values.iter().chain(c.values.iter()).copied().fold(worst_exact, f64::max);
        }
    }
    let s = scene("mc_small_1d.json")?;
    let out = speckle_mc(&s, Spin::Up, Position::P1, 100_000, 2024, DeltaGrid::from_scene(&s))?;
    let se = out.fermion.stderr.as_ref().expect("stderr");
    let worst_mc = out.fermion.values.iter().zip(se.iter()).map(|(v, e)| v / e).fold(f64::NEG_INFINITY, f64::max);
    let t = start.elapsed();
    let c3 = (
        worst_exact <= 0.0 && worst_mc <= 3.0 && t < Duration::from_secs(300),
        format!("max exact map value {worst_exact:.2e}; MC max value/stderr {worst_mc:.1} (n = 1e5, {t:.2?})"),
    );
    let g = out.siegert;
    let c4 = (
        (g.value - 1.0).abs() <= 3.0 * g.stderr && g.stderr <= 0.01,
        format!("normalized correlation at zero offset {:.4} +- {:.4}", g.value, g.stderr),
    );
    Ok((c3, c4))
}

fn criterion_5() -> Outcome {
    let (n, theta, beta) = (64, 0.3, 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth = [(); 4].map(|_| Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)));
    let mut images = [(); 5].map(|_| Array2::<Complex64>::zeros((n, n)));
    for ((i, l), _) in truth[0].indexed_iter() {
        let s = forward_s_vector(truth[0][[i, l]], truth[1][[i, l]], truth[2][[i, l]], truth[3][[i, l]], theta, beta)?;
        for k in 0..5 {
            images[k][[i, l]] = s[k];
        }
    }
    let sol = solve_components(&images, theta, beta)?;
    let mut worst: f64 = 0.0;
    for c in 0..4 {
        for (a, b) in sol.component(c).iter().zip(truth[c].iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    let max_res = sol.residual.iter().copied().fold(0.0, f64::max);

    // Error against noise level over one decade, fitted by a straight line.
    let sigmas: Vec<f64> = (0..6).map(|k| 1e-4 * 10f64.powf(k as f64 / 5.0)).collect();
    let errs: Vec<f64> = sigmas
        .iter()
        .map(|&sigma| {
            let noisy = images.clone().map(|im| {
                im.mapv(|v| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    v + Complex64::new(re, im) * sigma
                })
            });
            let s = solve_components(&noisy, theta, beta).expect("solve");
            let sq: f64 = (0..4)
                .map(|c| s.component(c).iter().zip(truth[c].iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                .sum();
            (sq / (4 * n * n) as f64).sqrt()
        })
        .collect();
    let m = sigmas.len() as f64;
    let (mx, my) = (sigmas.iter().sum::<f64>() / m, errs.iter().sum::<f64>() / m);
    let sxy: f64 = sigmas.iter().zip(&errs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = sigmas.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = errs.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    Ok((
        worst < 1e-10 && max_res < 1e-12 && r2 > 0.95,
        format!("64x64 max error {worst:.2e}, max residual {max_res:.2e}; noise slope {:.3} with R^2 {r2:.5}", sxy / sxx),
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let phantom = binary_phantom(32);
    let mut truth = Array2::<Complex64>::zeros((64, 64));
    for ((i, l), v) in phantom.indexed_iter() {
        truth[[i, l]] = Complex64::new(*v, 0.0);
    }
    let mut f = truth.clone();
    Fft2::new(64, 64).forward(&mut f);
    let mag = fftshift(&f.mapv(|v| v.norm()));
    let support = SupportMask::rect((64, 64), (0, 0), (32, 32))?;
    let out = phase_retrieve_array(&mag, &support, &PhaseParams { seed: 6, ..Default::default() })?;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for r in &out.restarts {
        let e = register_and_score(&r.object, &truth)?.nrmse;
        worst = worst.max(e);
        if e < 0.05 {
            good += 1;
        }
    }
    let t = start.elapsed();
    Ok((
        good >= 6 && t < Duration::from_secs(60),
        format!("{good}/8 restarts below 0.05 NRMSE (worst {worst:.3}) in {t:.2?}"),
    ))
}

fn ngi_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["ngi"];
    argv.extend_from_slice(args);
    ngi::cli::main_with_args(argv)
}

fn criterion_7(tmp: &Path) -> Outcome {
    // Library pipeline.
    let s = scene("e2e_2d.json")?;
    let g = &s.geometry;
    let grid = DeltaGrid::from_scene(&s);
    let [nx, _, nz] = s.sample.dims();
    let mut images = Vec::new();
    for ch in Channel::ALL {
        let map = correlation_closed_form(&s, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let mag = magnitude_from_correlation(&map)?;
        mag.check_dft_grid()?;
        let vol = sample_function_at(&s.sample, g.theta(), ch.position(), s.beta())?;
        let truth = project_spinor(&vol).component(ch.spin()).clone();
        images.push(image_from_fourier(&mag.with_oracle_phase(&truth), mag.sample_pitch, mag.transverse_dims, (nx, nz)));
    }
    let sol = solve_components(&images.try_into().expect("five"), g.theta(), s.beta())?;
    let pc = project_components(&s.sample);
    let truth = [&pc.m[0], &pc.m[1], &pc.m[2], &pc.a];
    let lib = (0..4).map(|c| nrmse(sol.component(c), truth[c])).fold(0.0, f64::max);

    // The same through the command line, read back from the manifest.
    let sim = tmp.join("c7_sim");
    let rec = tmp.join("c7_rec");
    let cfg = config("e2e_2d.json");
    let rc1 = ngi_cli(&["simulate", "--config", cfg.to_str().unwrap(), "--method", "closed-form", "--out", sim.to_str().unwrap()]);
    let rc2 = ngi_cli(&["reconstruct", "--maps", sim.to_str().unwrap(), "--oracle-phase", "--out", rec.to_str().unwrap()]);
    let cli = if rc1 == 0 && rc2 == 0 {
        let m: RunManifest = read_json(&rec.join("manifest.json"))?;
        m.results["component_nrmse"]["max"].as_f64().unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    Ok((lib < 1e-8 && cli < 1e-8, format!("max component NRMSE: library {lib:.2e}, CLI manifest {cli:.2e}")))
}

fn criterion_8() -> Outcome {
    let n = 128;
    let el = shepp_logan();
    let angles: Vec<f64> = (0..180).map(|k| (k as f64).to_radians()).collect();
    let vol = tomo_fbp(&ellipse_projections(&el, n, 1, &angles), RotationAxis::Z, Filter::RamLak, 2.0 / n as f64)?;
    let rec = vol.values.index_axis(Axis(2), 0);
    let truth = rasterize(&el, n, 4);
    let (mut num, mut den) = (0.0, 0.0);
    for ((i, j), t) in truth.indexed_iter() {
        let p = [(2 * i + 1) as f64 / n as f64 - 1.0, (2 * j + 1) as f64 / n as f64 - 1.0];
        if el[0].contains(p) {
            num += (rec[[i, j]] - t).powi(2);
            den += t * t;
        }
    }
    let err = (num / den).sqrt();

    // Quarter turns of a vector field are exact.
    let g = SampleGrid::new(
        1.0,
        Array3::from_shape_fn((4, 4, 3), |(i, j, k)| (1 + i * 12 + j * 3 + k) as f64),
        Array3::from_elem((4, 4, 3), [1.0, 0.0, 0.0]),
    )?;
    let quarter = rotate_sample(&g, std::f64::consts::FRAC_PI_2, RotationAxis::Z)?;
    let vec_ok = quarter.m().iter().all(|m| *m == [0.0, 1.0, 0.0]);
    let gx = SampleGrid::new(1.0, Array3::from_elem((3, 3, 3), 1.0), Array3::from_elem((3, 3, 3), [0.0, 1.0, 0.0]))?;
    let vec_x = rotate_sample(&gx, std::f64::consts::FRAC_PI_2, RotationAxis::X)?.m()[[1, 1, 1]] == [0.0, 0.0, 1.0];
    let cube = SampleGrid::new(
        1.0,
        Array3::from_shape_fn((5, 5, 3), |(i, j, k)| (i * 15 + j * 3 + k) as f64),
        Array3::from_shape_fn((5, 5, 3), |(i, j, _)| [i as f64, j as f64, 0.5]),
    )?;
    let twice = rotate_sample(&rotate_sample(&cube, std::f64::consts::FRAC_PI_2, RotationAxis::Z)?, std::f64::consts::FRAC_PI_2, RotationAxis::Z)?;
    let once = rotate_sample(&cube, std::f64::consts::PI, RotationAxis::Z)?;
    let compose = twice == once;
    let identity = rotate_sample(&cube, 0.0, RotationAxis::X)? == cube;
    Ok((
        err < 0.10 && vec_ok && vec_x && compose && identity,
        format!(
            "Shepp-Logan 128x128 ram-lak NRMSE {err:.4}; 90 deg vector rotation exact: z {vec_ok}, x {vec_x}; 90+90 == 180 {compose}; 0 deg identity {identity}"
        ),
    ))
}

fn digests(dir: &Path) -> ngi::Result<Vec<ngi::io::FileDigest>> {
    Ok(read_json::<RunManifest>(&dir.join("manifest.json"))?.outputs)
}

fn criterion_9(tmp: &Path) -> Outcome {
    let canonical = config("canonical_1d.json");
    let small = config("mc_small_1d.json");
    let e2e = config("e2e_2d.json");
    let (canonical, small, e2e) = (canonical.to_str().unwrap(), small.to_str().unwrap(), e2e.to_str().unwrap());
    let mut report = Vec::new();
    let mut ok = true;
    for threads in ["1", "3"] {
        let d = |name: &str| tmp.join(format!("c9_{name}_{threads}")).to_string_lossy().into_owned();
        let mut rc = vec![
            ngi_cli(&["simulate", "--config", canonical, "--out", &d("sim"), "--threads", threads]),
            ngi_cli(&["mc", "--config", small, "--n", "2000", "--seed", "9", "--out", &d("mc"), "--threads", threads]),
            ngi_cli(&["simulate", "--config", e2e, "--method", "closed-form", "--out", &d("e2e"), "--threads", threads]),
        ];
        rc.push(ngi_cli(&[
            "reconstruct", "--maps", &d("e2e"), "--seed", "4", "--restarts", "3", "--iterations", "300", "--out", &d("rec"),
            "--threads", threads,
        ]));
        rc.push(ngi_cli(&["solve", "--images", &format!("{}/truth", d("e2e")), "--out", &d("solve"), "--threads", threads]));
        let mut inputs = Vec::new();
        for k in 0..4 {
            let out = d(&format!("rot{k}"));
            rc.push(ngi_cli(&[
                "simulate", "--config", e2e, "--method", "closed-form", "--rotation", &format!("z:{}", 45 * k), "--out", &out,
                "--threads", threads,
            ]));
            inputs.push(format!("{out}/truth"));
        }
        let mut args = vec!["tomo", "--axis", "z", "--out"];
        let tomo_out = d("tomo");
        args.push(&tomo_out);
        args.push("--threads");
        args.push(threads);
        args.push("--inputs");
        args.extend(inputs.iter().map(|s| s.as_str()));
        rc.push(ngi_cli(&args));
        if rc.iter().any(|&c| c != 0) {
            return Ok((false, format!("CLI exit codes {rc:?} with {threads} threads")));
        }
    }
    for stage in ["sim", "mc", "e2e", "rec", "solve", "rot0", "tomo"] {
        let a = digests(&tmp.join(format!("c9_{stage}_1")))?;
        let b = digests(&tmp.join(format!("c9_{stage}_3")))?;
        let same = !a.is_empty() && a == b;
        ok &= same;
        report.push(format!("{stage} {}", if same { "identical" } else { "DIFFER" }));
    }
    Ok((ok, format!("output digests on 1 vs 3 threads: {}", report.join(", "))))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut all = true;
    let mut line = |n: &str, r: Outcome| {
        let (pass, detail) = r.unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= pass;
        println!("criterion {n}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    };
    line("1", criterion_1());
    line("2", criterion_2());
    match criteria_3_4() {
        Ok((c3, c4)) => {
            line("3", Ok(c3));
            line("4", Ok(c4));
        }
        Err(e) => {
            let msg = e.to_string();
            line("3", Err(ngi::Error::Check(msg.clone())));
            line("4", Err(ngi::Error::Check(msg)));
        }
    }
    line("5", criterion_5());
    line("6", criterion_6());
    line("7", criterion_7(tmp.path()));
    line("8", criterion_8());
    line("9", criterion_9(tmp.path()));
    if !all {
        std::process::exit(1);
    }
}
