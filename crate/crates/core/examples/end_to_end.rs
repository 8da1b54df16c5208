//! Noiseless pipeline with oracle phases: sample, closed-form maps,
//! magnitudes, inverse transform, component solve.

use std::path::Path;

use ngi::correlator::{correlation_closed_form, DeltaGrid, Statistics};
use ngi::reconstruct::{image_from_fourier, magnitude_from_correlation, nrmse, solve_components};
use ngi::scene::load_scene;
use ngi::spinor::{project_components, project_spinor, sample_function_at, Channel};

fn main() -> ngi::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/e2e_2d.json");
    let scene = load_scene(&path)?;
    let g = &scene.geometry;
    let grid = DeltaGrid::from_scene(&scene);
    let [nx, _, nz] = scene.sample.dims();
    let mut images = Vec::new();
    for ch in Channel::ALL {
        let map = correlation_closed_form(&scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let mag = magnitude_from_correlation(&map)?;
        mag.check_dft_grid()?;
        let vol = sample_function_at(&scene.sample, g.theta(), ch.position(), scene.beta())?;
        let truth = project_spinor(&vol).component(ch.spin()).clone();
        let img = image_from_fourier(&mag.with_oracle_phase(&truth), mag.sample_pitch, mag.transverse_dims, (nx, nz));
        println!("{}: S-image error {:.2e}", ch.name(), ngi::reconstruct::nrmse_complex(&img, &truth));
        images.push(img);
    }
    let images: [_; 5] = images.try_into().expect("five channels");
    let sol = solve_components(&images, g.theta(), scene.beta())?;
    let pc = project_components(&scene.sample);
    let truth = [&pc.m[0], &pc.m[1], &pc.m[2], &pc.a];
    for (c, name) in ngi::reconstruct::COMPONENT_NAMES.iter().enumerate() {
        println!("{name}: NRMSE {:.2e}", nrmse(sol.component(c), truth[c]));
    }
    Ok(())
}
