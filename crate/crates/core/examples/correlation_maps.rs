//! Fermion correlation maps of the canonical 1D scene from the exact source
//! quadrature and from the closed Fourier form.

use std::path::Path;

use ngi::correlator::{correlation_closed_form, correlation_quadrature, DeltaGrid, Statistics};
use ngi::reconstruct::nrmse;
use ngi::scene::load_scene;
use ngi::spinor::Channel;

fn main() -> ngi::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/canonical_1d.json");
    let scene = load_scene(&path)?;
    let grid = DeltaGrid::from_scene(&scene);
    for ch in Channel::ALL.into_iter().filter(|c| scene.positions.contains(&c.position())) {
        let t = std::time::Instant::now();
        let q = correlation_quadrature(&scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let tq = t.elapsed();
        let c = correlation_closed_form(&scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?;
        let max = q.values.iter().chain(c.values.iter()).copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{}: relative L2 {:.3e}, max value {max:.2e} (quadrature took {tq:?})",
            ch.name(),
            nrmse(&q.values, &c.values)
        );
        let zero = grid.zero_index();
        println!("  at zero offset: quadrature {:.6e}, closed form {:.6e}", q.values[[zero.0, 0]], c.values[[zero.0, 0]]);
    }
    Ok(())
}
