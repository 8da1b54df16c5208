//! Monte-Carlo speckle ensemble: the bosonic Siegert relation at zero offset
//! and the sign of the fermionic map.

use std::path::Path;

use ngi::correlator::{speckle_mc, DeltaGrid};
use ngi::scene::{load_scene, Position};
use ngi::spinor::Spin;

fn main() -> ngi::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/mc_small_1d.json");
    let scene = load_scene(&path)?;
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let t = std::time::Instant::now();
    let out = speckle_mc(&scene, Spin::Up, Position::P1, n, 7, DeltaGrid::from_scene(&scene))?;
    let se = out.fermion.stderr.as_ref().expect("Monte-Carlo maps carry errors");
    let worst = out.fermion.values.iter().zip(se.iter()).map(|(v, s)| v / s).fold(f64::NEG_INFINITY, f64::max);
    println!("{n} realizations in {:?}", t.elapsed());
    println!("Siegert |gamma|^2 at zero offset: {:.4} +- {:.4}", out.siegert.value, out.siegert.stderr);
    println!("fermion map: max value / stderr = {worst:.1}");
    Ok(())
}
