//! Sampling diagnostics of the shipped scene configurations.

use std::path::Path;

use ngi::scene::{load_scene, validate_sampling, Method};

fn main() -> ngi::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["canonical_1d.json", "mc_small_1d.json", "e2e_2d.json"] {
        let scene = load_scene(&dir.join(name))?;
        let report = validate_sampling(&scene);
        println!("{name}");
        for c in &report.checks {
            println!("  {:<22} pitch {:>10.4} bound {:>10.4} {:<4} required by {:?}", c.name, c.pitch, c.bound, if c.pass { "ok" } else { "FAIL" }, c.required_by);
        }
        for m in [Method::Quadrature, Method::ClosedForm, Method::MonteCarlo] {
            println!("  {m:?}: {}", if report.passes_for(m) { "usable" } else { "aliased" });
        }
    }
    Ok(())
}
