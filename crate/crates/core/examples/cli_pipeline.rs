//! The `ngi` command line driven in-process: simulate closed-form maps,
//! reconstruct with oracle phases, and compare output digests of runs with
//! different thread counts.

use std::path::Path;

use ngi::io::{read_json, RunManifest};

fn ngi(args: &[&str]) -> i32 {
    let mut argv = vec!["ngi"];
    argv.extend_from_slice(args);
    ngi::cli::main_with_args(argv)
}

fn main() -> ngi::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/e2e_2d.json");
    let config = config.to_str().expect("utf-8 path");
    let tmp = tempfile::tempdir()?;
    let dir = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();

    let sim = dir("sim");
    assert_eq!(ngi(&["simulate", "--config", config, "--method", "closed-form", "--out", &sim]), 0);
    let rec = dir("rec");
    assert_eq!(ngi(&["reconstruct", "--maps", &sim, "--oracle-phase", "--out", &rec]), 0);
    let m: RunManifest = read_json(&Path::new(&rec).join("manifest.json"))?;
    println!("reconstruct wrote {} files; component NRMSE {}", m.outputs.len(), m.results["component_nrmse"]);

    let rec1 = dir("rec1");
    let rec4 = dir("rec4");
    for (out, threads) in [(&rec1, "1"), (&rec4, "4")] {
        assert_eq!(ngi(&["reconstruct", "--maps", &sim, "--out", out, "--seed", "3", "--restarts", "4", "--threads", threads]), 0);
    }
    let a: RunManifest = read_json(&Path::new(&rec1).join("manifest.json"))?;
    let b: RunManifest = read_json(&Path::new(&rec4).join("manifest.json"))?;
    println!("phase-retrieval runs on 1 and 4 threads: identical digests = {}", a.outputs == b.outputs);
    println!("retrieval ambiguities: {}", a.results["ambiguities"]);
    Ok(())
}
