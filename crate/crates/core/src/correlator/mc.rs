//! Speckle ensemble.
//!
//! Each realization draws an independent circular complex Gaussian source
//! field with `⟨|φ(η)|²⟩ = w(η) I0 / Δη^D`, propagates it to the reference scan
//! and through the sample arm, and records the fluxes `I = v |ψ|²`.
//!
//! Classical fields only realize the bunching (boson) branch. The fermion map
//! is the same exchange-term estimate with the antibunching sign applied, so
//! the two maps are exact negatives of each other.

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{base_meta, source_axes, source_weights, CorrelationMap, DeltaGrid, Provenance, Statistics};
use crate::error::{Error, Result};
use crate::propagation::{FresnelPropagator, PlaneGrid, TargetArm};
use crate::scene::{validate_sampling_for, Method, Position, Scene};
use crate::spinor::{sample_function_at, Spin};

/// Smallest ensemble for which a standard error is reported.
pub const MIN_REALIZATIONS: usize = 32;

/// Upper bound on jackknife groups.
const MAX_GROUPS: usize = 100;

/// Normalized correlation `cov / (⟨I_r⟩⟨I_t⟩)` at `Δξ = 0`. For a fully
/// speckled field it equals `|γ|²`, the squared degree of coherence between
/// the two detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Siegert {
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone)]
pub struct McOutput {
    pub boson: CorrelationMap,
    pub fermion: CorrelationMap,
    pub siegert: Siegert,
    pub mean_reference: Array2<f64>,
    pub mean_target: f64,
}

/// Per-group sums of `I_r`, `I_t` and `I_r I_t`.
struct GroupSums {
    count: usize,
    r: Array2<f64>,
    t: f64,
    rt: Array2<f64>,
}

fn covariance(n: f64, r: &Array2<f64>, t: f64, rt: &Array2<f64>) -> Array2<f64> {
    let mt = t / n;
    Zip::from(rt).and(r).map_collect(|&rt, &r| rt / n - (r / n) * mt)
}

/// Fills `out` with one source realization.
fn draw_source(rng: &mut ChaCha8Rng, sigma: &Array2<f64>, out: &mut Array2<Complex64>) {
    for (v, &s) in out.iter_mut().zip(sigma.iter()) {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v = Complex64::new(re * s, im * s);
    }
}

/// Monte-Carlo estimate of the boson and fermion maps from one ensemble.
///
/// Realization `r` uses stream `r` of a ChaCha8 generator keyed by `seed`,
/// and realizations are summed in fixed contiguous groups reduced in index
/// order, so results do not depend on the number of worker threads.
/// Standard errors come from a grouped jackknife.
pub fn speckle_mc(
    scene: &Scene,
    spin: Spin,
    position: Position,
    n_realizations: usize,
    seed: u64,
    grid: DeltaGrid,
) -> Result<McOutput> {
    if n_realizations < MIN_REALIZATIONS {
        return Err(Error::Statistics(format!(
            "n_realizations too small ({n_realizations} < {MIN_REALIZATIONS})"
        )));
    }
    validate_sampling_for(scene, &[position]).require(Method::MonteCarlo)?;
    let g = &scene.geometry;
    let dims = scene.dims();
    let volume = sample_function_at(&scene.sample, g.theta(), position, scene.beta())?;
    let arm = TargetArm::new(scene, &volume, spin)?;
    let xi_t = position.detector_offset(g.theta(), g.d2());

    let [ex, ez] = source_axes(scene);
    let spitch = scene.source.pitch();
    let src = PlaneGrid { origin: [ex[0], ez[0]], pitch: spitch, n: [ex.len(), ez.len()] };
    let dx = grid.axis(0);
    let dz = grid.axis(1);
    // In 1D mode a z offset of the detector only multiplies the reference
    // field by a constant phase, which drops out of the intensity.
    let z0 = if dims == 1 { 0.0 } else { xi_t[1] + dz[0] };
    let target = PlaneGrid { origin: [xi_t[0] + dx[0], z0], pitch: grid.pitch, n: grid.n };
    let prop = FresnelPropagator::new(src, target, g.d_r(), g.lambda())?;

    let etas: Vec<[f64; 2]> = ex.iter().flat_map(|&x| ez.iter().map(move |&z| [x, z])).collect();
    let ht = Array1::from(arm.row(xi_t, &etas)?);
    let deta = spitch.powi(dims as i32);
    let sigma = source_weights(scene).mapv(|w| (w * g.i0() / deta / 2.0).sqrt());
    let v = scene.velocity();

    let n_groups = n_realizations.min(MAX_GROUPS);
    let bounds: Vec<(usize, usize)> = (0..n_groups)
        .map(|k| (k * n_realizations / n_groups, (k + 1) * n_realizations / n_groups))
        .collect();
    let groups: Vec<GroupSums> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut sums = GroupSums { count: hi - lo, r: Array2::zeros(grid_dim(&grid)), t: 0.0, rt: Array2::zeros(grid_dim(&grid)) };
            let mut phi = Array2::zeros((src.n[0], src.n[1]));
            for r in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                draw_source(&mut rng, &sigma, &mut phi);
                let psi_r = prop.apply(&phi);
                let psi_t: Complex64 = ht.iter().zip(phi.iter()).map(|(h, p)| h * p).sum::<Complex64>() * deta;
                let it = v * psi_t.norm_sqr();
                sums.t += it;
                Zip::from(&mut sums.r).and(&mut sums.rt).and(&psi_r).for_each(|sr, srt, p| {
                    let ir = v * p.norm_sqr();
                    *sr += ir;
                    *srt += ir * it;
                });
            }
            sums
        })
        .collect();

    let dim = grid_dim(&grid);
    let mut tot_r = Array2::zeros(dim);
    let mut tot_rt = Array2::zeros(dim);
    let mut tot_t = 0.0;
    for gs in &groups {
        tot_r += &gs.r;
        tot_rt += &gs.rt;
        tot_t += gs.t;
    }
    let n = n_realizations as f64;
    let cov = covariance(n, &tot_r, tot_t, &tot_rt);
    let (i0, l0) = grid.zero_index();
    let ratio = |cov: &Array2<f64>, r: &Array2<f64>, t: f64, n: f64| cov[[i0, l0]] / ((r[[i0, l0]] / n) * (t / n));
    let siegert_full = ratio(&cov, &tot_r, tot_t, n);

    // Leave-one-group-out replicates.
    let gf = n_groups as f64;
    let mut reps = Vec::with_capacity(n_groups);
    let mut sieg = Vec::with_capacity(n_groups);
    for gs in &groups {
        let m = n - gs.count as f64;
        let r = &tot_r - &gs.r;
        let rt = &tot_rt - &gs.rt;
        let t = tot_t - gs.t;
        let c = covariance(m, &r, t, &rt);
        sieg.push(ratio(&c, &r, t, m));
        reps.push(c);
    }
    let mut mean_rep = Array2::zeros(dim);
    for c in &reps {
        mean_rep += c;
    }
    mean_rep /= gf;
    let mut var = Array2::<f64>::zeros(dim);
    for c in &reps {
        Zip::from(&mut var).and(c).and(&mean_rep).for_each(|v, &c, &m| *v += (c - m).powi(2));
    }
    let stderr = var.mapv(|v| ((gf - 1.0) / gf * v).sqrt());
    let sieg_mean = sieg.iter().sum::<f64>() / gf;
    let sieg_se = ((gf - 1.0) / gf * sieg.iter().map(|s| (s - sieg_mean).powi(2)).sum::<f64>()).sqrt();

    let mut meta = base_meta(scene, spin, position, Statistics::Boson, Provenance::MonteCarlo, grid);
    meta.seed = Some(seed);
    meta.n_realizations = Some(n_realizations);
    meta.note = Some("boson: Gaussian-field exchange-term estimate".into());
    let boson = CorrelationMap { values: cov.clone(), stderr: Some(stderr.clone()), meta: meta.clone() };
    meta.statistics = Statistics::Fermion;
    meta.note = Some("fermion: negated Gaussian-field exchange-term estimate (antibunching sign applied analytically)".into());
    let fermion = CorrelationMap { values: cov.mapv(|c| -c), stderr: Some(stderr), meta };
    Ok(McOutput {
        boson,
        fermion,
        siegert: Siegert { value: siegert_full, stderr: sieg_se },
        mean_reference: tot_r / n,
        mean_target: tot_t / n,
    })
}

fn grid_dim(grid: &DeltaGrid) -> (usize, usize) {
    (grid.n[0], grid.n[1])
}
