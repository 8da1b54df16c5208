//! Intensity-fluctuation correlation maps `⟨ΔI_r ΔI_t⟩` over the reference
//! scan, computed three ways: exact source quadrature, the closed Fourier
//! form, and a Monte-Carlo speckle ensemble.
//!
//! Maps are indexed `(Δξ_x, Δξ_z)` with `Δξ = ξ_r - ξ_t` on the centered grid
//! `(j - n/2) * pitch`. The target detector sits at the fixed offset of its
//! position; only the reference detector scans.

mod closed_form;
mod mc;
mod quadrature;

pub use closed_form::{check_band, correlation_closed_form, correlation_closed_form_image, fourier_image, q_axis};
pub use mc::{speckle_mc, McOutput, Siegert, MIN_REALIZATIONS};
pub use quadrature::correlation_quadrature;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ngi::{self, NgiArray};
use crate::scene::{centered_offsets, Position, Scene};
use crate::spinor::{Channel, Spin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Fermion,
    Boson,
}

impl Statistics {
    /// `-1` for antibunching, `+1` for bunching.
    pub fn sign(self) -> f64 {
        match self {
            Statistics::Fermion => -1.0,
            Statistics::Boson => 1.0,
        }
    }
}

impl fmt::Display for Statistics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistics::Fermion => "fermion",
            Statistics::Boson => "boson",
        })
    }
}

impl FromStr for Statistics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fermion" => Ok(Statistics::Fermion),
            "boson" => Ok(Statistics::Boson),
            _ => Err(Error::Usage(format!("unknown statistics {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Quadrature => "quadrature",
            Provenance::ClosedForm => "closed_form",
            Provenance::MonteCarlo => "monte_carlo",
        })
    }
}

/// `Δξ` sample grid: `n = [nx, nz]` points per axis at `pitch`, centered so
/// that index `n/2` is zero. One-transverse-dimension maps have `nz = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrid {
    pub pitch: f64,
    pub n: [usize; 2],
}

impl DeltaGrid {
    /// The reference scan of the scene's detector.
    pub fn from_scene(scene: &Scene) -> DeltaGrid {
        let n = scene.detector.n_pixels();
        let nz = if scene.dims() == 2 { n } else { 1 };
        DeltaGrid { pitch: scene.detector.pitch(), n: [n, nz] }
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        centered_offsets(self.n[axis], self.pitch)
    }

    /// Index of `Δξ = 0`.
    pub fn zero_index(&self) -> (usize, usize) {
        (self.n[0] / 2, self.n[1] / 2)
    }
}

/// Everything needed to interpret or invert a map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub statistics: Statistics,
    pub provenance: Provenance,
    pub spin: Spin,
    pub position: Position,
    pub theta: f64,
    pub lambda: f64,
    pub d2: f64,
    pub xi_t: [f64; 2],
    pub grid: DeltaGrid,
    /// Pitch of the projected sample image the map encodes.
    pub sample_pitch: f64,
    pub transverse_dims: usize,
    pub chi: f64,
    pub transverse_factor: f64,
    /// `chi * transverse_factor`: the map equals `sign * prefactor * |F[P S]|^2`.
    pub prefactor: f64,
    /// Riemann-sum measure `a^D` included in `F`.
    pub fourier_measure: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_realizations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MapMeta {
    pub fn channel(&self) -> Option<Channel> {
        Channel::from_parts(self.position, self.spin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMap {
    pub values: Array2<f64>,
    pub stderr: Option<Array2<f64>>,
    pub meta: MapMeta,
}

impl CorrelationMap {
    /// Base file name `<channel>_<provenance>_<statistics>`.
    pub fn stem(&self) -> String {
        let ch = self
            .meta
            .channel()
            .map(|c| c.name().to_string())
            .unwrap_or_else(|| format!("S{}_{}", &self.meta.position.label()[1..], self.meta.spin));
        format!("{ch}_{}_{}", self.meta.provenance, self.meta.statistics)
    }

    /// Writes `<stem>.ngi`, `<stem>.json` and, for Monte-Carlo maps,
    /// `<stem>.stderr.ngi`. Returns the written paths.
    pub fn save(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let stem = self.stem();
        let mut out = Vec::new();
        let p = dir.join(format!("{stem}.ngi"));
        ngi::write(&p, &NgiArray::Real(self.values.clone().into_dyn()))?;
        out.push(p);
        if let Some(se) = &self.stderr {
            let p = dir.join(format!("{stem}.stderr.ngi"));
            ngi::write(&p, &NgiArray::Real(se.clone().into_dyn()))?;
            out.push(p);
        }
        let p = dir.join(format!("{stem}.json"));
        crate::io::write_json(&p, &self.meta)?;
        out.push(p);
        Ok(out)
    }

    /// Reads a map from `<stem>.ngi` and its `<stem>.json` sidecar.
    pub fn load(ngi_path: &Path) -> Result<CorrelationMap> {
        let values = ngi::read(ngi_path)?
            .into_real()?
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|e| Error::Format(format!("{}: {e}", ngi_path.display())))?;
        let side = ngi_path.with_extension("json");
        let meta: MapMeta = crate::io::read_json(&side)?;
        if values.dim() != (meta.grid.n[0], meta.grid.n[1]) {
            return Err(Error::Format(format!("{}: shape does not match sidecar grid", ngi_path.display())));
        }
        let se_path = ngi_path.with_extension("stderr.ngi");
        let stderr = if se_path.exists() {
            Some(
                ngi::read(&se_path)?
                    .into_real()?
                    .into_dimensionality::<ndarray::Ix2>()
                    .map_err(|e| Error::Format(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(CorrelationMap { values, stderr, meta })
    }
}

/// Metadata common to all three paths.
pub(crate) fn base_meta(
    scene: &Scene,
    spin: Spin,
    position: Position,
    statistics: Statistics,
    provenance: Provenance,
    grid: DeltaGrid,
) -> MapMeta {
    let g = &scene.geometry;
    let chi = crate::scene::chi(scene);
    let tf = crate::scene::transverse_factor(scene);
    let a = scene.sample.pitch();
    MapMeta {
        statistics,
        provenance,
        spin,
        position,
        theta: g.theta(),
        lambda: g.lambda(),
        d2: g.d2(),
        xi_t: position.detector_offset(g.theta(), g.d2()),
        grid,
        sample_pitch: a,
        transverse_dims: scene.dims(),
        chi,
        transverse_factor: tf,
        prefactor: chi * tf,
        fourier_measure: a.powi(scene.dims() as i32),
        seed: None,
        n_realizations: None,
        note: None,
    }
}

/// Source points per transverse axis; the `z` axis is `[0]` in 1D mode.
pub(crate) fn source_axes(scene: &Scene) -> [Vec<f64>; 2] {
    let x = scene.source.axis_points(0);
    let z = if scene.dims() == 2 { scene.source.axis_points(1) } else { vec![0.0] };
    [x, z]
}

/// Relative source intensity on the `(x, z)` source grid.
pub(crate) fn source_weights(scene: &Scene) -> Array2<f64> {
    let w = scene.source.axis_weights();
    let wz = if scene.dims() == 2 { w.clone() } else { vec![1.0] };
    Array2::from_shape_fn((w.len(), wz.len()), |(i, l)| w[i] * wz[l])
}
