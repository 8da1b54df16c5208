//! Experiment geometry, sample voxel model, physical constants and the
//! discretization checks that must pass before any heavy computation.
//!
//! Coordinates: the source plane is `y = 0`, the sample center `r_c` sits at
//! `(0, d1, 0)` and both detector planes are at `y = d1 + d2`. Transverse
//! coordinates are `(x, z)`; in one-dimensional transverse mode only `x` is
//! sampled and every `z` offset is zero.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::ngi::{self, NgiArray};
use crate::reconstruct::{rotate_sample, SampleRotation};

pub type Vec3 = [f64; 3];

/// Default far-field ratio: sample extent must not exceed this fraction of
/// `min(d1, d2)`.
pub const FAR_FIELD_RATIO: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    Physical,
    Normalized,
}

/// Transverse dimensionality of the source, detector and projected images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transverse {
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "2d")]
    TwoD,
}

impl Transverse {
    pub fn dims(self) -> usize {
        match self {
            Transverse::OneD => 1,
            Transverse::TwoD => 2,
        }
    }
}

/// Target detector placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Position {
    P1,
    P2,
    P3,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::P1, Position::P2, Position::P3];

    /// Unit transverse direction `(x, z)` of the detector offset.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Position::P1 => [1.0, 0.0],
            Position::P2 => [-1.0, 0.0],
            Position::P3 => [0.0, 1.0],
        }
    }

    /// Transverse `(x, z)` offset `d2 sin(theta)` along [`Position::direction`].
    pub fn detector_offset(self, theta: f64, d2: f64) -> [f64; 2] {
        let xi = d2 * theta.sin();
        let [ux, uz] = self.direction();
        [ux * xi, uz * xi]
    }

    pub fn label(self) -> &'static str {
        match self {
            Position::P1 => "P1",
            Position::P2 => "P2",
            Position::P3 => "P3",
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "P1" | "p1" | "1" => Ok(Position::P1),
            "P2" | "p2" | "2" => Ok(Position::P2),
            "P3" | "p3" | "3" => Ok(Position::P3),
            other => Err(Error::Config(format!("unknown detector position label {other:?}"))),
        }
    }
}

/// Full 3D detector position for a label; the detector plane sits at
/// `y = d1 + d2`.
pub fn detector_position(label: Position, theta: f64, d1: f64, d2: f64) -> Vec3 {
    let [x, z] = label.detector_offset(theta, d2);
    [x, d1 + d2, z]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    m_n: f64,
    hbar: f64,
    r_e: f64,
    gamma: f64,
    mu_b: f64,
}

impl PhysicalConstants {
    pub fn new(m_n: f64, hbar: f64, r_e: f64, gamma: f64, mu_b: f64) -> Result<Self> {
        for (name, v) in [("m_n", m_n), ("hbar", hbar), ("r_e", r_e), ("gamma", gamma), ("mu_B", mu_b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("constant {name} must be finite and > 0 (got {v})")));
            }
        }
        Ok(PhysicalConstants { m_n, hbar, r_e, gamma, mu_b })
    }

    /// SI values (CODATA 2018).
    pub fn si() -> Self {
        PhysicalConstants {
            m_n: 1.674_927_500_56e-27,
            hbar: 1.054_571_817e-34,
            r_e: 2.817_940_326_2e-15,
            gamma: 1.913,
            mu_b: 9.274_010_078_3e-24,
        }
    }

    /// `hbar = m_n = 1`; `r_e = mu_B = 1` so that `beta = gamma / 2`.
    pub fn normalized() -> Self {
        PhysicalConstants { m_n: 1.0, hbar: 1.0, r_e: 1.0, gamma: 1.913, mu_b: 1.0 }
    }

    pub fn m_n(&self) -> f64 {
        self.m_n
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn r_e(&self) -> f64 {
        self.r_e
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }

    /// Magnetic coupling `gamma * r_e / (2 mu_B)`, recomputed on every call.
    pub fn beta(&self) -> f64 {
        self.gamma * self.r_e / (2.0 * self.mu_b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    lambda: f64,
    d1: f64,
    d2: f64,
    theta: f64,
    i0: f64,
    transverse: Transverse,
}

impl Geometry {
    pub fn new(lambda: f64, d1: f64, d2: f64, theta: f64, i0: f64, transverse: Transverse) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("d1", d1), ("d2", d2), ("I0", i0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0 (got {v})")));
            }
        }
        if !(theta > 0.0 && theta < PI / 2.0) {
            return Err(Error::Config(format!("theta must be in (0, π/2) (got {theta})")));
        }
        Ok(Geometry { lambda, d1, d2, theta, i0, transverse })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn k(&self) -> f64 {
        2.0 * PI / self.lambda
    }
    pub fn d1(&self) -> f64 {
        self.d1
    }
    pub fn d2(&self) -> f64 {
        self.d2
    }
    /// Reference-arm distance, fixed to `d1 + d2`.
    pub fn d_r(&self) -> f64 {
        self.d1 + self.d2
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn i0(&self) -> f64 {
        self.i0
    }
    pub fn transverse(&self) -> Transverse {
        self.transverse
    }
    pub fn sample_center(&self) -> Vec3 {
        [0.0, self.d1, 0.0]
    }
    pub fn detector_position(&self, label: Position) -> Vec3 {
        detector_position(label, self.theta, self.d1, self.d2)
    }
}

/// Uniform 1D grid of `n` cell centers spanning `extent`, centered on `center`.
fn cell_centers(center: f64, extent: f64, n: usize) -> Vec<f64> {
    let pitch = extent / n as f64;
    (0..n).map(|j| center + (j as f64 - (n as f64 - 1.0) / 2.0) * pitch).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    extent: f64,
    n_points: usize,
    center: [f64; 2],
    taper: f64,
}

impl SourceSpec {
    pub fn new(extent: f64, n_points: usize, center: [f64; 2]) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!("source extent must be > 0 (got {extent})")));
        }
        if n_points < 2 {
            return Err(Error::Config(format!("source n_points must be >= 2 (got {n_points})")));
        }
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("source center must be finite".into()));
        }
        Ok(SourceSpec { extent, n_points, center, taper: 0.0 })
    }

    /// Cosine roll-off of the aperture intensity over the outer `taper`
    /// fraction of the extent on each side, `0 <= taper <= 0.5`.
    pub fn with_taper(mut self, taper: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&taper) {
            return Err(Error::Config(format!("source taper must be in [0, 0.5] (got {taper})")));
        }
        self.taper = taper;
        Ok(self)
    }

    pub fn taper(&self) -> f64 {
        self.taper
    }

    /// Relative intensity `w(η)` at each point of [`SourceSpec::axis_points`].
    pub fn axis_weights(&self) -> Vec<f64> {
        let n = self.n_points as f64;
        (0..self.n_points)
            .map(|j| {
                let u = (j as f64 + 0.5) / n;
                let edge = u.min(1.0 - u);
                if self.taper > 0.0 && edge < self.taper {
                    0.5 * (1.0 - (PI * edge / self.taper).cos())
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn n_points(&self) -> usize {
        self.n_points
    }
    pub fn pitch(&self) -> f64 {
        self.extent / self.n_points as f64
    }
    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    /// Source sample coordinates along transverse axis `axis` (0 = x, 1 = z).
    pub fn axis_points(&self, axis: usize) -> Vec<f64> {
        cell_centers(self.center[axis], self.extent, self.n_points)
    }

    /// All source points as `(x, z)`, row-major over `(x, z)` in 2D mode.
    pub fn points(&self, transverse: Transverse) -> Vec<[f64; 2]> {
        let xs = self.axis_points(0);
        match transverse {
            Transverse::OneD => xs.into_iter().map(|x| [x, 0.0]).collect(),
            Transverse::TwoD => {
                let zs = self.axis_points(1);
                xs.iter().flat_map(|&x| zs.iter().map(move |&z| [x, z])).collect()
            }
        }
    }
}

/// Reference-detector scan. Offsets are `Δξ_j = (j - n/2) * pitch`, so
/// `Δξ = 0` is always on the grid (FFT-centered ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    extent: f64,
    n_pixels: usize,
}

impl DetectorSpec {
    pub fn new(extent: f64, n_pixels: usize) -> Result<Self> {
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!("detector extent must be > 0 (got {extent})")));
        }
        if n_pixels == 0 {
            return Err(Error::Config("detector n_pixels must be >= 1".into()));
        }
        Ok(DetectorSpec { extent, n_pixels })
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }
    pub fn pitch(&self) -> f64 {
        self.extent / self.n_pixels as f64
    }
    pub fn offsets(&self) -> Vec<f64> {
        centered_offsets(self.n_pixels, self.pitch())
    }
}

/// `(j - n/2) * pitch` for `j` in `0..n`.
pub fn centered_offsets(n: usize, pitch: f64) -> Vec<f64> {
    let half = (n / 2) as f64;
    (0..n).map(|j| (j as f64 - half) * pitch).collect()
}

/// Voxelized nuclear scattering-length density `A` and magnetization density
/// `M`, indexed `(x, y, z)`, centered on the sample center.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pitch: f64,
    a: Array3<f64>,
    m: Array3<Vec3>,
}

impl SampleGrid {
    pub fn new(pitch: f64, a: Array3<f64>, m: Array3<Vec3>) -> Result<Self> {
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::Config(format!("sample pitch must be > 0 (got {pitch})")));
        }
        if a.dim() != m.dim() {
            return Err(Error::Config(format!("A dims {:?} != M dims {:?}", a.dim(), m.dim())));
        }
        if a.iter().any(|v| !v.is_finite()) || m.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Config("sample values must be finite".into()));
        }
        let (nx, ny, nz) = a.dim();
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Config("sample dims must be nonzero".into()));
        }
        Ok(SampleGrid { pitch, a, m })
    }

    /// Empty sample with all densities zero.
    pub fn zeros(dims: [usize; 3], pitch: f64) -> Result<Self> {
        let d = (dims[0], dims[1], dims[2]);
        SampleGrid::new(pitch, Array3::zeros(d), Array3::from_elem(d, [0.0; 3]))
    }

    pub fn dims(&self) -> [usize; 3] {
        let (nx, ny, nz) = self.a.dim();
        [nx, ny, nz]
    }
    pub fn pitch(&self) -> f64 {
        self.pitch
    }
    pub fn a(&self) -> &Array3<f64> {
        &self.a
    }
    pub fn m(&self) -> &Array3<Vec3> {
        &self.m
    }
    pub fn a_mut(&mut self) -> &mut Array3<f64> {
        &mut self.a
    }
    pub fn m_mut(&mut self) -> &mut Array3<Vec3> {
        &mut self.m
    }

    /// Largest physical edge, `max(Nx, Ny, Nz) * pitch`.
    pub fn extent(&self) -> f64 {
        *self.dims().iter().max().unwrap() as f64 * self.pitch
    }

    /// Voxel center offset from the sample center along axis `axis`.
    pub fn coord(&self, axis: usize, index: usize) -> f64 {
        let n = self.dims()[axis] as f64;
        (index as f64 - (n - 1.0) / 2.0) * self.pitch
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.dims()[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Packs `M` as an `(Nx, Ny, Nz, 3)` array.
    pub fn m_as_array4(&self) -> Array4<f64> {
        let [nx, ny, nz] = self.dims();
        Array4::from_shape_fn((nx, ny, nz, 3), |(i, j, k, c)| self.m[[i, j, k]][c])
    }
}

/// Additive ellipsoid used to build phantom samples from configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blob {
    pub center: Vec3,
    pub semi_axes: Vec3,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub m: Vec3,
}

impl Blob {
    fn contains(&self, p: Vec3) -> bool {
        (0..3)
            .map(|i| ((p[i] - self.center[i]) / self.semi_axes[i]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Fills a grid with the sum of the blobs, testing voxel centers.
pub fn blob_sample(dims: [usize; 3], pitch: f64, blobs: &[Blob]) -> Result<SampleGrid> {
    let mut grid = SampleGrid::zeros(dims, pitch)?;
    for b in blobs {
        if b.semi_axes.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("blob semi_axes must be > 0".into()));
        }
    }
    let xs = grid.axis_coords(0);
    let ys = grid.axis_coords(1);
    let zs = grid.axis_coords(2);
    for ((i, j, k), a) in grid.a.indexed_iter_mut() {
        let p = [xs[i], ys[j], zs[k]];
        for b in blobs.iter().filter(|b| b.contains(p)) {
            *a += b.a;
            let m = &mut grid.m[[i, j, k]];
            for c in 0..3 {
                m[c] += b.m[c];
            }
        }
    }
    Ok(grid)
}

// ---------------------------------------------------------------------------
// Configuration document

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub mode: UnitMode,
    pub geometry: GeometryConfig,
    pub source: SourceConfig,
    pub detector: DetectorConfig,
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub lambda: f64,
    pub d1: f64,
    pub d2: f64,
    /// Optional; when present it must equal `d1 + d2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_r: Option<f64>,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i0: Option<f64>,
    pub transverse: Transverse,
    /// Target detector positions in use; defaults to all three.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Position>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub extent: f64,
    pub n_points: usize,
    /// Transverse aperture center `[x]` or `[x, z]`; defaults to the optical axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    /// Fraction of the aperture, per side, over which the intensity rolls
    /// off with a cosine profile. Defaults to 0 (hard edge).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub extent: f64,
    pub n_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub pitch: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blobs: Option<Vec<Blob>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<SampleFiles>,
    /// Overrides [`FAR_FIELD_RATIO`]; larger values are accepted with a warning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far_field_ratio: Option<f64>,
    /// Rigid rotation applied to the sample about its center before use.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<SampleRotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFiles {
    /// `(Nx, Ny, Nz)` float64 NGI array.
    pub a: PathBuf,
    /// `(Nx, Ny, Nz, 3)` float64 NGI array.
    pub m: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_e: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_b: Option<f64>,
}

/// A validated experiment. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub mode: UnitMode,
    pub constants: PhysicalConstants,
    pub geometry: Geometry,
    pub source: SourceSpec,
    pub detector: DetectorSpec,
    pub sample: SampleGrid,
    pub positions: Vec<Position>,
    /// Rotation already applied to `sample`.
    pub rotation: Option<SampleRotation>,
    far_field_ratio: f64,
    config: SceneConfig,
}

impl Scene {
    pub fn dims(&self) -> usize {
        self.geometry.transverse.dims()
    }
    pub fn far_field_ratio(&self) -> f64 {
        self.far_field_ratio
    }
    pub fn beta(&self) -> f64 {
        self.constants.beta()
    }
    /// Neutron speed `hbar k / m_n`.
    pub fn velocity(&self) -> f64 {
        self.constants.hbar * self.geometry.k() / self.constants.m_n
    }

    /// The configuration this scene was built from, with derived fields removed.
    pub fn to_config(&self) -> SceneConfig {
        self.config.clone()
    }

    /// Same scene with a different sample (rotations, synthetic studies).
    /// The serialized form keeps the original sample reference.
    pub fn with_sample(&self, sample: SampleGrid) -> Result<Scene> {
        check_far_field(&sample, &self.geometry, self.far_field_ratio)?;
        check_sample_dims(&sample, self.geometry.transverse)?;
        Ok(Scene { sample, ..self.clone() })
    }
}

pub fn parse_config(text: &str) -> Result<SceneConfig> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Loads a config file and builds the scene, resolving sample files relative
/// to the config's directory.
pub fn load_scene(path: &Path) -> Result<Scene> {
    let cfg = load_config(path)?;
    build_scene(&cfg, path.parent().unwrap_or(Path::new(".")))
}

fn check_far_field(sample: &SampleGrid, g: &Geometry, ratio: f64) -> Result<()> {
    let limit = ratio * g.d1.min(g.d2);
    if sample.extent() > limit {
        return Err(Error::Config(format!(
            "sample extent {} exceeds {} * min(d1, d2) = {}",
            sample.extent(),
            ratio,
            limit
        )));
    }
    Ok(())
}

fn check_sample_dims(sample: &SampleGrid, t: Transverse) -> Result<()> {
    if t == Transverse::OneD && sample.dims()[2] != 1 {
        return Err(Error::Config(format!(
            "1d transverse mode requires Nz = 1 (got dims {:?})",
            sample.dims()
        )));
    }
    Ok(())
}

/// Validates a configuration and computes every derived quantity.
pub fn build_scene(cfg: &SceneConfig, base_dir: &Path) -> Result<Scene> {
    let g = &cfg.geometry;
    let geometry = Geometry::new(g.lambda, g.d1, g.d2, g.theta, g.i0.unwrap_or(1.0), g.transverse)?;
    if let Some(d_r) = g.d_r {
        let sum = g.d1 + g.d2;
        if (d_r - sum).abs() > 1e-12 * sum {
            return Err(Error::Config(format!("d_r must equal d1+d2 (got d_r={d_r}, d1+d2={sum})")));
        }
    }

    let constants = build_constants(cfg.mode, cfg.constants.as_ref())?;

    let positions = g.positions.clone().unwrap_or_else(|| Position::ALL.to_vec());
    if positions.is_empty() {
        return Err(Error::Config("geometry.positions must not be empty".into()));
    }
    for (i, p) in positions.iter().enumerate() {
        if positions[..i].contains(p) {
            return Err(Error::Config(format!("geometry.positions lists {p} twice")));
        }
    }

    let dims = geometry.transverse.dims();
    let center = match &cfg.source.center {
        None => [0.0, 0.0],
        Some(c) if c.len() == dims => [c[0], if dims == 2 { c[1] } else { 0.0 }],
        Some(c) => {
            return Err(Error::Config(format!(
                "source center has {} components, transverse mode needs {dims}",
                c.len()
            )))
        }
    };
    let source = SourceSpec::new(cfg.source.extent, cfg.source.n_points, center)?
        .with_taper(cfg.source.taper.unwrap_or(0.0))?;
    let detector = DetectorSpec::new(cfg.detector.extent, cfg.detector.n_pixels)?;

    let s = &cfg.sample;
    let ratio = s.far_field_ratio.unwrap_or(FAR_FIELD_RATIO);
    if !(ratio > 0.0) {
        return Err(Error::Config(format!("far_field_ratio must be > 0 (got {ratio})")));
    }
    if ratio > FAR_FIELD_RATIO {
        log::warn!("far-field ratio override {ratio} exceeds default {FAR_FIELD_RATIO}");
    }
    let sample = match (&s.blobs, &s.files) {
        (Some(blobs), None) => {
            let d = s.dims.ok_or_else(|| Error::Config("sample.dims required with blobs".into()))?;
            blob_sample(d, s.pitch, blobs)?
        }
        (None, Some(files)) => {
            let grid = load_sample_files(&base_dir.join(&files.a), &base_dir.join(&files.m), s.pitch)?;
            if let Some(d) = s.dims {
                if d != grid.dims() {
                    return Err(Error::Config(format!(
                        "sample.dims {:?} disagree with file dims {:?}",
                        d,
                        grid.dims()
                    )));
                }
            }
            grid
        }
        (None, None) => match s.dims {
            Some(d) => SampleGrid::zeros(d, s.pitch)?,
            None => return Err(Error::Config("sample needs dims, blobs or files".into())),
        },
        (Some(_), Some(_)) => {
            return Err(Error::Config("sample: blobs and files are mutually exclusive".into()))
        }
    };
    let sample = match s.rotation {
        Some(r) => rotate_sample(&sample, r.angle_deg.to_radians(), r.axis)?,
        None => sample,
    };
    check_sample_dims(&sample, geometry.transverse)?;
    check_far_field(&sample, &geometry, ratio)?;

    let mut config = cfg.clone();
    config.geometry.d_r = None;

    Ok(Scene {
        mode: cfg.mode,
        constants,
        geometry,
        source,
        detector,
        sample,
        positions,
        rotation: s.rotation,
        far_field_ratio: ratio,
        config,
    })
}

fn build_constants(mode: UnitMode, c: Option<&ConstantsConfig>) -> Result<PhysicalConstants> {
    let base = match mode {
        UnitMode::Physical => PhysicalConstants::si(),
        UnitMode::Normalized => PhysicalConstants::normalized(),
    };
    let Some(c) = c else { return Ok(base) };
    if mode == UnitMode::Normalized {
        for (name, v) in [("m_n", c.m_n), ("hbar", c.hbar)] {
            if let Some(v) = v {
                if v != 1.0 {
                    return Err(Error::Config(format!("normalized mode fixes {name} = 1 (got {v})")));
                }
            }
        }
    }
    PhysicalConstants::new(
        c.m_n.unwrap_or(base.m_n),
        c.hbar.unwrap_or(base.hbar),
        c.r_e.unwrap_or(base.r_e),
        c.gamma.unwrap_or(base.gamma),
        c.mu_b.unwrap_or(base.mu_b),
    )
}

pub fn load_sample_files(a_path: &Path, m_path: &Path, pitch: f64) -> Result<SampleGrid> {
    let a = ngi::read(a_path)?.into_real()?;
    let m = ngi::read(m_path)?.into_real()?;
    let a = a
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|_| Error::Format(format!("{}: A must be 3-dimensional", a_path.display())))?;
    let m = m
        .into_dimensionality::<ndarray::Ix4>()
        .map_err(|_| Error::Format(format!("{}: M must be (Nx, Ny, Nz, 3)", m_path.display())))?;
    let (nx, ny, nz, c) = m.dim();
    if c != 3 || (nx, ny, nz) != a.dim() {
        return Err(Error::Format(format!(
            "M dims {:?} incompatible with A dims {:?}",
            m.dim(),
            a.dim()
        )));
    }
    let m = Array3::from_shape_fn((nx, ny, nz), |(i, j, k)| [m[[i, j, k, 0]], m[[i, j, k, 1]], m[[i, j, k, 2]]]);
    SampleGrid::new(pitch, a, m)
}

pub fn save_sample_files(grid: &SampleGrid, a_path: &Path, m_path: &Path) -> Result<()> {
    ngi::write(a_path, &NgiArray::Real(grid.a.clone().into_dyn()))?;
    ngi::write(m_path, &NgiArray::Real(grid.m_as_array4().into_dyn()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Derived constants and sampling diagnostics

/// `4 pi^2 hbar^2 I0^2 / (lambda^4 d2^4 m_n^2)`.
pub fn chi(scene: &Scene) -> f64 {
    let c = &scene.constants;
    let g = &scene.geometry;
    4.0 * PI * PI * c.hbar.powi(2) * g.i0.powi(2) / (g.lambda.powi(4) * g.d2.powi(4) * c.m_n.powi(2))
}

/// Transverse-dimension factor between `chi` and the prefactor of the
/// closed-form map. It is 1 for two transverse dimensions. With one
/// transverse dimension the source integral runs over a line, and its
/// stationary-phase width contributes `d2 / (lambda d1 d_r)` once.
pub fn transverse_factor(scene: &Scene) -> f64 {
    let g = &scene.geometry;
    match g.transverse {
        Transverse::TwoD => 1.0,
        Transverse::OneD => g.d2 / (g.lambda * g.d1 * g.d_r()),
    }
}

/// Total factor multiplying `|F[P S]|^2` in the correlation map.
pub fn closed_form_prefactor(scene: &Scene) -> f64 {
    chi(scene) * transverse_factor(scene)
}

/// Largest pitch that samples the chirp `exp(i pi s^2 / (lambda d))` at Nyquist
/// when `|s|` reaches `max_sep`: its local frequency is `s / (lambda d)`.
pub fn chirp_pitch_bound(lambda: f64, d: f64, max_sep: f64) -> f64 {
    lambda * d / (2.0 * max_sep)
}

/// Which computation a sampling condition protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingCheck {
    pub name: String,
    pub pitch: f64,
    pub bound: f64,
    pub pass: bool,
    pub required_by: Vec<Method>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub checks: Vec<SamplingCheck>,
}

impl SamplingReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// True when every check required by `method` passes.
    pub fn passes_for(&self, method: Method) -> bool {
        self.checks.iter().filter(|c| c.required_by.contains(&method)).all(|c| c.pass)
    }

    pub fn failures_for(&self, method: Method) -> Vec<&SamplingCheck> {
        self.checks
            .iter()
            .filter(|c| c.required_by.contains(&method) && !c.pass)
            .collect()
    }

    pub fn require(&self, method: Method) -> Result<()> {
        let failed = self.failures_for(method);
        if failed.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<_> = failed.iter().map(|c| c.message.clone()).collect();
            Err(Error::Geometry(format!("aliasing: {}", msgs.join("; "))))
        }
    }
}

fn check(name: &str, pitch: f64, bound: f64, required_by: Vec<Method>, what: &str) -> SamplingCheck {
    let pass = pitch <= bound;
    let message = format!(
        "{name}: {what} pitch {pitch} {} bound {bound}",
        if pass { "<=" } else { "exceeds" }
    );
    SamplingCheck { name: name.into(), pitch, bound, pass, required_by, message }
}

/// Closed interval covered by a set of coordinates.
fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Maximum of `|a - b|` for `a`, `b` in two intervals.
fn max_sep(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1 - b.0).abs().max((b.1 - a.0).abs())
}

/// Sampling diagnostics for the Fresnel chirps at the scene's positions.
///
/// * `reference_chirp`: source pitch against `exp(i pi (ξ - η)^2 / (λ d_r))`
///   over the reference scan and the aperture. Needed wherever the reference
///   field itself is propagated (Monte-Carlo path).
/// * `target_chirp`: voxel pitch against the sample-arm path-length phase,
///   whose local frequency along the sample is
///   `|(ζ - η)/d1 + (ζ - ξ_t)/d2| / λ`.
/// * `correlation_integrand`: source pitch against the product
///   `h_r* h_t`, whose local frequency in η is
///   `|(η - ζ)/d1 - (η - ξ_r)/d_r| / λ`. This is what the quadrature sums;
///   a Riemann sum of a chirp picks up spurious stationary points once the
///   local frequency reaches `1 / Δη`, so the bound is `1 / f_max`.
pub fn validate_sampling(scene: &Scene) -> SamplingReport {
    validate_sampling_for(scene, &scene.positions)
}

/// [`validate_sampling`] restricted to the given detector positions.
pub fn validate_sampling_for(scene: &Scene, positions: &[Position]) -> SamplingReport {
    let g = &scene.geometry;
    let lambda = g.lambda;
    let axes = scene.dims();
    let dpitch = scene.source.pitch();
    let offsets = scene.detector.offsets();
    let off_span = span(offsets.iter().copied());

    let mut ref_sep: f64 = 0.0;
    let mut tgt_freq: f64 = 0.0;
    let mut int_freq: f64 = 0.0;
    for axis in 0..axes {
        let eta = span(scene.source.axis_points(axis));
        let sample_axis = if axis == 0 { 0 } else { 2 };
        let zeta = span(scene.sample.axis_coords(sample_axis));
        for &pos in positions {
            let xi_t = pos.detector_offset(g.theta, g.d2)[axis];
            let xi_r = (xi_t + off_span.0, xi_t + off_span.1);
            ref_sep = ref_sep.max(max_sep(xi_r, eta));
            // Both local frequencies are affine in each variable, so the
            // extremes sit at interval corners.
            for &z in &[zeta.0, zeta.1] {
                for &e in &[eta.0, eta.1] {
                    tgt_freq = tgt_freq.max(((z - e) / g.d1 + (z - xi_t) / g.d2).abs() / lambda);
                    for &r in &[xi_r.0, xi_r.1] {
                        int_freq = int_freq.max(((e - z) / g.d1 - (e - r) / g.d_r()).abs() / lambda);
                    }
                }
            }
        }
    }

    let nyq = |f: f64| if f > 0.0 { 1.0 / (2.0 * f) } else { f64::INFINITY };
    SamplingReport {
        checks: vec![
            check(
                "reference_chirp",
                dpitch,
                if ref_sep > 0.0 { chirp_pitch_bound(lambda, g.d_r(), ref_sep) } else { f64::INFINITY },
                vec![Method::MonteCarlo],
                "source",
            ),
            check(
                "target_chirp",
                scene.sample.pitch(),
                nyq(tgt_freq),
                vec![Method::Quadrature, Method::MonteCarlo],
                "voxel",
            ),
            check(
                "correlation_integrand",
                dpitch,
                if int_freq > 0.0 { 1.0 / int_freq } else { f64::INFINITY },
                vec![Method::Quadrature],
                "source",
            ),
        ],
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit_config() -> SceneConfig {
        parse_config(
            r#"{
            "mode": "normalized",
            "geometry": {"lambda": 1.0, "d1": 500.0, "d2": 500.0, "theta": 0.1, "transverse": "1d"},
            "source": {"extent": 64.0, "n_points": 64},
            "detector": {"extent": 64.0, "n_pixels": 32},
            "sample": {"pitch": 1.0, "dims": [4, 4, 1]}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn derived_fields() {
        let s = build_scene(&unit_config(), Path::new(".")).unwrap();
        assert_eq!(s.geometry.k(), 2.0 * PI);
        assert_eq!(s.geometry.d_r(), 1000.0);
        assert_eq!(s.source.pitch(), 1.0);
        assert_eq!(s.detector.pitch(), 2.0);
        assert!((s.geometry.k() * s.geometry.lambda() - 2.0 * PI).abs() < 1e-15);
        assert_eq!(s.beta(), 1.913 / 2.0);
    }

    #[test]
    fn d_r_mismatch_rejected() {
        let mut cfg = unit_config();
        cfg.geometry.d_r = Some(900.0);
        let err = build_scene(&cfg, Path::new(".")).unwrap_err();
        assert!(err.to_string().contains("d_r must equal d1+d2"), "{err}");
        cfg.geometry.d_r = Some(1000.0);
        assert!(build_scene(&cfg, Path::new(".")).is_ok());
    }

    #[test]
    fn theta_boundaries() {
        for theta in [0.0, -0.1, PI / 2.0, 2.0] {
            let mut cfg = unit_config();
            cfg.geometry.theta = theta;
            let err = build_scene(&cfg, Path::new(".")).unwrap_err();
            assert!(err.to_string().contains("theta must be in (0, π/2)"), "{err}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"mode": "normalized", "geometry": {"lambda": 1, "d1": 1, "d2": 1, "theta": 0.1,
            "transverse": "1d", "k": 6.28}, "source": {"extent": 1, "n_points": 2},
            "detector": {"extent": 1, "n_pixels": 2}, "sample": {"pitch": 1, "dims": [1,1,1]}}"#;
        assert!(parse_config(text).is_err());
        let text = r#"{"mode": "normalized", "geometri": {}}"#;
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn far_field_limit() {
        let mut cfg = unit_config();
        cfg.sample.dims = Some([6, 1, 1]);
        // 6 > 0.01 * 500
        assert!(build_scene(&cfg, Path::new(".")).is_err());
        cfg.sample.far_field_ratio = Some(0.02);
        assert!(build_scene(&cfg, Path::new(".")).is_ok());
    }

    #[test]
    fn one_d_needs_flat_sample() {
        let mut cfg = unit_config();
        cfg.sample.dims = Some([2, 2, 2]);
        assert!(build_scene(&cfg, Path::new(".")).is_err());
    }

    #[test]
    fn normalized_mode_fixes_mass() {
        let mut cfg = unit_config();
        cfg.constants = Some(ConstantsConfig { m_n: Some(2.0), ..Default::default() });
        assert!(build_scene(&cfg, Path::new(".")).is_err());
        cfg.constants = Some(ConstantsConfig { r_e: Some(2.0), ..Default::default() });
        let s = build_scene(&cfg, Path::new(".")).unwrap();
        assert_eq!(s.beta(), 1.913);
    }

    #[test]
    fn chi_unit_and_scaling() {
        let mut cfg = unit_config();
        cfg.geometry.d2 = 1.0;
        cfg.geometry.d1 = 1000.0;
        cfg.sample.dims = Some([1, 1, 1]);
        cfg.sample.far_field_ratio = Some(1.0);
        let base = chi(&build_scene(&cfg, Path::new(".")).unwrap());
        assert!((base - 4.0 * PI * PI).abs() < 1e-12);
        assert!((base - 39.4784176).abs() < 1e-6);

        cfg.geometry.i0 = Some(2.0);
        let doubled_i0 = chi(&build_scene(&cfg, Path::new(".")).unwrap());
        assert!((doubled_i0 / base - 4.0).abs() < 1e-14);

        cfg.geometry.i0 = None;
        cfg.geometry.d2 = 2.0;
        let doubled_d2 = chi(&build_scene(&cfg, Path::new(".")).unwrap());
        assert!((base / doubled_d2 - 16.0).abs() < 1e-12);
    }

    #[test]
    fn detector_positions() {
        let p1 = detector_position(Position::P1, PI / 6.0, 10.0, 2.0);
        assert!((p1[0] - 1.0).abs() < 1e-15 && p1[2] == 0.0 && p1[1] == 12.0);
        let p2 = detector_position(Position::P2, PI / 6.0, 10.0, 2.0);
        assert_eq!(p2[0], -p1[0]);
        let p3 = detector_position(Position::P3, PI / 6.0, 10.0, 2.0);
        assert!(p3[0] == 0.0 && (p3[2] - 1.0).abs() < 1e-15);
        assert!("P4".parse::<Position>().is_err());
        assert_eq!("P3".parse::<Position>().unwrap(), Position::P3);
    }

    #[test]
    fn chirp_bound_example() {
        assert_eq!(chirp_pitch_bound(1.0, 1000.0, 50.0), 10.0);
    }

    #[test]
    fn sampling_report_pass_and_fail() {
        // Scene where max|ξ - η| over scan and aperture is known.
        let mut cfg = unit_config();
        cfg.geometry.d1 = 500.0;
        cfg.geometry.d2 = 500.0;
        let s = build_scene(&cfg, Path::new(".")).unwrap();
        let r = validate_sampling(&s);
        let rc = &r.checks[0];
        assert_eq!(rc.name, "reference_chirp");
        assert!(rc.pass);
        assert!(rc.bound >= 2.0 * s.source.pitch());

        cfg.source.extent = 2.0 * rc.bound * 64.0;
        let s = build_scene(&cfg, Path::new(".")).unwrap();
        let r = validate_sampling(&s);
        assert!(!r.checks[0].pass);
        assert!(r.checks[0].message.contains("exceeds"));
        assert!(r.require(Method::MonteCarlo).is_err());
    }

    #[test]
    fn blob_sample_fills_inside() {
        let blobs = [Blob { center: [0.0; 3], semi_axes: [1.1, 1.1, 1.1], a: 2.0, m: [0.0, 0.0, 1.0] }];
        let g = blob_sample([3, 3, 1], 1.0, &blobs).unwrap();
        assert_eq!(g.a()[[1, 1, 0]], 2.0);
        assert_eq!(g.a()[[0, 1, 0]], 2.0);
        assert_eq!(g.a()[[0, 0, 0]], 0.0);
        assert_eq!(g.m()[[1, 1, 0]], [0.0, 0.0, 1.0]);
    }
}
