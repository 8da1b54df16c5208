//! The `ngi` command-line interface.
//!
//! Every run writes exactly one `manifest.json` into `--out` (or prints it
//! to stdout for report-only commands run without `--out`). Failures print a
//! JSON error object on stderr and exit with the code of their category.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::correlator::{
    correlation_closed_form, correlation_quadrature, speckle_mc, CorrelationMap, DeltaGrid, Provenance, Statistics,
    MIN_REALIZATIONS,
};
use crate::error::{Error, Result};
use crate::io::ngi::{self, NgiArray};
use crate::io::{self as nio, pgm, FileDigest, OutputLog, RunManifest};
use crate::reconstruct::{
    conjugate_flip, image_from_fourier, magnitude_from_correlation, phase_retrieve, register_and_score, rotate_vector,
    rotation_matrix, shift_and_phase, solve_components, tomo_fbp, ComponentMaps, ComponentsMeta, Filter,
    ObjectConstraint, PhaseParams, Projection, RotationAxis, SampleRotation, SupportMask, COMPONENT_NAMES,
};
use crate::scene::{build_scene, load_config, validate_sampling, Method, Scene, SceneConfig};
use crate::selftest::run_selftest;
use crate::spinor::{project_components, project_spinor, sample_function_at, Channel};

/// Prints a stdout line; a closed pipe is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "ngi", version, about = "Thermal-neutron Fourier-transform ghost imaging")]
pub struct Cli {
    /// Scene configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed for Monte-Carlo draws and phase-retrieval restarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "NGI_THREADS")]
    pub threads: Option<usize>,
    /// Overwrite an existing run directory and skip sampling checks.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-simulate fermion correlation maps for every channel.
    Simulate(SimulateArgs),
    /// Monte-Carlo speckle ensemble: boson and fermion maps with errors.
    Mc(McArgs),
    /// Correlation maps to S-images to component maps.
    Reconstruct(ReconstructArgs),
    /// Component maps from five S-images.
    Solve(SolveArgs),
    /// Filtered back-projection of component maps over sample rotations.
    Tomo(TomoArgs),
    /// Sampling and aliasing report for a scene.
    Validate(ValidateArgs),
    /// Built-in invariant checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethod {
    Quadrature,
    ClosedForm,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapSource {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

impl From<MapSource> for Provenance {
    fn from(m: MapSource) -> Provenance {
        match m {
            MapSource::Quadrature => Provenance::Quadrature,
            MapSource::ClosedForm => Provenance::ClosedForm,
            MapSource::MonteCarlo => Provenance::MonteCarlo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CheckMethod {
    Quadrature,
    ClosedForm,
    MonteCarlo,
}

impl From<CheckMethod> for Method {
    fn from(m: CheckMethod) -> Method {
        match m {
            CheckMethod::Quadrature => Method::Quadrature,
            CheckMethod::ClosedForm => Method::ClosedForm,
            CheckMethod::MonteCarlo => Method::MonteCarlo,
        }
    }
}

fn parse_rotation(s: &str) -> Result<SampleRotation> {
    let (axis, deg) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("rotation must look like z:30 (got {s:?})")))?;
    let angle_deg: f64 = deg.parse().map_err(|_| Error::Usage(format!("bad rotation angle {deg:?}")))?;
    Ok(SampleRotation { axis: axis.parse()?, angle_deg })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "quadrature")]
    pub method: SimMethod,
    /// Rotate the sample before simulating, e.g. `z:30`.
    #[arg(long, value_parser = parse_rotation)]
    pub rotation: Option<SampleRotation>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Number of source realizations.
    #[arg(long, short = 'n')]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Directory holding `<channel>_<provenance>_fermion.ngi` maps.
    #[arg(long)]
    pub maps: PathBuf,
    /// Which maps to use; defaults to the first present of closed-form, quadrature, monte-carlo.
    #[arg(long, value_enum)]
    pub provenance: Option<MapSource>,
    /// Take Fourier phases from the true S-images instead of retrieving them.
    #[arg(long)]
    pub oracle_phase: bool,
    /// Directory with true `<channel>_image.ngi` files (defaults to `<maps>/truth`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Phase-retrieval restarts.
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    /// Phase-retrieval iterations per restart.
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    /// Constrain retrieved objects to be real and nonnegative.
    #[arg(long)]
    pub real_nonnegative: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Directory holding the five `<channel>_image.ngi` files.
    #[arg(long)]
    pub images: PathBuf,
}

#[derive(Debug, Args)]
pub struct TomoArgs {
    /// Run directories, one per sample rotation.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "z")]
    pub axis: RotationAxis,
    #[arg(long, default_value = "ram-lak")]
    pub filter: Filter,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Only fail on checks this method needs.
    #[arg(long, value_enum)]
    pub method: Option<CheckMethod>,
}

/// Sidecar for a directory of S-images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagesMeta {
    pub theta: f64,
    pub beta: f64,
    pub pitch: f64,
    pub transverse_dims: usize,
    #[serde(default)]
    pub rotation: Option<SampleRotation>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = Error::Usage(e.render().to_string().trim().trim_start_matches("error: ").to_string());
            report_error(&err);
            return err.exit_code();
        }
    };
    let args = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, args) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            e.exit_code()
        }
    }
}

fn report_error(e: &Error) {
    let v = json!({"error": {"kind": e.kind(), "message": e.message(), "exit_code": e.exit_code()}});
    eprintln!("{v}");
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut ctx = RunContext::new(cli, args);
        let (name, result) = match &cli.command {
            Command::Simulate(a) => ("simulate", simulate(&mut ctx, a)),
            Command::Mc(a) => ("mc", mc(&mut ctx, a)),
            Command::Reconstruct(a) => ("reconstruct", reconstruct(&mut ctx, a)),
            Command::Solve(a) => ("solve", solve(&mut ctx, a)),
            Command::Tomo(a) => ("tomo", tomo(&mut ctx, a)),
            Command::Validate(a) => ("validate", validate(&mut ctx, a)),
            Command::Selftest => ("selftest", selftest(&mut ctx)),
        };
        let report_only = matches!(cli.command, Command::Validate(_) | Command::Selftest);
        if let Err(e) = &result {
            if ctx.log.is_none() && !report_only {
                return result;
            }
            ctx.result("error", json!({"kind": e.kind(), "message": e.message(), "exit_code": e.exit_code()}));
        }
        ctx.finish(name)?;
        result
    })
}

struct RunContext<'a> {
    cli: &'a Cli,
    args: Vec<String>,
    started: f64,
    config_hash: Option<String>,
    seeds: Vec<u64>,
    inputs: Vec<FileDigest>,
    log: Option<OutputLog>,
    results: Map<String, Value>,
}

impl<'a> RunContext<'a> {
    fn new(cli: &'a Cli, args: Vec<String>) -> Self {
        RunContext {
            cli,
            args,
            started: nio::unix_now(),
            config_hash: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            log: None,
            results: Map::new(),
        }
    }

    /// Creates the output directory. Refuses a directory that already holds
    /// a run unless `--force`.
    fn open_out(&mut self, required: bool) -> Result<()> {
        let Some(dir) = &self.cli.out else {
            return if required { Err(Error::Usage("--out is required".into())) } else { Ok(()) };
        };
        if dir.join("manifest.json").exists() && !self.cli.force {
            return Err(Error::Usage(format!(
                "{} already holds a run; pass --force to overwrite",
                dir.display()
            )));
        }
        std::fs::create_dir_all(dir)?;
        self.log = Some(OutputLog::new(dir));
        Ok(())
    }

    fn out(&self) -> &OutputLog {
        self.log.as_ref().expect("output directory opened")
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        let p = self.out().path(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    fn record(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        let log = self.log.as_mut().expect("output directory opened");
        for p in paths {
            log.record(p);
        }
    }

    fn write_ngi(&mut self, name: &str, array: NgiArray) -> Result<()> {
        let p = self.path(name)?;
        ngi::write(&p, &array)?;
        self.record([p]);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name)?;
        nio::write_json(&p, value)?;
        self.record([p]);
        Ok(())
    }

    fn write_pgm(&mut self, name: &str, image: &Array2<f64>) -> Result<()> {
        let p = self.path(name)?;
        pgm::write(&p, image)?;
        let mut side = p.clone().into_os_string();
        side.push(".json");
        self.record([p, PathBuf::from(side)]);
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name)?;
        ngi::write_atomic(&p, text.as_bytes())?;
        self.record([p]);
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: nio::file_digest(path)? });
        Ok(())
    }

    fn result(&mut self, key: &str, value: Value) {
        self.results.insert(key.into(), value);
    }

    /// Loads `--config`, applies `edit`, and builds the scene.
    fn scene_with(&mut self, edit: impl FnOnce(&mut SceneConfig)) -> Result<Scene> {
        let path = self.cli.config.clone().ok_or_else(|| Error::Usage("--config is required".into()))?;
        self.scene_from(&path, edit)
    }

    fn scene_from(&mut self, path: &Path, edit: impl FnOnce(&mut SceneConfig)) -> Result<Scene> {
        if !path.exists() {
            return Err(Error::MissingInput(format!("config {} not found", path.display())));
        }
        self.config_hash = Some(nio::file_digest(path)?);
        self.input(path)?;
        let mut cfg = load_config(path)?;
        edit(&mut cfg);
        build_scene(&cfg, path.parent().unwrap_or(Path::new(".")))
    }

    fn finish(self, command: &str) -> Result<()> {
        let outputs = match &self.log {
            Some(l) => l.digests()?,
            None => Vec::new(),
        };
        let manifest = RunManifest {
            tool: "ngi".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: self.args,
            config_hash: self.config_hash,
            seeds: self.seeds,
            threads: rayon::current_num_threads(),
            started_unix: self.started,
            finished_unix: nio::unix_now(),
            inputs: self.inputs,
            outputs,
            results: Value::Object(self.results),
        };
        match &self.log {
            Some(l) => nio::write_json(&l.path("manifest.json"), &manifest),
            None => {
                say!("{}", serde_json::to_string_pretty(&manifest)?);
                Ok(())
            }
        }
    }
}

fn scene_channels(scene: &Scene) -> Vec<Channel> {
    Channel::ALL.into_iter().filter(|c| scene.positions.contains(&c.position())).collect()
}

fn method_of(p: Provenance) -> Method {
    match p {
        Provenance::Quadrature => Method::Quadrature,
        Provenance::ClosedForm => Method::ClosedForm,
        Provenance::MonteCarlo => Method::MonteCarlo,
    }
}

fn require_sampling(ctx: &RunContext, scene: &Scene, method: Method) -> Result<()> {
    let report = validate_sampling(scene);
    match report.require(method) {
        Err(e) if ctx.cli.force => {
            log::warn!("continuing despite failed sampling checks (--force): {e}");
            Ok(())
        }
        r => r,
    }
}

/// CSV for 1D maps, PGM for 2D.
fn write_map_preview(ctx: &mut RunContext, map: &CorrelationMap) -> Result<()> {
    let stem = map.stem();
    if map.meta.transverse_dims == 1 {
        let axis = map.meta.grid.axis(0);
        let mut text = String::from(if map.stderr.is_some() { "delta_xi,value,stderr\n" } else { "delta_xi,value\n" });
        for (j, x) in axis.iter().enumerate() {
            text.push_str(&format!("{x:.17e},{:.17e}", map.values[[j, 0]]));
            if let Some(se) = &map.stderr {
                text.push_str(&format!(",{:.17e}", se[[j, 0]]));
            }
            text.push('\n');
        }
        ctx.write_text(&format!("{stem}.csv"), &text)
    } else {
        ctx.write_pgm(&format!("{stem}.pgm"), &map.values)
    }
}

fn save_map(ctx: &mut RunContext, map: &CorrelationMap) -> Result<()> {
    let paths = map.save(ctx.out().root())?;
    ctx.record(paths);
    write_map_preview(ctx, map)
}

fn images_meta(scene: &Scene) -> ImagesMeta {
    ImagesMeta {
        theta: scene.geometry.theta(),
        beta: scene.beta(),
        pitch: scene.sample.pitch(),
        transverse_dims: scene.dims(),
        rotation: scene.rotation,
    }
}

fn stack4(parts: [&Array2<f64>; 4]) -> Array3<f64> {
    let (nx, nz) = parts[0].dim();
    Array3::from_shape_fn((4, nx, nz), |(c, i, l)| parts[c][[i, l]])
}

/// True projected S-images of all five channels and the projected
/// components, under `truth/`.
fn write_truth(ctx: &mut RunContext, scene: &Scene) -> Result<()> {
    let g = &scene.geometry;
    for ch in Channel::ALL {
        let vol = sample_function_at(&scene.sample, g.theta(), ch.position(), scene.beta())?;
        let img = project_spinor(&vol).component(ch.spin()).clone();
        ctx.write_ngi(&format!("truth/{}_image.ngi", ch.name()), NgiArray::Complex(img.into_dyn()))?;
    }
    let pc = project_components(&scene.sample);
    let stack = stack4([&pc.m[0], &pc.m[1], &pc.m[2], &pc.a]);
    ctx.write_ngi("truth/components.ngi", NgiArray::Real(stack.into_dyn()))?;
    ctx.write_json("truth/images.json", &images_meta(scene))
}

fn simulate(ctx: &mut RunContext, a: &SimulateArgs) -> Result<()> {
    let rotation = a.rotation;
    let scene = ctx.scene_with(|cfg| {
        if rotation.is_some() {
            cfg.sample.rotation = rotation;
        }
    })?;
    let provs = match a.method {
        SimMethod::Quadrature => vec![Provenance::Quadrature],
        SimMethod::ClosedForm => vec![Provenance::ClosedForm],
        SimMethod::Both => vec![Provenance::Quadrature, Provenance::ClosedForm],
    };
    for p in &provs {
        require_sampling(ctx, &scene, method_of(*p))?;
    }
    ctx.open_out(true)?;
    let grid = DeltaGrid::from_scene(&scene);
    let mut per_channel = Map::new();
    for ch in scene_channels(&scene) {
        let mut maps = Vec::new();
        for &p in &provs {
            let m = match p {
                Provenance::Quadrature => {
                    correlation_quadrature(&scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?
                }
                _ => correlation_closed_form(&scene, ch.spin(), ch.position(), Statistics::Fermion, grid)?,
            };
            save_map(ctx, &m)?;
            maps.push(m);
        }
        let min = maps[0].values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut entry = json!({"min_value": min});
        if maps.len() == 2 {
            entry["quadrature_vs_closed_form"] = json!(crate::reconstruct::nrmse(&maps[0].values, &maps[1].values));
        }
        per_channel.insert(ch.name().into(), entry);
    }
    write_truth(ctx, &scene)?;
    ctx.write_json("config.json", &scene.to_config())?;
    ctx.result("methods", json!(provs.iter().map(|p| p.to_string()).collect::<Vec<_>>()));
    ctx.result("channels", Value::Object(per_channel));
    ctx.result("sampling", serde_json::to_value(validate_sampling(&scene))?);
    Ok(())
}

fn mc(ctx: &mut RunContext, a: &McArgs) -> Result<()> {
    if a.n < MIN_REALIZATIONS {
        return Err(Error::Statistics(format!("n_realizations too small ({} < {MIN_REALIZATIONS})", a.n)));
    }
    let scene = ctx.scene_with(|_| {})?;
    require_sampling(ctx, &scene, Method::MonteCarlo)?;
    let seed = ctx.cli.seed.unwrap_or(0);
    ctx.seeds.push(seed);
    ctx.open_out(true)?;
    let grid = DeltaGrid::from_scene(&scene);
    let mut per_channel = Map::new();
    for ch in scene_channels(&scene) {
        let out = speckle_mc(&scene, ch.spin(), ch.position(), a.n, seed, grid)?;
        save_map(ctx, &out.boson)?;
        save_map(ctx, &out.fermion)?;
        per_channel.insert(
            ch.name().into(),
            json!({"siegert": out.siegert, "mean_target": out.mean_target}),
        );
    }
    write_truth(ctx, &scene)?;
    ctx.write_json("config.json", &scene.to_config())?;
    ctx.result("n_realizations", json!(a.n));
    ctx.result("channels", Value::Object(per_channel));
    Ok(())
}

fn map_path(dir: &Path, ch: Channel, p: Provenance) -> PathBuf {
    dir.join(format!("{}_{p}_fermion.ngi", ch.name()))
}

fn read_complex2(path: &Path) -> Result<Array2<Complex64>> {
    if !path.exists() {
        return Err(Error::MissingInput(format!("{} not found", path.display())));
    }
    ngi::read(path)?
        .into_complex()?
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn read_real3(path: &Path) -> Result<Array3<f64>> {
    if !path.exists() {
        return Err(Error::MissingInput(format!("{} not found", path.display())));
    }
    ngi::read(path)?
        .into_real()?
        .into_dimensionality::<ndarray::Ix3>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Circular shift that moves the `size` window holding the most energy of
/// `x` to the origin.
fn window_shift(x: &Array2<Complex64>, size: (usize, usize)) -> [usize; 2] {
    let (nx, nz) = x.dim();
    let e = x.mapv(|v| v.norm_sqr());
    let mut best = (f64::NEG_INFINITY, [0, 0]);
    for sx in 0..nx {
        for sz in 0..nz {
            let mut acc = 0.0;
            for i in 0..size.0 {
                for l in 0..size.1 {
                    acc += e[[(sx + i) % nx, (sz + l) % nz]];
                }
            }
            if acc > best.0 {
                best = (acc, [(nx - sx) % nx, (nz - sz) % nz]);
            }
        }
    }
    best.1
}

/// Multiplies by the unit phase that makes the image sum real and positive.
fn fix_global_phase(x: &Array2<Complex64>) -> Array2<Complex64> {
    let s: Complex64 = x.iter().sum();
    if s.norm() > 0.0 {
        let w = s.conj() / s.norm();
        x.mapv(|v| v * w)
    } else {
        x.clone()
    }
}

struct Retrieved {
    images: Vec<Array2<Complex64>>,
    traces: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

/// Phase retrieval of every channel, aligned to the first one.
fn retrieve_all(
    mags: &[crate::reconstruct::MagnitudeImage],
    dims: (usize, usize),
    params: &PhaseParams,
) -> Result<Retrieved> {
    let frame = mags[0].values.dim();
    let support_size = (dims.0, if frame.1 == 1 { 1 } else { dims.1 });
    let support = SupportMask::rect(frame, (0, 0), support_size)?;
    let measure = mags[0].sample_pitch.powi(mags[0].transverse_dims as i32);
    let mut objects = Vec::new();
    let mut traces = Vec::new();
    let mut residuals = Vec::new();
    for m in mags {
        let pr = phase_retrieve(m, &support, params)?;
        let best = pr.best();
        objects.push(best.object.mapv(|v| v / measure));
        traces.push(best.trace.clone());
        residuals.push(best.residual);
    }
    let reference = shift_and_phase(&objects[0], window_shift(&objects[0], support_size), 0.0);
    let ref_mod = reference.mapv(|v| Complex64::new(v.norm(), 0.0));
    let mut images = Vec::new();
    for (k, x) in objects.iter().enumerate() {
        let aligned = if k == 0 {
            reference.clone()
        } else {
            let reg = register_and_score(&x.mapv(|v| Complex64::new(v.norm(), 0.0)), &ref_mod)?;
            let x = if reg.flipped { conjugate_flip(x) } else { x.clone() };
            shift_and_phase(&x, reg.shift, 0.0)
        };
        let crop = aligned.slice(ndarray::s![..support_size.0, ..support_size.1]).to_owned();
        images.push(fix_global_phase(&crop));
    }
    Ok(Retrieved { images, traces, residuals })
}

fn to_five(images: Vec<Array2<Complex64>>) -> Result<[Array2<Complex64>; 5]> {
    images.try_into().map_err(|_| Error::Format("expected five S-images".into()))
}

fn component_errors(maps: &ComponentMaps, truth: &Array3<f64>) -> Result<Value> {
    let t = ComponentMaps::from_stacked(truth, maps.theta)?;
    if t.a.dim() != maps.a.dim() {
        return Err(Error::Format(format!("truth components {:?} vs reconstruction {:?}", t.a.dim(), maps.a.dim())));
    }
    let mut out = Map::new();
    let mut worst: f64 = 0.0;
    for (c, name) in COMPONENT_NAMES.iter().enumerate() {
        let e = crate::reconstruct::nrmse(maps.component(c), t.component(c));
        worst = worst.max(e);
        out.insert((*name).into(), json!(e));
    }
    out.insert("max".into(), json!(worst));
    Ok(Value::Object(out))
}

/// Writes S-images, the component stack, its sidecar and previews.
fn write_solution(
    ctx: &mut RunContext,
    images: &[Array2<Complex64>; 5],
    meta: &ImagesMeta,
) -> Result<ComponentMaps> {
    for (ch, img) in Channel::ALL.iter().zip(images.iter()) {
        ctx.write_ngi(&format!("{}_image.ngi", ch.name()), NgiArray::Complex(img.clone().into_dyn()))?;
    }
    ctx.write_json("images.json", meta)?;
    let maps = solve_components(images, meta.theta, meta.beta)?;
    ctx.write_ngi("components.ngi", NgiArray::Real(maps.stacked().into_dyn()))?;
    ctx.write_ngi("residual.ngi", NgiArray::Real(maps.residual.clone().into_dyn()))?;
    let cmeta = ComponentsMeta {
        theta: meta.theta,
        beta: meta.beta,
        pitch: meta.pitch,
        condition_number: maps.condition_number,
        max_residual: maps.residual.iter().copied().fold(0.0, f64::max),
        components: COMPONENT_NAMES.iter().map(|s| s.to_string()).collect(),
        rotation: meta.rotation,
    };
    ctx.write_json("components.json", &cmeta)?;
    for (c, name) in COMPONENT_NAMES.iter().enumerate() {
        ctx.write_pgm(&format!("{name}.pgm"), maps.component(c))?;
    }
    ctx.write_pgm("residual.pgm", &maps.residual)?;
    ctx.result("condition_number", json!(maps.condition_number));
    ctx.result("max_residual", json!(cmeta.max_residual));
    Ok(maps)
}

fn reconstruct(ctx: &mut RunContext, a: &ReconstructArgs) -> Result<()> {
    if !a.maps.is_dir() {
        return Err(Error::MissingInput(format!("maps directory {} not found", a.maps.display())));
    }
    let prov: Provenance = match a.provenance {
        Some(p) => p.into(),
        None => [Provenance::ClosedForm, Provenance::Quadrature, Provenance::MonteCarlo]
            .into_iter()
            .find(|&p| Channel::ALL.iter().any(|&c| map_path(&a.maps, c, p).exists()))
            .ok_or_else(|| Error::MissingInput(format!("no fermion maps in {}", a.maps.display())))?,
    };
    let missing: Vec<&str> =
        Channel::ALL.iter().filter(|&&c| !map_path(&a.maps, c, prov).exists()).map(|c| c.name()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingInput(format!("missing {prov} fermion maps for channels: {}", missing.join(", "))));
    }
    let truth_dir = a.truth.clone().unwrap_or_else(|| a.maps.join("truth"));
    if a.oracle_phase {
        let absent: Vec<&str> = Channel::ALL
            .iter()
            .filter(|c| !truth_dir.join(format!("{}_image.ngi", c.name())).exists())
            .map(|c| c.name())
            .collect();
        if !absent.is_empty() {
            return Err(Error::Usage(format!(
                "--oracle-phase needs true S-images in {} (missing {})",
                truth_dir.display(),
                absent.join(", ")
            )));
        }
    }

    let scene = match &ctx.cli.config {
        Some(p) => ctx.scene_from(&p.clone(), |_| {})?,
        None => ctx.scene_from(&a.maps.join("config.json"), |_| {})?,
    };
    let meta = images_meta(&scene);
    let [nx, _, nz] = scene.sample.dims();

    let mut mags = Vec::new();
    let mut clamped = Map::new();
    for ch in Channel::ALL {
        let p = map_path(&a.maps, ch, prov);
        ctx.input(&p)?;
        let map = CorrelationMap::load(&p)?;
        if (map.meta.theta - meta.theta).abs() > 1e-12 * meta.theta {
            return Err(Error::Config(format!("{}: theta differs from the scene", p.display())));
        }
        let m = magnitude_from_correlation(&map)?;
        m.check_dft_grid()?;
        clamped.insert(ch.name().into(), json!(m.clamped));
        mags.push(m);
    }
    ctx.open_out(true)?;
    ctx.result("provenance", json!(prov.to_string()));
    ctx.result("clamped_pixels", Value::Object(clamped));

    let images: Vec<Array2<Complex64>> = if a.oracle_phase {
        ctx.result("phase", json!("oracle"));
        let mut out = Vec::new();
        for (ch, m) in Channel::ALL.iter().zip(&mags) {
            let p = truth_dir.join(format!("{}_image.ngi", ch.name()));
            ctx.input(&p)?;
            let truth = read_complex2(&p)?;
            out.push(image_from_fourier(&m.with_oracle_phase(&truth), m.sample_pitch, m.transverse_dims, (nx, nz)));
        }
        out
    } else {
        let seed = ctx.cli.seed.unwrap_or(0);
        ctx.seeds.push(seed);
        let params = PhaseParams {
            n_iter: a.iterations,
            restarts: a.restarts,
            seed,
            constraint: if a.real_nonnegative { ObjectConstraint::RealNonnegative } else { ObjectConstraint::Complex },
            ..PhaseParams::default()
        };
        let r = retrieve_all(&mags, (nx, nz), &params)?;
        for (ch, t) in Channel::ALL.iter().zip(&r.traces) {
            let p = ctx.path(&format!("{}_trace.csv", ch.name()))?;
            nio::write_trace_csv(&p, t)?;
            ctx.record([p]);
        }
        let res: Map<String, Value> =
            Channel::ALL.iter().zip(&r.residuals).map(|(c, r)| (c.name().to_string(), json!(r))).collect();
        ctx.result("phase", json!("retrieved"));
        ctx.result("fourier_residuals", Value::Object(res));
        ctx.result(
            "ambiguities",
            json!({
                "translation_and_flip": "each channel aligned to S1_up by its modulus; the twin image of S1_up itself is unresolved",
                "global_phase": "fixed by convention: each image sum is real and positive",
            }),
        );
        r.images
    };
    let images = to_five(images)?;
    let maps = write_solution(ctx, &images, &meta)?;
    let truth_components = truth_dir.join("components.ngi");
    if truth_components.exists() {
        ctx.input(&truth_components)?;
        let t = read_real3(&truth_components)?;
        ctx.result("component_nrmse", component_errors(&maps, &t)?);
    }
    Ok(())
}

fn load_images(dir: &Path) -> Result<[Array2<Complex64>; 5]> {
    let missing: Vec<&str> = Channel::ALL
        .iter()
        .filter(|c| !dir.join(format!("{}_image.ngi", c.name())).exists())
        .map(|c| c.name())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingInput(format!(
            "{} lacks S-images for channels: {}",
            dir.display(),
            missing.join(", ")
        )));
    }
    let imgs: Result<Vec<_>> =
        Channel::ALL.iter().map(|c| read_complex2(&dir.join(format!("{}_image.ngi", c.name())))).collect();
    to_five(imgs?)
}

fn solve(ctx: &mut RunContext, a: &SolveArgs) -> Result<()> {
    if !a.images.is_dir() {
        return Err(Error::MissingInput(format!("images directory {} not found", a.images.display())));
    }
    let images = load_images(&a.images)?;
    for c in Channel::ALL {
        ctx.input(&a.images.join(format!("{}_image.ngi", c.name())))?;
    }
    let meta = match &ctx.cli.config {
        Some(p) => images_meta(&ctx.scene_from(&p.clone(), |_| {})?),
        None => {
            let p = a.images.join("images.json");
            if !p.exists() {
                return Err(Error::Usage(format!("{} missing; pass --config for theta and beta", p.display())));
            }
            ctx.input(&p)?;
            nio::read_json(&p)?
        }
    };
    ctx.open_out(true)?;
    let maps = write_solution(ctx, &images, &meta)?;
    let truth = [a.images.join("components.ngi"), a.images.join("truth").join("components.ngi")]
        .into_iter()
        .find(|p| p.exists());
    if let Some(truth) = truth {
        ctx.input(&truth)?;
        ctx.result("component_nrmse", component_errors(&maps, &read_real3(&truth)?)?);
    }
    Ok(())
}

/// Component maps and rotation of one tomography input directory.
fn tomo_input(ctx: &mut RunContext, dir: &Path) -> Result<(ComponentMaps, ComponentsMeta)> {
    let cpath = dir.join("components.ngi");
    let jpath = dir.join("components.json");
    if cpath.exists() && jpath.exists() {
        ctx.input(&cpath)?;
        let meta: ComponentsMeta = nio::read_json(&jpath)?;
        let maps = ComponentMaps::from_stacked(&read_real3(&cpath)?, meta.theta)?;
        return Ok((maps, meta));
    }
    // Fall back to S-images, e.g. the truth/ folder of a simulation.
    let idir = if dir.join("images.json").exists() { dir.to_path_buf() } else { dir.join("truth") };
    let ipath = idir.join("images.json");
    if !ipath.exists() {
        return Err(Error::MissingInput(format!("{} holds neither components nor S-images", dir.display())));
    }
    let meta: ImagesMeta = nio::read_json(&ipath)?;
    let images = load_images(&idir)?;
    ctx.input(&ipath)?;
    let maps = solve_components(&images, meta.theta, meta.beta)?;
    let cmeta = ComponentsMeta {
        theta: meta.theta,
        beta: meta.beta,
        pitch: meta.pitch,
        condition_number: maps.condition_number,
        max_residual: maps.residual.iter().copied().fold(0.0, f64::max),
        components: COMPONENT_NAMES.iter().map(|s| s.to_string()).collect(),
        rotation: meta.rotation,
    };
    Ok((maps, cmeta))
}

fn tomo(ctx: &mut RunContext, a: &TomoArgs) -> Result<()> {
    let mut per_comp: [Vec<Projection>; 4] = Default::default();
    let mut pitch = None;
    let mut angles_deg = Vec::new();
    for dir in &a.inputs {
        if !dir.is_dir() {
            return Err(Error::MissingInput(format!("input directory {} not found", dir.display())));
        }
        let (maps, meta) = tomo_input(ctx, dir)?;
        let rot = meta
            .rotation
            .ok_or_else(|| Error::Config(format!("{}: no sample rotation recorded", dir.display())))?;
        if rot.axis != a.axis {
            return Err(Error::Config(format!("{}: rotated about {} but --axis is {}", dir.display(), rot.axis, a.axis)));
        }
        match pitch {
            None => pitch = Some(meta.pitch),
            Some(p) if (p - meta.pitch).abs() > 1e-12 * p => {
                return Err(Error::Format(format!("{}: pitch differs between inputs", dir.display())))
            }
            _ => {}
        }
        let angle = rot.angle_deg.to_radians();
        // The lab-frame solve sees R·M; undo the rotation of the vector.
        let r = rotation_matrix(a.axis, angle);
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let dim = maps.a.dim();
        let mut m = [Array2::zeros(dim), Array2::zeros(dim), Array2::zeros(dim)];
        for ((i, l), _) in maps.a.indexed_iter() {
            let v = rotate_vector(&rt, [maps.mx[[i, l]], maps.my[[i, l]], maps.mz[[i, l]]]);
            for c in 0..3 {
                m[c][[i, l]] = v[c];
            }
        }
        let [mx, my, mz] = m;
        for (c, img) in [mx, my, mz, maps.a].into_iter().enumerate() {
            per_comp[c].push(Projection { angle, image: img });
        }
        angles_deg.push(rot.angle_deg);
    }
    let pitch = pitch.ok_or_else(|| Error::Usage("no tomography inputs".into()))?;
    let volumes: Result<Vec<_>> = per_comp.iter().map(|p| tomo_fbp(p, a.axis, a.filter, pitch)).collect();
    let volumes = volumes?;
    ctx.open_out(true)?;
    for (name, vol) in COMPONENT_NAMES.iter().zip(&volumes) {
        ctx.write_ngi(&format!("volume_{name}.ngi"), NgiArray::Real(vol.values.clone().into_dyn()))?;
        let axis = if a.axis == RotationAxis::Z { Axis(2) } else { Axis(0) };
        let mid = vol.values.len_of(axis) / 2;
        ctx.write_pgm(&format!("volume_{name}_slice.pgm"), &vol.values.index_axis(axis, mid).to_owned())?;
    }
    let info = json!({
        "axis": a.axis,
        "filter": a.filter,
        "pitch": pitch,
        "angles_deg": angles_deg,
        "components": COMPONENT_NAMES,
        "dims": volumes[0].values.shape(),
    });
    ctx.write_json("volume.json", &info)?;
    ctx.result("n_angles", json!(angles_deg.len()));
    ctx.result("coverage_deg", json!(crate::reconstruct::angle_coverage(&per_comp[0].iter().map(|p| p.angle).collect::<Vec<_>>()).to_degrees()));
    Ok(())
}

fn validate(ctx: &mut RunContext, a: &ValidateArgs) -> Result<()> {
    let scene = ctx.scene_with(|_| {})?;
    let report = validate_sampling(&scene);
    say!("{:<24} {:>14} {:>14}  {:<5} required_by", "check", "pitch", "bound", "pass");
    for c in &report.checks {
        let by: Vec<String> = c.required_by.iter().map(|m| serde_json::to_value(m).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default()).collect();
        say!("{:<24} {:>14.6e} {:>14.6e}  {:<5} {}", c.name, c.pitch, c.bound, if c.pass { "yes" } else { "NO" }, by.join(","));
    }
    let per_method: Map<String, Value> = [Method::Quadrature, Method::ClosedForm, Method::MonteCarlo]
        .into_iter()
        .map(|m| (serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(), json!(report.passes_for(m))))
        .collect();
    for (m, ok) in &per_method {
        say!("{m}: {}", if ok.as_bool() == Some(true) { "ok" } else { "aliasing" });
    }
    ctx.open_out(false)?;
    if ctx.log.is_some() {
        ctx.write_json("report.json", &report)?;
    }
    ctx.result("report", serde_json::to_value(&report)?);
    ctx.result("passes", Value::Object(per_method));
    match a.method {
        Some(m) => report.require(m.into()),
        None if report.all_pass() => Ok(()),
        None => {
            let failed: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| c.message.clone()).collect();
            Err(Error::Geometry(format!("aliasing: {}", failed.join("; "))))
        }
    }
}

fn selftest(ctx: &mut RunContext) -> Result<()> {
    let checks = run_selftest();
    for c in &checks {
        say!("{} {:<28} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    ctx.open_out(false)?;
    ctx.result("checks", serde_json::to_value(&checks)?);
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Check(failed.join(", ")))
    }
}
