//! Run configuration, the simulate → analyze pipeline, persistence and
//! plot-ready exports.
//!
//! Output directory layout:
//!   config.toml        echo of the validated configuration
//!   checkpoint.jsonl   one record per snapshot, used by `--resume` and `analyze`
//!   snapshots.jsonl    exported snapshots (every `stride`-th)
//!   neck.csv           equator radius series
//!   monitors.csv       per-snapshot flow monitors
//!   modes_A<A>.csv     spectral track per cutoff
//!   report.json        the run report

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{assemble_report, neutral_coefficient_fit, neutral_limit, profile_monitors, u_minus_one_monitors, AsymptoticsReport};
use crate::barrier::{comparison_check, extract_zfield, find_b0, window_comparison, B0Search, BarrierParams, CertGrid, WindowComparison, ZField};
use crate::error::{Error, Result};
use crate::flow::{
    cylinder, dumbbell, estimate_t, estimate_t_from_series, round_sphere, scale_for_extinction_bound, DumbbellParams, FlowTrajectory, GridSpec, Integrator,
    IntegratorConfig, Snapshot, StopReason, TEstimate,
};
use crate::hermite::{mode_track, CutoffSpec, ModeTrack};
use crate::mz::{classify, CaseTag, Classification, ClassifyConfig, MZTrajectory, Provenance};
use crate::profile::{arclength, curvatures, FlowProfile, OuterBoundary};
use crate::selfsimilar::{rescale, RescaledProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Dumbbell {
        #[serde(default = "default_neck_width")]
        neck_width: f64,
        #[serde(default = "default_sharpness")]
        sharpness: u32,
        /// Overall radius; when absent it is chosen so that the cylinder
        /// bound on the neck extinction time equals `extinction_floor`.
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default = "default_extinction_floor")]
        extinction_floor: f64,
    },
    Sphere {
        radius: f64,
    },
    Cylinder {
        radius: f64,
        #[serde(default = "default_half_length")]
        half_length: f64,
    },
}

fn default_neck_width() -> f64 {
    0.2
}
fn default_sharpness() -> u32 {
    2
}
fn default_extinction_floor() -> f64 {
    21.0
}
fn default_half_length() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub max_mode: usize,
    pub k_w: u32,
    /// Cutoff scales A; one analysis pass per entry.
    pub cutoffs: Vec<f64>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { max_mode: 12, k_w: 8, cutoffs: vec![4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Snapshots before this τ are not analyzed.
    pub tau_start: f64,
    /// Length of the terminal classification window.
    pub span: f64,
    /// |σ| range of the profile fit and the pointwise monitor.
    pub r_max: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { tau_start: 1.0, span: 4.0, r_max: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierConfig {
    /// Shift and range of the standalone certification.
    pub c: f64,
    pub l: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    pub u_points: usize,
    /// Upper u-range of the comparison against the run.
    pub compare_l: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        let g = CertGrid::default();
        BarrierConfig { c: 1.0, l: 3.0, tau_min: g.tau_min, tau_max: g.tau_max, tau_points: g.tau_points, u_points: g.u_points, compare_l: 3.0 }
    }
}

impl BarrierConfig {
    pub fn grid(&self) -> CertGrid {
        CertGrid { tau_min: self.tau_min, tau_max: self.tau_max, tau_points: self.tau_points, u_points: self.u_points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Export every this many snapshots to snapshots.jsonl.
    pub snapshot_stride: usize,
    pub snapshots: bool,
    pub modes: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, snapshot_stride: 1, snapshots: true, modes: true }
    }
}

fn default_grid() -> GridSpec {
    GridSpec { nodes: 401, refine_factor: 0.02, refine_power: 1 }
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig { stop_radius: 0.008, ..IntegratorConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: usize,
    pub initial: InitialData,
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub barrier: BarrierConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Stop once this many snapshots have been persisted, leaving a
    /// resumable checkpoint.
    #[serde(default)]
    pub interrupt_after: Option<usize>,
}

impl RunConfig {
    pub fn new(n: usize, initial: InitialData) -> Self {
        RunConfig {
            n,
            initial,
            grid: default_grid(),
            integrator: default_integrator(),
            spectral: SpectralConfig::default(),
            analysis: AnalysisConfig::default(),
            barrier: BarrierConfig::default(),
            output: OutputConfig::default(),
            interrupt_after: None,
        }
    }

    /// Checks every parameter against the preconditions of the module that
    /// consumes it. The message starts with the key path.
    pub fn validate(&self) -> Result<()> {
        let at = |key: &str, e: Error| match e {
            Error::Config(m) | Error::Parameter(m) => Error::Config(format!("{key}: {m}")),
            other => other,
        };
        if self.n < 2 {
            return Err(Error::Config(format!("n: dimension must be at least 2 (got {})", self.n)));
        }
        self.integrator.validate().map_err(|e| at("integrator", e))?;
        self.grid.validate().map_err(|e| at("grid", e))?;
        match &self.initial {
            InitialData::Dumbbell { neck_width, sharpness, scale, extinction_floor } => {
                if !(*neck_width > 0.0 && *neck_width < 1.0) {
                    return Err(Error::Config("initial.dumbbell.neck_width must be in (0,1)".into()));
                }
                if *sharpness == 0 {
                    return Err(Error::Config("initial.dumbbell.sharpness must be at least 1".into()));
                }
                if scale.is_some_and(|s| !(s > 0.0)) || !(*extinction_floor > 0.0) {
                    return Err(Error::Config("initial.dumbbell.scale and extinction_floor must be positive".into()));
                }
            }
            InitialData::Sphere { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("initial.sphere.radius must be positive".into()));
                }
            }
            InitialData::Cylinder { radius, half_length } => {
                if !(*radius > 0.0 && *half_length > 0.0) {
                    return Err(Error::Config("initial.cylinder.radius and half_length must be positive".into()));
                }
            }
        }
        let s = &self.spectral;
        if s.max_mode < 2 {
            return Err(Error::Config("spectral.max_mode must be at least 2".into()));
        }
        if s.k_w < 4 || !s.k_w.is_multiple_of(2) {
            return Err(Error::Config("spectral.k_w must be even and at least 4".into()));
        }
        if s.cutoffs.is_empty() || s.cutoffs.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("spectral.cutoffs must be a non-empty list of positive numbers".into()));
        }
        let a = &self.analysis;
        if !(a.tau_start.is_finite() && a.span > 0.0 && a.r_max > 0.0) {
            return Err(Error::Config("analysis: tau_start must be finite, span and r_max positive".into()));
        }
        let b = &self.barrier;
        if !(b.c > 0.0 && b.l > 1.0 && b.compare_l > 1.0) {
            return Err(Error::Config("barrier: c must be positive, l and compare_l above 1".into()));
        }
        if !(b.tau_min > 0.0 && b.tau_max >= b.tau_min && b.tau_points >= 1 && b.u_points >= 2) {
            return Err(Error::Config("barrier: certification grid is empty".into()));
        }
        if self.output.snapshot_stride == 0 {
            return Err(Error::Config("output.snapshot_stride must be at least 1".into()));
        }
        if self.interrupt_after == Some(0) {
            return Err(Error::Config("interrupt_after must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of analysis passes (one per cutoff).
    pub fn sweep_len(&self) -> usize {
        self.spectral.cutoffs.len()
    }

    pub fn initial_profile(&self) -> Result<FlowProfile> {
        match &self.initial {
            InitialData::Dumbbell { neck_width, sharpness, scale, extinction_floor } => dumbbell(&DumbbellParams {
                n: self.n,
                neck_width: *neck_width,
                sharpness: *sharpness,
                scale: scale.unwrap_or_else(|| scale_for_extinction_bound(self.n, *neck_width, *extinction_floor)),
                grid: self.grid,
            }),
            InitialData::Sphere { radius } => round_sphere(self.n, *radius, self.grid),
            InitialData::Cylinder { radius, half_length } => cylinder(self.n, *radius, *half_length, self.grid.nodes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedConfig {
    pub config: RunConfig,
    /// Keys present in the file but not used by any field.
    pub ignored: Vec<String>,
}

pub fn parse_config_str(text: &str, strict: bool) -> Result<ParsedConfig> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let mut ignored = Vec::new();
    let config: RunConfig =
        serde_ignored::deserialize(de, |path| ignored.push(path.to_string())).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    if strict {
        if let Some(key) = ignored.first() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
    }
    config.validate()?;
    Ok(ParsedConfig { config, ignored })
}

pub fn parse_config(path: &Path, strict: bool) -> Result<ParsedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, strict)
}

/// Exclusive ownership of an output directory for the lifetime of the value.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Config(format!("output directory {} is locked by another run ({})", dir.display(), path.display())))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// One line of checkpoint.jsonl: a snapshot with the neck samples taken since
/// the previous record, or the final stop marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub snapshot: Option<Snapshot>,
    pub neck: Vec<(f64, f64)>,
    pub steps: u64,
    pub stop: Option<StopReason>,
}

/// Rebuilds a trajectory from checkpoint records. A truncated final line (an
/// interrupted write) is dropped; the number of valid lines is returned too.
pub fn read_checkpoint(path: &Path) -> Result<(FlowTrajectory, usize)> {
    let f = File::open(path)?;
    let mut traj = FlowTrajectory { snapshots: Vec::new(), neck: Vec::new(), steps: 0, stop: None };
    let mut lines = 0;
    for line in BufReader::new(f).lines() {
        let line = line?;
        let rec: CheckpointRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(_) => break,
        };
        lines += 1;
        if let Some(s) = rec.snapshot {
            traj.snapshots.push(s);
        }
        traj.neck.extend(rec.neck);
        traj.steps = rec.steps;
        traj.stop = rec.stop;
    }
    if traj.snapshots.is_empty() {
        return Err(Error::InsufficientData(format!("no snapshot in {}", path.display())));
    }
    Ok((traj, lines))
}

struct CheckpointWriter {
    out: Option<BufWriter<File>>,
    neck_written: usize,
    count: usize,
}

impl CheckpointWriter {
    fn push(&mut self, traj: &FlowTrajectory, snapshot: Option<&Snapshot>) -> Result<()> {
        let neck = traj.neck[self.neck_written..].to_vec();
        self.neck_written = traj.neck.len();
        if snapshot.is_some() {
            self.count += 1;
        }
        if let Some(w) = &mut self.out {
            let rec = CheckpointRecord { snapshot: snapshot.cloned(), neck, steps: traj.steps, stop: traj.stop };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub trajectory: FlowTrajectory,
    pub error: Option<Error>,
    pub interrupted: bool,
    pub resumed_from: Option<usize>,
}

/// Integrates the configured initial data, persisting each snapshot to
/// `dir/checkpoint.jsonl` as it is taken. With `resume`, continues from the
/// last persisted snapshot. Errors are returned only for configuration and
/// I/O problems; a numerical failure is carried in the outcome together with
/// the trajectory so far.
pub fn simulate(cfg: &RunConfig, dir: Option<&Path>, resume: bool) -> Result<SimOutcome> {
    let ckpt = dir.map(|d| d.join("checkpoint.jsonl"));
    let existing = match &ckpt {
        Some(p) if resume && p.exists() => Some(read_checkpoint(p)?),
        _ => None,
    };
    let mut writer = CheckpointWriter { out: None, neck_written: 0, count: 0 };
    let resumed_from = existing.as_ref().map(|(t, _)| t.snapshots.len());
    let mut it = match existing {
        Some((traj, lines)) => {
            if let Some(p) = &ckpt {
                // keep exactly the valid records, then append
                let text = fs::read_to_string(p)?;
                let keep: String = text.lines().take(lines).flat_map(|l| [l, "\n"]).collect();
                fs::write(p, keep)?;
                writer.out = Some(BufWriter::new(OpenOptions::new().append(true).open(p)?));
            }
            writer.neck_written = traj.neck.len();
            writer.count = traj.snapshots.len();
            if traj.stop.is_some() {
                return Ok(SimOutcome { trajectory: traj, error: None, interrupted: false, resumed_from });
            }
            let it = Integrator::resume(traj, cfg.integrator.clone())?;
            writer.neck_written = it.trajectory().neck.len();
            it
        }
        None => {
            let it = Integrator::new(cfg.initial_profile()?, cfg.integrator.clone())?;
            if let Some(p) = &ckpt {
                writer.out = Some(BufWriter::new(File::create(p)?));
            }
            writer.push(it.trajectory(), Some(it.trajectory().last()))?;
            it
        }
    };
    loop {
        if cfg.interrupt_after == Some(writer.count) && resumed_from.is_none_or(|r| r < writer.count) {
            return Ok(SimOutcome { trajectory: it.into_trajectory(), error: None, interrupted: true, resumed_from });
        }
        let before = it.trajectory().snapshots.len();
        match it.advance_to_snapshot() {
            Ok(stop) => {
                if it.trajectory().snapshots.len() > before {
                    let snap = it.trajectory().last().clone();
                    writer.push(it.trajectory(), Some(&snap))?;
                }
                if stop.is_some() {
                    writer.push(it.trajectory(), None)?;
                    return Ok(SimOutcome { trajectory: it.into_trajectory(), error: None, interrupted: false, resumed_from });
                }
            }
            Err(e) => {
                return Ok(SimOutcome { trajectory: it.into_trajectory(), error: Some(e), interrupted: false, resumed_from });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "simulate")]
    Simulate,
    #[serde(rename = "estimate_T")]
    EstimateT,
    #[serde(rename = "rescale")]
    Rescale,
    #[serde(rename = "track")]
    Track,
    #[serde(rename = "classify")]
    Classify,
    #[serde(rename = "fit")]
    Fit,
    #[serde(rename = "barrier")]
    Barrier,
}

/// Short machine-readable name of an error kind.
pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidProfile(_) => "invalid-profile",
        Error::BlowUpPassed { .. } => "blow-up-passed",
        Error::Instability { .. } => "instability",
        Error::NotANeckpinch(_) => "not-a-neckpinch",
        Error::Domain(_) => "domain",
        Error::InsufficientData(_) => "insufficient-data",
        Error::WindowExceeded(_) => "window-exceeded",
        Error::Truncation(_) => "truncation",
        Error::ModeRange { .. } => "mode-range",
        Error::Config(_) => "config",
        Error::Parameter(_) => "parameter",
        Error::Extraction(_) => "extraction",
        Error::UnknownSeries(_) => "unknown-series",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Cutoff A of the analysis pass, for per-pass stages.
    pub pass: Option<f64>,
    pub ok: bool,
    pub error_kind: Option<String>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Interrupted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub steps: u64,
    pub snapshots: usize,
    pub t_final: f64,
    pub stop: Option<StopReason>,
    pub t_estimate: Option<TEstimate>,
    /// max of sup|Rm|·(T_est − t) over the snapshots
    pub type1_max: Option<f64>,
    /// critical points of ψ per snapshot
    pub sturm_counts: Vec<usize>,
    pub sturm_nonincreasing: bool,
    /// None when ν ≥ 0 on every snapshot
    pub hiv_margin_min: Option<f64>,
}

/// Terminal τ·a₁ and the neutral fit recomputed with T at both ends of the bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TSensitivity {
    pub t: [f64; 3],
    pub q: [f64; 3],
    pub terminal_tau_a1: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    /// max over the pass of τ·u_σσ(neck) and τ·(1 − u(neck))
    pub c0: f64,
    pub neck_gap_max: f64,
    pub neck_curvature_max: f64,
    pub max_b_ratio: f64,
    pub max_sup_ratio: f64,
    /// max of √τ·sup|u_σ| on |σ| ≤ A√τ
    pub gradient_max: f64,
    /// min u on |σ| ≤ 4A√τ, over τ ≥ tau_start + 1
    pub u_min_after_transient: f64,
    pub bump_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSummary {
    pub checked: usize,
    pub violations: usize,
    /// max |gap|/envelope
    pub worst_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub c0: f64,
    pub c: f64,
    pub l: f64,
    pub zfield_slices: usize,
    pub zfield_skipped: usize,
    /// Z ≡ 0 on the run; comparison holds trivially.
    pub vacuous: bool,
    pub comparison: Option<WindowComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub a: f64,
    pub samples: usize,
    /// rescaled snapshots dropped because 2A√τ exceeds their σ-extent
    pub window_skipped: usize,
    pub classification: Option<Classification>,
    pub asymptotics: Option<AsymptoticsReport>,
    pub sensitivity: Option<TSensitivity>,
    pub monitors: Option<MonitorSummary>,
    pub relation: Option<RelationSummary>,
    pub barrier: Option<BarrierReport>,
    pub series_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub n: usize,
    pub c: f64,
    pub l: f64,
    pub grid: CertGrid,
    pub search: B0Search,
    /// margin at B = 2B₀
    pub margin_at_double: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub status: RunStatus,
    pub stages: Vec<StageRecord>,
    pub resumed_from: Option<usize>,
    pub trajectory: Option<TrajectorySummary>,
    pub certification: Option<Certification>,
    pub passes: Vec<PassReport>,
    pub files: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn first_error(&self) -> Option<&StageRecord> {
        self.stages.iter().find(|s| !s.ok)
    }
}

/// In-memory results of one analysis pass.
#[derive(Debug, Clone)]
pub struct PassData {
    pub a: f64,
    /// rescaled profiles used by the pass and their snapshot indices
    pub seq: Vec<RescaledProfile>,
    pub snapshot_index: Vec<usize>,
    pub track: Option<ModeTrack>,
    pub zfield: Option<ZField>,
    /// min(Z̄ − Z) per sample at the fitted B (NaN without a comparison)
    pub margins: Vec<f64>,
}

/// Everything a run produced, in memory; `report` is what gets persisted.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub report: RunReport,
    pub trajectory: Option<FlowTrajectory>,
    pub t_estimate: Option<TEstimate>,
    pub passes: Vec<PassData>,
}

impl Pipeline {
    fn new(cfg: &RunConfig) -> Self {
        Pipeline {
            report: RunReport {
                config: cfg.clone(),
                status: RunStatus::Complete,
                stages: Vec::new(),
                resumed_from: None,
                trajectory: None,
                certification: None,
                passes: Vec::new(),
                files: Vec::new(),
                wall_clock_s: 0.0,
            },
            trajectory: None,
            t_estimate: None,
            passes: Vec::new(),
        }
    }

    fn record<T>(&mut self, stage: Stage, pass: Option<f64>, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => {
                self.report.stages.push(StageRecord { stage, pass, ok: true, error_kind: None, message: None });
                Some(v)
            }
            Err(e) => {
                self.report.stages.push(StageRecord { stage, pass, ok: false, error_kind: Some(error_kind(&e).into()), message: Some(e.to_string()) });
                self.report.status = RunStatus::Failed;
                None
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    pub resume: bool,
    /// Overrides `output.snapshot_stride`.
    pub stride: Option<usize>,
}

fn out_dir(cfg: &RunConfig, opts: &RunOptions) -> Option<PathBuf> {
    opts.out.clone().or_else(|| cfg.output.dir.clone())
}

/// simulate → estimate T → rescale → track → classify → fit → barrier.
/// Every stage outcome is recorded in the report; after a failure the later
/// stages of the same pass are skipped and the partial report is still
/// written. Returns `Err` only for configuration and I/O errors.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<Pipeline> {
    cfg.validate()?;
    let clock = Instant::now();
    let dir = out_dir(cfg, opts);
    let _lock = dir.as_deref().map(OutputLock::acquire).transpose()?;
    if let Some(d) = &dir {
        fs::write(d.join("config.toml"), toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?)?;
    }
    let sim = simulate(cfg, dir.as_deref(), opts.resume)?;
    let mut p = Pipeline::new(cfg);
    p.report.resumed_from = sim.resumed_from;
    let interrupted = sim.interrupted;
    p.record(Stage::Simulate, None, sim.error.map_or(Ok(()), Err));
    if interrupted {
        p.report.status = RunStatus::Interrupted;
        p.report.trajectory = Some(trajectory_summary(&sim.trajectory, None));
        p.trajectory = Some(sim.trajectory);
    } else {
        analyze_trajectory(&mut p, cfg, sim.trajectory);
    }
    finish(&mut p, cfg, opts, dir.as_deref(), clock)?;
    Ok(p)
}

/// Re-runs the analysis on the checkpoint persisted in the output directory.
pub fn analyze_persisted(cfg: &RunConfig, opts: &RunOptions) -> Result<Pipeline> {
    cfg.validate()?;
    let clock = Instant::now();
    let dir = out_dir(cfg, opts).ok_or_else(|| Error::Config("analyze needs an output directory".into()))?;
    let _lock = OutputLock::acquire(&dir)?;
    let (traj, _) = read_checkpoint(&dir.join("checkpoint.jsonl"))?;
    let mut p = Pipeline::new(cfg);
    p.record(Stage::Simulate, None, Ok(()));
    analyze_trajectory(&mut p, cfg, traj);
    finish(&mut p, cfg, opts, Some(&dir), clock)?;
    Ok(p)
}

fn finish(p: &mut Pipeline, cfg: &RunConfig, opts: &RunOptions, dir: Option<&Path>, clock: Instant) -> Result<()> {
    if let Some(d) = dir {
        let stride = opts.stride.unwrap_or(cfg.output.snapshot_stride);
        let mut which = vec!["neck", "monitors"];
        if cfg.output.snapshots {
            which.push("snapshots");
        }
        if cfg.output.modes {
            which.push("modes");
        }
        let mut files = Vec::new();
        for w in which {
            for f in export_series(p, w, d, stride)? {
                files.push(f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            }
        }
        for pass in &mut p.report.passes {
            let name = modes_file_name(pass.a);
            if files.contains(&name) {
                pass.series_file = Some(name);
            }
        }
        files.push("report.json".into());
        p.report.files = files;
    }
    p.report.wall_clock_s = clock.elapsed().as_secs_f64();
    if let Some(d) = dir {
        fs::write(d.join("report.json"), serde_json::to_string_pretty(&p.report)?)?;
    }
    Ok(())
}

fn trajectory_summary(traj: &FlowTrajectory, te: Option<&TEstimate>) -> TrajectorySummary {
    let sturm_counts: Vec<usize> = traj.snapshots.iter().map(|s| s.summary.feature_count).collect();
    TrajectorySummary {
        steps: traj.steps,
        snapshots: traj.snapshots.len(),
        t_final: traj.snapshots.last().map_or(0.0, |s| s.profile.t),
        stop: traj.stop,
        t_estimate: te.copied(),
        type1_max: te.map(|te| type1_products(traj, te.t_est).iter().map(|v| v.1).fold(0.0, f64::max)),
        sturm_nonincreasing: sturm_counts.windows(2).all(|w| w[1] <= w[0]),
        sturm_counts,
        hiv_margin_min: traj.snapshots.iter().filter_map(|s| s.summary.hiv_margin).reduce(f64::min),
    }
}

/// (t, sup|Rm|·(T − t)) for the snapshots before T.
pub fn type1_products(traj: &FlowTrajectory, t_est: f64) -> Vec<(f64, f64)> {
    traj.snapshots.iter().filter(|s| s.profile.t < t_est).map(|s| (s.profile.t, s.summary.rm_sup * (t_est - s.profile.t))).collect()
}

fn rescale_all(traj: &FlowTrajectory, t_est: f64, tau_start: f64) -> Result<(Vec<RescaledProfile>, Vec<usize>)> {
    let picked: Vec<usize> = (0..traj.snapshots.len()).filter(|&i| traj.snapshots[i].profile.t < t_est).collect();
    let seq = picked.par_iter().map(|&i| rescale(&traj.snapshots[i].profile, t_est)).collect::<Result<Vec<_>>>()?;
    let (seq, idx): (Vec<_>, Vec<_>) = seq.into_iter().zip(picked).filter(|(r, _)| r.tau >= tau_start).unzip();
    Ok((seq, idx))
}

fn pass_sequence(seq: &[RescaledProfile], idx: &[usize], a: f64) -> (Vec<RescaledProfile>, Vec<usize>, usize) {
    let mut out = (Vec::new(), Vec::new(), 0);
    for (r, i) in seq.iter().zip(idx) {
        if 2.0 * a * r.tau.sqrt() <= r.sigma_max() {
            out.0.push(r.clone());
            out.1.push(*i);
        } else {
            out.2 += 1;
        }
    }
    out
}

fn analyze_trajectory(p: &mut Pipeline, cfg: &RunConfig, traj: FlowTrajectory) {
    let te = match cfg.initial {
        InitialData::Cylinder { .. } => estimate_t_from_series(&traj.neck, cfg.n),
        _ => estimate_t(&traj),
    };
    let te = p.record(Stage::EstimateT, None, te);
    p.report.trajectory = Some(trajectory_summary(&traj, te.as_ref()));
    p.t_estimate = te;
    let cert = certify(cfg);
    p.report.certification = p.record(Stage::Barrier, None, cert);
    let Some(te) = te else {
        p.trajectory = Some(traj);
        return;
    };
    let rescaled = rescale_all(&traj, te.t_est, cfg.analysis.tau_start);
    // the same snapshots rescaled with T at both ends of its bracket
    let bracket = [te.t_lo, te.t_hi].map(|t| rescale_all(&traj, t, f64::NEG_INFINITY).ok());
    p.trajectory = Some(traj);
    let Some((seq, idx)) = p.record(Stage::Rescale, None, rescaled) else { return };
    for &a in &cfg.spectral.cutoffs {
        let (pseq, pidx, skipped) = pass_sequence(&seq, &idx, a);
        let mut data = PassData { a, seq: pseq, snapshot_index: pidx, track: None, zfield: None, margins: Vec::new() };
        let mut rep = PassReport {
            a,
            samples: data.seq.len(),
            window_skipped: skipped,
            classification: None,
            asymptotics: None,
            sensitivity: None,
            monitors: None,
            relation: None,
            barrier: None,
            series_file: None,
        };
        analyze_pass(p, cfg, &te, &bracket, &mut data, &mut rep);
        p.passes.push(data);
        p.report.passes.push(rep);
    }
}

fn certify(cfg: &RunConfig) -> Result<Certification> {
    let b = &cfg.barrier;
    let grid = b.grid();
    let search = find_b0(cfg.n, b.c, b.l, &grid)?;
    let params = BarrierParams { b: 2.0 * search.b0, c: b.c, l: b.l, tau0: grid.tau_min, n: cfg.n };
    let margin_at_double = crate::barrier::verify_supersolution(&params, &grid)?.min;
    Ok(Certification { n: cfg.n, c: b.c, l: b.l, grid, search, margin_at_double })
}

type Bracket = [Option<(Vec<RescaledProfile>, Vec<usize>)>; 2];

fn analyze_pass(p: &mut Pipeline, cfg: &RunConfig, te: &TEstimate, bracket: &Bracket, data: &mut PassData, rep: &mut PassReport) {
    let a = data.a;
    let sp = &cfg.spectral;
    let track = p.record(Stage::Track, Some(a), mode_track(&data.seq, CutoffSpec { a }, sp.k_w, sp.max_mode));
    let Some(track) = track else { return };
    rep.relation = Some(relation_summary(&track));
    let class_cfg = ClassifyConfig { span: cfg.analysis.span, ..ClassifyConfig::default() };
    let class = MZTrajectory::from_track(&track, "run").and_then(|t| classify(&t, &class_cfg));
    let class = p.record(Stage::Classify, Some(a), class);
    data.track = Some(track);
    let Some(class) = class else { return };
    rep.classification = Some(class.clone());
    let track = data.track.as_ref().unwrap();
    let fit = (|| -> Result<_> {
        let asym = assemble_report(&class, track, Some(&data.seq), cfg.analysis.r_max, None)?;
        let um = u_minus_one_monitors(&data.seq, track, cfg.analysis.r_max)?;
        let pm = profile_monitors(&data.seq, a)?;
        let late = cfg.analysis.tau_start + 1.0;
        let monitors = MonitorSummary {
            c0: um.c0,
            neck_gap_max: um.neck_gap.iter().cloned().fold(0.0, f64::max),
            neck_curvature_max: um.neck_curvature.iter().cloned().fold(0.0, f64::max),
            max_b_ratio: um.max_b_ratio,
            max_sup_ratio: um.max_sup_ratio,
            gradient_max: pm.gradient.iter().cloned().fold(0.0, f64::max),
            u_min_after_transient: pm.tau.iter().zip(&pm.u_min).filter(|(t, _)| **t >= late).map(|(_, u)| *u).fold(f64::INFINITY, f64::min),
            bump_exponent: pm.bump_exponent,
        };
        let sensitivity = if class.tag == CaseTag::Neutral { sensitivity(cfg, te, bracket, data, track, class.window) } else { None };
        Ok((asym, monitors, sensitivity))
    })();
    let Some((asym, monitors, sens)) = p.record(Stage::Fit, Some(a), fit) else { return };
    rep.asymptotics = Some(asym);
    rep.sensitivity = sens;
    let c0 = monitors.c0;
    rep.monitors = Some(monitors);
    if class.vacuous {
        rep.barrier = Some(BarrierReport { c0, c: 0.0, l: cfg.barrier.compare_l, zfield_slices: 0, zfield_skipped: 0, vacuous: true, comparison: None });
        data.margins = vec![f64::NAN; data.seq.len()];
        p.record(Stage::Barrier, Some(a), Ok(()));
        return;
    }
    let zf = extract_zfield(&data.seq, "run");
    let c = 2.0 * c0;
    let l = cfg.barrier.compare_l;
    let cmp = window_comparison(&zf, cfg.n, c, l, class.window);
    let mut br = BarrierReport { c0, c, l, zfield_slices: zf.slices.len(), zfield_skipped: zf.skipped, vacuous: false, comparison: None };
    data.margins = vec![f64::NAN; data.seq.len()];
    if let Ok(w) = &cmp {
        for s in &zf.slices {
            if let Some(k) = data.seq.iter().position(|r| r.tau == s.tau) {
                let one = ZField { slices: vec![s.clone()], skipped: 0, source: zf.source.clone() };
                if let Ok(r) = comparison_check(&one, &w.params) {
                    data.margins[k] = if r.samples > 0 { r.margin } else { f64::NAN };
                }
            }
        }
    }
    data.zfield = Some(zf);
    br.comparison = p.record(Stage::Barrier, Some(a), cmp);
    rep.barrier = Some(br);
}

fn relation_summary(track: &ModeTrack) -> RelationSummary {
    let mut r = RelationSummary { checked: 0, violations: 0, worst_ratio: 0.0 };
    for s in &track.samples {
        for (g, e) in s.relation_gap.iter().zip(&s.relation_envelope) {
            r.checked += 1;
            // envelope plus a quadrature allowance
            let bound = e + 1e-12;
            if g.abs() > bound {
                r.violations += 1;
            }
            r.worst_ratio = r.worst_ratio.max(g.abs() / bound);
        }
    }
    r
}

fn terminal_tau_a1(track: &ModeTrack) -> f64 {
    track.samples.last().map_or(f64::NAN, |s| s.tau * s.a[1])
}

fn sensitivity(cfg: &RunConfig, te: &TEstimate, bracket: &Bracket, data: &PassData, track: &ModeTrack, window: (f64, f64)) -> Option<TSensitivity> {
    let sp = &cfg.spectral;
    let mid = neutral_coefficient_fit(track, window).ok()?;
    let mut q = [f64::NAN, mid.q, f64::NAN];
    let mut term = [f64::NAN, terminal_tau_a1(track), f64::NAN];
    for (slot, b) in [0, 2].into_iter().zip(bracket) {
        // the snapshots of this pass, rescaled with the other T
        let Some((bseq, bidx)) = b else { continue };
        let seq: Vec<RescaledProfile> = data.snapshot_index.iter().filter_map(|i| bidx.iter().position(|j| j == i).map(|k| bseq[k].clone())).collect();
        let seq: Vec<RescaledProfile> = seq.into_iter().filter(|r| 2.0 * data.a * r.tau.sqrt() <= r.sigma_max()).collect();
        if let Ok(t) = mode_track(&seq, CutoffSpec { a: data.a }, sp.k_w, sp.max_mode) {
            let end = t.samples.last().map_or(window.1, |s| s.tau);
            if let Ok(f) = neutral_coefficient_fit(&t, (end - (window.1 - window.0), end)) {
                q[slot] = f.q;
            }
            term[slot] = terminal_tau_a1(&t);
        }
    }
    Some(TSensitivity { t: [te.t_lo, te.t_est, te.t_hi], q, terminal_tau_a1: term })
}

pub fn modes_file_name(a: f64) -> String {
    format!("modes_A{a}.csv")
}

/// Header of the modes table for modes 0..=m.
pub fn modes_header(m: usize) -> String {
    let mut cols = vec!["tau".to_string()];
    cols.extend((0..=m).map(|k| format!("a{k}")));
    cols.extend((0..=m).map(|k| format!("b{k}")));
    cols.extend(["x", "y", "z", "zeta", "I", "P", "b_mode", "rm_sup", "T_est", "u_neck", "margin"].map(String::from));
    cols.join(",")
}

/// One exported snapshot with derived arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub index: usize,
    pub step: u64,
    pub t: f64,
    /// −log(T_est − t) when T_est is known and t < T_est
    pub tau: Option<f64>,
    pub n: usize,
    pub outer: OuterBoundary,
    pub x_grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub s: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_sph: Vec<f64>,
    pub rm_sup: f64,
}

impl SnapshotRecord {
    pub fn profile(&self) -> Result<FlowProfile> {
        FlowProfile::new(self.n, self.t, self.x_grid.clone(), self.psi.clone(), self.phi.clone(), self.outer)
    }
}

fn snapshot_record(index: usize, snap: &Snapshot, t_est: Option<f64>) -> Result<SnapshotRecord> {
    let p = &snap.profile;
    let c = curvatures(p)?;
    Ok(SnapshotRecord {
        index,
        step: snap.summary.step,
        t: p.t,
        tau: t_est.filter(|t| p.t < *t).map(|t| -(t - p.t).ln()),
        n: p.n,
        outer: p.outer,
        x_grid: p.x_grid.clone(),
        psi: p.psi.clone(),
        phi: p.phi.clone(),
        s: arclength(p),
        k_rad: c.k_rad,
        k_sph: c.k_sph,
        rm_sup: snap.summary.rm_sup,
    })
}

pub fn read_snapshot_records(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let f = File::open(path)?;
    BufReader::new(f).lines().map(|l| Ok(serde_json::from_str(&l?)?)).collect()
}

fn push_row(out: &mut String, vals: impl IntoIterator<Item = f64>) {
    let mut first = true;
    for v in vals {
        if !first {
            out.push(',');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

/// Writes one family of series into `dir`: "modes" (one CSV per pass),
/// "snapshots" (JSONL, every `stride`-th), "neck" or "monitors" (CSV).
pub fn export_series(p: &Pipeline, which: &str, dir: &Path, stride: usize) -> Result<Vec<PathBuf>> {
    let t_est = p.t_estimate.map(|t| t.t_est);
    match which {
        "modes" => {
            let traj = p.trajectory.as_ref();
            let mut files = Vec::new();
            for pass in &p.passes {
                let Some(track) = &pass.track else { continue };
                let mut out = modes_header(track.max_mode);
                out.push('\n');
                for (k, s) in track.samples.iter().enumerate() {
                    let rm = traj.map_or(f64::NAN, |t| t.snapshots[pass.snapshot_index[k]].summary.rm_sup);
                    let margin = pass.margins.get(k).copied().unwrap_or(f64::NAN);
                    let tail = [s.x, s.y, s.z, s.zeta, s.i, s.p, s.b_mode, rm, t_est.unwrap_or(f64::NAN), pass.seq[k].u[0], margin];
                    push_row(&mut out, std::iter::once(s.tau).chain(s.a.iter().copied()).chain(s.b.iter().copied()).chain(tail));
                }
                let path = dir.join(modes_file_name(pass.a));
                fs::write(&path, out)?;
                files.push(path);
            }
            Ok(files)
        }
        "snapshots" => {
            let stride = stride.max(1);
            let path = dir.join("snapshots.jsonl");
            let mut w = BufWriter::new(File::create(&path)?);
            if let Some(traj) = &p.trajectory {
                for (i, s) in traj.snapshots.iter().enumerate().step_by(stride) {
                    serde_json::to_writer(&mut w, &snapshot_record(i, s, t_est)?)?;
                    w.write_all(b"\n")?;
                }
            }
            w.flush()?;
            Ok(vec![path])
        }
        "neck" => {
            let path = dir.join("neck.csv");
            let mut out = String::from("t,radius\n");
            if let Some(traj) = &p.trajectory {
                for (t, r) in &traj.neck {
                    push_row(&mut out, [*t, *r]);
                }
            }
            fs::write(&path, out)?;
            Ok(vec![path])
        }
        "monitors" => {
            let path = dir.join("monitors.csv");
            let mut out = String::from("t,step,rm_sup,type1,equator_radius,feature_count,neck_count,hiv_margin\n");
            if let Some(traj) = &p.trajectory {
                for s in &traj.snapshots {
                    let m = &s.summary;
                    let type1 = t_est.filter(|t| s.profile.t < *t).map_or(f64::NAN, |t| m.rm_sup * (t - s.profile.t));
                    push_row(
                        &mut out,
                        [
                            s.profile.t,
                            m.step as f64,
                            m.rm_sup,
                            type1,
                            m.equator_radius,
                            m.feature_count as f64,
                            m.neck_count as f64,
                            m.hiv_margin.unwrap_or(f64::NAN),
                        ],
                    );
                }
            }
            fs::write(&path, out)?;
            Ok(vec![path])
        }
        other => Err(Error::UnknownSeries(other.to_string())),
    }
}

/// A CSV table with a header row, parsed as numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header: Vec<String> =
            lines.next().ok_or_else(|| Error::InsufficientData(format!("{} is empty", path.display())))?.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("{}: line {}: `{v}` is not a number", path.display(), k + 2))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Config(format!("{}: line {} has {} fields, header has {}", path.display(), k + 2, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name).ok_or_else(|| Error::UnknownSeries(name.to_string()))?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// x, y, ζ trajectory from a CSV with columns tau, x, y, zeta.
pub fn read_mz_csv(path: &Path) -> Result<MZTrajectory> {
    let t = Table::read(path)?;
    MZTrajectory::new(t.column("tau")?, t.column("x")?, t.column("y")?, t.column("zeta")?, Provenance::Extracted { source: path.display().to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub name: String,
    pub reported: f64,
    pub rederived: f64,
    pub ok: bool,
}

fn json_f64(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Re-derives report scalars from the exported series in `dir`.
pub fn spot_check(dir: &Path) -> Result<Vec<SpotCheck>> {
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?;
    let mut out = Vec::new();
    let mut add = |name: String, reported: f64, rederived: f64| out.push(SpotCheck { ok: same(reported, rederived), name, reported, rederived });
    let te = &report["trajectory"]["t_estimate"];
    let monitors = Table::read(&dir.join("monitors.csv"))?;
    if !te.is_null() {
        let t_est = json_f64(&te["t_est"]);
        let type1 = monitors.column("type1")?.into_iter().filter(|v| !v.is_nan()).fold(0.0, f64::max);
        add("type1_max".into(), json_f64(&report["trajectory"]["type1_max"]), type1);
        let neck = Table::read(&dir.join("neck.csv"))?;
        let series: Vec<(f64, f64)> = neck.column("t")?.into_iter().zip(neck.column("radius")?).collect();
        let n = report["config"]["n"].as_u64().unwrap_or(2) as usize;
        if let Ok(e) = estimate_t_from_series(&series, n) {
            add("t_est".into(), t_est, e.t_est);
        }
    }
    let fc = monitors.column("feature_count")?;
    add(
        "sturm_nonincreasing".into(),
        f64::from(report["trajectory"]["sturm_nonincreasing"].as_bool().unwrap_or(false) as u8),
        f64::from(fc.windows(2).all(|w| w[1] <= w[0]) as u8),
    );
    let span = json_f64(&report["config"]["analysis"]["span"]);
    for pass in report["passes"].as_array().into_iter().flatten() {
        let Some(file) = pass["series_file"].as_str() else { continue };
        let a = json_f64(&pass["a"]);
        let table = Table::read(&dir.join(file))?;
        let tau = table.column("tau")?;
        add(format!("A={a} samples"), json_f64(&pass["samples"]), tau.len() as f64);
        if let Some(t) = table.column("T_est")?.first() {
            add(format!("A={a} T_est column"), json_f64(&te["t_est"]), *t);
        }
        let class = &pass["classification"];
        if !class.is_null() {
            let traj = read_mz_csv(&dir.join(file))?;
            let c = classify(&traj, &ClassifyConfig { span, ..ClassifyConfig::default() })?;
            let tag = serde_json::to_value(c.tag)?;
            add(format!("A={a} classification tag"), 1.0, f64::from((tag == class["tag"]) as u8));
            add(format!("A={a} stable_ratio"), json_f64(&class["stable_ratio"]), c.stable_ratio);
        }
        if let Some(nf) = pass["asymptotics"]["neutral"].as_object() {
            let a1 = table.column("a1")?;
            let k = tau.len() - 1;
            let last = nf["tau_a"].as_array().and_then(|v| v.last()).map_or(f64::NAN, |p| json_f64(&p[1]));
            add(format!("A={a} terminal tau*a1"), last, tau[k] * a1[k]);
        }
        if let Some(cmp) = pass["barrier"]["comparison"].as_object() {
            let w = &cmp["window"];
            let (lo, hi) = (json_f64(&w[0]), json_f64(&w[1]));
            let margins = table.column("margin")?;
            let neg = tau.iter().zip(&margins).filter(|(t, m)| **t >= lo && **t <= hi && **m < 0.0).count();
            let reported = cmp["fitted"]["violations"].as_u64().unwrap_or(u64::MAX);
            add(format!("A={a} fitted barrier violated"), f64::from((reported > 0) as u8), f64::from((neg > 0) as u8));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Fast identity and exact-solution checks: Hermite orthonormality and
/// recurrences, a known projection, the shrinking cylinder and the round
/// sphere's extinction time.
pub fn selftest() -> Vec<CheckLine> {
    use crate::flow::{fit_extinction, run};
    use crate::hermite::{HermiteBasis, QuadratureRule};
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: String| out.push(CheckLine { name: name.into(), passed, detail });
    let basis = HermiteBasis::new(13);
    match QuadratureRule::auto(40.0) {
        Ok(rule) => {
            let d = rule.orthonormality_defect(13);
            push("orthonormality (M = 12)", d <= 1e-10, format!("max |<h_i,h_j> - delta_ij| = {d:.3e}"));
            let mut worst: f64 = 0.0;
            for m in 0..12 {
                for k in 0..41 {
                    let s = -10.0 + 0.5 * k as f64;
                    let lhs = basis.eval_derivative(m + 1, s).unwrap_or(f64::NAN);
                    let rhs = ((m as f64 + 1.0) / 2.0).sqrt() * basis.eval(m, s).unwrap_or(f64::NAN);
                    worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
                }
            }
            push("recurrence h'_{m+1} = sqrt((m+1)/2) h_m", worst <= 1e-10, format!("max deviation {worst:.3e}"));
            let a2 = rule.inner(|s| s * s - 2.0, |s| basis.eval(2, s).unwrap_or(f64::NAN)).unwrap_or(f64::NAN);
            let want = 4.0 * std::f64::consts::PI.powf(0.25);
            push("projection of sigma^2 - 2 onto h_2", (a2 - want).abs() <= 1e-8, format!("a_2 = {a2:.12} (exact {want:.12})"));
        }
        Err(e) => push("quadrature rule", false, e.to_string()),
    }
    let cyl = cylinder(2, 1.0, 1.0, 21)
        .and_then(|p| run(p, IntegratorConfig { t_end: Some(0.2), stop_radius: 0.0, ..IntegratorConfig::default() }).map_err(|f| f.error));
    match cyl {
        Ok(tr) => {
            let want = (1.0f64 - 2.0 * 0.2).sqrt();
            let err = tr.last().profile.psi.iter().map(|v| (v - want).abs() / want).fold(0.0, f64::max);
            push("cylinder radius", err <= 1e-8, format!("relative error {err:.3e}"));
        }
        Err(e) => push("cylinder radius", false, e.to_string()),
    }
    let sphere = round_sphere(2, 1.0, GridSpec { nodes: 41, ..GridSpec::default() }).and_then(|p| {
        let tr = run(p, IntegratorConfig { stop_radius: 0.05, neck_stride: 1, ..IntegratorConfig::default() }).map_err(|f| f.error)?;
        fit_extinction(&tr.neck, 4.0)
    });
    match sphere {
        Ok((t, _, _)) => {
            let err = (t - 0.25).abs() / 0.25;
            push("sphere extinction time", err <= 1e-3, format!("T = {t:.10} (exact 0.25), relative error {err:.3e}"));
        }
        Err(e) => push("sphere extinction time", false, e.to_string()),
    }
    let lim = neutral_limit();
    push("neutral coefficient", (lim - 0.6657).abs() < 1e-4, format!("pi^(1/4)/2 = {lim:.6}"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n = 2\n[initial.dumbbell]\nneck_width = 0.2\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let p = parse_config_str(MINIMAL, true).unwrap();
        assert!(p.ignored.is_empty());
        let c = p.config;
        assert_eq!(c.spectral, SpectralConfig::default());
        assert_eq!(c.grid, default_grid());
        assert_eq!(c.integrator.cfl, 0.9);
        assert_eq!(c.sweep_len(), 1);
    }

    #[test]
    fn bad_cfl_is_rejected() {
        let e = parse_config_str(&format!("{MINIMAL}[integrator]\ncfl = 1.5\n"), false).unwrap_err();
        assert!(e.to_string().contains("cfl must be in (0,1)"), "{e}");
    }

    #[test]
    fn sweep_plan() {
        let c = parse_config_str(&format!("{MINIMAL}[spectral]\ncutoffs = [3, 4, 6]\n"), true).unwrap().config;
        assert_eq!(c.sweep_len(), 3);
    }

    #[test]
    fn unknown_keys() {
        let text = format!("{MINIMAL}[integrator]\ncfll = 0.5\n");
        let lax = parse_config_str(&text, false).unwrap();
        assert_eq!(lax.ignored, vec!["integrator.cfll".to_string()]);
        let e = parse_config_str(&text, true).unwrap_err();
        assert!(e.to_string().contains("integrator.cfll"), "{e}");
    }

    #[test]
    fn missing_key_is_named() {
        let e = parse_config_str("[initial.sphere]\nradius = 1.0\n", false).unwrap_err();
        assert!(e.to_string().contains("`n`"), "{e}");
    }

    #[test]
    fn header_names() {
        assert_eq!(modes_header(1), "tau,a0,a1,b0,b1,x,y,z,zeta,I,P,b_mode,rm_sup,T_est,u_neck,margin");
    }

    #[test]
    fn lock_is_exclusive() {
        let d = tempfile::tempdir().unwrap();
        let l = OutputLock::acquire(d.path()).unwrap();
        assert!(OutputLock::acquire(d.path()).is_err());
        drop(l);
        assert!(OutputLock::acquire(d.path()).is_ok());
    }
}
