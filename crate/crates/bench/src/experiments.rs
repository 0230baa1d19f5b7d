//! Seeded parameter sweeps with CSV, JSON and gnuplot output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ara_core::calibrator::{estimate_phase_error, mae, CalibratorConfig};
use ara_core::detector::{detect, similarity, Detection, DetectorConfig};
use ara_core::geometry::{Box3, Point3};
use ara_core::io::atomic_write;
use ara_core::model::{
    add_awgn, add_noise, simulate_drift, synthesize_ideal, uniform_phase_errors, AntennaArray, DriftModel,
    PhaseErrorVector, PlateSpec, RadarConfig, RadarCube, Scene,
};
use ara_core::pipeline::calibrate_cube;
use ara_core::ranker::{rank, RankedARA, RankerConfig};
use ara_core::spectrum::{range_angle, slice_and_normalize, TransformDescriptor, Window};
use ara_core::templates::{build_database, generate_template, TemplateDatabase, TemplateGridSpec};
use ara_core::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{capture_frames, run_baseline_frames, BaselineMethod};
use crate::beam::beamwidth_3db;
use crate::scenes::{compose, SceneOptions};
use crate::studies::{crossing, default_scan_target, scan_residual};
use crate::{trial_rng, Setup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DistanceSweep,
    OrientationSweep,
    ViewingAngleSweep,
    ArraySize,
    DriftDegradation,
    ErrorRobustness,
    IntervalStudy,
    BaselineComparison,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 8] = [
        Self::DistanceSweep,
        Self::OrientationSweep,
        Self::ViewingAngleSweep,
        Self::ArraySize,
        Self::DriftDegradation,
        Self::ErrorRobustness,
        Self::IntervalStudy,
        Self::BaselineComparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DistanceSweep => "distance-sweep",
            Self::OrientationSweep => "orientation-sweep",
            Self::ViewingAngleSweep => "viewing-angle-sweep",
            Self::ArraySize => "array-size",
            Self::DriftDegradation => "drift-degradation",
            Self::ErrorRobustness => "error-robustness",
            Self::IntervalStudy => "interval-study",
            Self::BaselineComparison => "baseline-comparison",
        }
    }

    /// Meaning of the grid parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            Self::DistanceSweep => "distance_m",
            Self::OrientationSweep | Self::ViewingAngleSweep => "angle_deg",
            Self::ArraySize | Self::DriftDegradation => "num_elements",
            Self::ErrorRobustness | Self::BaselineComparison => "error_amplitude_rad",
            Self::IntervalStudy => "days",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        match self {
            Self::DistanceSweep => vec![3.0, 4.0, 5.0, 6.0, 7.0],
            Self::OrientationSweep => vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            Self::ViewingAngleSweep => (0..=9).map(|i| i as f64 * 5.0).collect(),
            Self::ArraySize => vec![8.0, 32.0, 86.0, 128.0, 200.0, 256.0, 300.0],
            Self::DriftDegradation => vec![8.0, 32.0, 86.0, 128.0],
            Self::ErrorRobustness => (0..=12).map(|i| i as f64 * 0.25).collect(),
            Self::IntervalStudy => vec![1.0, 30.0, 74.0, 158.0, 365.0, 700.0],
            Self::BaselineComparison => vec![0.9],
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Target {
    Point,
    Plate { width_m: f64, height_m: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub rng_seed: u64,
    pub snr_db: f64,
    pub num_elements: usize,
    pub target: Target,
    /// Target range for orientation and viewing-angle sweeps.
    pub range_m: f64,
    /// Element amplitude pattern is `cos(theta)^exponent`.
    pub element_exponent: f64,
    /// Half-width of the uniform phase errors injected by sweeps that
    /// calibrate; the grid overrides it where it is the swept parameter.
    pub error_amplitude_rad: f64,
    pub days: u32,
    pub drift: DriftModel,
    pub window: Window,
    /// Captures available to the permanent-scatterer baseline.
    pub frames: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::new(ExperimentKind::DistanceSweep)
    }
}

impl ExperimentSpec {
    /// Defaults for `kind`, including its default grid.
    pub fn new(kind: ExperimentKind) -> Self {
        let target = match kind {
            ExperimentKind::ViewingAngleSweep => Target::Plate { width_m: 0.1, height_m: 0.1 },
            _ => Target::Point,
        };
        let window = match kind {
            ExperimentKind::BaselineComparison => Window::Hann,
            _ => Window::Rectangular,
        };
        Self {
            kind,
            grid: kind.default_grid(),
            trials: 20,
            rng_seed: 0,
            snr_db: 30.0,
            num_elements: 86,
            target,
            range_m: match kind {
                ExperimentKind::ViewingAngleSweep => 4.0,
                _ => 5.0,
            },
            element_exponent: 2.0,
            error_amplitude_rad: 0.5,
            days: 100,
            drift: DriftModel::default(),
            window,
            frames: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Config("experiment grid must not be empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(v) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("grid values must be finite, got {v}")));
        }
        if self.num_elements < 2 {
            return Err(Error::Config("num_elements must be at least 2".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        if let Target::Plate { width_m, height_m } = self.target {
            if !(width_m > 0.0 && height_m > 0.0) {
                return Err(Error::Config("plate target dimensions must be positive".into()));
            }
        }
        let counts = matches!(self.kind, ExperimentKind::ArraySize | ExperimentKind::DriftDegradation);
        if counts && self.grid.iter().any(|v| *v < 2.0 || v.fract() != 0.0) {
            return Err(Error::Config(format!("{} grid must hold integers >= 2", self.kind.name())));
        }
        if self.kind == ExperimentKind::IntervalStudy && self.grid.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::Config("interval-study grid must hold whole days".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One trial at one grid point. Inapplicable metrics are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub param: f64,
    pub trial: usize,
    pub method: String,
    pub status: String,
    pub similarity: f64,
    pub localization_error_m: f64,
    pub mae_before_rad: f64,
    pub mae_after_rad: f64,
    pub value: f64,
}

impl ExperimentRow {
    fn new(param: f64, trial: usize, method: &str) -> Self {
        Self {
            param,
            trial,
            method: method.to_string(),
            status: "ok".to_string(),
            similarity: f64::NAN,
            localization_error_m: f64::NAN,
            mae_before_rad: f64::NAN,
            mae_after_rad: f64::NAN,
            value: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub param: f64,
    pub method: String,
    pub trials: usize,
    /// Trials whose status is not "ok".
    pub failures: usize,
    pub mean_similarity: f64,
    pub median_localization_error_m: f64,
    pub mean_mae_before_rad: f64,
    pub mean_mae_after_rad: f64,
    pub mean_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub parameter: String,
    pub points: Vec<PointSummary>,
    /// Parameter at which mean similarity first drops below 0.7, if it does.
    pub similarity_crossing: Option<f64>,
    #[serde(skip)]
    pub rows: Vec<ExperimentRow>,
}

fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn summarize(rows: &[ExperimentRow]) -> Vec<PointSummary> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(p, m)| *p == r.param && *m == r.method) {
            keys.push((r.param, r.method.clone()));
        }
    }
    keys.into_iter()
        .map(|(param, method)| {
            let g: Vec<&ExperimentRow> = rows.iter().filter(|r| r.param == param && r.method == method).collect();
            let loc: Vec<f64> = g.iter().map(|r| r.localization_error_m).collect();
            PointSummary {
                param,
                trials: g.len(),
                failures: g.iter().filter(|r| r.status != "ok").count(),
                mean_similarity: finite_mean(g.iter().map(|r| r.similarity)),
                median_localization_error_m: median(&loc),
                mean_mae_before_rad: finite_mean(g.iter().map(|r| r.mae_before_rad)),
                mean_mae_after_rad: finite_mean(g.iter().map(|r| r.mae_after_rad)),
                mean_value: finite_mean(g.iter().map(|r| r.value)),
                method,
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Whitespace-separated columns, one index block per method.
    pub fn gnuplot_data(&self) -> String {
        let mut out = String::new();
        let mut methods: Vec<&str> = Vec::new();
        for p in &self.points {
            if !methods.contains(&p.method.as_str()) {
                methods.push(&p.method);
            }
        }
        for (i, m) in methods.iter().enumerate() {
            if i > 0 {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# {} method={m}", self.spec.kind.name());
            let _ = writeln!(
                out,
                "# {} mean_similarity median_localization_error_m mean_mae_before_rad mean_mae_after_rad mean_value",
                self.parameter
            );
            for p in self.points.iter().filter(|p| p.method == *m) {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {}",
                    p.param,
                    p.mean_similarity,
                    p.median_localization_error_m,
                    p.mean_mae_before_rad,
                    p.mean_mae_after_rad,
                    p.mean_value
                );
            }
        }
        out
    }

    /// Writes `<stem>.csv`, `<stem>.json` and `<stem>.dat` under `dir`.
    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let paths = ["csv", "json", "dat"].map(|ext| dir.join(format!("{stem}.{ext}")));
        atomic_write(&paths[0], |w| self.write_csv(w))?;
        let json = self.summary_json()?;
        atomic_write(&paths[1], |w| Ok(w.write_all(json.as_bytes())?))?;
        let dat = self.gnuplot_data();
        atomic_write(&paths[2], |w| Ok(w.write_all(dat.as_bytes())?))?;
        Ok(paths.to_vec())
    }
}

/// Grid-aligned database covering `center ± half` in x and z at y = 0.
pub fn local_database(setup: &Setup, center: Point3, half: f64, window: Window) -> Result<TemplateDatabase> {
    let d = 0.05;
    let snap = |v: f64| (v / d).round() * d;
    let volume = Box3::new(
        Point3::new(snap(center.x - half), 0.0, snap(center.z - half)),
        Point3::new(snap(center.x + half), 0.0, snap(center.z + half)),
    );
    let mut spec = TemplateGridSpec::new(volume, d);
    spec.transform = TransformDescriptor { window, ..TransformDescriptor::default() };
    build_database(&spec, &setup.array, &setup.radar)
}

/// Database used by cluttered and localization scenes.
pub fn scene_database(setup: &Setup, window: Window) -> Result<TemplateDatabase> {
    let mut spec = TemplateGridSpec::new(Box3::new(Point3::new(-3.5, 0.0, 2.0), Point3::new(3.5, 0.0, 8.0)), 0.05);
    spec.transform = TransformDescriptor { window, ..TransformDescriptor::default() };
    build_database(&spec, &setup.array, &setup.radar)
}

/// Best template around the target's range bin, ignoring the threshold.
pub fn best_match(cube: &RadarCube, db: &TemplateDatabase, bin: usize) -> Result<Option<(Point3, f64)>> {
    let spectrum = range_angle(cube, db.descriptor())?;
    let mut best: Option<(Point3, f64)> = None;
    for b in bin.saturating_sub(1)..=bin + 1 {
        if b >= spectrum.num_range_bins {
            continue;
        }
        let measured = match slice_and_normalize(&spectrum, b, db.descriptor()) {
            Ok(m) => m,
            Err(Error::DegenerateBin(_)) => continue,
            Err(e) => return Err(e),
        };
        for t in db.lookup(b).templates() {
            let m = similarity(&measured, &t)?;
            let better = match best {
                None => true,
                Some((p, bm)) => m > bm || (m == bm && t.position.lex_cmp(&p).is_lt()),
            };
            if better {
                best = Some((t.position, m));
            }
        }
    }
    Ok(best)
}

fn anchor_at(position: Point3, similarity: f64, config: &RadarConfig) -> RankedARA {
    let ranked = rank(
        &[Detection { position, similarity, range_bin_index: config.range_bin(position.norm()) }],
        &RankerConfig { min_range_m: None, dedup_radius_m: None, ..RankerConfig::default() },
    );
    ranked.ok().and_then(|mut r| r.pop()).unwrap_or(RankedARA {
        detection: Detection { position, similarity, range_bin_index: 0 },
        geometric_score: 0.0,
        final_score: 0.0,
    })
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::LowConfidence { .. } => "low-confidence",
        Error::Selection(_) => "no-ara",
        Error::DegenerateBin(_) => "degenerate-bin",
        Error::DegenerateBeam(_) => "degenerate-beam",
        _ => "error",
    }
}

fn target_scene(target: Target, center: Point3, yaw_deg: f64, gain: f64) -> Result<Scene> {
    match target {
        Target::Point => Ok(Scene::new().with_point(center, gain)),
        Target::Plate { width_m, height_m } => {
            let mut s = Scene::new();
            s.add_plate(&PlateSpec { center, width_m, height_m, yaw_deg, sigma: gain, ..PlateSpec::default() })?;
            Ok(s)
        }
    }
}

fn mean_power(cube: &RadarCube) -> f64 {
    cube.energy() / cube.data().len() as f64
}

struct Context {
    setup: Setup,
    calibrator: CalibratorConfig,
    scene_db: Option<TemplateDatabase>,
    orientation_noise: f64,
}

/// Measures a corrupted target cube against a local database: similarity and
/// localization of the best template, then calibration at that template.
#[allow(clippy::too_many_arguments)]
fn sweep_row(
    ctx: &Context,
    clean: &RadarCube,
    truth: Point3,
    errors: &PhaseErrorVector,
    noise_power: Option<f64>,
    snr_db: f64,
    window: Window,
    row: &mut ExperimentRow,
    rng: &mut impl Rng,
) -> Result<()> {
    let mut cube = clean.clone();
    cube.rotate_antennas(errors.as_slice())?;
    match noise_power {
        Some(p) => add_noise(&mut cube, p, rng),
        None => {
            add_awgn(&mut cube, snr_db, rng);
        }
    }
    let db = local_database(&ctx.setup, truth, 0.3, window)?;
    row.mae_before_rad = mae(&PhaseErrorVector::zeros(errors.len()), errors)?;
    let Some((pos, m)) = best_match(&cube, &db, ctx.setup.radar.range_bin(truth.norm()))? else {
        row.status = "no-template".into();
        return Ok(());
    };
    row.similarity = m;
    row.localization_error_m = pos.distance(truth);
    match estimate_phase_error(&cube, &anchor_at(pos, m, &ctx.setup.radar), &ctx.calibrator) {
        Ok(r) => row.mae_after_rad = mae(&r.estimated_errors, errors)?,
        Err(e) => row.status = status_of(&e).into(),
    }
    Ok(())
}

fn run_trial(spec: &ExperimentSpec, ctx: &Context, point: usize, trial: usize) -> Result<Vec<ExperimentRow>> {
    let param = spec.grid[point];
    let mut rng = trial_rng(spec.rng_seed, point, trial);
    let s = &ctx.setup;
    let n = s.array.len();
    let mut row = ExperimentRow::new(param, trial, "autocalib");
    match spec.kind {
        ExperimentKind::DistanceSweep => {
            let truth = Point3::new(0.0, 0.0, param);
            let clean = synthesize_ideal(&target_scene(spec.target, truth, 0.0, 1.0)?, &s.array, &s.radar)?;
            let errors = uniform_phase_errors(n, spec.error_amplitude_rad, &mut rng);
            sweep_row(ctx, &clean, truth, &errors, None, spec.snr_db, spec.window, &mut row, &mut rng)?;
        }
        ExperimentKind::OrientationSweep => {
            let a = param.to_radians();
            let truth = Point3::new(spec.range_m * a.sin(), 0.0, spec.range_m * a.cos());
            let gain = a.cos().max(0.0).powf(spec.element_exponent);
            let clean = synthesize_ideal(&target_scene(spec.target, truth, param, gain)?, &s.array, &s.radar)?;
            let errors = uniform_phase_errors(n, spec.error_amplitude_rad, &mut rng);
            let noise = Some(ctx.orientation_noise);
            sweep_row(ctx, &clean, truth, &errors, noise, spec.snr_db, spec.window, &mut row, &mut rng)?;
            row.value = gain;
        }
        ExperimentKind::ViewingAngleSweep => {
            // The target slides sideways at fixed depth; its normal stays on
            // the z axis, so the viewing angle equals the azimuth.
            let truth = Point3::new(spec.range_m * param.to_radians().tan(), 0.0, spec.range_m);
            let clean = synthesize_ideal(&target_scene(spec.target, truth, 0.0, 1.0)?, &s.array, &s.radar)?;
            let errors = uniform_phase_errors(n, spec.error_amplitude_rad, &mut rng);
            sweep_row(ctx, &clean, truth, &errors, None, spec.snr_db, spec.window, &mut row, &mut rng)?;
        }
        ExperimentKind::ArraySize => {
            row.method = "scan".into();
            row.value = scan_residual(param as usize, &default_scan_target(), &s.radar)?;
        }
        ExperimentKind::DriftDegradation => {
            row.method = "beam".into();
            let m = param as usize;
            let array = AntennaArray::half_wavelength(m, &s.radar)?;
            let w0 = beamwidth_3db(&array, &PhaseErrorVector::zeros(m), &s.radar)?;
            let drift = DriftModel { rng_seed: rng.gen(), ..spec.drift.clone() };
            let errors = simulate_drift(&drift, spec.days, m)?;
            row.mae_before_rad = mae(&PhaseErrorVector::zeros(m), &errors)?;
            match beamwidth_3db(&array, &errors, &s.radar) {
                Ok(w) => row.value = (w - w0) / w0 * 100.0,
                Err(e) => row.status = status_of(&e).into(),
            }
        }
        ExperimentKind::ErrorRobustness => {
            let truth = Point3::new(0.0, 0.0, 6.0);
            let mut cube = synthesize_ideal(&Scene::new().with_point(truth, 1.0), &s.array, &s.radar)?;
            let errors = uniform_phase_errors(n, param, &mut rng);
            cube.rotate_antennas(errors.as_slice())?;
            add_awgn(&mut cube, spec.snr_db, &mut rng);
            robustness_row(ctx, &cube, truth, &errors, spec.window, &mut row)?;
        }
        ExperimentKind::IntervalStudy => {
            let truth = Point3::new(0.0, 0.0, 6.0);
            let mut cube = synthesize_ideal(&Scene::new().with_point(truth, 1.0), &s.array, &s.radar)?;
            let drift = DriftModel { rng_seed: rng.gen(), ..spec.drift.clone() };
            let errors = simulate_drift(&drift, param as u32, n)?;
            cube.rotate_antennas(errors.as_slice())?;
            add_awgn(&mut cube, spec.snr_db, &mut rng);
            robustness_row(ctx, &cube, truth, &errors, spec.window, &mut row)?;
            row.value = row.mae_before_rad - row.mae_after_rad;
        }
        ExperimentKind::BaselineComparison => return baseline_rows(spec, ctx, param, trial, &mut rng),
    }
    Ok(vec![row])
}

/// Similarity against the template at the known anchor, then calibration.
fn robustness_row(
    ctx: &Context,
    cube: &RadarCube,
    truth: Point3,
    errors: &PhaseErrorVector,
    window: Window,
    row: &mut ExperimentRow,
) -> Result<()> {
    let desc = TransformDescriptor { window, ..TransformDescriptor::default() };
    let bin = ctx.setup.radar.range_bin(truth.norm());
    let template = generate_template(truth, &ctx.setup.array, &ctx.setup.radar, &desc)?;
    let measured = slice_and_normalize(&range_angle(cube, &desc)?, bin, &desc)?;
    row.similarity = similarity(&measured, &template)?;
    row.localization_error_m = 0.0;
    row.mae_before_rad = mae(&PhaseErrorVector::zeros(errors.len()), errors)?;
    match estimate_phase_error(cube, &anchor_at(truth, row.similarity, &ctx.setup.radar), &ctx.calibrator) {
        Ok(r) => row.mae_after_rad = mae(&r.estimated_errors, errors)?,
        Err(e) => {
            row.status = status_of(&e).into();
            row.mae_after_rad = row.mae_before_rad;
        }
    }
    Ok(())
}

fn baseline_rows(
    spec: &ExperimentSpec,
    ctx: &Context,
    param: f64,
    trial: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ExperimentRow>> {
    let s = &ctx.setup;
    let db = ctx.scene_db.as_ref().expect("scene database is built for baseline comparisons");
    let opts = SceneOptions { window: spec.window, ..SceneOptions::cluttered() };
    let scene = compose(s, &opts, rng)?;
    let errors = uniform_phase_errors(s.array.len(), param, rng);
    let frames = capture_frames(&scene.cube, &errors, Some(spec.snr_db), spec.frames.max(1), rng)?;
    let before = mae(&PhaseErrorVector::zeros(errors.len()), &errors)?;
    let truth = scene.anchors[0];

    let mut rows = Vec::with_capacity(4);
    let mut unc = ExperimentRow::new(param, trial, "uncalibrated");
    unc.mae_before_rad = before;
    unc.mae_after_rad = before;
    rows.push(unc);

    let mut auto = ExperimentRow::new(param, trial, "autocalib");
    auto.mae_before_rad = before;
    let detector = DetectorConfig::default();
    let ranker = RankerConfig::default();
    match calibrate_cube(&frames[0], db, &detector, &ranker, &ctx.calibrator) {
        Ok(out) => {
            let top = &out.calibration.ara_used.detection;
            auto.similarity = top.similarity;
            auto.localization_error_m = top.position.distance(truth);
            auto.mae_after_rad = mae(&out.calibration.estimated_errors, &errors)?;
        }
        Err(e) => {
            auto.status = status_of(&e).into();
            auto.mae_after_rad = before;
        }
    }
    rows.push(auto);

    for method in [BaselineMethod::stable(spec.window), BaselineMethod::permanent(spec.window)] {
        let mut row = ExperimentRow::new(param, trial, method.tag());
        row.mae_before_rad = before;
        let used = if matches!(method, BaselineMethod::StableScatterer { .. }) { &frames[..1] } else { &frames[..] };
        match run_baseline_frames(&method, used) {
            Ok(r) => {
                row.mae_after_rad = mae(&r.estimated_errors, &errors)?;
                row.value = r.ara_used.detection.range_bin_index as f64;
            }
            Err(e) => {
                row.status = status_of(&e).into();
                row.mae_after_rad = before;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let setup = Setup::ula(spec.num_elements)?;
    let calibrator = CalibratorConfig { window: spec.window, ..CalibratorConfig::default() };
    let scene_db = match spec.kind {
        ExperimentKind::BaselineComparison => Some(scene_database(&setup, spec.window)?),
        _ => None,
    };
    let orientation_noise = match spec.kind {
        ExperimentKind::OrientationSweep => {
            let boresight = Point3::new(0.0, 0.0, spec.range_m);
            let reference =
                synthesize_ideal(&target_scene(spec.target, boresight, 0.0, 1.0)?, &setup.array, &setup.radar)?;
            mean_power(&reference) / 10f64.powf(spec.snr_db / 10.0)
        }
        _ => 0.0,
    };
    let ctx = Context { setup, calibrator, scene_db, orientation_noise };
    let jobs: Vec<(usize, usize)> = (0..spec.grid.len()).flat_map(|p| (0..spec.trials).map(move |t| (p, t))).collect();
    let rows: Vec<ExperimentRow> = jobs
        .into_par_iter()
        .map(|(p, t)| run_trial(spec, &ctx, p, t))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let points = summarize(&rows);
    let curve: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.method == "autocalib")
        .map(|p| {
            (
                if spec.kind == ExperimentKind::ErrorRobustness { p.mean_mae_before_rad } else { p.param },
                p.mean_similarity,
            )
        })
        .collect();
    Ok(ExperimentReport {
        spec: spec.clone(),
        parameter: spec.kind.parameter().to_string(),
        similarity_crossing: crossing(&curve, 0.7),
        points,
        rows,
    })
}

/// Outcome of one localization scene at one detection threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizationTrial {
    pub scene: usize,
    pub threshold: f64,
    /// Per anchor: distance from the truth to the top-ranked detection within
    /// one range bin of it, or NaN when none was found.
    pub anchor_errors_m: Vec<f64>,
    /// Distance from every ranked detection to the nearest true anchor.
    pub detection_errors_m: Vec<f64>,
}

/// Runs `scenes` seeded localization scenes and ranks detections at each
/// threshold in `thresholds` on the same noisy cube. Only the threshold of
/// `detector` is overridden.
pub fn localization_study(
    setup: &Setup,
    db: &TemplateDatabase,
    detector: &DetectorConfig,
    scenes: usize,
    seed: u64,
    snr_db: f64,
    thresholds: &[f64],
) -> Result<Vec<LocalizationTrial>> {
    let opts = SceneOptions { window: db.descriptor().window, ..SceneOptions::localization() };
    let per_scene: Vec<Vec<LocalizationTrial>> = (0..scenes)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, 0, i);
            let scene = compose(setup, &opts, &mut rng)?;
            let mut cube = scene.cube.clone();
            add_awgn(&mut cube, snr_db, &mut rng);
            thresholds
                .iter()
                .map(|&tau| {
                    let detections = detect(&cube, db, &DetectorConfig { threshold: tau, ..detector.clone() })?;
                    let ranked = rank(&detections, &RankerConfig::default())?;
                    let anchor_errors_m = scene
                        .anchors
                        .iter()
                        .map(|a| {
                            let bin = setup.radar.range_bin(a.norm()) as isize;
                            ranked
                                .iter()
                                .find(|r| (r.detection.range_bin_index as isize - bin).abs() <= 1)
                                .map_or(f64::NAN, |r| r.detection.position.distance(*a))
                        })
                        .collect();
                    let detection_errors_m = ranked
                        .iter()
                        .map(|r| {
                            scene.anchors.iter().map(|a| a.distance(r.detection.position)).fold(f64::INFINITY, f64::min)
                        })
                        .collect();
                    Ok(LocalizationTrial { scene: i, threshold: tau, anchor_errors_m, detection_errors_m })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}
