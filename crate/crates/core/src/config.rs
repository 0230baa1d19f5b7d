//! TOML pipeline configuration, scene files and phase-error specifications.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibrator::{CalibrationMethod, CalibratorConfig};
use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::geometry::{Box3, Point3};
use crate::io::read_phase_vector;
use crate::model::{
    simulate_drift, uniform_phase_errors, AntennaArray, DriftModel, PhaseErrorVector, PlateSpec, RadarConfig, RcsModel,
    Scatterer, Scene,
};
use crate::ranker::RankerConfig;
use crate::spectrum::{TransformDescriptor, Window};
use crate::templates::TemplateGridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySection {
    pub num_elements: usize,
    /// Element spacing; half a wavelength when absent.
    pub spacing_m: Option<f64>,
    /// Explicit element positions, overriding the linear layout.
    pub positions: Option<Vec<Point3>>,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self { num_elements: 86, spacing_m: None, positions: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub volume_min: Point3,
    pub volume_max: Point3,
    pub resolution_m: f64,
    pub fov_deg: Option<f64>,
    pub window: Window,
    pub angle_bins: usize,
    /// Drop angle bins outside the field of view from every template.
    pub restrict_angle_bins: bool,
    pub memory_budget_bytes: Option<u64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            volume_min: Point3::new(-2.0, -2.0, 0.0),
            volume_max: Point3::new(2.0, 2.0, 8.0),
            resolution_m: 0.05,
            fov_deg: Some(20.0),
            window: Window::Rectangular,
            angle_bins: 256,
            restrict_angle_bins: true,
            memory_budget_bytes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibratorSection {
    pub method: CalibrationMethod,
    pub gate_half_width: Option<usize>,
    /// Defaults to the detector threshold.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub cube: Option<PathBuf>,
    pub database: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub radar: RadarConfig,
    pub array: ArraySection,
    pub grid: GridSection,
    pub detector: DetectorConfig,
    pub ranker: RankerConfig,
    pub calibrator: CalibratorSection,
    pub io: IoSection,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.detector.validate()?;
        self.ranker.validate()?;
        self.antenna_array()?;
        self.grid_spec()?.validate()
    }

    pub fn antenna_array(&self) -> Result<AntennaArray> {
        match &self.array.positions {
            Some(p) => AntennaArray::new(p.clone()),
            None => {
                let spacing = self.array.spacing_m.unwrap_or(self.radar.wavelength_m() / 2.0);
                AntennaArray::uniform_linear(self.array.num_elements, spacing)
            }
        }
    }

    pub fn transform(&self) -> Result<TransformDescriptor> {
        let base =
            TransformDescriptor { window: self.grid.window, angle_bins: self.grid.angle_bins, max_spatial_freq: 0.5 };
        Ok(match (self.grid.fov_deg, self.grid.restrict_angle_bins) {
            (Some(f), true) => base.with_fov(f, &self.antenna_array()?, &self.radar),
            _ => base,
        })
    }

    pub fn grid_spec(&self) -> Result<TemplateGridSpec> {
        Ok(TemplateGridSpec {
            volume: Box3::new(self.grid.volume_min, self.grid.volume_max),
            resolution_m: self.grid.resolution_m,
            transform: self.transform()?,
            fov_deg: self.grid.fov_deg,
            memory_budget_bytes: self.grid.memory_budget_bytes,
        })
    }

    /// Ranker settings with merging tied to the grid resolution.
    pub fn ranker_config(&self) -> RankerConfig {
        RankerConfig {
            dedup_radius_m: self.ranker.dedup_radius_m.map(|_| self.grid.resolution_m),
            ..self.ranker.clone()
        }
    }

    pub fn calibrator_config(&self) -> CalibratorConfig {
        CalibratorConfig {
            threshold: self.calibrator.threshold.unwrap_or(self.detector.threshold),
            method: self.calibrator.method,
            window: self.grid.window,
            angle_bins: self.grid.angle_bins,
            gate_half_width: self.calibrator.gate_half_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointEntry {
    position: Point3,
    #[serde(default = "unit")]
    sigma: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScatterEntry {
    position: Point3,
    rcs: RcsModel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SceneFile {
    point: Vec<PointEntry>,
    plate: Vec<PlateSpec>,
    scatterer: Vec<ScatterEntry>,
}

/// Parses a TOML scene with `[[point]]`, `[[plate]]` and `[[scatterer]]`
/// tables. Points come first, then plate facets, then raw scatterers.
pub fn parse_scene(text: &str) -> Result<Scene> {
    let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config(format!("scene: {e}")))?;
    let mut scene = Scene::new();
    for (i, p) in file.point.iter().enumerate() {
        let s = Scatterer::point(p.position, p.sigma);
        s.rcs.validate().map_err(|e| Error::Config(format!("scene: point[{i}]: {e}")))?;
        if !p.position.is_finite() {
            return Err(Error::Config(format!("scene: point[{i}].position is not finite")));
        }
        scene.scatterers.push(s);
    }
    for (i, plate) in file.plate.iter().enumerate() {
        scene.add_plate(plate).map_err(|e| Error::Config(format!("scene: plate[{i}]: {e}")))?;
    }
    for (i, s) in file.scatterer.iter().enumerate() {
        s.rcs.validate().map_err(|e| Error::Config(format!("scene: scatterer[{i}].rcs: {e}")))?;
        scene.scatterers.push(Scatterer { position: s.position, rcs: s.rcs.clone() });
    }
    Ok(scene)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// How injected phase errors are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorSpec {
    Zeros,
    Uniform { amplitude: f64, seed: u64 },
    Drift { days: u32, model: DriftModel },
    File(PathBuf),
}

impl ErrorSpec {
    /// Accepts `zeros`, `uniform:<amp>:seed=<s>`,
    /// `drift:<days>days:seed=<s>[:rate=<rad/day>][:common]` and `file:<path>`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("bad error spec '{text}': {why}"));
        if text == "zeros" {
            return Ok(ErrorSpec::Zeros);
        }
        if let Some(path) = text.strip_prefix("file:") {
            return Ok(ErrorSpec::File(PathBuf::from(path)));
        }
        let mut parts = text.split(':');
        let kind = parts.next().unwrap_or_default();
        match kind {
            "uniform" => {
                let amplitude: f64 = parts
                    .next()
                    .ok_or_else(|| bad("missing amplitude"))?
                    .parse()
                    .map_err(|_| bad("amplitude is not a number"))?;
                let mut seed = 0;
                for p in parts {
                    seed = p
                        .strip_prefix("seed=")
                        .ok_or_else(|| bad("unknown option"))?
                        .parse()
                        .map_err(|_| bad("seed"))?;
                }
                if !(amplitude >= 0.0) {
                    return Err(bad("amplitude must be >= 0"));
                }
                Ok(ErrorSpec::Uniform { amplitude, seed })
            }
            "drift" => {
                let days: u32 = parts
                    .next()
                    .and_then(|d| d.strip_suffix("days").or_else(|| d.strip_suffix("d")))
                    .ok_or_else(|| bad("expected <n>days"))?
                    .parse()
                    .map_err(|_| bad("days is not an integer"))?;
                let mut model = DriftModel::default();
                for p in parts {
                    if let Some(v) = p.strip_prefix("seed=") {
                        model.rng_seed = v.parse().map_err(|_| bad("seed"))?;
                    } else if let Some(v) = p.strip_prefix("rate=") {
                        model.mean_abs_drift_rad_per_day = v.parse().map_err(|_| bad("rate"))?;
                    } else if p == "common" {
                        model.per_antenna_independence = false;
                    } else {
                        return Err(bad("unknown option"));
                    }
                }
                Ok(ErrorSpec::Drift { days, model })
            }
            _ => Err(bad("unknown kind")),
        }
    }

    pub fn realize(&self, n: usize) -> Result<PhaseErrorVector> {
        let v = match self {
            ErrorSpec::Zeros => PhaseErrorVector::zeros(n),
            ErrorSpec::Uniform { amplitude, seed } => {
                uniform_phase_errors(n, *amplitude, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
            ErrorSpec::Drift { days, model } => simulate_drift(model, *days, n)?,
            ErrorSpec::File(p) => read_phase_vector(p)?,
        };
        if v.len() != n {
            return Err(Error::Shape { expected: n, got: v.len() });
        }
        Ok(v)
    }
}
