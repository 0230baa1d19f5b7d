//! Anchor-free calibrators used for comparison. Both pick a range peak by a
//! signal rule and read its phases assuming equal path lengths.

use ara_core::calibrator::{CalibrationMethod, CalibrationResult};
use ara_core::detector::Detection;
use ara_core::geometry::Point3;
use ara_core::model::{add_noise, wrap_phase, PhaseErrorVector, RadarCube};
use ara_core::ranker::RankedARA;
use ara_core::spectrum::{range_transform, RangeSpectra, Window};
use ara_core::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaselineMethod {
    /// Strongest local peak of the range profile.
    StableScatterer { window: Window, floor_db: f64 },
    /// Among the strongest `candidates` peaks, the one whose inter-antenna
    /// phases vary least over `frames` repeated captures.
    PermanentScatterer { window: Window, floor_db: f64, frames: usize, candidates: usize },
}

impl BaselineMethod {
    pub fn stable(window: Window) -> Self {
        Self::StableScatterer { window, floor_db: 6.0 }
    }

    pub fn permanent(window: Window) -> Self {
        Self::PermanentScatterer { window, floor_db: 6.0, frames: 10, candidates: 5 }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::StableScatterer { .. } => "stable-scatterer",
            Self::PermanentScatterer { .. } => "permanent-scatterer",
        }
    }

    fn window(&self) -> Window {
        match self {
            Self::StableScatterer { window, .. } | Self::PermanentScatterer { window, .. } => *window,
        }
    }

    fn floor_db(&self) -> f64 {
        match self {
            Self::StableScatterer { floor_db, .. } | Self::PermanentScatterer { floor_db, .. } => *floor_db,
        }
    }
}

fn profile(spectra: &RangeSpectra) -> Vec<f64> {
    let mut out = vec![0.0; spectra.num_bins];
    for n in 0..spectra.num_antennas {
        for (o, z) in out.iter_mut().zip(spectra.row(n)) {
            *o += z.norm_sqr();
        }
    }
    out
}

/// Local maxima of the range profile standing `floor_db` above its median,
/// strongest first. Ties keep the nearer bin first.
pub fn range_peaks(power: &[f64], floor_db: f64) -> Vec<usize> {
    let mut sorted = power.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0) * 10f64.powf(floor_db / 10.0);
    let mut peaks: Vec<usize> = (0..power.len())
        .filter(|&r| {
            let p = power[r];
            let left = r == 0 || p > power[r - 1];
            let right = r + 1 == power.len() || p >= power[r + 1];
            p > 0.0 && p > floor && left && right
        })
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    peaks
}

/// Mean circular variance of the antenna-0-referenced phases at `bin`.
fn phase_variance(frames: &[RangeSpectra], bin: usize) -> f64 {
    let n = frames[0].num_antennas;
    let mut total = 0.0;
    for a in 1..n {
        let mean: Complex64 = frames
            .iter()
            .map(|f| {
                let z = f.at(a, bin) * f.at(0, bin).conj();
                if z.norm() > 0.0 {
                    z / z.norm()
                } else {
                    z
                }
            })
            .sum::<Complex64>()
            / frames.len() as f64;
        total += 1.0 - mean.norm();
    }
    total / (n - 1).max(1) as f64
}

fn result_for(cube: &RadarCube, bin: usize, values: &[Complex64]) -> Result<CalibrationResult> {
    let r = values[0].conj();
    let estimate = PhaseErrorVector::new(values.iter().map(|z| wrap_phase((z * r).arg())).collect())?;
    // Baselines know only a range; report the anchor on boresight.
    let position = Point3::new(0.0, 0.0, bin as f64 * cube.config().range_bin_width_m());
    Ok(CalibrationResult {
        estimated_errors: estimate,
        ara_used: RankedARA {
            detection: Detection { position, similarity: 0.0, range_bin_index: bin },
            geometric_score: 0.0,
            final_score: 0.0,
        },
        method: CalibrationMethod::CornerFarField,
    })
}

/// Calibrates from the measured `frames` (all sharing one error state).
pub fn run_baseline_frames(method: &BaselineMethod, frames: &[RadarCube]) -> Result<CalibrationResult> {
    let first = frames.first().ok_or_else(|| Error::Selection("no frames supplied".into()))?;
    let window = method.window();
    let spectra: Vec<RangeSpectra> = match method {
        BaselineMethod::StableScatterer { .. } => vec![range_transform(first, window)],
        BaselineMethod::PermanentScatterer { .. } => frames.iter().map(|f| range_transform(f, window)).collect(),
    };
    let peaks = range_peaks(&profile(&spectra[0]), method.floor_db());
    let bin = match method {
        BaselineMethod::StableScatterer { .. } => {
            *peaks.first().ok_or_else(|| Error::Selection("no range peak".into()))?
        }
        BaselineMethod::PermanentScatterer { candidates, .. } => peaks
            .iter()
            .take((*candidates).max(1))
            .map(|&b| (b, phase_variance(&spectra, b)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(b, _)| b)
            .ok_or_else(|| Error::Selection("no range peak".into()))?,
    };
    let values: Vec<Complex64> =
        (0..first.num_antennas()).map(|n| spectra.iter().map(|s| s.at(n, bin)).sum::<Complex64>()).collect();
    result_for(first, bin, &values)
}

/// Applies `errors` to the noiseless `clean` cube and captures the frames the
/// method needs, each with fresh noise at `snr_db` below the mean sample
/// power. Frame 0 is the one a single-shot calibrator would see.
pub fn capture_frames<R: Rng + ?Sized>(
    clean: &RadarCube,
    errors: &PhaseErrorVector,
    snr_db: Option<f64>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<RadarCube>> {
    let mut corrupted = clean.clone();
    corrupted.rotate_antennas(errors.as_slice())?;
    let noise =
        snr_db.map(|db| corrupted.energy() / corrupted.data().len() as f64 / 10f64.powf(db / 10.0)).unwrap_or(0.0);
    Ok((0..count.max(1))
        .map(|_| {
            let mut f = corrupted.clone();
            add_noise(&mut f, noise, rng);
            f
        })
        .collect())
}

/// Frames required by `method`.
pub fn frames_needed(method: &BaselineMethod) -> usize {
    match method {
        BaselineMethod::StableScatterer { .. } => 1,
        BaselineMethod::PermanentScatterer { frames, .. } => (*frames).max(1),
    }
}

pub fn run_baseline<R: Rng + ?Sized>(
    method: &BaselineMethod,
    clean: &RadarCube,
    errors: &PhaseErrorVector,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<CalibrationResult> {
    let frames = capture_frames(clean, errors, snr_db, frames_needed(method), rng)?;
    run_baseline_frames(method, &frames)
}
