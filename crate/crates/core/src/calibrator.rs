//! Phase-error estimation from a selected anchor, correction and scoring.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::geometry::Point3;
use crate::model::{propagation_phase, wrap_phase, AntennaArray, PhaseErrorVector, RadarConfig, RadarCube};
use crate::ranker::RankedARA;
use crate::spectrum::{point_range_row, range_bin_values, AngleFft, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    /// Assumes equal path lengths across the array.
    CornerFarField,
    /// Removes the modeled response of an ideal point at the anchor.
    #[default]
    AraGeometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibratorConfig {
    pub threshold: f64,
    pub method: CalibrationMethod,
    pub window: Window,
    pub angle_bins: usize,
    /// Half-width, in angle bins, of the mask applied around the anchor
    /// before reading phases. `None` reads the raw range bin.
    pub gate_half_width: Option<usize>,
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        Self {
            threshold: 0.7,
            method: CalibrationMethod::AraGeometric,
            window: Window::Rectangular,
            angle_bins: 256,
            gate_half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub estimated_errors: PhaseErrorVector,
    pub ara_used: RankedARA,
    pub method: CalibrationMethod,
}

fn anchor_bin(position: Point3, config: &RadarConfig) -> Result<usize> {
    let bin = config.range_bin(position.norm());
    if bin >= config.num_fast_time_samples {
        return Err(Error::Domain(format!("anchor {position:?} lies beyond the unambiguous range")));
    }
    Ok(bin)
}

/// Keeps angle bins within `half` of `center` and transforms back.
fn gate(values: &[Complex64], center: usize, half: usize, fft: &mut AngleFft) -> Result<Vec<Complex64>> {
    let k = fft.bins();
    let mut spec = fft.forward(values)?.to_vec();
    for (i, z) in spec.iter_mut().enumerate() {
        let d = (i + k - center) % k;
        if d.min(k - d) > half {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    fft.inverse(&spec, values.len())
}

fn peak_angle_bin(values: &[Complex64], fft: &mut AngleFft) -> Result<usize> {
    let spec = fft.forward(values)?;
    Ok((0..spec.len()).max_by(|&a, &b| spec[a].norm_sqr().total_cmp(&spec[b].norm_sqr())).unwrap_or(0))
}

/// Modeled anchor response and, if gating, the gate center.
fn ideal_response(
    position: Point3,
    array: &AntennaArray,
    config: &RadarConfig,
    cfg: &CalibratorConfig,
    fft: &mut AngleFft,
) -> Result<(Vec<Complex64>, usize)> {
    let bin = anchor_bin(position, config)?;
    let row = point_range_row(position, array, config, cfg.window, bin)?;
    let center = peak_angle_bin(&row, fft)?;
    match cfg.gate_half_width {
        Some(h) => Ok((gate(&row, center, h, fft)?, center)),
        None => Ok((row, center)),
    }
}

/// Each antenna's range-spectrum value at the anchor's range bin.
pub fn extract_anchor_response(cube: &RadarCube, position: Point3, cfg: &CalibratorConfig) -> Result<Vec<Complex64>> {
    let bin = anchor_bin(position, cube.config())?;
    let values = range_bin_values(cube, cfg.window, bin)?;
    if values.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::DegenerateBin(bin));
    }
    match cfg.gate_half_width {
        None => Ok(values),
        Some(h) => {
            let mut fft = AngleFft::new(cfg.angle_bins);
            let (_, center) = ideal_response(position, cube.array(), cube.config(), cfg, &mut fft)?;
            gate(&values, center, h, &mut fft)
        }
    }
}

/// Geometric phase of every antenna relative to antenna 0, unwrapped.
pub fn expected_phase_profile(position: Point3, array: &AntennaArray, config: &RadarConfig) -> Result<Vec<f64>> {
    let phases = array
        .positions()
        .iter()
        .map(|a| {
            let d = a.distance(position);
            if d <= 0.0 {
                return Err(Error::Domain(format!("anchor {position:?} coincides with an antenna")));
            }
            propagation_phase(d, config)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(phases.iter().map(|p| p - phases[0]).collect())
}

fn referenced_phases(values: &[Complex64]) -> Vec<f64> {
    let r = values[0].conj();
    values.iter().map(|z| (z * r).arg()).collect()
}

pub fn estimate_phase_error(cube: &RadarCube, ara: &RankedARA, cfg: &CalibratorConfig) -> Result<CalibrationResult> {
    if ara.detection.similarity < cfg.threshold {
        return Err(Error::LowConfidence { similarity: ara.detection.similarity, threshold: cfg.threshold });
    }
    let position = ara.detection.position;
    let measured = extract_anchor_response(cube, position, cfg)?;
    let estimate = match cfg.method {
        CalibrationMethod::CornerFarField => referenced_phases(&measured),
        CalibrationMethod::AraGeometric => {
            let mut fft = AngleFft::new(cfg.angle_bins);
            let (ideal, _) = ideal_response(position, cube.array(), cube.config(), cfg, &mut fft)?;
            let ratio: Vec<Complex64> = measured.iter().zip(&ideal).map(|(y, t)| y * t.conj()).collect();
            referenced_phases(&ratio)
        }
    };
    Ok(CalibrationResult {
        estimated_errors: PhaseErrorVector::new(estimate.into_iter().map(wrap_phase).collect())?,
        ara_used: ara.clone(),
        method: cfg.method,
    })
}

/// Multiplies antenna `n` by `exp(-j * errors[n])`.
pub fn apply_correction(cube: &RadarCube, errors: &PhaseErrorVector) -> Result<RadarCube> {
    ensure_len(cube.num_antennas(), errors.len())?;
    let mut out = cube.clone();
    out.rotate_antennas(errors.negated().as_slice())?;
    Ok(out)
}

pub fn apply_calibration(cube: &RadarCube, result: &CalibrationResult) -> Result<RadarCube> {
    apply_correction(cube, &result.estimated_errors)
}

/// Mean absolute wrapped difference after referencing both to antenna 0.
pub fn mae(estimated: &PhaseErrorVector, truth: &PhaseErrorVector) -> Result<f64> {
    ensure_len(truth.len(), estimated.len())?;
    if truth.is_empty() {
        return Ok(0.0);
    }
    let (e, t) = (estimated.as_slice(), truth.as_slice());
    let total: f64 = e.iter().zip(t).map(|(a, b)| wrap_phase((a - e[0]) - (b - t[0])).abs()).sum();
    Ok(total / truth.len() as f64)
}
