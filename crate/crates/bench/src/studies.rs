//! Beamwidth degradation under drift and phase fidelity versus aperture.

use ara_core::geometry::Point3;
use ara_core::model::{
    simulate_drift, synthesize_ideal, AntennaArray, DriftModel, PhaseErrorVector, PlateSpec, RadarConfig, Scene,
};
use ara_core::spectrum::{point_range_row, range_bin_values, Window};
use ara_core::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::beam::beamwidth_3db;
use crate::trial_rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegradationRow {
    pub num_elements: usize,
    pub days: u32,
    /// Mean relative widening of the main lobe, in percent.
    pub mean_loss_pct: f64,
    pub trials: usize,
    /// Trials whose main lobe could not be identified; excluded from the mean.
    pub degenerate: usize,
}

/// Mean beamwidth loss after `days` of drift for each array size. Trial `t`
/// at size index `i` draws its drift seed from stream `(i, t)` of
/// `drift.rng_seed`.
pub fn degradation_study(
    n_list: &[usize],
    days: u32,
    drift: &DriftModel,
    trials: usize,
) -> Result<Vec<DegradationRow>> {
    let config = RadarConfig::default();
    n_list
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let array = AntennaArray::half_wavelength(n, &config)?;
            let reference = beamwidth_3db(&array, &PhaseErrorVector::zeros(n), &config)?;
            let widths: Vec<Option<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let model = DriftModel { rng_seed: trial_rng(drift.rng_seed, i, t).gen(), ..drift.clone() };
                    let errors = simulate_drift(&model, days, n)?;
                    match beamwidth_3db(&array, &errors, &config) {
                        Ok(w) => Ok(Some(w)),
                        Err(Error::DegenerateBeam(_)) => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            let ok: Vec<f64> = widths.iter().flatten().copied().collect();
            let mean_loss_pct = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|w| (w - reference) / reference * 100.0).sum::<f64>() / ok.len() as f64
            };
            Ok(DegradationRow { num_elements: n, days, mean_loss_pct, trials, degenerate: trials - ok.len() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArraySizeRow {
    pub num_elements: usize,
    pub residual_rms_rad: f64,
}

/// Physical reflector scanned by the synthetic aperture. The residual stays
/// small until the scan edge nears the plate's first scattering null, near
/// sin(theta) = lambda / width; for 3 cm at 2 m that is N of roughly 250-300.
pub fn default_scan_target() -> PlateSpec {
    PlateSpec { center: Point3::new(0.0, 0.0, 2.0), width_m: 0.03, height_m: 0.03, ..PlateSpec::default() }
}

fn unwrap(phases: &mut [f64]) {
    use std::f64::consts::PI;
    for i in 1..phases.len() {
        let d = phases[i] - phases[i - 1];
        phases[i] -= (2.0 * PI) * ((d + PI) / (2.0 * PI)).floor();
    }
}

/// RMS of `y` about its least-squares line in `x`.
pub fn affine_residual_rms(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 3 {
        return 0.0;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (ss / n).sqrt()
}

/// Residual of one scan: the measured phase progression of `target` over an
/// `n`-position half-wavelength scan, divided by the ideal point response at
/// the target center, after removing a constant and a linear term.
pub fn scan_residual(n: usize, target: &PlateSpec, config: &RadarConfig) -> Result<f64> {
    let array = AntennaArray::half_wavelength(n, config)?;
    let mut scene = Scene::new();
    scene.add_plate(target)?;
    let cube = synthesize_ideal(&scene, &array, config)?;
    let bin = config.range_bin(target.center.norm());
    let measured = range_bin_values(&cube, Window::Rectangular, bin)?;
    let ideal = point_range_row(target.center, &array, config, Window::Rectangular, bin)?;
    let mut phase: Vec<f64> = measured.iter().zip(&ideal).map(|(m, i)| (m * i.conj()).arg()).collect();
    unwrap(&mut phase);
    let x: Vec<f64> = array.positions().iter().map(|p| p.x).collect();
    Ok(affine_residual_rms(&x, &phase))
}

/// Residual for every scan length in `2..=n_max`.
pub fn array_size_study(n_max: usize, target: &PlateSpec) -> Result<Vec<ArraySizeRow>> {
    if n_max < 2 {
        return Err(Error::Domain(format!("n_max must be at least 2, got {n_max}")));
    }
    let config = RadarConfig::default();
    (2..=n_max)
        .into_par_iter()
        .map(|n| Ok(ArraySizeRow { num_elements: n, residual_rms_rad: scan_residual(n, target, &config)? }))
        .collect()
}

/// First `x` where the piecewise-linear curve through `points` (sorted by
/// `x`) falls below `level`.
pub fn crossing(points: &[(f64, f64)], level: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if y0 >= level && y1 < level {
            Some(x0 + (y0 - level) / (y0 - y1) * (x1 - x0))
        } else {
            None
        }
    })
}
