//! Per-range-bin template matching.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::geometry::Point3;
use crate::model::RadarCube;
use crate::spectrum::{range_angle, RangeAngleSpectrum, SpatialSpectrum};
use crate::templates::{setup_hash, BinView, Template, TemplateDatabase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub threshold: f64,
    pub max_candidates_per_bin: usize,
    /// Skip bins whose power is less than this many dB above the median bin.
    pub noise_floor_db: Option<f64>,
    /// Score a template only where the measured power at its peak angle is a
    /// local maximum across neighbouring range bins. Suppresses matches on
    /// range sidelobes of a target in the adjacent bin.
    pub range_peak_gate: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { threshold: 0.7, max_candidates_per_bin: 8, noise_floor_db: Some(6.0), range_peak_gate: true }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1], got {}", self.threshold)));
        }
        if self.max_candidates_per_bin == 0 {
            return Err(Error::Config("max_candidates_per_bin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub position: Point3,
    pub similarity: f64,
    pub range_bin_index: usize,
}

/// Magnitude of the normalized complex inner product.
pub fn similarity(measured: &SpatialSpectrum, template: &Template) -> Result<f64> {
    ensure_len(template.spectrum.values.len(), measured.values.len())?;
    let m_norm = measured.norm();
    if !(m_norm > 0.0) {
        return Err(Error::DegenerateBin(measured.range_bin_index));
    }
    let t_norm = template.spectrum.norm();
    if !(t_norm > 0.0) {
        return Err(Error::Domain("template has zero norm".into()));
    }
    let ip: Complex64 = measured.values.iter().zip(&template.spectrum.values).map(|(s, t)| s * t.conj()).sum();
    Ok((ip.norm() / (m_norm * t_norm)).min(1.0))
}

/// Similarity of a unit-norm measurement against stored template `i`.
fn stored_similarity(unit: &[Complex64], view: &BinView<'_>, i: usize) -> f64 {
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (s, t) in unit.iter().zip(view.spectrum(i)) {
        let (tr, ti) = (t.re as f64, t.im as f64);
        re += s.re * tr + s.im * ti;
        im += s.im * tr - s.re * ti;
    }
    ((re * re + im * im).sqrt() * view.inv_norm(i)).min(1.0)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn score_bin(
    ra: &RangeAngleSpectrum,
    db: &TemplateDatabase,
    bin: usize,
    floor: Option<f64>,
    powers: &[f64],
    cfg: &DetectorConfig,
) -> Vec<Detection> {
    let view = db.lookup(bin);
    if view.is_empty() || bin >= ra.num_range_bins {
        return Vec::new();
    }
    if floor.is_some_and(|f| powers[bin] < f) {
        return Vec::new();
    }
    let kept = db.descriptor().kept_bins();
    let Ok(unit) = SpatialSpectrum::from_row(ra.row(bin), &kept, bin).normalize() else {
        return Vec::new();
    };
    let row = ra.row(bin);
    let prev = (bin > 0).then(|| ra.row(bin - 1));
    let next = (bin + 1 < ra.num_range_bins).then(|| ra.row(bin + 1));
    let mut out = Vec::new();
    for i in 0..view.len() {
        if cfg.range_peak_gate {
            let a = view.peak_bin(i);
            let here = row[a].norm_sqr();
            if prev.is_some_and(|p| p[a].norm_sqr() > here) || next.is_some_and(|n| n[a].norm_sqr() > here) {
                continue;
            }
        }
        let m = stored_similarity(&unit.values, &view, i);
        if m >= cfg.threshold {
            out.push(Detection { position: view.position(i), similarity: m, range_bin_index: bin });
        }
    }
    out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.position.lex_cmp(&b.position)));
    out.truncate(cfg.max_candidates_per_bin);
    out
}

/// Detections sorted by range bin, then descending similarity.
pub fn detect(cube: &RadarCube, db: &TemplateDatabase, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    db.check_hash(setup_hash(cube.config(), cube.array(), db.descriptor()))?;
    let ra = range_angle(cube, db.descriptor())?;
    let powers: Vec<f64> = (0..ra.num_range_bins).map(|r| ra.row_power(r)).collect();
    let floor = cfg.noise_floor_db.map(|db| median(&powers) * 10f64.powf(db / 10.0));
    let bins: Vec<usize> = db.range_bins().collect();
    let per_bin: Vec<Vec<Detection>> = bins.par_iter().map(|&b| score_bin(&ra, db, b, floor, &powers, cfg)).collect();
    Ok(per_bin.into_iter().flatten().collect())
}

/// Every template score in one bin, ungated and unthresholded.
pub fn score_all(cube: &RadarCube, db: &TemplateDatabase, bin: usize) -> Result<Vec<(Point3, f64)>> {
    db.check_hash(setup_hash(cube.config(), cube.array(), db.descriptor()))?;
    let ra = range_angle(cube, db.descriptor())?;
    let kept = db.descriptor().kept_bins();
    let unit = SpatialSpectrum::from_row(ra.row(bin), &kept, bin).normalize()?;
    let view = db.lookup(bin);
    Ok((0..view.len()).map(|i| (view.position(i), stored_similarity(&unit.values, &view, i))).collect())
}

pub fn localization_error(det: &Detection, truth: Point3) -> f64 {
    det.position.distance(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Box3;
    use crate::model::{synthesize_actual, synthesize_ideal, AntennaArray, PhaseErrorVector, RadarConfig, Scene};
    use crate::spectrum::TransformDescriptor;
    use crate::templates::{build_database, generate_template, TemplateGridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (RadarConfig, AntennaArray, TemplateDatabase) {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(86, &cfg).unwrap();
        let spec = TemplateGridSpec::new(Box3::new(Point3::new(-1.0, 0.0, 4.0), Point3::new(1.0, 0.0, 7.0)), 0.05);
        let db = build_database(&spec, &arr, &cfg).unwrap();
        (cfg, arr, db)
    }

    #[test]
    fn self_and_orthogonal_similarity() {
        let cfg = RadarConfig::default();
        let arr = AntennaArray::half_wavelength(8, &cfg).unwrap();
        let t = generate_template(Point3::new(0.0, 0.0, 5.0), &arr, &cfg, &TransformDescriptor::default()).unwrap();
        assert!((similarity(&t.spectrum, &t).unwrap() - 1.0).abs() < 1e-12);
        let mut a = t.clone();
        a.spectrum.values = vec![Complex64::new(0.0, 0.0); 256];
        a.spectrum.values[0] = Complex64::new(1.0, 0.0);
        let mut b = t.spectrum.clone();
        b.values = vec![Complex64::new(0.0, 0.0); 256];
        b.values[1] = Complex64::new(0.0, 2.0);
        assert_eq!(similarity(&b, &a).unwrap(), 0.0);
        b.values[1] = Complex64::new(0.0, 0.0);
        assert!(matches!(similarity(&b, &a), Err(Error::DegenerateBin(_))));
    }

    #[test]
    fn empty_scene_detects_nothing() {
        let (cfg, arr, db) = setup();
        let cube = synthesize_ideal(&Scene::new(), &arr, &cfg).unwrap();
        assert!(detect(&cube, &db, &DetectorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn grid_point_is_top_candidate() {
        let (cfg, arr, db) = setup();
        let p = Point3::new(0.3, 0.0, 5.5);
        let cube = synthesize_ideal(&Scene::new().with_point(p, 1.0), &arr, &cfg).unwrap();
        let dets = detect(&cube, &db, &DetectorConfig::default()).unwrap();
        assert!(!dets.is_empty());
        let bin = cfg.range_bin(p.norm());
        assert!(dets.iter().all(|d| d.range_bin_index == bin), "{dets:?}");
        let at_truth = dets.iter().find(|d| d.position.distance(p) < 1e-9).expect("truth detected");
        assert!(at_truth.similarity >= 0.999);
        // Exhaustive scoring: the truth is the argmax up to radial ambiguity.
        let all = score_all(&cube, &db, bin).unwrap();
        let best = all.iter().map(|x| x.1).fold(0.0, f64::max);
        assert!(best - at_truth.similarity < 1e-6);
    }

    #[test]
    fn sorted_and_capped() {
        let (cfg, arr, db) = setup();
        let scene =
            Scene::new().with_point(Point3::new(-0.5, 0.0, 4.5), 1.0).with_point(Point3::new(0.4, 0.0, 6.5), 1.0);
        let cube = synthesize_ideal(&scene, &arr, &cfg).unwrap();
        let cfg_d = DetectorConfig { max_candidates_per_bin: 3, ..Default::default() };
        let dets = detect(&cube, &db, &cfg_d).unwrap();
        for w in dets.windows(2) {
            assert!(
                w[0].range_bin_index < w[1].range_bin_index
                    || (w[0].range_bin_index == w[1].range_bin_index && w[0].similarity >= w[1].similarity)
            );
        }
        for bin in dets.iter().map(|d| d.range_bin_index) {
            assert!(dets.iter().filter(|d| d.range_bin_index == bin).count() <= 3);
        }
    }

    #[test]
    fn phase_errors_reduce_similarity() {
        let (cfg, arr, db) = setup();
        let p = Point3::new(0.0, 0.0, 6.0);
        let scene = Scene::new().with_point(p, 1.0);
        let bin = cfg.range_bin(p.norm());
        let clean = synthesize_ideal(&scene, &arr, &cfg).unwrap();
        let m0 = score_all(&clean, &db, bin).unwrap().iter().map(|x| x.1).fold(0.0, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let errs = PhaseErrorVector::new((0..86).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let noisy = synthesize_actual(&scene, &arr, &cfg, &errs).unwrap();
        let m1 = score_all(&noisy, &db, bin).unwrap().iter().map(|x| x.1).fold(0.0, f64::max);
        assert!(m1 < m0);
    }

    #[test]
    fn stale_database_rejected() {
        let (cfg, _, db) = setup();
        let other = AntennaArray::half_wavelength(86, &RadarConfig { carrier_freq_hz: 60e9, ..cfg.clone() }).unwrap();
        let cube = synthesize_ideal(&Scene::new(), &other, &cfg).unwrap();
        assert!(matches!(detect(&cube, &db, &DetectorConfig::default()), Err(Error::StaleDatabase { .. })));
    }

    #[test]
    fn localization_error_bounds() {
        let d = Detection { position: Point3::new(1.0, 2.0, 3.0), similarity: 0.9, range_bin_index: 0 };
        assert_eq!(localization_error(&d, Point3::new(1.0, 2.0, 3.0)), 0.0);
        let off = Point3::new(1.02, 1.98, 3.025);
        assert!(localization_error(&d, off) <= 0.05 * 3f64.sqrt() / 2.0);
    }
}
