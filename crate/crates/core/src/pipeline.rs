//! Detection, ranking and calibration chained together.

use crate::calibrator::{estimate_phase_error, CalibrationResult, CalibratorConfig};
use crate::detector::{detect, Detection, DetectorConfig};
use crate::error::{Error, Result};
use crate::model::RadarCube;
use crate::ranker::{rank, RankedARA, RankerConfig};
use crate::templates::TemplateDatabase;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub detections: Vec<Detection>,
    pub ranked: Vec<RankedARA>,
    pub calibration: CalibrationResult,
}

/// Detects anchors, ranks them and calibrates against the top one.
pub fn calibrate_cube(
    cube: &RadarCube,
    db: &TemplateDatabase,
    detector: &DetectorConfig,
    ranker: &RankerConfig,
    calibrator: &CalibratorConfig,
) -> Result<PipelineOutcome> {
    let detections = detect(cube, db, detector)?;
    let ranked = rank(&detections, ranker)?;
    let top =
        ranked.first().ok_or_else(|| Error::Selection(format!("no anchor above similarity {}", detector.threshold)))?;
    let calibration = estimate_phase_error(cube, top, calibrator)?;
    Ok(PipelineOutcome { detections, ranked, calibration })
}
