//! Orders detections by match quality plus closeness to boresight.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::Point3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub w_g: f64,
    pub epsilon: f64,
    /// Hard floor on distance from the array origin.
    pub min_range_m: Option<f64>,
    /// Detections within this distance of a stronger one on every axis
    /// (one grid cell) are merged into it.
    pub dedup_radius_m: Option<f64>,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self { w_g: 0.6, epsilon: 1e-6, min_range_m: Some(3.7), dedup_radius_m: Some(0.05) }
    }
}

impl RankerConfig {
    /// Pure scoring, no filtering or merging.
    pub fn scoring_only(w_g: f64) -> Self {
        Self { w_g, min_range_m: None, dedup_radius_m: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_g >= 0.0 && self.w_g.is_finite()) {
            return Err(Error::Config(format!("w_g must be >= 0, got {}", self.w_g)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedARA {
    pub detection: Detection,
    pub geometric_score: f64,
    pub final_score: f64,
}

pub fn geometric_score(p: Point3, cfg: &RankerConfig) -> f64 {
    let lateral = p.lateral_sq();
    1.0 - lateral / (lateral + p.z * p.z + cfg.epsilon)
}

fn rank_order(a: &RankedARA, b: &RankedARA) -> Ordering {
    b.final_score
        .total_cmp(&a.final_score)
        .then(b.detection.similarity.total_cmp(&a.detection.similarity))
        .then(a.detection.position.norm().total_cmp(&b.detection.position.norm()))
        .then(a.detection.position.lex_cmp(&b.detection.position))
}

fn chebyshev(a: Point3, b: Point3) -> f64 {
    let d = a - b;
    d.x.abs().max(d.y.abs()).max(d.z.abs())
}

/// Keeps the strongest detection of every cell-sized neighbourhood.
pub fn dedup(detections: &[Detection], radius: f64) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.position.norm().total_cmp(&b.position.norm()))
            .then(a.position.lex_cmp(&b.position))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| chebyshev(k.position, d.position) > radius * (1.0 + 1e-9)) {
            kept.push(d);
        }
    }
    kept
}

pub fn rank(detections: &[Detection], cfg: &RankerConfig) -> Result<Vec<RankedARA>> {
    cfg.validate()?;
    let in_range: Vec<Detection> =
        detections.iter().filter(|d| cfg.min_range_m.is_none_or(|m| d.position.norm() >= m)).cloned().collect();
    let merged = match cfg.dedup_radius_m {
        Some(r) => dedup(&in_range, r),
        None => in_range,
    };
    let mut ranked: Vec<RankedARA> = merged
        .into_iter()
        .map(|d| {
            let g = geometric_score(d.position, cfg);
            RankedARA { final_score: d.similarity + cfg.w_g * g, geometric_score: g, detection: d }
        })
        .collect();
    ranked.sort_by(rank_order);
    Ok(ranked)
}
