//! Run configuration: built-in defaults, then an optional TOML file, then flags.
//!
//! ```toml
//! [detections]
//! person_class = 1
//! min_score = 0.7
//!
//! [tracker]
//! max_disappeared = 30
//! max_match_distance = 120.0
//!
//! [geometry]
//! threshold_m = 1.8
//! min_bbox_width_px = 2.0
//!
//! [calibration]
//! known_width_m = 0.55
//!
//! [evaluation]
//! align_gate_px = 50.0
//! ```

use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use sdmeasure::calibration::DEFAULT_KNOWN_WIDTH_M;
use sdmeasure::evaluator::DEFAULT_ALIGN_GATE_PX;
use sdmeasure::PipelineConfig;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub detections: DetectionsSection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsSection {
    pub person_class: Option<i64>,
    pub min_score: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSection {
    pub max_disappeared: Option<u32>,
    pub max_match_distance: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub threshold_m: Option<f64>,
    pub min_bbox_width_px: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    pub known_width_m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationSection {
    pub align_gate_px: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag values; `None` means not given on the command line.
#[derive(Debug, Default, Clone, Copy)]
pub struct Overrides {
    pub person_class: Option<i64>,
    pub min_score: Option<f64>,
    pub max_disappeared: Option<u32>,
    pub max_match_distance: Option<f64>,
    pub threshold_m: Option<f64>,
    pub min_bbox_width_px: Option<f64>,
    pub known_width_m: Option<f64>,
    pub align_gate_px: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub known_width_m: f64,
    pub align_gate_px: f64,
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

impl RunConfig {
    /// Resolve and validate. Errors here are usage errors.
    pub fn resolve(file: &ConfigFile, flags: &Overrides) -> std::result::Result<Self, String> {
        let mut p = PipelineConfig::default();
        p.person_class = pick(flags.person_class, file.detections.person_class, p.person_class);
        p.min_score = pick(flags.min_score, file.detections.min_score, p.min_score);
        p.tracker.max_disappeared = pick(flags.max_disappeared, file.tracker.max_disappeared, p.tracker.max_disappeared);
        p.tracker.max_match_distance = flags.max_match_distance.or(file.tracker.max_match_distance);
        p.geometry.threshold_m = pick(flags.threshold_m, file.geometry.threshold_m, p.geometry.threshold_m);
        p.geometry.min_bbox_width_px =
            pick(flags.min_bbox_width_px, file.geometry.min_bbox_width_px, p.geometry.min_bbox_width_px);
        let known_width_m = pick(flags.known_width_m, file.calibration.known_width_m, DEFAULT_KNOWN_WIDTH_M);
        let align_gate_px = pick(flags.align_gate_px, file.evaluation.align_gate_px, DEFAULT_ALIGN_GATE_PX);

        if !(p.geometry.threshold_m.is_finite() && p.geometry.threshold_m > 0.0) {
            return Err("threshold must be positive".into());
        }
        if !(known_width_m.is_finite() && known_width_m > 0.0) {
            return Err("known width must be positive".into());
        }
        if !(align_gate_px.is_finite() && align_gate_px >= 0.0) {
            return Err("alignment gate must be non-negative".into());
        }
        p.validate().map_err(|e| e.to_string())?;
        Ok(RunConfig { pipeline: p, known_width_m, align_gate_px })
    }
}
