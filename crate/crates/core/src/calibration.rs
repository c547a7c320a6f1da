//! Focal length from a marker person of known width at a known distance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detections::BoundingBox;
use crate::error::{Error, Result};

/// Assumed shoulder-plus-elbow width of a person, metres.
pub const DEFAULT_KNOWN_WIDTH_M: f64 = 0.55;

/// Focal length in pixels together with the marker measurement it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraCalibration {
    pub focal_length_px: f64,
    pub known_width_m: f64,
    pub marker_distance_m: f64,
    pub marker_width_px: f64,
}

/// Pixel width of a box, `x2 - x1`.
pub fn bbox_width_px(bbox: &BoundingBox) -> f64 {
    bbox.width()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Solve `F = D * P / W` for a marker box at distance `marker_distance_m`.
pub fn calibrate(marker_bbox: &BoundingBox, marker_distance_m: f64, known_width_m: f64) -> Result<CameraCalibration> {
    positive("marker distance", marker_distance_m)?;
    positive("known width", known_width_m)?;
    marker_bbox
        .validate()
        .map_err(|e| Error::InvalidParameter(format!("marker bbox: {e}")))?;
    CameraCalibration::from_marker_width(bbox_width_px(marker_bbox), marker_distance_m, known_width_m)
}

impl CameraCalibration {
    pub fn from_marker_width(marker_width_px: f64, marker_distance_m: f64, known_width_m: f64) -> Result<Self> {
        positive("marker width", marker_width_px)?;
        positive("marker distance", marker_distance_m)?;
        positive("known width", known_width_m)?;
        let focal_length_px = marker_distance_m * marker_width_px / known_width_m;
        positive("focal length", focal_length_px)?;
        Ok(CameraCalibration { focal_length_px, known_width_m, marker_distance_m, marker_width_px })
    }

    /// Calibration with a directly known focal length, expressed as an
    /// equivalent marker one metre from the camera.
    pub fn from_focal_length(focal_length_px: f64, known_width_m: f64) -> Result<Self> {
        positive("focal length", focal_length_px)?;
        positive("known width", known_width_m)?;
        Self::from_marker_width(focal_length_px * known_width_m, 1.0, known_width_m)
    }

    fn check(&self) -> Result<()> {
        positive("focal_length_px", self.focal_length_px)?;
        positive("known_width_m", self.known_width_m)?;
        positive("marker_distance_m", self.marker_distance_m)?;
        positive("marker_width_px", self.marker_width_px)?;
        let expected = self.marker_distance_m * self.marker_width_px / self.known_width_m;
        if ((expected - self.focal_length_px) / expected).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "focal_length_px {} disagrees with marker (expected {expected})",
                self.focal_length_px
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: CameraCalibration =
            serde_json::from_str(s).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl<'de> Deserialize<'de> for CameraCalibration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            focal_length_px: f64,
            known_width_m: f64,
            marker_distance_m: f64,
            marker_width_px: f64,
        }
        let r = Raw::deserialize(d)?;
        let c = CameraCalibration {
            focal_length_px: r.focal_length_px,
            known_width_m: r.known_width_m,
            marker_distance_m: r.marker_distance_m,
            marker_width_px: r.marker_width_px,
        };
        c.check().map_err(serde::de::Error::custom)?;
        Ok(c)
    }
}
