//! Per-person depth and pairwise metric distance.
//!
//! Depth follows triangle similarity, `Y = F * W / P`. For a pair A, B the
//! metric separation combines the depth gap `|Y_b - Y_a|` with the horizontal
//! centroid gap converted to metres at the pair's mean scale, where the scale
//! in pixels per metre is the mean box width divided by `W`.

use serde::{Deserialize, Serialize};

use crate::calibration::CameraCalibration;
use crate::detections::BoundingBox;
use crate::error::{Error, Result};
use crate::tracker::TrackId;

/// Social-distancing threshold, metres (6 ft).
pub const DEFAULT_THRESHOLD_M: f64 = 1.8;
pub const DEFAULT_MIN_BBOX_WIDTH_PX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub threshold_m: f64,
    pub min_bbox_width_px: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { threshold_m: DEFAULT_THRESHOLD_M, min_bbox_width_px: DEFAULT_MIN_BBOX_WIDTH_PX }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_m.is_finite() && self.threshold_m > 0.0) {
            return Err(Error::InvalidParameter("threshold must be positive".into()));
        }
        if !(self.min_bbox_width_px.is_finite() && self.min_bbox_width_px >= 0.0) {
            return Err(Error::InvalidParameter("minimum bbox width must be non-negative".into()));
        }
        Ok(())
    }
}

/// A box too narrow to give a meaningful depth.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("bbox width {width_px} px is below the minimum of {min_px} px")]
pub struct DepthRejected {
    pub width_px: f64,
    pub min_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonDistance {
    pub track_id: TrackId,
    /// Distance from the image plane, metres.
    pub depth_m: f64,
    pub width_px: f64,
    pub centroid_x: f64,
}

/// Depth of a box under `calib`, `F * W / (x2 - x1)`.
pub fn estimate_depth(
    calib: &CameraCalibration,
    bbox: &BoundingBox,
    min_bbox_width_px: f64,
) -> std::result::Result<(f64, f64), DepthRejected> {
    let width_px = bbox.width();
    if !(width_px >= min_bbox_width_px && width_px > 0.0) {
        return Err(DepthRejected { width_px, min_px: min_bbox_width_px });
    }
    Ok((calib.focal_length_px * calib.known_width_m / width_px, width_px))
}

impl PersonDistance {
    pub fn measure(
        calib: &CameraCalibration,
        track_id: TrackId,
        bbox: &BoundingBox,
        min_bbox_width_px: f64,
    ) -> std::result::Result<Self, DepthRejected> {
        let (depth_m, width_px) = estimate_depth(calib, bbox, min_bbox_width_px)?;
        Ok(PersonDistance { track_id, depth_m, width_px, centroid_x: bbox.centroid().0 })
    }
}

/// Every intermediate quantity of one pairwise estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub id_a: TrackId,
    pub id_b: TrackId,
    pub depth_delta_m: f64,
    pub horiz_px: f64,
    pub avg_width_px: f64,
    pub ppm: f64,
    pub horiz_m: f64,
    pub distance_m: f64,
    pub violation: bool,
}

/// Metric distance between two people measured under the same calibration.
/// The result is ordered so that `id_a <= id_b`.
pub fn pair_distance(
    calib: &CameraCalibration,
    a: &PersonDistance,
    b: &PersonDistance,
    threshold_m: f64,
) -> PairMeasurement {
    let (a, b) = if a.track_id <= b.track_id { (a, b) } else { (b, a) };
    let depth_delta_m = (b.depth_m - a.depth_m).abs();
    let horiz_px = (b.centroid_x - a.centroid_x).abs();
    let avg_width_px = (a.width_px + b.width_px) / 2.0;
    let ppm = avg_width_px / calib.known_width_m;
    let horiz_m = horiz_px / ppm;
    let distance_m = horiz_m.hypot(depth_delta_m);
    PairMeasurement {
        id_a: a.track_id,
        id_b: b.track_id,
        depth_delta_m,
        horiz_px,
        avg_width_px,
        ppm,
        horiz_m,
        distance_m,
        violation: distance_m < threshold_m,
    }
}

/// One measurement per unordered pair, ordered by `(id_a, id_b)`.
pub fn all_pairs(calib: &CameraCalibration, persons: &[PersonDistance], threshold_m: f64) -> Vec<PairMeasurement> {
    let mut sorted: Vec<&PersonDistance> = persons.iter().collect();
    sorted.sort_by_key(|p| p.track_id);
    let n = sorted.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(pair_distance(calib, sorted[i], sorted[j], threshold_m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calib(f: f64, w: f64) -> CameraCalibration {
        CameraCalibration::from_focal_length(f, w).unwrap()
    }

    fn person(id: TrackId, depth_m: f64, width_px: f64, centroid_x: f64) -> PersonDistance {
        PersonDistance { track_id: id, depth_m, width_px, centroid_x }
    }

    // Exact pinhole projection of a person of width `w` at lateral `x`, depth `z`.
    fn projected(f: f64, w: f64, cx: f64, x: f64, z: f64) -> BoundingBox {
        let half = f * w / z / 2.0;
        let u = cx + f * x / z;
        BoundingBox::new(u - half, 100.0, u + half, 400.0).unwrap()
    }

    #[test]
    fn depth_examples() {
        let c = calib(800.0, 0.5);
        let (y, p) = estimate_depth(&c, &BoundingBox::new(0.0, 0.0, 100.0, 10.0).unwrap(), 2.0).unwrap();
        assert_eq!((y, p), (4.0, 100.0));
        let (y, _) = estimate_depth(&c, &BoundingBox::new(0.0, 0.0, 50.0, 10.0).unwrap(), 2.0).unwrap();
        assert_eq!(y, 8.0);
    }

    #[test]
    fn depth_inverts_pinhole_projection() {
        let c = calib(1000.0, 0.5);
        let b = projected(1000.0, 0.5, 960.0, 0.0, 7.3);
        assert!((b.width() - 68.493_150_684_931_5).abs() < 1e-9);
        let (y, _) = estimate_depth(&c, &b, 2.0).unwrap();
        assert!(((y - 7.3) / 7.3).abs() <= 1e-12, "{y}");
    }

    #[test]
    fn narrow_box_is_rejected() {
        let c = calib(800.0, 0.5);
        let b = BoundingBox::new(10.0, 0.0, 11.5, 10.0).unwrap();
        assert_eq!(estimate_depth(&c, &b, 2.0), Err(DepthRejected { width_px: 1.5, min_px: 2.0 }));
        assert!(estimate_depth(&c, &b, 1.0).is_ok());
    }

    #[test]
    fn equal_depth_pair_from_oracle() {
        let (f, w) = (1000.0, 0.5);
        let c = calib(f, w);
        let a = PersonDistance::measure(&c, 0, &projected(f, w, 960.0, 0.0, 5.0), 2.0).unwrap();
        let b = PersonDistance::measure(&c, 1, &projected(f, w, 960.0, 1.0, 5.0), 2.0).unwrap();
        assert_eq!(a.width_px, 100.0);
        assert_eq!(b.width_px, 100.0);
        let m = pair_distance(&c, &a, &b, DEFAULT_THRESHOLD_M);
        assert_eq!(m.horiz_px, 200.0);
        assert_eq!(m.ppm, 200.0);
        assert_eq!(m.horiz_m, 1.0);
        assert_eq!(m.depth_delta_m, 0.0);
        assert_eq!(m.distance_m, 1.0);
        assert!(m.violation);
    }

    #[test]
    fn pure_depth_offset_pair() {
        let (f, w) = (1000.0, 0.5);
        let c = calib(f, w);
        let a = PersonDistance::measure(&c, 0, &projected(f, w, 960.0, 0.0, 4.0), 2.0).unwrap();
        let b = PersonDistance::measure(&c, 1, &projected(f, w, 960.0, 0.0, 6.0), 2.0).unwrap();
        let m = pair_distance(&c, &a, &b, DEFAULT_THRESHOLD_M);
        assert_eq!(m.horiz_px, 0.0);
        assert!((m.depth_delta_m - 2.0).abs() < 1e-12);
        assert!((m.distance_m - 2.0).abs() < 1e-12);
        assert!(!m.violation);
    }

    #[test]
    fn three_four_five() {
        // W = 1, both 10 px wide -> 10 px per metre; 30 px apart horizontally
        let c = calib(100.0, 1.0);
        let a = person(0, 10.0, 10.0, 0.0);
        let b = person(1, 14.0, 10.0, 30.0);
        let m = pair_distance(&c, &a, &b, 1.8);
        assert_eq!((m.horiz_m, m.depth_delta_m, m.distance_m), (3.0, 4.0, 5.0));
    }

    #[test]
    fn symmetric_in_argument_order() {
        let c = calib(900.0, 0.55);
        let a = person(3, 4.2, 117.0, 300.0);
        let b = person(8, 6.9, 71.0, 712.5);
        let ab = pair_distance(&c, &a, &b, 1.8);
        let ba = pair_distance(&c, &b, &a, 1.8);
        assert_eq!(ab, ba);
        assert_eq!((ab.id_a, ab.id_b), (3, 8));
    }

    #[test]
    fn threshold_is_strict() {
        let c = calib(100.0, 1.0);
        let a = person(0, 5.0, 10.0, 0.0);
        let b = person(1, 5.0, 10.0, 18.0);
        let m = pair_distance(&c, &a, &b, 1.8);
        assert_eq!(m.distance_m, 1.8);
        assert!(!m.violation);
    }

    #[test]
    fn all_pairs_counts_and_order() {
        let c = calib(800.0, 0.5);
        assert!(all_pairs(&c, &[], 1.8).is_empty());
        assert!(all_pairs(&c, &[person(0, 1.0, 10.0, 0.0)], 1.8).is_empty());
        let four: Vec<_> = (0..4).map(|i| person(i, 3.0, 50.0, i as f64 * 40.0)).collect();
        assert_eq!(all_pairs(&c, &four, 1.8).len(), 6);
        let three = [person(9, 3.0, 50.0, 0.0), person(2, 3.0, 50.0, 1.0), person(5, 3.0, 50.0, 2.0)];
        let ids: Vec<_> = all_pairs(&c, &three, 1.8).iter().map(|m| (m.id_a, m.id_b)).collect();
        assert_eq!(ids, vec![(2, 5), (2, 9), (5, 9)]);
    }

    #[test]
    fn config_validation() {
        assert!(GeometryConfig::default().validate().is_ok());
        assert!(GeometryConfig { threshold_m: 0.0, ..Default::default() }.validate().is_err());
        assert!(GeometryConfig { min_bbox_width_px: -1.0, ..Default::default() }.validate().is_err());
    }
}
