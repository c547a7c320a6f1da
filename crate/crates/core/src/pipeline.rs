//! Frame-by-frame orchestration: filter, track, measure, pair.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::calibration::CameraCalibration;
use crate::detections::{filter_people, BoundingBox, Frame, DEFAULT_MIN_SCORE, DEFAULT_PERSON_CLASS};
use crate::error::{Error, Result};
use crate::geometry::{all_pairs, GeometryConfig, PairMeasurement, PersonDistance};
use crate::tracker::{TrackId, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub person_class: i64,
    pub min_score: f64,
    pub tracker: TrackerConfig,
    pub geometry: GeometryConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            person_class: DEFAULT_PERSON_CLASS,
            min_score: DEFAULT_MIN_SCORE,
            tracker: TrackerConfig::default(),
            geometry: GeometryConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_score) {
            return Err(Error::InvalidParameter(format!("min score must lie in [0, 1], got {}", self.min_score)));
        }
        if let Some(gate) = self.tracker.max_match_distance {
            if !(gate.is_finite() && gate >= 0.0) {
                return Err(Error::InvalidParameter("max match distance must be non-negative".into()));
            }
        }
        self.geometry.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonReport {
    pub track_id: TrackId,
    pub bbox: BoundingBox,
    /// `None` when the box was too narrow to measure.
    pub depth_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame_index: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// Tracks matched in this frame, ordered by id.
    pub persons: Vec<PersonReport>,
    pub pairs: Vec<PairMeasurement>,
    /// Pairs closer than the threshold; each is drawn as a line.
    pub violations: Vec<(TrackId, TrackId)>,
}

impl FrameReport {
    pub fn to_record(&self, verbose_pairs: bool) -> ReportRecord {
        ReportRecord {
            frame: self.frame_index,
            persons: self
                .persons
                .iter()
                .map(|p| PersonRecord { id: p.track_id, bbox: p.bbox, depth_m: p.depth_m })
                .collect(),
            pairs: self
                .pairs
                .iter()
                .map(|m| PairRecord {
                    a: m.id_a,
                    b: m.id_b,
                    d_m: m.distance_m,
                    violation: m.violation,
                    detail: verbose_pairs.then_some(PairDetail {
                        y_ab_m: m.depth_delta_m,
                        x_ab_px: m.horiz_px,
                        p_ab_px: m.avg_width_px,
                        ppm: m.ppm,
                        x_ab_m: m.horiz_m,
                    }),
                })
                .collect(),
        }
    }
}

/// One line of the report stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub frame: u64,
    pub persons: Vec<PersonRecord>,
    pub pairs: Vec<PairRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub id: TrackId,
    pub bbox: BoundingBox,
    pub depth_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub a: TrackId,
    pub b: TrackId,
    pub d_m: f64,
    pub violation: bool,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<PairDetail>,
}

/// Intermediate pair quantities, written only in verbose mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub y_ab_m: f64,
    pub x_ab_px: f64,
    pub p_ab_px: f64,
    pub ppm: f64,
    pub x_ab_m: f64,
}

impl ReportRecord {
    pub fn violations(&self) -> impl Iterator<Item = (TrackId, TrackId)> + '_ {
        self.pairs.iter().filter(|p| p.violation).map(|p| (p.a, p.b))
    }
}

pub fn write_record<W: Write>(out: &mut W, record: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, record).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn parse_reports(input: &str) -> Result<Vec<ReportRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReportRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

/// Stateful per-stream processor. Frames must be fed in order.
#[derive(Debug, Clone)]
pub struct Pipeline {
    calib: CameraCalibration,
    config: PipelineConfig,
    tracker: Tracker,
}

impl Pipeline {
    pub fn new(calib: CameraCalibration, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline { calib, config, tracker: Tracker::new(config.tracker) })
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    pub fn process_frame(&mut self, frame: &Frame) -> FrameReport {
        let people = filter_people(frame, self.config.person_class, self.config.min_score);
        let assignments = self.tracker.update(&people);

        let mut persons = Vec::new();
        let mut measured = Vec::new();
        for a in assignments.current() {
            let bbox = people.detections[a.det_index].bbox;
            let depth = PersonDistance::measure(&self.calib, a.track_id, &bbox, self.config.geometry.min_bbox_width_px).ok();
            persons.push(PersonReport { track_id: a.track_id, bbox, depth_m: depth.map(|d| d.depth_m) });
            measured.extend(depth);
        }
        let pairs = all_pairs(&self.calib, &measured, self.config.geometry.threshold_m);
        let violations = pairs.iter().filter(|m| m.violation).map(|m| (m.id_a, m.id_b)).collect();
        FrameReport {
            frame_index: frame.frame_index,
            image_width: frame.image_width,
            image_height: frame.image_height,
            persons,
            pairs,
            violations,
        }
    }
}

/// Run a whole stream, one report per frame in input order.
pub fn process_stream<'a, I>(frames: I, calib: &CameraCalibration, config: &PipelineConfig) -> Result<Vec<FrameReport>>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut p = Pipeline::new(*calib, *config)?;
    Ok(frames.into_iter().map(|f| p.process_frame(f)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlayKind {
    Box,
    Line,
    Label,
}

/// A drawing primitive in pixel coordinates. Boxes and lines carry
/// `[x1, y1, x2, y2]`; labels carry their anchor `[x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayInstruction {
    pub kind: OverlayKind,
    pub geometry: Vec<f64>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRecord {
    pub frame: u64,
    pub overlay: Vec<OverlayInstruction>,
}

/// Boxes and id labels for every person, then a labelled line per violation.
pub fn render_overlay(report: &FrameReport) -> Vec<OverlayInstruction> {
    let (w, h) = (f64::from(report.image_width), f64::from(report.image_height));
    let clamp = |x: f64, y: f64| [x.clamp(0.0, w), y.clamp(0.0, h)];
    let mut out = Vec::with_capacity(report.persons.len() * 2 + report.violations.len() * 2);
    for p in &report.persons {
        let b = p.bbox;
        let [x1, y1] = clamp(b.x1, b.y1);
        let [x2, y2] = clamp(b.x2, b.y2);
        out.push(OverlayInstruction { kind: OverlayKind::Box, geometry: vec![x1, y1, x2, y2], text: None });
        out.push(OverlayInstruction { kind: OverlayKind::Label, geometry: vec![x1, y1], text: Some(p.track_id.to_string()) });
    }
    let centroid = |id: TrackId| {
        report.persons.iter().find(|p| p.track_id == id).map(|p| p.bbox.centroid())
    };
    for m in report.pairs.iter().filter(|m| m.violation) {
        let (Some(a), Some(b)) = (centroid(m.id_a), centroid(m.id_b)) else { continue };
        let [ax, ay] = clamp(a.0, a.1);
        let [bx, by] = clamp(b.0, b.1);
        out.push(OverlayInstruction { kind: OverlayKind::Line, geometry: vec![ax, ay, bx, by], text: None });
        out.push(OverlayInstruction {
            kind: OverlayKind::Label,
            geometry: vec![(ax + bx) / 2.0, (ay + by) / 2.0],
            text: Some(format!("{:.2} m", m.distance_m)),
        });
    }
    out
}
