//! Detection stream types and the line-delimited JSON wire format.
//!
//! One frame per line:
//!
//! ```text
//! {"frame": 0, "t": 0.0, "w": 640, "h": 480, "dets": [{"bbox": [10, 20, 60, 220], "class": 1, "score": 0.95, "mask": null}]}
//! ```

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for people unless overridden.
pub const DEFAULT_PERSON_CLASS: i64 = 1;
/// Minimum detection score kept by [`filter_people`] unless overridden.
pub const DEFAULT_MIN_SCORE: f64 = 0.7;

/// Axis-aligned box in image pixels, `(x1, y1)` top-left and `(x2, y2)` bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoxError {
    #[error("bbox coordinate is not finite")]
    NonFinite,
    #[error("bbox coordinate is negative")]
    Negative,
    #[error("bbox has x2 <= x1 ({x1} >= {x2})")]
    ZeroWidth { x1: f64, x2: f64 },
    #[error("bbox has y2 <= y1 ({y1} >= {y2})")]
    ZeroHeight { y1: f64, y2: f64 },
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> std::result::Result<Self, BoxError> {
        let b = BoundingBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> std::result::Result<(), BoxError> {
        let c = [self.x1, self.y1, self.x2, self.y2];
        if c.iter().any(|v| !v.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        if c.iter().any(|v| *v < 0.0) {
            return Err(BoxError::Negative);
        }
        if self.x2 <= self.x1 {
            return Err(BoxError::ZeroWidth { x1: self.x1, x2: self.x2 });
        }
        if self.y2 <= self.y1 {
            return Err(BoxError::ZeroHeight { y1: self.y1, y2: self.y2 });
        }
        Ok(())
    }

    /// Horizontal extent `x2 - x1`.
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Box midpoint.
    pub fn centroid(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// Clamp to `[0, width] x [0, height]`. Fails when clamping collapses the box.
    pub fn clamp_to(&self, width: f64, height: f64) -> std::result::Result<Self, BoxError> {
        if [self.x1, self.y1, self.x2, self.y2].iter().any(|v| !v.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        BoundingBox::new(
            self.x1.clamp(0.0, width),
            self.y1.clamp(0.0, height),
            self.x2.clamp(0.0, width),
            self.y2.clamp(0.0, height),
        )
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = BoxError;

    fn try_from(c: [f64; 4]) -> std::result::Result<Self, BoxError> {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    #[serde(rename = "class")]
    pub class_id: i64,
    pub score: f64,
    /// Run-length encoded mask, passed through untouched.
    #[serde(default)]
    pub mask: Option<String>,
}

impl Detection {
    pub fn person(bbox: BoundingBox, score: f64) -> Self {
        Detection { bbox, class_id: DEFAULT_PERSON_CLASS, score, mask: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    #[serde(rename = "t", default)]
    pub timestamp_s: Option<f64>,
    #[serde(rename = "w")]
    pub image_width: u32,
    #[serde(rename = "h")]
    pub image_height: u32,
    #[serde(rename = "dets")]
    pub detections: Vec<Detection>,
}

/// A detection dropped while ingesting a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub frame_index: u64,
    pub det_index: usize,
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "line {}: frame {} detection {} rejected: {}",
            self.line, self.frame_index, self.det_index, self.reason
        )
    }
}

// Raw line shape. Boxes are read unchecked so that out-of-frame boxes can be
// clamped and degenerate ones rejected per record instead of failing the line.
#[derive(Deserialize)]
struct RawFrame {
    frame: u64,
    #[serde(default)]
    t: Option<f64>,
    w: u32,
    h: u32,
    dets: Vec<RawDetection>,
}

#[derive(Deserialize)]
struct RawDetection {
    bbox: [f64; 4],
    class: i64,
    score: f64,
    #[serde(default)]
    mask: Option<String>,
}

/// Incremental reader over a detection stream. Yields frames in file order and
/// collects per-detection rejections in [`StreamReader::rejections`].
pub struct StreamReader<R> {
    input: R,
    line_no: usize,
    last_frame: Option<u64>,
    buf: String,
    rejections: Vec<Rejection>,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(input: R) -> Self {
        StreamReader { input, line_no: 0, last_frame: None, buf: String::new(), rejections: Vec::new() }
    }

    pub fn rejections(&self) -> &[Rejection] {
        &self.rejections
    }

    pub fn take_rejections(&mut self) -> Vec<Rejection> {
        std::mem::take(&mut self.rejections)
    }

    fn parse_line(&mut self, line: &str) -> Result<Frame> {
        let raw: RawFrame = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: self.line_no, message: e.to_string() })?;
        if raw.w == 0 || raw.h == 0 {
            return Err(Error::Parse {
                line: self.line_no,
                message: format!("image size must be positive, got {}x{}", raw.w, raw.h),
            });
        }
        if let Some(t) = raw.t {
            if !t.is_finite() {
                return Err(Error::Parse { line: self.line_no, message: "timestamp is not finite".into() });
            }
        }
        if let Some(prev) = self.last_frame {
            if raw.frame <= prev {
                return Err(Error::NonMonotonicFrame { line: self.line_no, previous: prev, found: raw.frame });
            }
        }
        self.last_frame = Some(raw.frame);

        let (w, h) = (f64::from(raw.w), f64::from(raw.h));
        let mut detections = Vec::with_capacity(raw.dets.len());
        for (det_index, d) in raw.dets.into_iter().enumerate() {
            let reject = |reason: String| Rejection { line: self.line_no, frame_index: raw.frame, det_index, reason };
            if !(0.0..=1.0).contains(&d.score) {
                self.rejections.push(reject(format!("score {} outside [0, 1]", d.score)));
                continue;
            }
            let [x1, y1, x2, y2] = d.bbox;
            let unclamped = BoundingBox { x1, y1, x2, y2 };
            // a box that is inverted before clamping is malformed, not merely off-frame
            if x2 <= x1 || y2 <= y1 {
                let err = if x2 <= x1 { BoxError::ZeroWidth { x1, x2 } } else { BoxError::ZeroHeight { y1, y2 } };
                self.rejections.push(reject(err.to_string()));
                continue;
            }
            match unclamped.clamp_to(w, h) {
                Ok(bbox) => detections.push(Detection { bbox, class_id: d.class, score: d.score, mask: d.mask }),
                Err(e) => self.rejections.push(reject(format!("after clamping to frame: {e}"))),
            }
        }
        Ok(Frame {
            frame_index: raw.frame,
            timestamp_s: raw.t,
            image_width: raw.w,
            image_height: raw.h,
            detections,
        })
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::Io(e))),
            }
            self.line_no += 1;
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                self.buf = line;
                continue;
            }
            let out = self.parse_line(trimmed);
            self.buf = line;
            return Some(out);
        }
    }
}

/// Parsed stream together with the records dropped while reading it.
#[derive(Debug, Clone, Default)]
pub struct ParsedStream {
    pub frames: Vec<Frame>,
    pub rejections: Vec<Rejection>,
}

/// Read a whole stream into memory. Stops at the first line-level error.
pub fn parse_stream<R: BufRead>(input: R) -> Result<ParsedStream> {
    let mut reader = StreamReader::new(input);
    let mut frames = Vec::new();
    for frame in reader.by_ref() {
        frames.push(frame?);
    }
    Ok(ParsedStream { frames, rejections: reader.take_rejections() })
}

pub fn parse_str(input: &str) -> Result<ParsedStream> {
    parse_stream(input.as_bytes())
}

pub fn write_frame<W: Write>(out: &mut W, frame: &Frame) -> Result<()> {
    serde_json::to_writer(&mut *out, frame).map_err(|e| Error::Io(e.into()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn serialize_stream<'a, I>(frames: I) -> String
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut buf = Vec::new();
    for f in frames {
        write_frame(&mut buf, f).expect("writing to a Vec cannot fail");
    }
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Keep detections of `person_class` scoring at least `min_score`, in order.
pub fn filter_people(frame: &Frame, person_class: i64, min_score: f64) -> Frame {
    Frame {
        detections: frame
            .detections
            .iter()
            .filter(|d| d.class_id == person_class && d.score >= min_score)
            .cloned()
            .collect(),
        ..frame.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(class_id: i64, score: f64) -> Detection {
        Detection { bbox: BoundingBox::new(10.0, 20.0, 60.0, 220.0).unwrap(), class_id, score, mask: None }
    }

    fn frame_with(dets: Vec<Detection>) -> Frame {
        Frame { frame_index: 0, timestamp_s: None, image_width: 640, image_height: 480, detections: dets }
    }

    #[test]
    fn parses_single_record() {
        let s = r#"{"frame": 0, "t": null, "w": 640, "h": 480, "dets": [{"bbox": [10, 20, 60, 220], "class": 1, "score": 0.95, "mask": null}]}"#;
        let parsed = parse_str(s).unwrap();
        assert_eq!(parsed.frames.len(), 1);
        let f = &parsed.frames[0];
        assert_eq!(f.frame_index, 0);
        assert_eq!(f.detections.len(), 1);
        assert_eq!(f.detections[0].bbox, BoundingBox::new(10.0, 20.0, 60.0, 220.0).unwrap());
        assert_eq!(f.detections[0].score, 0.95);
        assert!(parsed.rejections.is_empty());
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert!(parse_str("").unwrap().frames.is_empty());
        assert!(parse_str("\n\n").unwrap().frames.is_empty());
    }

    #[test]
    fn non_monotonic_frame_index_names_line() {
        let s = "{\"frame\": 5, \"w\": 10, \"h\": 10, \"dets\": []}\n{\"frame\": 3, \"w\": 10, \"h\": 10, \"dets\": []}\n";
        let err = parse_str(s).unwrap_err();
        assert_eq!(err.to_string(), "non-monotonic frame index at line 2 (5 followed by 3)");
    }

    #[test]
    fn repeated_frame_index_is_non_monotonic() {
        let s = "{\"frame\": 1, \"w\": 10, \"h\": 10, \"dets\": []}\n{\"frame\": 1, \"w\": 10, \"h\": 10, \"dets\": []}\n";
        assert!(matches!(parse_str(s), Err(Error::NonMonotonicFrame { line: 2, .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let s = "{\"frame\": 0, \"w\": 10, \"h\": 10, \"dets\": []}\n{\"frame\": oops}\n";
        match parse_str(s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverted_bbox_is_rejected_with_frame_and_index() {
        let s = r#"{"frame": 7, "w": 100, "h": 100, "dets": [{"bbox": [1,1,5,5], "class": 1, "score": 0.9}, {"bbox": [50, 10, 40, 20], "class": 1, "score": 0.9}]}"#;
        let parsed = parse_str(s).unwrap();
        assert_eq!(parsed.frames[0].detections.len(), 1);
        assert_eq!(parsed.rejections.len(), 1);
        let r = &parsed.rejections[0];
        assert_eq!((r.line, r.frame_index, r.det_index), (1, 7, 1));
    }

    #[test]
    fn out_of_frame_box_is_clamped() {
        let s = r#"{"frame": 0, "w": 100, "h": 80, "dets": [{"bbox": [-5, 10, 120, 90], "class": 1, "score": 0.9}]}"#;
        let parsed = parse_str(s).unwrap();
        assert_eq!(parsed.frames[0].detections[0].bbox, BoundingBox::new(0.0, 10.0, 100.0, 80.0).unwrap());
    }

    #[test]
    fn box_entirely_outside_frame_is_rejected() {
        let s = r#"{"frame": 0, "w": 100, "h": 80, "dets": [{"bbox": [110, 10, 120, 20], "class": 1, "score": 0.9}]}"#;
        let parsed = parse_str(s).unwrap();
        assert!(parsed.frames[0].detections.is_empty());
        assert_eq!(parsed.rejections.len(), 1);
    }

    #[test]
    fn bad_score_is_rejected() {
        let s = r#"{"frame": 0, "w": 100, "h": 80, "dets": [{"bbox": [1, 1, 2, 2], "class": 1, "score": 1.5}]}"#;
        let parsed = parse_str(s).unwrap();
        assert!(parsed.frames[0].detections.is_empty());
        assert_eq!(parsed.rejections.len(), 1);
    }

    #[test]
    fn mask_passes_through() {
        let s = r#"{"frame": 0, "w": 100, "h": 80, "dets": [{"bbox": [1, 1, 2, 2], "class": 1, "score": 0.8, "mask": "3 4 5"}]}"#;
        let parsed = parse_str(s).unwrap();
        assert_eq!(parsed.frames[0].detections[0].mask.as_deref(), Some("3 4 5"));
    }

    #[test]
    fn filter_keeps_confident_people_in_order() {
        let f = frame_with(vec![det(1, 0.95), det(3, 0.99), det(1, 0.40)]);
        let out = filter_people(&f, 1, 0.7);
        assert_eq!(out.detections, vec![det(1, 0.95)]);
    }

    #[test]
    fn filter_below_threshold_is_empty() {
        let f = frame_with(vec![det(1, 0.1), det(1, 0.2)]);
        assert!(filter_people(&f, 1, 0.7).detections.is_empty());
    }

    #[test]
    fn filter_with_zero_threshold_is_identity() {
        let f = frame_with(vec![det(1, 0.0), det(1, 0.5), det(1, 1.0)]);
        assert_eq!(filter_people(&f, 1, 0.0), f);
    }

    #[test]
    fn bbox_serializes_as_array() {
        let b = BoundingBox::new(1.0, 2.0, 3.5, 4.0).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.0,2.0,3.5,4.0]");
    }
}
