//! Social-distancing measurement from monocular video detections.
//!
//! Person boxes come in as a line-delimited detection stream
//! ([`detections`]), get persistent identities from a centroid tracker
//! ([`tracker`]), and are converted to metric depth using a focal length
//! calibrated once from a marker person ([`calibration`]). Pairwise metric
//! distances and threshold violations follow ([`geometry`]), driven frame by
//! frame by [`pipeline`]. [`simulator`] renders ground-truth scenes through
//! an ideal pinhole camera, and [`evaluator`] scores reports against them.

pub mod calibration;
pub mod detections;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod pipeline;
pub mod simulator;
pub mod sweep;
pub mod tracker;

pub use calibration::{bbox_width_px, calibrate, CameraCalibration};
pub use detections::{filter_people, parse_stream, BoundingBox, Detection, Frame};
pub use error::{Error, Result};
pub use geometry::{all_pairs, estimate_depth, pair_distance, GeometryConfig, PairMeasurement, PersonDistance};
pub use pipeline::{process_stream, render_overlay, FrameReport, Pipeline, PipelineConfig};
pub use simulator::{Scene, TruthRecord};
pub use tracker::{centroid_of, Tracker, TrackerConfig};
