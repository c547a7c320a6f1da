//! Browser bindings for the interactive page in `www/`.
//!
//! Structured results come back as JSON strings; the page parses them and
//! draws on a canvas. The plain Rust functions behind the exports are tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sdmeasure::calibration::CameraCalibration;
use sdmeasure::evaluator::percent_error;
use sdmeasure::geometry::{pair_distance, PairMeasurement, PersonDistance};
use sdmeasure::simulator::{ground_distance, paired_layout, ScenePerson};
use sdmeasure::sweep::{run_sweep, SweepConfig};
use sdmeasure::BoundingBox;

#[derive(Debug, Serialize)]
pub struct ProjectedPerson {
    pub bbox: [f64; 4],
    pub true_depth_m: f64,
    pub estimated_depth_m: f64,
}

#[derive(Debug, Serialize)]
pub struct PairView {
    pub image_width: u32,
    pub image_height: u32,
    pub persons: Vec<ProjectedPerson>,
    pub measurement: PairMeasurement,
    pub true_distance_m: f64,
    pub percent_error: f64,
}

fn to_js<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo types serialize")
}

/// Focal length from a marker box width.
pub fn focal_length(marker_width_px: f64, marker_distance_m: f64, known_width_m: f64) -> Result<f64, String> {
    CameraCalibration::from_marker_width(marker_width_px, marker_distance_m, known_width_m)
        .map(|c| c.focal_length_px)
        .map_err(|e| e.to_string())
}

/// Project two people through an ideal camera and measure them back.
#[allow(clippy::too_many_arguments)]
pub fn pair_view(
    focal_length_px: f64,
    width_m: f64,
    ax: f64,
    az: f64,
    bx: f64,
    bz: f64,
    quantize: bool,
    threshold_m: f64,
) -> Result<PairView, String> {
    let mut scene = paired_layout(focal_length_px, width_m, az, 1.0, 1);
    scene.persons = vec![ScenePerson::fixed(0, width_m, ax, az), ScenePerson::fixed(1, width_m, bx, bz)];
    scene.noise.pixel_quantization = quantize;
    scene.validate().map_err(|e| e.to_string())?;
    let calib = CameraCalibration::from_focal_length(focal_length_px, width_m).map_err(|e| e.to_string())?;

    let mut persons = Vec::new();
    let mut measured = Vec::new();
    for (id, p) in scene.persons.iter().enumerate() {
        let (x, z) = p.position_at(0);
        let exact = scene
            .project_person(p, x, z)
            .ok_or_else(|| format!("person {id} is outside the image"))?;
        let b = if quantize {
            BoundingBox::new(exact.x1.round(), exact.y1.round(), exact.x2.round(), exact.y2.round())
                .map_err(|e| e.to_string())?
        } else {
            exact
        };
        let pd = PersonDistance::measure(&calib, id as u64, &b, 0.0).map_err(|e| e.to_string())?;
        persons.push(ProjectedPerson { bbox: b.into(), true_depth_m: z, estimated_depth_m: pd.depth_m });
        measured.push(pd);
    }
    let measurement = pair_distance(&calib, &measured[0], &measured[1], threshold_m);
    let true_distance_m = ground_distance((ax, az), (bx, bz));
    let percent_error = percent_error(true_distance_m, measurement.distance_m).unwrap_or(0.0);
    Ok(PairView {
        image_width: scene.image_width,
        image_height: scene.image_height,
        persons,
        measurement,
        true_distance_m,
        percent_error,
    })
}

#[wasm_bindgen]
pub fn calibrate_focal(marker_width_px: f64, marker_distance_m: f64, known_width_m: f64) -> Result<f64, JsValue> {
    focal_length(marker_width_px, marker_distance_m, known_width_m).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn measure_pair(
    focal_length_px: f64,
    width_m: f64,
    ax: f64,
    az: f64,
    bx: f64,
    bz: f64,
    quantize: bool,
    threshold_m: f64,
) -> Result<String, JsValue> {
    pair_view(focal_length_px, width_m, ax, az, bx, bz, quantize, threshold_m)
        .map(|v| to_js(&v))
        .map_err(|e| JsValue::from_str(&e))
}

/// Mean percent error against camera distance, one entry per distance in `distances`.
#[wasm_bindgen]
pub fn error_sweep(focal_length_px: f64, width_m: f64, distances: Vec<f64>, runs: usize, seed: u64) -> Result<String, JsValue> {
    let cfg = SweepConfig {
        focal_length_px,
        width_m,
        camera_distances_m: distances,
        runs,
        seed,
        ..SweepConfig::default()
    };
    run_sweep(&cfg).map(|r| to_js(&r)).map_err(|e| JsValue::from_str(&e.to_string()))
}
