//! Error of pairwise distance estimates as the layout moves away from the camera.
//!
//! Each run places two people side by side at a given camera distance, shifts
//! the whole layout sideways by a seeded random amount and draws the camera's
//! focal length from a band around the nominal value, so that pixel rounding
//! differs between runs. It then calibrates from a rounded marker box and
//! measures the pair with the full pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calibration::calibrate;
use crate::error::{Error, Result};
use crate::evaluator::{percent_error, sample_stdev};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::simulator::{paired_layout, ScenePerson};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub focal_length_px: f64,
    /// Per-run focal length is drawn from `focal_length_px +- focal_length_spread_px`.
    pub focal_length_spread_px: f64,
    pub width_m: f64,
    pub camera_distances_m: Vec<f64>,
    pub separations_m: Vec<f64>,
    /// Distance of the marker person used for calibration.
    pub calibration_distance_m: f64,
    pub runs: usize,
    /// Layout shifts are drawn uniformly from `[-max_shift_m, max_shift_m]`.
    pub max_shift_m: f64,
    pub pixel_quantization: bool,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            focal_length_px: 1000.0,
            focal_length_spread_px: 100.0,
            width_m: 0.5,
            camera_distances_m: vec![3.0, 5.0, 7.0, 9.0],
            separations_m: vec![0.6, 1.2, 1.8, 2.4],
            calibration_distance_m: 3.0,
            runs: 100,
            max_shift_m: 0.5,
            pixel_quantization: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub camera_distance_m: f64,
    pub separation_m: f64,
    pub n: usize,
    pub mean_estimate_m: f64,
    pub stdev_m: Option<f64>,
    pub mean_percent_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// Mean percent error per camera distance, pooled over separations.
    pub by_distance: Vec<(f64, f64)>,
}

/// Estimated separation for one run of the layout.
pub fn measure_layout(
    cfg: &SweepConfig,
    focal_length_px: f64,
    camera_distance_m: f64,
    separation_m: f64,
    shift_m: f64,
    marker_shift_m: f64,
) -> Result<f64> {
    let mut scene = paired_layout(focal_length_px, cfg.width_m, camera_distance_m, separation_m, 1);
    scene.noise.pixel_quantization = cfg.pixel_quantization;
    // plenty of room so nobody leaves the image
    scene.image_width = 8000;
    scene.image_height = 8000;
    scene.persons[0].position = Some([shift_m, camera_distance_m]);
    scene.persons[1].position = Some([shift_m + separation_m, camera_distance_m]);

    let mut marker_scene = scene.clone();
    marker_scene.persons = vec![ScenePerson::fixed(0, cfg.width_m, marker_shift_m, cfg.calibration_distance_m)];
    let (marker_frames, _) = marker_scene.generate(0)?;
    let marker = marker_frames[0]
        .detections
        .first()
        .ok_or_else(|| Error::Scene("marker out of view".into()))?;
    let calib = calibrate(&marker.bbox, cfg.calibration_distance_m, cfg.width_m)?;

    let (frames, _) = scene.generate(0)?;
    let mut pipeline = Pipeline::new(calib, PipelineConfig { min_score: 0.0, ..Default::default() })?;
    let report = pipeline.process_frame(&frames[0]);
    report
        .pairs
        .first()
        .map(|p| p.distance_m)
        .ok_or_else(|| Error::Scene("pair not measured".into()))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.runs == 0 || cfg.camera_distances_m.is_empty() || cfg.separations_m.is_empty() {
        return Err(Error::InvalidParameter("sweep needs runs, distances and separations".into()));
    }
    if !(cfg.focal_length_spread_px >= 0.0 && cfg.focal_length_spread_px < cfg.focal_length_px) {
        return Err(Error::InvalidParameter("focal length spread must lie in [0, focal length)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cells = Vec::new();
    let mut by_distance = Vec::new();
    for &d in &cfg.camera_distances_m {
        let mut pooled = Vec::new();
        for &sep in &cfg.separations_m {
            let mut estimates = Vec::with_capacity(cfg.runs);
            let mut errors = Vec::with_capacity(cfg.runs);
            for _ in 0..cfg.runs {
                let spread = cfg.focal_length_spread_px;
                let f = cfg.focal_length_px + rng.gen_range(-spread..=spread);
                let shift = rng.gen_range(-cfg.max_shift_m..=cfg.max_shift_m);
                let marker_shift = rng.gen_range(-cfg.max_shift_m..=cfg.max_shift_m);
                let est = measure_layout(cfg, f, d, sep, shift, marker_shift)?;
                estimates.push(est);
                errors.push(percent_error(sep, est).expect("separations are positive"));
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            pooled.extend_from_slice(&errors);
            cells.push(SweepCell {
                camera_distance_m: d,
                separation_m: sep,
                n: estimates.len(),
                mean_estimate_m: mean(&estimates),
                stdev_m: sample_stdev(&estimates),
                mean_percent_error: mean(&errors),
            });
        }
        by_distance.push((d, pooled.iter().sum::<f64>() / pooled.len() as f64));
    }
    Ok(SweepResult { cells, by_distance })
}
