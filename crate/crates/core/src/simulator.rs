//! Pinhole-camera scene simulator.
//!
//! People stand on a flat ground plane in front of an untilted camera.
//! A person of width `w` at lateral offset `X` and depth `Z` projects to a
//! box `F * w / Z` pixels wide centred at `cx + F * X / Z`. The feet sit at
//! `cy + F * camera_height / Z`, the head `F * height / Z` above them.
//! Noise is applied after the exact projection, in order: dropout, corner
//! jitter, rounding to whole pixels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detections::{BoundingBox, Detection, Frame};
use crate::error::{Error, Result};

fn default_camera_height() -> f64 {
    1.5
}

fn default_person_height() -> f64 {
    1.7
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Noise {
    #[serde(default)]
    pub pixel_quantization: bool,
    #[serde(default)]
    pub jitter_px: f64,
    #[serde(default)]
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePerson {
    pub pid: u64,
    pub width_m: f64,
    #[serde(default = "default_person_height")]
    pub height_m: f64,
    /// Ground position `[lateral_m, depth_m]` at frame 0.
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    /// Displacement per frame, added to `position`.
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
    /// Explicit per-frame positions; exclusive with `position`.
    #[serde(default)]
    pub samples: Option<Vec<[f64; 2]>>,
    /// Half-open frame ranges `[start, end)` in which the person is not detected.
    #[serde(default)]
    pub hidden: Vec<[u64; 2]>,
}

impl ScenePerson {
    pub fn fixed(pid: u64, width_m: f64, lateral_m: f64, depth_m: f64) -> Self {
        ScenePerson {
            pid,
            width_m,
            height_m: default_person_height(),
            position: Some([lateral_m, depth_m]),
            velocity: None,
            samples: None,
            hidden: Vec::new(),
        }
    }

    /// Ground position `(X, Z)` at `frame`.
    pub fn position_at(&self, frame: u64) -> (f64, f64) {
        if let Some(samples) = &self.samples {
            let [x, z] = samples.get(frame as usize).or(samples.last()).copied().unwrap_or([0.0, 0.0]);
            return (x, z);
        }
        let [x, z] = self.position.unwrap_or([0.0, 1.0]);
        let [vx, vz] = self.velocity.unwrap_or([0.0, 0.0]);
        let t = frame as f64;
        (x + vx * t, z + vz * t)
    }

    fn hidden_at(&self, frame: u64) -> bool {
        self.hidden.iter().any(|&[start, end]| (start..end).contains(&frame))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub focal_length_px: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Defaults to the image centre.
    #[serde(default)]
    pub principal_point: Option<[f64; 2]>,
    #[serde(default = "default_camera_height")]
    pub camera_height_m: f64,
    pub frame_count: u64,
    #[serde(default)]
    pub fps: Option<f64>,
    #[serde(default)]
    pub noise: Noise,
    #[serde(default)]
    pub persons: Vec<ScenePerson>,
}

/// Ground truth for one simulated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub frame: u64,
    pub persons: Vec<TruthPerson>,
    pub pairs: Vec<TruthPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPerson {
    pub pid: u64,
    pub x_m: f64,
    pub z_m: f64,
    /// Exact projected box centre, used to align tracks with people.
    pub u_px: f64,
    pub v_px: f64,
    /// Whether a detection was emitted for this person in this frame.
    pub visible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPair {
    pub a: u64,
    pub b: u64,
    pub d_m: f64,
}

impl TruthRecord {
    pub fn person(&self, pid: u64) -> Option<&TruthPerson> {
        self.persons.iter().find(|p| p.pid == pid)
    }

    pub fn pair(&self, a: u64, b: u64) -> Option<&TruthPair> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }
}

/// Ground distance between two people.
pub fn ground_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.0 - a.0).hypot(b.1 - a.1)
}

impl Scene {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn principal_point(&self) -> (f64, f64) {
        match self.principal_point {
            Some([x, y]) => (x, y),
            None => (f64::from(self.image_width) / 2.0, f64::from(self.image_height) / 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scene(m));
        if !(self.focal_length_px.is_finite() && self.focal_length_px > 0.0) {
            return bad(format!("focal_length_px must be positive, got {}", self.focal_length_px));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be positive".into());
        }
        if !self.camera_height_m.is_finite() {
            return bad("camera_height_m must be finite".into());
        }
        if let Some(fps) = self.fps {
            if !(fps.is_finite() && fps > 0.0) {
                return bad(format!("fps must be positive, got {fps}"));
            }
        }
        let n = &self.noise;
        if !(n.jitter_px.is_finite() && n.jitter_px >= 0.0) {
            return bad(format!("jitter_px must be non-negative, got {}", n.jitter_px));
        }
        if !(0.0..1.0).contains(&n.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", n.dropout_rate));
        }
        let mut pids: Vec<u64> = self.persons.iter().map(|p| p.pid).collect();
        pids.sort_unstable();
        if pids.windows(2).any(|w| w[0] == w[1]) {
            return bad("person ids must be unique".into());
        }
        for p in &self.persons {
            if !(p.width_m.is_finite() && p.width_m > 0.0 && p.height_m.is_finite() && p.height_m > 0.0) {
                return bad(format!("person {}: width and height must be positive", p.pid));
            }
            match (&p.position, &p.samples) {
                (Some(_), None) => {}
                (None, Some(s)) => {
                    if p.velocity.is_some() {
                        return bad(format!("person {}: velocity requires position", p.pid));
                    }
                    if s.len() as u64 != self.frame_count {
                        return bad(format!(
                            "person {}: {} samples for {} frames",
                            p.pid,
                            s.len(),
                            self.frame_count
                        ));
                    }
                }
                _ => return bad(format!("person {}: give exactly one of position or samples", p.pid)),
            }
            for f in 0..self.frame_count {
                let (x, z) = p.position_at(f);
                if !(x.is_finite() && z.is_finite()) {
                    return bad(format!("person {} frame {f}: position not finite", p.pid));
                }
                if z <= 0.0 {
                    return bad(format!("person {} frame {f}: depth {z} is not in front of the camera", p.pid));
                }
            }
        }
        Ok(())
    }

    /// Exact, noise-free box for a person at `(x, z)`, or `None` when it leaves the image.
    pub fn project_person(&self, person: &ScenePerson, x: f64, z: f64) -> Option<BoundingBox> {
        let f = self.focal_length_px;
        let (cx, cy) = self.principal_point();
        let half_w = f * person.width_m / z / 2.0;
        let u = cx + f * x / z;
        let feet = cy + f * self.camera_height_m / z;
        let head = feet - f * person.height_m / z;
        let b = BoundingBox { x1: u - half_w, y1: head, x2: u + half_w, y2: feet };
        let in_view = b.x1 >= 0.0
            && b.y1 >= 0.0
            && b.x2 <= f64::from(self.image_width)
            && b.y2 <= f64::from(self.image_height);
        (in_view && b.validate().is_ok()).then_some(b)
    }

    /// Noise-free frame at `frame_index`; people hidden by the scene script are omitted.
    pub fn project(&self, frame_index: u64) -> Result<Frame> {
        if frame_index >= self.frame_count {
            return Err(Error::InvalidParameter(format!(
                "frame {frame_index} out of range for {} frames",
                self.frame_count
            )));
        }
        let mut detections = Vec::new();
        for p in &self.persons {
            let (x, z) = p.position_at(frame_index);
            if z <= 0.0 {
                return Err(Error::Scene(format!("person {} at depth {z}", p.pid)));
            }
            if p.hidden_at(frame_index) {
                continue;
            }
            if let Some(b) = self.project_person(p, x, z) {
                detections.push(Detection::person(b, 1.0));
            }
        }
        Ok(self.frame_shell(frame_index, detections))
    }

    fn frame_shell(&self, frame_index: u64, detections: Vec<Detection>) -> Frame {
        Frame {
            frame_index,
            timestamp_s: self.fps.map(|fps| frame_index as f64 / fps),
            image_width: self.image_width,
            image_height: self.image_height,
            detections,
        }
    }

    /// Detections and ground truth for one frame. Each frame draws from its
    /// own stream of the seeded generator, so frames can be produced in any order.
    pub fn generate_frame(&self, seed: u64, frame_index: u64) -> Result<(Frame, TruthRecord)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(frame_index);
        let jitter = (self.noise.jitter_px > 0.0)
            .then(|| Normal::new(0.0, self.noise.jitter_px).expect("validated jitter"));
        let (w, h) = (f64::from(self.image_width), f64::from(self.image_height));

        let mut detections = Vec::new();
        let mut truth_persons = Vec::with_capacity(self.persons.len());
        for p in &self.persons {
            let (x, z) = p.position_at(frame_index);
            if z <= 0.0 {
                return Err(Error::Scene(format!("person {} at depth {z}", p.pid)));
            }
            // fixed number of draws per person keeps later people independent of earlier outcomes
            let dropped = rng.gen::<f64>() < self.noise.dropout_rate;
            let mut offsets = [0.0; 4];
            if let Some(n) = &jitter {
                for o in &mut offsets {
                    *o = n.sample(&mut rng);
                }
            }
            let exact = self.project_person(p, x, z);
            let (u, v) = match exact {
                Some(b) => b.centroid(),
                None => {
                    let f = self.focal_length_px;
                    let (cx, cy) = self.principal_point();
                    (cx + f * x / z, cy + f * (self.camera_height_m - p.height_m / 2.0) / z)
                }
            };
            let mut visible = false;
            if let (Some(b), false, false) = (exact, dropped, p.hidden_at(frame_index)) {
                let mut c = [b.x1 + offsets[0], b.y1 + offsets[1], b.x2 + offsets[2], b.y2 + offsets[3]];
                if self.noise.pixel_quantization {
                    for v in &mut c {
                        *v = v.round();
                    }
                }
                let noisy = BoundingBox {
                    x1: c[0].clamp(0.0, w),
                    y1: c[1].clamp(0.0, h),
                    x2: c[2].clamp(0.0, w),
                    y2: c[3].clamp(0.0, h),
                };
                if noisy.validate().is_ok() {
                    detections.push(Detection::person(noisy, 1.0));
                    visible = true;
                }
            }
            truth_persons.push(TruthPerson { pid: p.pid, x_m: x, z_m: z, u_px: u, v_px: v, visible });
        }

        let mut order: Vec<&TruthPerson> = truth_persons.iter().collect();
        order.sort_by_key(|p| p.pid);
        let mut pairs = Vec::new();
        for i in 0..order.len() {
            for j in i + 1..order.len() {
                let (a, b) = (order[i], order[j]);
                pairs.push(TruthPair { a: a.pid, b: b.pid, d_m: ground_distance((a.x_m, a.z_m), (b.x_m, b.z_m)) });
            }
        }
        Ok((
            self.frame_shell(frame_index, detections),
            TruthRecord { frame: frame_index, persons: truth_persons, pairs },
        ))
    }

    /// Paired detection and ground-truth streams with aligned frame indices.
    pub fn generate(&self, seed: u64) -> Result<(Vec<Frame>, Vec<TruthRecord>)> {
        self.validate()?;
        let mut frames = Vec::with_capacity(self.frame_count as usize);
        let mut truth = Vec::with_capacity(self.frame_count as usize);
        for i in 0..self.frame_count {
            let (f, t) = self.generate_frame(seed, i)?;
            frames.push(f);
            truth.push(t);
        }
        Ok((frames, truth))
    }
}

/// Two people at equal depth: person 0 straight ahead of the camera at
/// `camera_distance_m`, person 1 `separation_m` to its right.
pub fn paired_layout(
    focal_length_px: f64,
    width_m: f64,
    camera_distance_m: f64,
    separation_m: f64,
    frame_count: u64,
) -> Scene {
    Scene {
        focal_length_px,
        image_width: 1920,
        image_height: 1080,
        principal_point: None,
        camera_height_m: default_camera_height(),
        frame_count,
        fps: Some(30.0),
        noise: Noise::default(),
        persons: vec![
            ScenePerson::fixed(0, width_m, 0.0, camera_distance_m),
            ScenePerson::fixed(1, width_m, separation_m, camera_distance_m),
        ],
    }
}

pub fn parse_truth(input: &str) -> Result<Vec<TruthRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
