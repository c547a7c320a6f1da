//! Nearest-centroid multi-object tracker.
//!
//! Each update computes every track-to-detection centroid distance, then
//! accepts candidate pairs greedily in ascending distance order (ties go to
//! the lower track id, then the lower detection index). Leftover detections
//! become new tracks; leftover tracks age and are dropped once they have
//! been missing for more than `max_disappeared` consecutive updates.

use serde::{Deserialize, Serialize};

use crate::detections::{BoundingBox, Frame};

pub type TrackId = u64;

pub const DEFAULT_MAX_DISAPPEARED: u32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub max_disappeared: u32,
    /// Gate on centroid displacement in pixels. `None` accepts any distance.
    pub max_match_distance: Option<f64>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig { max_disappeared: DEFAULT_MAX_DISAPPEARED, max_match_distance: None }
    }
}

/// Midpoint of a box.
pub fn centroid_of(bbox: &BoundingBox) -> (f64, f64) {
    bbox.centroid()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: TrackId,
    pub centroid: (f64, f64),
    pub bbox: BoundingBox,
    pub disappeared_count: u32,
    pub last_seen_frame: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub track_id: TrackId,
    pub det_index: usize,
}

/// Result of one [`Tracker::update`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameAssignments {
    /// Existing tracks matched to a detection, ordered by track id.
    pub matched: Vec<Assignment>,
    /// Tracks created for unmatched detections, ordered by id.
    pub registered: Vec<Assignment>,
    pub deregistered: Vec<TrackId>,
}

impl FrameAssignments {
    /// Every track observed in this frame, matched or new, ordered by track id.
    pub fn current(&self) -> Vec<Assignment> {
        let mut all: Vec<Assignment> = self.matched.iter().chain(&self.registered).copied().collect();
        all.sort_by_key(|a| a.track_id);
        all
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: TrackId,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker { config, tracks: Vec::new(), next_id: 0 }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Registered tracks, ordered by id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.tracks.binary_search_by_key(&id, |t| t.track_id).ok().map(|i| &self.tracks[i])
    }

    pub fn next_id(&self) -> TrackId {
        self.next_id
    }

    /// Advance by one frame of person detections.
    pub fn update(&mut self, frame: &Frame) -> FrameAssignments {
        let dets = &frame.detections;
        let centroids: Vec<(f64, f64)> = dets.iter().map(|d| d.bbox.centroid()).collect();

        let mut candidates = Vec::with_capacity(self.tracks.len() * dets.len());
        for (ti, track) in self.tracks.iter().enumerate() {
            for (di, c) in centroids.iter().enumerate() {
                let d = (track.centroid.0 - c.0).hypot(track.centroid.1 - c.1);
                if self.config.max_match_distance.is_none_or(|gate| d <= gate) {
                    candidates.push((d, ti, di));
                }
            }
        }
        // tracks are kept sorted by id, so the track index orders like the id
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut track_used = vec![false; self.tracks.len()];
        let mut det_used = vec![false; dets.len()];
        let mut out = FrameAssignments::default();
        for (_, ti, di) in candidates {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            let track = &mut self.tracks[ti];
            track.bbox = dets[di].bbox;
            track.centroid = centroids[di];
            track.disappeared_count = 0;
            track.last_seen_frame = frame.frame_index;
            out.matched.push(Assignment { track_id: track.track_id, det_index: di });
        }
        out.matched.sort_by_key(|a| a.track_id);

        let max_disappeared = self.config.max_disappeared;
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (ti, mut track) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            if !track_used[ti] {
                track.disappeared_count += 1;
                if track.disappeared_count > max_disappeared {
                    out.deregistered.push(track.track_id);
                    continue;
                }
            }
            keep.push(track);
        }
        self.tracks = keep;

        for (di, det) in dets.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                track_id: id,
                centroid: centroids[di],
                bbox: det.bbox,
                disappeared_count: 0,
                last_seen_frame: frame.frame_index,
            });
            out.registered.push(Assignment { track_id: id, det_index: di });
        }
        out
    }
}

impl Default for Tracker {
    fn default() -> Self {
        Tracker::new(TrackerConfig::default())
    }
}
