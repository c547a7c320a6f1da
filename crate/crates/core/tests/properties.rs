use std::collections::BTreeSet;

use proptest::prelude::*;

use sdmeasure::calibration::{calibrate, CameraCalibration};
use sdmeasure::detections::{filter_people, parse_str, serialize_stream, BoundingBox, Detection, Frame};
use sdmeasure::evaluator::{confusion_from_edges, edge, metrics, ConfusionCounts, EdgeFrame};
use sdmeasure::geometry::{estimate_depth, pair_distance, PersonDistance};
use sdmeasure::tracker::{Tracker, TrackerConfig};

fn arb_bbox() -> impl Strategy<Value = BoundingBox> {
    (0.0..1500.0f64, 0.0..900.0f64, 0.5..300.0f64, 0.5..300.0f64)
        .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
}

fn arb_detection() -> impl Strategy<Value = Detection> {
    (arb_bbox(), 0i64..4, 0.0..=1.0f64, proptest::option::of("[a-z0-9 ]{0,12}"))
        .prop_map(|(bbox, class_id, score, mask)| Detection { bbox, class_id, score, mask })
}

fn arb_frames() -> impl Strategy<Value = Vec<Frame>> {
    prop::collection::vec((1u64..5, proptest::option::of(0.0..100.0f64), prop::collection::vec(arb_detection(), 0..6)), 0..8)
        .prop_map(|items| {
            let mut index = 0;
            items
                .into_iter()
                .map(|(step, t, detections)| {
                    index += step;
                    Frame { frame_index: index, timestamp_s: t, image_width: 1920, image_height: 1200, detections }
                })
                .collect()
        })
}

proptest! {
    #[test]
    fn stream_round_trip(frames in arb_frames()) {
        let text = serialize_stream(&frames);
        let parsed = parse_str(&text).unwrap();
        prop_assert!(parsed.rejections.is_empty());
        prop_assert_eq!(parsed.frames, frames);
    }

    #[test]
    fn filter_is_idempotent_subsequence(frames in arb_frames(), class in 0i64..4, min_score in 0.0..=1.0f64) {
        for f in &frames {
            let before = f.clone();
            let once = filter_people(f, class, min_score);
            prop_assert_eq!(f, &before);
            prop_assert_eq!(&filter_people(&once, class, min_score), &once);
            // subsequence: walk the input once
            let mut it = f.detections.iter();
            for d in &once.detections {
                prop_assert!(it.any(|x| x == d));
                prop_assert!(d.class_id == class && d.score >= min_score);
            }
            let expected = f.detections.iter().filter(|d| d.class_id == class && d.score >= min_score).count();
            prop_assert_eq!(once.detections.len(), expected);
        }
    }
}

// Independent greedy oracle: repeatedly take the closest remaining
// (track, detection) pair by linear scan, ties to the lower track id and then
// the lower detection index.
fn greedy_oracle(tracks: &[(u64, (f64, f64))], dets: &[(f64, f64)]) -> Vec<(u64, usize)> {
    let mut t_free = vec![true; tracks.len()];
    let mut d_free = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<(f64, u64, usize, usize)> = None;
        for (ti, (id, c)) in tracks.iter().enumerate() {
            if !t_free[ti] {
                continue;
            }
            for (di, d) in dets.iter().enumerate() {
                if !d_free[di] {
                    continue;
                }
                let dist = ((c.0 - d.0).powi(2) + (c.1 - d.1).powi(2)).sqrt();
                let better = match best {
                    None => true,
                    Some((bd, bid, _, bdi)) => dist < bd || (dist == bd && (*id < bid || (*id == bid && di < bdi))),
                };
                if better {
                    best = Some((dist, *id, ti, di));
                }
            }
        }
        let Some((_, id, ti, di)) = best else { break };
        t_free[ti] = false;
        d_free[di] = false;
        out.push((id, di));
    }
    out.sort();
    out
}

fn frame_of(index: u64, centroids: &[(f64, f64)]) -> Frame {
    Frame {
        frame_index: index,
        timestamp_s: None,
        image_width: 4000,
        image_height: 4000,
        detections: centroids
            .iter()
            .map(|&(x, y)| Detection::person(BoundingBox::new(x - 5.0, y - 5.0, x + 5.0, y + 5.0).unwrap(), 1.0))
            .collect(),
    }
}

fn grid_point() -> impl Strategy<Value = (f64, f64)> {
    // integer grid makes exact distance ties common
    (10i32..60, 10i32..60).prop_map(|(x, y)| (f64::from(x), f64::from(y)))
}

proptest! {
    #[test]
    fn tracker_matches_greedy_oracle(
        first in prop::collection::vec(grid_point(), 0..6),
        second in prop::collection::vec(grid_point(), 0..6),
    ) {
        let mut t = Tracker::default();
        t.update(&frame_of(0, &first));
        let tracks: Vec<(u64, (f64, f64))> = t.tracks().iter().map(|tr| (tr.track_id, tr.centroid)).collect();
        let before = tracks.len();
        let a = t.update(&frame_of(1, &second));
        let mut got: Vec<(u64, usize)> = a.matched.iter().map(|m| (m.track_id, m.det_index)).collect();
        got.sort();
        prop_assert_eq!(&got, &greedy_oracle(&tracks, &second));
        // conservation
        prop_assert!(a.matched.len() <= before.min(second.len()));
        prop_assert_eq!(a.matched.len() + a.registered.len(), second.len());
        // determinism
        let mut t2 = Tracker::default();
        t2.update(&frame_of(0, &first));
        prop_assert_eq!(t2.update(&frame_of(1, &second)), a);
    }

    #[test]
    fn tracker_never_reuses_ids(frames in prop::collection::vec(prop::collection::vec(grid_point(), 0..5), 1..20), max_disappeared in 0u32..4) {
        let mut t = Tracker::new(TrackerConfig { max_disappeared, max_match_distance: Some(8.0) });
        let mut issued = BTreeSet::new();
        for (i, c) in frames.iter().enumerate() {
            let a = t.update(&frame_of(i as u64, c));
            for r in &a.registered {
                prop_assert!(issued.insert(r.track_id), "id {} issued twice", r.track_id);
            }
            prop_assert!(t.tracks().iter().all(|tr| tr.disappeared_count <= max_disappeared));
            prop_assert!(t.tracks().iter().all(|tr| tr.track_id < t.next_id()));
        }
    }
}

#[test]
fn crossing_targets_against_enumeration() {
        let tracks = [(0u64, (100.0, 100.0)), (1u64, (110.0, 100.0))];
    let dets = [(104.0, 100.0), (106.0, 100.0)];
    assert_eq!(greedy_oracle(&tracks, &dets), vec![(0, 0), (1, 1)]);
    let mut t = Tracker::default();
    t.update(&frame_of(0, &[(100.0, 100.0), (110.0, 100.0)]));
    let a = t.update(&frame_of(1, &dets));
    let got: Vec<_> = a.matched.iter().map(|m| (m.track_id, m.det_index)).collect();
    assert_eq!(got, vec![(0, 0), (1, 1)]);
}

proptest! {
    #[test]
    fn calibration_depth_round_trip(x1 in 0.0..2000.0f64, w in 2.0..800.0f64, d in 0.5..30.0f64, known in 0.3..0.9f64) {
        let b = BoundingBox::new(x1, 10.0, x1 + w, 500.0).unwrap();
        let c = calibrate(&b, d, known).unwrap();
        let (y, _) = estimate_depth(&c, &b, 0.0).unwrap();
        prop_assert!(((y - d) / d).abs() <= 1e-12, "{} vs {}", y, d);
    }

    #[test]
    fn calibration_scale_covariance(w in 2.0..800.0f64, d in 0.5..30.0f64, known in 0.3..0.9f64, s in 0.1..10.0f64) {
        let base = CameraCalibration::from_marker_width(w, d, known).unwrap().focal_length_px;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        prop_assert!(rel(CameraCalibration::from_marker_width(w * s, d, known).unwrap().focal_length_px, base * s) < 1e-12);
        prop_assert!(rel(CameraCalibration::from_marker_width(w, d * s, known).unwrap().focal_length_px, base * s) < 1e-12);
        prop_assert!(rel(CameraCalibration::from_marker_width(w, d, known * s).unwrap().focal_length_px, base / s) < 1e-12);
    }
}

fn arb_person(id: u64) -> impl Strategy<Value = PersonDistance> {
    (0.5..30.0f64, 2.0..400.0f64, 0.0..4000.0f64)
        .prop_map(move |(depth_m, width_px, centroid_x)| PersonDistance { track_id: id, depth_m, width_px, centroid_x })
}

proptest! {
    #[test]
    fn pair_distance_properties(a in arb_person(0), b in arb_person(1), f in 300.0..3000.0f64, w in 0.3..0.9f64, threshold in 0.1..5.0f64) {
        let c = CameraCalibration::from_focal_length(f, w).unwrap();
        let ab = pair_distance(&c, &a, &b, threshold);
        let ba = pair_distance(&c, &b, &a, threshold);
        prop_assert_eq!(ab, ba);
        prop_assert!(ab.distance_m >= 0.0);
        let lhs = ab.distance_m.powi(2);
        let rhs = ab.horiz_m.powi(2) + ab.depth_delta_m.powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-300));
        prop_assert!((ab.ppm - ab.avg_width_px / w).abs() <= 1e-12 * ab.ppm);
        prop_assert_eq!(ab.violation, ab.distance_m < threshold);
        let aa = pair_distance(&c, &a, &a, threshold);
        prop_assert_eq!(aa.distance_m, 0.0);
    }

    #[test]
    fn pair_distance_monotone(a in arb_person(0), b in arb_person(1), dx in 0.0..500.0f64, dy in 0.0..10.0f64) {
        let c = CameraCalibration::from_focal_length(1000.0, 0.5).unwrap();
        let base = pair_distance(&c, &a, &b, 1.8).distance_m;
        let mut farther = b;
        farther.centroid_x = if b.centroid_x >= a.centroid_x { b.centroid_x + dx } else { b.centroid_x - dx };
        prop_assert!(pair_distance(&c, &a, &farther, 1.8).distance_m >= base);
        let mut deeper = b;
        deeper.depth_m = if b.depth_m >= a.depth_m { b.depth_m + dy } else { (b.depth_m - dy).max(0.0) };
        if b.depth_m >= a.depth_m || b.depth_m - dy >= 0.0 {
            prop_assert!(pair_distance(&c, &a, &deeper, 1.8).distance_m >= base);
        }
    }

    #[test]
    fn zero_lateral_gap_is_depth_gap(a in arb_person(0), b in arb_person(1)) {
        let c = CameraCalibration::from_focal_length(1000.0, 0.5).unwrap();
        let mut b = b;
        b.centroid_x = a.centroid_x;
        let m = pair_distance(&c, &a, &b, 1.8);
        prop_assert_eq!(m.distance_m, (b.depth_m - a.depth_m).abs());
    }

    #[test]
    fn equal_depth_recovers_lateral_separation(f in 500.0..2000.0f64, w in 0.4..0.7f64, z in 2.0..15.0f64, xa in -3.0..3.0f64, gap in 0.2..4.0f64) {
        // exact pinhole projection of two people sharing depth z
        let project = |x: f64| {
            let half = f * w / z / 2.0;
            let u = 5000.0 + f * x / z;
            BoundingBox::new(u - half, 100.0, u + half, 900.0).unwrap()
        };
        let c = CameraCalibration::from_focal_length(f, w).unwrap();
        let a = PersonDistance::measure(&c, 0, &project(xa), 0.0).unwrap();
        let b = PersonDistance::measure(&c, 1, &project(xa + gap), 0.0).unwrap();
        let m = pair_distance(&c, &a, &b, 1.8);
        prop_assert!(((m.distance_m - gap) / gap).abs() <= 1e-9, "{} vs {}", m.distance_m, gap);
    }
}

fn arb_edge_frame(frame: u64) -> impl Strategy<Value = (EdgeFrame, EdgeFrame, EdgeFrame)> {
    (2u64..7).prop_flat_map(move |n| {
        let all: Vec<(u64, u64)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let k = all.len();
        (prop::collection::vec(any::<bool>(), k), prop::collection::vec(any::<bool>(), k)).prop_map(move |(p, t)| {
            let pick = |mask: &[bool]| EdgeFrame::new(frame, all.iter().zip(mask).filter(|(_, m)| **m).map(|(e, _)| *e));
            (pick(&p), pick(&t), EdgeFrame::new(frame, all.iter().copied()))
        })
    })
}

fn arb_edge_stream() -> impl Strategy<Value = Vec<(EdgeFrame, EdgeFrame, EdgeFrame)>> {
    (1usize..8).prop_flat_map(|n| (0..n as u64).map(arb_edge_frame).collect::<Vec<_>>())
}

// brute-force recount, one edge at a time
fn recount(stream: &[(EdgeFrame, EdgeFrame, EdgeFrame)]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (p, t, u) in stream {
        for e in &u.edges {
            match (p.edges.contains(e), t.edges.contains(e)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    c
}

fn split(stream: &[(EdgeFrame, EdgeFrame, EdgeFrame)]) -> (Vec<EdgeFrame>, Vec<EdgeFrame>, Vec<EdgeFrame>) {
    (
        stream.iter().map(|s| s.0.clone()).collect(),
        stream.iter().map(|s| s.1.clone()).collect(),
        stream.iter().map(|s| s.2.clone()).collect(),
    )
}

proptest! {
    #[test]
    fn confusion_properties(stream in arb_edge_stream()) {
        let (p, t, u) = split(&stream);
        let c = confusion_from_edges(&p, &t, &u).unwrap();
        prop_assert_eq!(c, recount(&stream));
        let universe: u64 = u.iter().map(|f| f.edges.len() as u64).sum();
        prop_assert_eq!(c.total(), universe);

        let mut reversed = stream.clone();
        reversed.reverse();
        let (rp, rt, ru) = split(&reversed);
        prop_assert_eq!(confusion_from_edges(&rp, &rt, &ru).unwrap(), c);

        let m = metrics(&c);
        prop_assert_eq!(m.accuracy, Some((c.tp + c.tn) as f64 / c.total() as f64 * 100.0));
        if c.tn + c.fp > 0 {
            let specificity = c.tn as f64 / (c.tn + c.fp) as f64 * 100.0;
            prop_assert!((m.false_alarm_rate.unwrap() + specificity - 100.0).abs() < 1e-9);
        } else {
            prop_assert_eq!(m.false_alarm_rate, None);
        }
    }
}

#[test]
fn edge_is_unordered() {
    assert_eq!(edge(5, 2), (2, 5));
    assert_eq!(EdgeFrame::new(0, [(3, 1)]).edges, [(1, 3)].into_iter().collect());
}
