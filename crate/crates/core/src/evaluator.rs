//! Violation-edge confusion counts, detection metrics, and distance error statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pipeline::ReportRecord;
use crate::simulator::TruthRecord;

/// Unordered pair of identities, stored with the smaller id first.
pub type Edge = (u64, u64);

pub fn edge(a: u64, b: u64) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub const DEFAULT_ALIGN_GATE_PX: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeFrame {
    pub frame: u64,
    pub edges: BTreeSet<Edge>,
}

impl EdgeFrame {
    pub fn new(frame: u64, edges: impl IntoIterator<Item = Edge>) -> Self {
        EdgeFrame { frame, edges: edges.into_iter().map(|(a, b)| edge(a, b)).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts for one frame. Both edge sets must be subsets of `universe`.
    pub fn from_frame(frame: u64, predicted: &BTreeSet<Edge>, truth: &BTreeSet<Edge>, universe: &BTreeSet<Edge>) -> Result<Self> {
        if let Some(&(a, b)) = predicted.iter().chain(truth).find(|e| !universe.contains(e)) {
            return Err(Error::EdgeOutsideUniverse(a, b, frame));
        }
        let tp = predicted.intersection(truth).count() as u64;
        let fp = predicted.difference(truth).count() as u64;
        let fn_ = truth.difference(predicted).count() as u64;
        let tn = universe.iter().filter(|e| !predicted.contains(e) && !truth.contains(e)).count() as u64;
        Ok(ConfusionCounts { tp, fp, tn, fn_ })
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |a, b| a + b)
    }
}

/// Sum per-frame confusion over frame-aligned edge streams.
pub fn confusion_from_edges(predicted: &[EdgeFrame], truth: &[EdgeFrame], universe: &[EdgeFrame]) -> Result<ConfusionCounts> {
    if predicted.len() != truth.len() || truth.len() != universe.len() {
        return Err(Error::Misaligned(format!(
            "{} predicted, {} truth, {} universe frames",
            predicted.len(),
            truth.len(),
            universe.len()
        )));
    }
    let mut total = ConfusionCounts::default();
    for ((p, t), u) in predicted.iter().zip(truth).zip(universe) {
        if p.frame != t.frame || t.frame != u.frame {
            return Err(Error::Misaligned(format!("frames {}, {}, {} do not line up", p.frame, t.frame, u.frame)));
        }
        total = total + ConfusionCounts::from_frame(p.frame, &p.edges, &t.edges, &u.edges)?;
    }
    Ok(total)
}

fn na_or_number<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("n/a"),
    }
}

/// Percentages; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    #[serde(serialize_with = "na_or_number")]
    pub precision: Option<f64>,
    #[serde(serialize_with = "na_or_number")]
    pub recall: Option<f64>,
    #[serde(serialize_with = "na_or_number")]
    pub false_alarm_rate: Option<f64>,
    #[serde(serialize_with = "na_or_number")]
    pub accuracy: Option<f64>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    Metrics {
        precision: percent(c.tp, c.tp + c.fp),
        recall: percent(c.tp, c.tp + c.fn_),
        false_alarm_rate: percent(c.fp, c.tn + c.fp),
        accuracy: percent(c.tp + c.tn, c.total()),
    }
}

pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}%"),
        None => "n/a".to_string(),
    }
}

impl Metrics {
    /// Table rows such as `Accuracy 94.26%`.
    pub fn rows(&self) -> Vec<String> {
        [
            ("Precision", self.precision),
            ("Recall", self.recall),
            ("False Alarm Rate", self.false_alarm_rate),
            ("Accuracy", self.accuracy),
        ]
        .iter()
        .map(|(name, v)| format!("{name} {}", format_percent(*v)))
        .collect()
    }
}

/// Sample standard deviation (n - 1 denominator). `None` for fewer than two values.
pub fn sample_stdev(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1) as f64).sqrt())
}

/// `|true - estimated| / true * 100`. `None` unless `true_m > 0`.
///
/// Both values are scaled to percent before subtracting, which keeps round
/// decimal inputs round: `(2.0, 1.8)` gives exactly `10.0`.
pub fn percent_error(true_m: f64, estimated_m: f64) -> Option<f64> {
    (true_m > 0.0 && true_m.is_finite()).then(|| (true_m * 100.0 - estimated_m * 100.0).abs() / true_m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceStats {
    pub n: usize,
    #[serde(serialize_with = "na_or_number")]
    pub mean_estimate_m: Option<f64>,
    #[serde(serialize_with = "na_or_number")]
    pub stdev_m: Option<f64>,
    #[serde(serialize_with = "na_or_number")]
    pub mean_percent_error: Option<f64>,
    /// Samples dropped for a non-positive true distance.
    pub rejected: usize,
}

impl DistanceStats {
    /// Statistics over `(true_m, estimated_m)` samples.
    pub fn from_samples(samples: &[(f64, f64)]) -> Self {
        let (kept, rejected): (Vec<_>, Vec<_>) = samples.iter().partition(|(t, _)| *t > 0.0 && t.is_finite());
        let estimates: Vec<f64> = kept.iter().map(|(_, e)| *e).collect();
        let errors: Vec<f64> = kept.iter().filter_map(|(t, e)| percent_error(*t, *e)).collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        DistanceStats {
            n: kept.len(),
            mean_estimate_m: mean(&estimates),
            stdev_m: sample_stdev(&estimates),
            mean_percent_error: mean(&errors),
            rejected: rejected.len(),
        }
    }
}

/// Per-group statistics, groups in key order.
pub fn distance_stats<K: Ord + Clone>(samples: &[(K, f64, f64)]) -> Vec<(K, DistanceStats)> {
    let mut groups: BTreeMap<K, Vec<(f64, f64)>> = BTreeMap::new();
    for (k, t, e) in samples {
        groups.entry(k.clone()).or_default().push((*t, *e));
    }
    groups.into_iter().map(|(k, v)| (k, DistanceStats::from_samples(&v))).collect()
}

/// Track-to-person correspondence for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Alignment {
    pub track_to_pid: BTreeMap<u64, u64>,
    pub unmatched_predicted: usize,
    pub unmatched_truth: usize,
}

/// Greedy nearest-centroid matching of reported tracks to visible truth
/// people, accepting pairs no farther apart than `gate_px`.
pub fn align_frame(report: &ReportRecord, truth: &TruthRecord, gate_px: f64) -> Alignment {
    let visible: Vec<_> = truth.persons.iter().filter(|p| p.visible).collect();
    let mut candidates = Vec::new();
    for (pi, p) in report.persons.iter().enumerate() {
        let (u, v) = p.bbox.centroid();
        for (ti, t) in visible.iter().enumerate() {
            let d = (u - t.u_px).hypot(v - t.v_px);
            if d <= gate_px {
                candidates.push((d, p.id, t.pid, pi, ti));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; report.persons.len()];
    let mut truth_used = vec![false; visible.len()];
    let mut track_to_pid = BTreeMap::new();
    for (_, id, pid, pi, ti) in candidates {
        if pred_used[pi] || truth_used[ti] {
            continue;
        }
        pred_used[pi] = true;
        truth_used[ti] = true;
        track_to_pid.insert(id, pid);
    }
    Alignment {
        unmatched_predicted: pred_used.iter().filter(|u| !**u).count(),
        unmatched_truth: truth_used.iter().filter(|u| !**u).count(),
        track_to_pid,
    }
}

/// Hand-labelled violation edges for one frame, in track-id space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLabel {
    pub frame: u64,
    pub violations: Vec<[u64; 2]>,
}

pub fn parse_edge_labels(input: &str) -> Result<Vec<EdgeLabel>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub true_m: f64,
    #[serde(flatten)]
    pub stats: DistanceStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Unmatched {
    pub predicted: usize,
    pub truth: usize,
}

/// Everything written to the metrics file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub frames: usize,
    pub threshold_m: f64,
    pub confusion: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub unmatched: Unmatched,
    /// Distance statistics grouped by true pair separation.
    pub distance: Vec<GroupStats>,
}

fn check_aligned(a: &[u64], b: &[u64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Misaligned(format!("{} predicted frames vs {} truth frames", a.len(), b.len())));
    }
    if let Some((x, y)) = a.iter().zip(b).find(|(x, y)| x != y) {
        return Err(Error::Misaligned(format!("predicted frame {x} paired with truth frame {y}")));
    }
    Ok(())
}

// Group keys are true distances rounded to the micrometre.
fn group_key(d: f64) -> i64 {
    (d * 1e6).round() as i64
}

/// Score a report stream against simulator ground truth.
pub fn evaluate_against_truth(
    reports: &[ReportRecord],
    truth: &[TruthRecord],
    threshold_m: f64,
    gate_px: f64,
) -> Result<Evaluation> {
    check_aligned(
        &reports.iter().map(|r| r.frame).collect::<Vec<_>>(),
        &truth.iter().map(|t| t.frame).collect::<Vec<_>>(),
    )?;
    let mut pred_frames = Vec::with_capacity(reports.len());
    let mut truth_frames = Vec::with_capacity(reports.len());
    let mut universe_frames = Vec::with_capacity(reports.len());
    let mut unmatched = Unmatched::default();
    let mut samples = Vec::new();

    for (r, t) in reports.iter().zip(truth) {
        let align = align_frame(r, t, gate_px);
        unmatched.predicted += align.unmatched_predicted;
        unmatched.truth += align.unmatched_truth;
        let pids: Vec<u64> = align.track_to_pid.values().copied().collect();
        let mut universe = BTreeSet::new();
        for (i, a) in pids.iter().enumerate() {
            for b in &pids[i + 1..] {
                universe.insert(edge(*a, *b));
            }
        }
        let mapped = |a: u64, b: u64| Some(edge(*align.track_to_pid.get(&a)?, *align.track_to_pid.get(&b)?));
        let predicted: BTreeSet<Edge> = r.violations().filter_map(|(a, b)| mapped(a, b)).collect();
        let truth_edges: BTreeSet<Edge> = t
            .pairs
            .iter()
            .filter(|p| p.d_m < threshold_m && universe.contains(&edge(p.a, p.b)))
            .map(|p| edge(p.a, p.b))
            .collect();
        for p in &r.pairs {
            if let Some((a, b)) = mapped(p.a, p.b) {
                if let Some(tp) = t.pair(a, b) {
                    samples.push((group_key(tp.d_m), tp.d_m, p.d_m));
                }
            }
        }
        pred_frames.push(EdgeFrame { frame: r.frame, edges: predicted });
        truth_frames.push(EdgeFrame { frame: r.frame, edges: truth_edges });
        universe_frames.push(EdgeFrame { frame: r.frame, edges: universe });
    }

    let confusion = confusion_from_edges(&pred_frames, &truth_frames, &universe_frames)?;
    let distance = distance_stats(&samples)
        .into_iter()
        .map(|(k, stats)| GroupStats { true_m: k as f64 / 1e6, stats })
        .collect();
    Ok(Evaluation {
        frames: reports.len(),
        threshold_m,
        confusion,
        metrics: metrics(&confusion),
        unmatched,
        distance,
    })
}

/// Score a report stream against hand-labelled edges given in track ids.
/// The universe of each frame is every pair of reported persons.
pub fn evaluate_against_labels(reports: &[ReportRecord], labels: &[EdgeLabel], threshold_m: f64) -> Result<Evaluation> {
    check_aligned(
        &reports.iter().map(|r| r.frame).collect::<Vec<_>>(),
        &labels.iter().map(|l| l.frame).collect::<Vec<_>>(),
    )?;
    let mut confusion = ConfusionCounts::default();
    for (r, l) in reports.iter().zip(labels) {
        let ids: Vec<u64> = r.persons.iter().map(|p| p.id).collect();
        let mut universe = BTreeSet::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                universe.insert(edge(*a, *b));
            }
        }
        let predicted: BTreeSet<Edge> = r.violations().map(|(a, b)| edge(a, b)).collect();
        let truth: BTreeSet<Edge> = l.violations.iter().map(|[a, b]| edge(*a, *b)).collect();
        confusion = confusion + ConfusionCounts::from_frame(r.frame, &predicted, &truth, &universe)?;
    }
    Ok(Evaluation {
        frames: reports.len(),
        threshold_m,
        confusion,
        metrics: metrics(&confusion),
        unmatched: Unmatched::default(),
        distance: Vec::new(),
    })
}
