//! Pedestrian detection scoring with bird's-eye-view centre-distance gates.
//!
//! Detections are matched greedily per sample in descending score to the
//! nearest still-unmatched ground truth; a match counts when the distance is
//! within the gate. Average precision integrates the monotone precision
//! envelope over recall in `[0.1, 1]`, normalised by 0.9.
//!
//! Text formats, one record per line, whitespace separated, `#` comments:
//!
//! ```text
//! # detections: sample_id x y score
//! scene-0001/0003  12.4 -3.1 0.92
//! # ground truth: sample_id x y
//! scene-0001/0003  12.0 -3.0
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::bev_distance;
use crate::scene::Scene;

/// Distance gates in metres.
pub const THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const MIN_RECALL: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("score {score} of detection {index} is outside [0, 1]")]
    Score { index: usize, score: f64 },
    #[error("no AP for the {0} m threshold")]
    MissingThreshold(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub sample_id: String,
    pub center: [f64; 2],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sample_id: String,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// Exact integral over recall in [0.1, 1] divided by 0.9.
    #[default]
    NuScenes,
    /// Mean interpolated precision at recall 0, 0.01, ..., 1.
    Voc101,
}

impl std::str::FromStr for Convention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nuscenes" => Ok(Convention::NuScenes),
            "voc101" => Ok(Convention::Voc101),
            other => Err(format!("unknown convention `{other}` (nuscenes, voc101)")),
        }
    }
}

impl DetectionSet {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (index, d) in self.detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(EvalError::Score { index, score: d.score });
            }
        }
        Ok(())
    }
}

/// Detections in ranking order: descending score, ties by sample id, then
/// position, so the ranking does not depend on input order.
fn ranking(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&dets[a], &dets[b]);
        db.score
            .total_cmp(&da.score)
            .then_with(|| da.sample_id.cmp(&db.sample_id))
            .then_with(|| da.center[0].total_cmp(&db.center[0]))
            .then_with(|| da.center[1].total_cmp(&db.center[1]))
    });
    order
}

/// Outcome of matching at one gate. `tp[k]` / `fp[k]` refer to the k-th
/// detection in ranking order, whose score is `scores[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub tp: Vec<bool>,
    pub fp: Vec<bool>,
    pub scores: Vec<f64>,
    pub n_gt: usize,
}

pub fn match_detections(set: &DetectionSet, threshold: f64) -> Matching {
    let order = ranking(&set.detections);
    let mut gts: BTreeMap<&str, Vec<([f64; 2], bool)>> = BTreeMap::new();
    for g in &set.ground_truth {
        gts.entry(g.sample_id.as_str()).or_default().push((g.center, false));
    }
    let mut tp = Vec::with_capacity(order.len());
    for &i in &order {
        let d = &set.detections[i];
        let mut hit = false;
        if let Some(list) = gts.get_mut(d.sample_id.as_str()) {
            let mut best: Option<(usize, f64)> = None;
            for (j, (c, taken)) in list.iter().enumerate() {
                if *taken {
                    continue;
                }
                let dist = bev_distance(d.center, *c);
                if best.is_none_or(|(_, b)| dist.partial_cmp(&b) == Some(Ordering::Less)) {
                    best = Some((j, dist));
                }
            }
            if let Some((j, dist)) = best {
                if dist <= threshold {
                    list[j].1 = true;
                    hit = true;
                }
            }
        }
        tp.push(hit);
    }
    Matching {
        fp: tp.iter().map(|t| !t).collect(),
        scores: order.iter().map(|&i| set.detections[i].score).collect(),
        tp,
        n_gt: set.ground_truth.len(),
    }
}

/// `(recall, precision)` after each ranked detection.
pub fn pr_curve(tp: &[bool], n_gt: usize) -> Vec<(f64, f64)> {
    let mut hits = 0usize;
    tp.iter()
        .enumerate()
        .map(|(k, &t)| {
            hits += t as usize;
            (hits as f64 / n_gt as f64, hits as f64 / (k + 1) as f64)
        })
        .collect()
}

/// Monotone envelope: for each distinct recall level (ascending), the best
/// precision reached at that recall or beyond.
pub fn precision_envelope(curve: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &(r, p) in curve {
        match pts.last_mut() {
            Some(last) if last.0 == r => last.1 = last.1.max(p),
            _ => pts.push((r, p)),
        }
    }
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    pts
}

/// Interpolated precision at recall `r`: best precision at any recall ≥ r.
pub fn interpolated_precision(envelope: &[(f64, f64)], r: f64) -> f64 {
    envelope.iter().find(|(rr, _)| *rr >= r).map_or(0.0, |(_, p)| *p)
}

pub fn average_precision(tp: &[bool], n_gt: usize, convention: Convention) -> f64 {
    if n_gt == 0 || tp.is_empty() {
        return 0.0;
    }
    let env = precision_envelope(&pr_curve(tp, n_gt));
    match convention {
        Convention::NuScenes => {
            // p_interp is constant on (r_{j-1}, r_j]
            let mut area = 0.0;
            let mut prev: f64 = 0.0;
            for &(r, p) in &env {
                let lo = prev.max(MIN_RECALL);
                let hi = r.min(1.0);
                if hi > lo {
                    area += (hi - lo) * p.max(0.0);
                }
                prev = r;
            }
            (area / (1.0 - MIN_RECALL)).clamp(0.0, 1.0)
        }
        Convention::Voc101 => (0..=100).map(|i| interpolated_precision(&env, i as f64 / 100.0)).sum::<f64>() / 101.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap_per_threshold: Vec<ThresholdAp>,
    pub map_score: f64,
}

/// Mean of the four gate APs. Every entry of [`THRESHOLDS`] must be present.
pub fn map_score(aps: &[ThresholdAp]) -> Result<f64, EvalError> {
    let mut sum = 0.0;
    for t in THRESHOLDS {
        let ap = aps
            .iter()
            .find(|a| a.threshold == t)
            .ok_or(EvalError::MissingThreshold(t))?;
        sum += ap.ap;
    }
    Ok(sum / THRESHOLDS.len() as f64)
}

pub fn evaluate(set: &DetectionSet, convention: Convention) -> Result<ApResult, EvalError> {
    set.validate()?;
    let ap_per_threshold: Vec<ThresholdAp> = THRESHOLDS
        .iter()
        .map(|&threshold| {
            let m = match_detections(set, threshold);
            ThresholdAp {
                threshold,
                ap: average_precision(&m.tp, m.n_gt, convention),
            }
        })
        .collect();
    let map_score = map_score(&ap_per_threshold)?;
    Ok(ApResult {
        ap_per_threshold,
        map_score,
    })
}

impl fmt::Display for ApResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.ap_per_threshold {
            write!(f, "{:>10}", format!("AP@{}m", a.threshold))?;
        }
        writeln!(f, "{:>10}", "mAP")?;
        for a in &self.ap_per_threshold {
            write!(f, "{:>10.4}", a.ap)?;
        }
        writeln!(f, "{:>10.4}", self.map_score)
    }
}

fn records(text: &str, fields: usize) -> impl Iterator<Item = Result<(usize, Vec<&str>), EvalError>> {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != fields {
            return Some(Err(EvalError::Parse {
                line: i + 1,
                message: format!("expected {fields} fields, found {}", parts.len()),
            }));
        }
        Some(Ok((i + 1, parts)))
    })
}

fn number(line: usize, s: &str, what: &str) -> Result<f64, EvalError> {
    let v: f64 = s.parse().map_err(|_| EvalError::Parse {
        line,
        message: format!("{what} `{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(EvalError::Parse {
            line,
            message: format!("{what} is not finite"),
        });
    }
    Ok(v)
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>, EvalError> {
    records(text, 4)
        .map(|r| {
            let (line, p) = r?;
            Ok(Detection {
                sample_id: p[0].to_string(),
                center: [number(line, p[1], "x")?, number(line, p[2], "y")?],
                score: number(line, p[3], "score")?,
            })
        })
        .collect()
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>, EvalError> {
    records(text, 3)
        .map(|r| {
            let (line, p) = r?;
            Ok(GroundTruth {
                sample_id: p[0].to_string(),
                center: [number(line, p[1], "x")?, number(line, p[2], "y")?],
            })
        })
        .collect()
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::from("# sample_id x y score\n");
    for d in dets {
        s.push_str(&format!("{} {} {} {}\n", d.sample_id, d.center[0], d.center[1], d.score));
    }
    s
}

pub fn format_ground_truth(gts: &[GroundTruth]) -> String {
    let mut s = String::from("# sample_id x y\n");
    for g in gts {
        s.push_str(&format!("{} {} {}\n", g.sample_id, g.center[0], g.center[1]));
    }
    s
}

/// Sample id of clip frame `frame`.
pub fn frame_sample_id(frame: usize) -> String {
    format!("frame-{frame:04}")
}

/// BEV ground truth of every track in every frame it exists.
pub fn scene_ground_truth(scene: &Scene) -> Vec<GroundTruth> {
    let mut out = Vec::new();
    for f in 0..scene.frame_count {
        for t in &scene.tracks {
            if let Some(tf) = t.at(f) {
                out.push(GroundTruth {
                    sample_id: frame_sample_id(f),
                    center: [tf.box3d.center[0], tf.box3d.center[1]],
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(id: &str, x: f64, y: f64, score: f64) -> Detection {
        Detection {
            sample_id: id.into(),
            center: [x, y],
            score,
        }
    }

    fn gt(id: &str, x: f64, y: f64) -> GroundTruth {
        GroundTruth {
            sample_id: id.into(),
            center: [x, y],
        }
    }

    #[test]
    fn exact_hit_is_tp_at_every_gate() {
        let set = DetectionSet {
            detections: vec![det("a", 1.0, 2.0, 0.5)],
            ground_truth: vec![gt("a", 1.0, 2.0)],
        };
        for t in THRESHOLDS {
            assert_eq!(match_detections(&set, t).tp, vec![true]);
        }
    }

    #[test]
    fn higher_score_claims_the_gt() {
        let set = DetectionSet {
            detections: vec![det("a", 0.3, 0.0, 0.4), det("a", 0.1, 0.0, 0.9)],
            ground_truth: vec![gt("a", 0.0, 0.0)],
        };
        let m = match_detections(&set, 1.0);
        assert_eq!(m.scores, vec![0.9, 0.4]);
        assert_eq!(m.tp, vec![true, false]);
    }

    #[test]
    fn samples_do_not_cross_match() {
        let set = DetectionSet {
            detections: vec![det("b", 0.0, 0.0, 0.9)],
            ground_truth: vec![gt("a", 0.0, 0.0)],
        };
        assert_eq!(match_detections(&set, 4.0).tp, vec![false]);
    }

    #[test]
    fn trivial_ap_values() {
        assert_eq!(average_precision(&[true, true], 2, Convention::NuScenes), 1.0);
        assert_eq!(average_precision(&[], 3, Convention::NuScenes), 0.0);
        assert_eq!(average_precision(&[true], 0, Convention::NuScenes), 0.0);
        assert!((average_precision(&[true, true], 2, Convention::Voc101) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_case_matches_fine_rectangles() {
        // TP FP TP FP TP against 4 GT
        let tp = [true, false, true, false, true];
        let ap = average_precision(&tp, 4, Convention::NuScenes);
        let curve = pr_curve(&tp, 4);
        let env = precision_envelope(&curve);
        let n = 900;
        let fine: f64 = (0..n)
            .map(|i| interpolated_precision(&env, 0.1 + (i as f64 + 0.5) * 0.001))
            .sum::<f64>()
            * 0.001
            / 0.9;
        assert!((ap - fine).abs() < 1e-3, "{ap} vs {fine}");
        // by hand: recall 0.25 @1, 0.5 @2/3, 0.75 @3/5
        let exact = (0.15 * 1.0 + 0.25 * (2.0 / 3.0) + 0.25 * 0.6) / 0.9;
        assert!((ap - exact).abs() < 1e-12);
    }

    #[test]
    fn map_needs_every_gate() {
        let aps: Vec<ThresholdAp> = THRESHOLDS.iter().map(|&t| ThresholdAp { threshold: t, ap: 0.3 }).collect();
        assert!((map_score(&aps).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(map_score(&aps[..3]), Err(EvalError::MissingThreshold(4.0)));
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let dets = vec![det("s1", 1.5, -2.0, 0.25)];
        assert_eq!(parse_detections(&format_detections(&dets)).unwrap(), dets);
        let gts = vec![gt("s1", 0.0, 3.0)];
        assert_eq!(parse_ground_truth(&format_ground_truth(&gts)).unwrap(), gts);
        assert!(matches!(parse_detections("a 1 2\n"), Err(EvalError::Parse { line: 1, .. })));
        assert!(matches!(parse_ground_truth("\n# c\na x 2\n"), Err(EvalError::Parse { line: 3, .. })));
    }

    #[test]
    fn out_of_range_score_is_rejected() {
        let set = DetectionSet {
            detections: vec![det("a", 0.0, 0.0, 1.5)],
            ground_truth: vec![],
        };
        assert!(evaluate(&set, Convention::NuScenes).is_err());
    }
}
