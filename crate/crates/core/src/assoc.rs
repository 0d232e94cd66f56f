//! Greedy NMS replay with pre-image tracking, and prediction-to-annotation
//! matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{iou_3d, iou_bev, OrientedBox3D};
use crate::ingest::{GroundTruthBox, RawDetection};

/// A prediction is a true positive iff its BEV IoU with ground truth reaches this.
pub const TP_IOU_THRESHOLD: f64 = 0.5;

pub fn is_true_positive(iou: f64) -> bool {
    iou >= TP_IOU_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMetric {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

impl OverlapMetric {
    pub fn overlap(self, a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
        match self {
            OverlapMetric::Bev => iou_bev(a, b),
            OverlapMetric::ThreeD => iou_3d(a, b),
        }
    }
}

impl std::str::FromStr for OverlapMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bev" => Ok(OverlapMetric::Bev),
            "3d" => Ok(OverlapMetric::ThreeD),
            other => Err(Error::usage(format!("unknown overlap metric {other:?} (bev|3d)"))),
        }
    }
}

impl std::fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OverlapMetric::Bev => "bev",
            OverlapMetric::ThreeD => "3d",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    pub metric: OverlapMetric,
    pub threshold: f64,
    pub score_floor: f64,
    pub class_aware: bool,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            metric: OverlapMetric::Bev,
            threshold: 0.5,
            score_floor: 0.1,
            class_aware: false,
        }
    }
}

/// Survivors of NMS and, for every raw detection, the survivor owning it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NmsResult {
    /// Survivor indices into the detection list, in sweep order.
    pub survivors: Vec<usize>,
    /// `owner[j]` is the survivor whose pre-image contains detection `j`;
    /// `None` for detections below the score floor.
    pub owner: Vec<Option<usize>>,
}

impl NmsResult {
    /// Pre-image of survivor `s`: the detections it suppressed, itself included,
    /// in input order.
    pub fn pre_image(&self, survivor: usize) -> Vec<usize> {
        self.owner
            .iter()
            .enumerate()
            .filter(|(_, o)| **o == Some(survivor))
            .map(|(j, _)| j)
            .collect()
    }

    /// All pre-images, aligned with `survivors`.
    pub fn pre_images(&self) -> Vec<Vec<usize>> {
        let mut slot = vec![usize::MAX; self.owner.len()];
        for (k, &s) in self.survivors.iter().enumerate() {
            slot[s] = k;
        }
        let mut out = vec![Vec::new(); self.survivors.len()];
        for (j, o) in self.owner.iter().enumerate() {
            if let Some(s) = o {
                out[slot[*s]].push(j);
            }
        }
        out
    }
}

/// Standard greedy NMS sweep by descending score.
///
/// Detections below `score_floor` are dropped first. A suppressed box is
/// owned by the first survivor in sweep order that overlaps it by at least
/// the threshold.
pub fn greedy_nms(detections: &[RawDetection], cfg: &NmsConfig) -> NmsResult {
    let mut order: Vec<usize> = (0..detections.len())
        .filter(|&j| detections[j].score >= cfg.score_floor)
        .collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .total_cmp(&detections[a].score)
            .then(a.cmp(&b))
    });
    let classes: Vec<usize> = detections.iter().map(RawDetection::class_index).collect();

    let mut owner = vec![None; detections.len()];
    let mut survivors = Vec::new();
    for &j in &order {
        if owner[j].is_some() {
            continue;
        }
        owner[j] = Some(j);
        survivors.push(j);
        for &k in &order {
            if owner[k].is_some() || (cfg.class_aware && classes[k] != classes[j]) {
                continue;
            }
            if cfg.metric.overlap(&detections[j].bbox, &detections[k].bbox) >= cfg.threshold {
                owner[k] = Some(j);
            }
        }
    }
    NmsResult { survivors, owner }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchRecord {
    /// Index of the survivor in the frame's detection list.
    pub survivor: usize,
    /// BEV IoU with the best eligible annotation (0 when none).
    pub iou: f64,
    pub matched_gt: Option<u64>,
    pub tp: bool,
}

/// Matches each survivor to the annotation with the largest BEV IoU.
///
/// Matching is non-exclusive; ties go to the lowest annotation id.
pub fn match_to_gt(
    detections: &[RawDetection],
    survivors: &[usize],
    gt: &[GroundTruthBox],
    class_aware: bool,
) -> Vec<MatchRecord> {
    survivors
        .iter()
        .map(|&s| {
            let det = &detections[s];
            let class = det.class_index();
            let mut best: Option<(f64, u64)> = None;
            for g in gt.iter().filter(|g| !class_aware || g.class == class) {
                let iou = iou_bev(&det.bbox, &g.bbox);
                if iou <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bid)) => iou > bi || (iou == bi && g.id < bid),
                };
                if better {
                    best = Some((iou, g.id));
                }
            }
            let iou = best.map_or(0.0, |b| b.0);
            MatchRecord {
                survivor: s,
                iou,
                matched_gt: best.map(|b| b.1),
                tp: is_true_positive(iou),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, score: f64) -> RawDetection {
        RawDetection {
            frame_id: "f".into(),
            bbox: OrientedBox3D::new([x, 0.0, 0.0], 1.0, 1.0, 1.0, 0.0).unwrap(),
            score,
            class_probs: vec![1.0],
        }
    }

    fn gt(id: u64, x: f64) -> GroundTruthBox {
        GroundTruthBox {
            frame_id: "f".into(),
            id,
            class: 0,
            bbox: OrientedBox3D::new([x, 0.0, 0.0], 1.0, 1.0, 1.0, 0.0).unwrap(),
        }
    }

    #[test]
    fn single_detection_survives() {
        let r = greedy_nms(&[det(0.0, 0.9)], &NmsConfig::default());
        assert_eq!(r.survivors, vec![0]);
        assert_eq!(r.pre_image(0), vec![0]);
    }

    #[test]
    fn identical_boxes_collapse() {
        let r = greedy_nms(&[det(0.0, 0.8), det(0.0, 0.9)], &NmsConfig::default());
        assert_eq!(r.survivors, vec![1]);
        assert_eq!(r.pre_image(1), vec![0, 1]);
    }

    #[test]
    fn disjoint_boxes_both_survive() {
        let r = greedy_nms(&[det(0.0, 0.8), det(5.0, 0.9)], &NmsConfig::default());
        assert_eq!(r.survivors, vec![1, 0]);
        assert_eq!(r.pre_images(), vec![vec![1], vec![0]]);
    }

    #[test]
    fn below_floor_owns_nothing() {
        let r = greedy_nms(&[det(0.0, 0.05), det(0.0, 0.5)], &NmsConfig::default());
        assert_eq!(r.survivors, vec![1]);
        assert_eq!(r.owner, vec![None, Some(1)]);
    }

    #[test]
    fn score_ties_break_by_index() {
        let r = greedy_nms(&[det(0.0, 0.5), det(0.1, 0.5)], &NmsConfig::default());
        assert_eq!(r.survivors, vec![0]);
    }

    #[test]
    fn first_suppressor_owns() {
        // 1 (0.9) and 0 (0.8) do not overlap enough; 2 overlaps both, 1 comes first.
        let dets = [det(0.0, 0.8), det(0.6, 0.9), det(0.3, 0.7)];
        let r = greedy_nms(&dets, &NmsConfig { threshold: 0.3, ..Default::default() });
        assert_eq!(r.survivors, vec![1, 0]);
        assert_eq!(r.owner[2], Some(1));
    }

    #[test]
    fn class_aware_keeps_other_classes() {
        let mut a = det(0.0, 0.9);
        a.class_probs = vec![1.0, 0.0];
        let mut b = det(0.0, 0.8);
        b.class_probs = vec![0.0, 1.0];
        let cfg = NmsConfig { class_aware: true, ..Default::default() };
        assert_eq!(greedy_nms(&[a.clone(), b.clone()], &cfg).survivors.len(), 2);
        assert_eq!(greedy_nms(&[a, b], &NmsConfig::default()).survivors.len(), 1);
    }

    #[test]
    fn match_identical_is_tp() {
        let m = match_to_gt(&[det(2.0, 0.9)], &[0], &[gt(4, 2.0)], true);
        assert_eq!(m[0].iou, 1.0);
        assert!(m[0].tp);
        assert_eq!(m[0].matched_gt, Some(4));
    }

    #[test]
    fn match_without_gt_is_fp() {
        let m = match_to_gt(&[det(2.0, 0.9)], &[0], &[], true);
        assert_eq!((m[0].iou, m[0].tp, m[0].matched_gt), (0.0, false, None));
    }

    #[test]
    fn match_picks_best_overlap() {
        // unit square at 0: IoU 1/3 with the GT at 0.5, 0.6 with the 0.6x1 GT
        let wide = GroundTruthBox {
            frame_id: "f".into(),
            id: 9,
            class: 0,
            bbox: OrientedBox3D::new([-0.2, 0.0, 0.0], 0.6, 1.0, 1.0, 0.0).unwrap(),
        };
        let m = match_to_gt(&[det(0.0, 0.9)], &[0], &[gt(1, 0.5), wide], true);
        assert!((m[0].iou - 0.6).abs() < 1e-12);
        assert_eq!(m[0].matched_gt, Some(9));
        assert!(m[0].tp);
    }

    #[test]
    fn tp_boundary_is_inclusive() {
        assert!(is_true_positive(0.5));
        assert!(!is_true_positive(0.5 - 1e-15));
    }

    #[test]
    fn class_aware_matching_ignores_other_class() {
        let mut g = gt(1, 0.0);
        g.class = 1;
        let mut d = det(0.0, 0.9);
        d.class_probs = vec![1.0, 0.0];
        assert_eq!(match_to_gt(&[d.clone()], &[0], &[g.clone()], true)[0].iou, 0.0);
        assert_eq!(match_to_gt(&[d], &[0], &[g], false)[0].iou, 1.0);
    }
}
