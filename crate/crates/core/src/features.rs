//! Box-wise uncertainty features.
//!
//! For every NMS survivor the full feature vector holds, in this order:
//!
//! 1. the box itself: center, extents, yaw, score and predicted class (9);
//! 2. volume, surface area, relative size, point count, point fraction and
//!    max/mean/std of the reflectance of contained points (8);
//! 3. the size of the survivor's NMS pre-image (1);
//! 4. min/max/mean/std over the pre-image of the 16 numeric quantities of
//!    (1) and (2), the class label excepted (64);
//! 5. min/max/mean/std of the 3D and BEV IoU between the survivor and each
//!    member of its pre-image (8).
//!
//! Standard deviations are population deviations; empty sets give zeros.

use std::sync::LazyLock;

use crate::assoc::{match_to_gt, NmsResult};
use crate::error::{Error, Result};
use crate::geom::{iou_3d, iou_bev, PointCloud};
use crate::ingest::{FrameBundle, RawDetection};

pub const NUM_LMD_FEATURES: usize = 90;

const BOX_QUANTITIES: [&str; 8] = ["x", "y", "z", "length", "width", "height", "yaw", "score"];
const CLASS_FEATURE: &str = "class";
const POINT_QUANTITIES: [&str; 8] = [
    "volume",
    "surface_area",
    "relative_size",
    "num_points",
    "point_fraction",
    "refl_max",
    "refl_mean",
    "refl_std",
];
const NUM_PROPOSALS: &str = "num_proposals";
const STATS: [&str; 4] = ["min", "max", "mean", "std"];

static LMD_NAMES: LazyLock<Vec<String>> = LazyLock::new(|| {
    let mut names: Vec<String> = BOX_QUANTITIES.iter().map(|s| s.to_string()).collect();
    names.push(CLASS_FEATURE.into());
    names.extend(POINT_QUANTITIES.iter().map(|s| s.to_string()));
    names.push(NUM_PROPOSALS.into());
    for q in BOX_QUANTITIES.iter().chain(POINT_QUANTITIES.iter()) {
        for s in STATS {
            names.push(format!("prop_{q}_{s}"));
        }
    }
    for iou in ["iou3d", "ioubev"] {
        for s in STATS {
            names.push(format!("{iou}_{s}"));
        }
    }
    names
});

/// Canonical feature order.
pub fn lmd_feature_names() -> &'static [String] {
    &LMD_NAMES
}

pub fn feature_index(name: &str) -> Option<usize> {
    LMD_NAMES.iter().position(|n| n == name)
}

/// The registry as a text list, one `name<TAB>description` per line.
pub fn registry_text() -> String {
    let mut out = String::new();
    for name in lmd_feature_names() {
        out.push_str(name);
        out.push('\t');
        out.push_str(&describe(name));
        out.push('\n');
    }
    out
}

fn describe(name: &str) -> String {
    let base = |q: &str| -> &'static str {
        match q {
            "x" | "y" | "z" => "box center coordinate (m)",
            "length" => "box length along heading (m)",
            "width" => "box width (m)",
            "height" => "box height (m)",
            "yaw" => "heading angle (rad)",
            "score" => "detector objectness score",
            "class" => "predicted class index",
            "volume" => "box volume (m^3)",
            "surface_area" => "box surface area (m^2)",
            "relative_size" => "volume / surface area (m)",
            "num_points" => "Lidar points inside the box",
            "point_fraction" => "points inside the box / points in the frame",
            "refl_max" => "max reflectance of contained points",
            "refl_mean" => "mean reflectance of contained points",
            "refl_std" => "std of reflectance of contained points",
            "num_proposals" => "size of the NMS pre-image",
            _ => "",
        }
    };
    if let Some(rest) = name.strip_prefix("prop_") {
        let (q, stat) = rest.rsplit_once('_').unwrap();
        format!("{stat} over pre-image of: {}", base(q))
    } else if let Some(stat) = name.strip_prefix("iou3d_") {
        format!("{stat} of 3D IoU between survivor and pre-image members")
    } else if let Some(stat) = name.strip_prefix("ioubev_") {
        format!("{stat} of BEV IoU between survivor and pre-image members")
    } else {
        base(name).to_string()
    }
}

/// Named, ordered feature subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSetSpec {
    pub name: String,
    pub features: Vec<String>,
}

impl FeatureSetSpec {
    pub fn score() -> Self {
        Self {
            name: "score".into(),
            features: vec!["score".into()],
        }
    }

    pub fn boxes() -> Self {
        let mut features: Vec<String> = BOX_QUANTITIES.iter().map(|s| s.to_string()).collect();
        features.push(CLASS_FEATURE.into());
        Self {
            name: "box".into(),
            features,
        }
    }

    pub fn lmd() -> Self {
        Self {
            name: "lmd".into(),
            features: lmd_feature_names().to_vec(),
        }
    }

    pub fn custom(features: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::usage("custom feature set is empty"));
        }
        for f in &features {
            if feature_index(f).is_none() {
                return Err(Error::usage(format!("unknown feature {f:?}")));
            }
        }
        Ok(Self {
            name: "custom".into(),
            features,
        })
    }

    /// `score`, `box`, `lmd` or `custom:a,b,c`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(Self::score()),
            "box" => Ok(Self::boxes()),
            "lmd" => Ok(Self::lmd()),
            _ => match s.strip_prefix("custom:") {
                Some(list) => Self::custom(list.split(',').map(|f| f.trim().to_string()).collect()),
                None => Err(Error::usage(format!(
                    "unknown feature set {s:?} (score|box|lmd|custom:a,b)"
                ))),
            },
        }
    }

    /// Names a feature list after the standard set it equals, if any.
    pub fn describe(features: &[String]) -> Self {
        for spec in [Self::score(), Self::boxes(), Self::lmd()] {
            if spec.features == features {
                return spec;
            }
        }
        Self {
            name: "custom".into(),
            features: features.to_vec(),
        }
    }

    pub fn label(&self) -> String {
        if self.name == "custom" {
            format!("custom:{}", self.features.join(","))
        } else {
            self.name.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Features and targets of one NMS survivor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub frame_id: String,
    /// Index of the survivor in its frame's detection list.
    pub box_id: usize,
    pub values: Vec<f64>,
    /// BEV IoU with the matched annotation.
    pub iou: f64,
    pub tp: bool,
}

/// Rows sharing one ordered list of feature names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(names: Vec<String>, rows: Vec<FeatureRow>) -> Self {
        Self { names, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iou).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.tp).collect()
    }

    /// Column projection onto `spec`, preserving row order.
    pub fn select_columns(&self, spec: &FeatureSetSpec) -> Result<FeatureTable> {
        let idx: Vec<usize> = spec
            .features
            .iter()
            .map(|f| {
                self.column_index(f)
                    .ok_or_else(|| Error::usage(format!("feature {f:?} not present in table")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                values: idx.iter().map(|&i| r.values[i]).collect(),
                ..r.clone()
            })
            .collect();
        Ok(FeatureTable::new(spec.features.clone(), rows))
    }

    /// Rows whose frame id passes `keep`.
    pub fn filter_frames(&self, mut keep: impl FnMut(&str) -> bool) -> FeatureTable {
        FeatureTable::new(
            self.names.clone(),
            self.rows.iter().filter(|r| keep(&r.frame_id)).cloned().collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureOptions {
    /// Match survivors only against annotations of their predicted class.
    pub class_aware_matching: bool,
    /// Leave the survivor itself out of the pre-image aggregates.
    pub exclude_self_from_prop_stats: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            class_aware_matching: true,
            exclude_self_from_prop_stats: false,
        }
    }
}

/// min, max, mean, population std; zeros for an empty slice.
pub fn summary_stats(vals: &[f64]) -> [f64; 4] {
    if vals.is_empty() {
        return [0.0; 4];
    }
    let n = vals.len() as f64;
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = (vals.iter().sum::<f64>() / n).clamp(min, max);
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    [min, max, mean, var.sqrt()]
}

/// Point-derived quantities of one box: P, Φ, ρ_max, ρ_mean, ρ_std.
pub fn point_stats(det: &RawDetection, cloud: &PointCloud) -> [f64; 5] {
    let b = &det.bbox;
    let r2 = {
        let r = 0.5 * (b.length * b.length + b.width * b.width).sqrt();
        r * r * (1.0 + 1e-9)
    };
    let refl: Vec<f64> = cloud
        .points
        .iter()
        .filter(|p| {
            let dx = p.x - b.cx;
            let dy = p.y - b.cy;
            dx * dx + dy * dy <= r2 && b.contains_point(p)
        })
        .map(|p| p.r)
        .collect();
    let count = refl.len() as f64;
    let fraction = if cloud.is_empty() { 0.0 } else { count / cloud.len() as f64 };
    if refl.is_empty() {
        return [0.0, 0.0, 0.0, 0.0, 0.0];
    }
    let [_, max, mean, std] = summary_stats(&refl);
    [count, fraction, max, mean, std]
}

/// The 16 numeric per-box quantities aggregated over pre-images.
fn box_quantities(det: &RawDetection, cloud: &PointCloud) -> [f64; 16] {
    let b = &det.bbox;
    let [p, phi, rmax, rmean, rstd] = point_stats(det, cloud);
    [
        b.cx,
        b.cy,
        b.cz,
        b.length,
        b.width,
        b.height,
        b.yaw,
        det.score,
        b.volume(),
        b.surface_area(),
        b.relative_size(),
        p,
        phi,
        rmax,
        rmean,
        rstd,
    ]
}

/// One feature row per survivor of `nms`, in sweep order.
pub fn compute_features(frame: &FrameBundle, nms: &NmsResult, opts: &FeatureOptions) -> Vec<FeatureRow> {
    let dets = &frame.detections;
    let pre_images = nms.pre_images();
    let mut quantities: Vec<Option<[f64; 16]>> = vec![None; dets.len()];
    for members in &pre_images {
        for &j in members {
            quantities[j] = Some(box_quantities(&dets[j], &frame.cloud));
        }
    }
    let matches = match_to_gt(dets, &nms.survivors, &frame.ground_truth, opts.class_aware_matching);

    nms.survivors
        .iter()
        .zip(&pre_images)
        .zip(matches)
        .map(|((&s, members), m)| {
            let own = quantities[s].expect("survivor owns itself");
            let det = &dets[s];
            let mut values = Vec::with_capacity(NUM_LMD_FEATURES);
            values.extend_from_slice(&own[..8]);
            values.push(det.class_index() as f64);
            values.extend_from_slice(&own[8..]);
            values.push(members.len() as f64);

            let agg: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&j| !(opts.exclude_self_from_prop_stats && j == s))
                .collect();
            for q in 0..16 {
                let col: Vec<f64> = agg.iter().map(|&j| quantities[j].unwrap()[q]).collect();
                values.extend(summary_stats(&col));
            }
            let ious3d: Vec<f64> = agg.iter().map(|&j| iou_3d(&det.bbox, &dets[j].bbox)).collect();
            let iousbev: Vec<f64> = agg.iter().map(|&j| iou_bev(&det.bbox, &dets[j].bbox)).collect();
            values.extend(summary_stats(&ious3d));
            values.extend(summary_stats(&iousbev));
            debug_assert_eq!(values.len(), NUM_LMD_FEATURES);

            FeatureRow {
                frame_id: frame.frame_id.clone(),
                box_id: s,
                values,
                iou: m.iou,
                tp: m.tp,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::{greedy_nms, NmsConfig};
    use crate::geom::{LidarPoint, OrientedBox3D};

    fn det(x: f64, score: f64) -> RawDetection {
        RawDetection {
            frame_id: "f".into(),
            bbox: OrientedBox3D::new([x, 0.0, 0.0], 1.0, 1.0, 1.0, 0.0).unwrap(),
            score,
            class_probs: vec![0.7, 0.3],
        }
    }

    fn frame(dets: Vec<RawDetection>, points: Vec<LidarPoint>) -> FrameBundle {
        FrameBundle {
            frame_id: "f".into(),
            cloud: PointCloud::new("f", points),
            ground_truth: vec![],
            detections: dets,
        }
    }

    fn value(row: &FeatureRow, name: &str) -> f64 {
        row.values[feature_index(name).unwrap()]
    }

    #[test]
    fn registry_has_ninety_unique_names() {
        let names = lmd_feature_names();
        assert_eq!(names.len(), NUM_LMD_FEATURES);
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), NUM_LMD_FEATURES);
        assert_eq!(registry_text().lines().count(), NUM_LMD_FEATURES);
        assert!(registry_text().lines().all(|l| !l.ends_with('\t')));
    }

    #[test]
    fn spec_sizes() {
        assert_eq!(FeatureSetSpec::score().len(), 1);
        assert_eq!(FeatureSetSpec::boxes().len(), 9);
        assert_eq!(FeatureSetSpec::lmd().len(), 90);
        let c = FeatureSetSpec::parse("custom:volume,num_proposals").unwrap();
        assert_eq!(c.features, vec!["volume", "num_proposals"]);
        assert!(FeatureSetSpec::parse("custom:nope").is_err());
        assert!(FeatureSetSpec::parse("all").is_err());
    }

    #[test]
    fn singleton_pre_image() {
        let f = frame(vec![det(0.0, 0.9)], vec![]);
        let nms = greedy_nms(&f.detections, &NmsConfig::default());
        let rows = compute_features(&f, &nms, &FeatureOptions::default());
        let r = &rows[0];
        assert_eq!(value(r, "num_proposals"), 1.0);
        for q in BOX_QUANTITIES.iter().chain(POINT_QUANTITIES.iter()) {
            let own = value(r, q);
            assert_eq!(value(r, &format!("prop_{q}_min")), own, "{q}");
            assert_eq!(value(r, &format!("prop_{q}_max")), own, "{q}");
            assert_eq!(value(r, &format!("prop_{q}_mean")), own, "{q}");
            assert_eq!(value(r, &format!("prop_{q}_std")), 0.0, "{q}");
        }
        for iou in ["iou3d", "ioubev"] {
            for s in ["min", "max", "mean"] {
                assert_eq!(value(r, &format!("{iou}_{s}")), 1.0);
            }
            assert_eq!(value(r, &format!("{iou}_std")), 0.0);
        }
    }

    #[test]
    fn empty_box_point_stats_are_zero() {
        let f = frame(vec![det(0.0, 0.9)], vec![LidarPoint::new(10.0, 0.0, 0.0, 0.3)]);
        let nms = greedy_nms(&f.detections, &NmsConfig::default());
        let r = &compute_features(&f, &nms, &FeatureOptions::default())[0];
        for name in ["num_points", "point_fraction", "refl_max", "refl_mean", "refl_std"] {
            assert_eq!(value(r, name), 0.0, "{name}");
        }
    }

    #[test]
    fn hand_pinned_unit_cube() {
        let inside = [0.2, 0.4, 0.4, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &r)| LidarPoint::new(0.1 * i as f64 - 0.1, 0.2, -0.3, r));
        let outside = (0..4).map(|i| LidarPoint::new(5.0 + i as f64, 0.0, 0.0, 0.9));
        let f = frame(vec![det(0.0, 0.9)], inside.chain(outside).collect());
        let nms = greedy_nms(&f.detections, &NmsConfig::default());
        let r = &compute_features(&f, &nms, &FeatureOptions::default())[0];
        assert_eq!(value(r, "num_points"), 4.0);
        assert_eq!(value(r, "point_fraction"), 0.5);
        assert!((value(r, "refl_max") - 0.6).abs() < 1e-12);
        assert!((value(r, "refl_mean") - 0.4).abs() < 1e-12);
        assert!((value(r, "refl_std") - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exclude_self_flag() {
        let f = frame(vec![det(0.0, 0.9), det(0.1, 0.5)], vec![]);
        let nms = greedy_nms(&f.detections, &NmsConfig::default());
        let opts = FeatureOptions {
            exclude_self_from_prop_stats: true,
            ..Default::default()
        };
        let r = &compute_features(&f, &nms, &opts)[0];
        assert_eq!(value(r, "num_proposals"), 2.0);
        assert_eq!(value(r, "prop_score_max"), 0.5);
        assert!(value(r, "ioubev_max") < 1.0);
        let incl = &compute_features(&f, &nms, &FeatureOptions::default())[0];
        assert_eq!(value(incl, "prop_score_max"), 0.9);
        assert_eq!(value(incl, "ioubev_max"), 1.0);
    }

    #[test]
    fn select_columns_projects() {
        let f = frame(vec![det(0.0, 0.9), det(4.0, 0.3)], vec![]);
        let nms = greedy_nms(&f.detections, &NmsConfig::default());
        let table = FeatureTable::new(
            lmd_feature_names().to_vec(),
            compute_features(&f, &nms, &FeatureOptions::default()),
        );
        let s = table.select_columns(&FeatureSetSpec::score()).unwrap();
        assert_eq!(s.rows[0].values, vec![0.9]);
        assert_eq!(s.rows[1].values, vec![0.3]);
        assert_eq!(table.select_columns(&FeatureSetSpec::lmd()).unwrap(), table);
        let c = table
            .select_columns(&FeatureSetSpec::parse("custom:volume,num_proposals").unwrap())
            .unwrap();
        assert_eq!(c.rows[0].values, vec![1.0, 1.0]);
        let narrow = s.select_columns(&FeatureSetSpec::boxes());
        assert!(narrow.is_err());
    }

    #[test]
    fn summary_of_repeated_values_is_ordered() {
        let [min, max, mean, std] = summary_stats(&[0.1, 0.1, 0.1]);
        assert!(min <= mean && mean <= max);
        assert!(std < 1e-15);
    }
}
