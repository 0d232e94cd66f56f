//! Annotation-error proposals and the reviewer verdict ledger.
//!
//! False positives under the current annotations are ranked by how good the
//! meta model believes they are. A confidently "good" false positive often
//! means the annotation is missing or wrong, so the top of that ranking is
//! handed to a reviewer. Objectness-score and random rankings serve as
//! baselines.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assoc::TP_IOU_THRESHOLD;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::geom::{iou_bev, LidarPoint, OrientedBox3D};
use crate::ingest::{DatasetManifest, GroundTruthBox};

pub const DEFAULT_CROP_RADIUS: f64 = 15.0;
/// Largest point crop shipped in a proposal packet.
pub const MAX_PACKET_POINTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankingMethod {
    Lmd,
    Score,
    Random,
}

impl RankingMethod {
    pub const ALL: [RankingMethod; 3] = [RankingMethod::Lmd, RankingMethod::Score, RankingMethod::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            RankingMethod::Lmd => "lmd",
            RankingMethod::Score => "score",
            RankingMethod::Random => "random",
        }
    }
}

impl std::str::FromStr for RankingMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lmd" => Ok(RankingMethod::Lmd),
            "score" => Ok(RankingMethod::Score),
            "random" => Ok(RankingMethod::Random),
            other => Err(Error::usage(format!("unknown ranking method {other:?} (lmd|score|random)"))),
        }
    }
}

/// Box geometry as written in proposal files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxJson {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl From<&OrientedBox3D> for BoxJson {
    fn from(b: &OrientedBox3D) -> Self {
        Self {
            x: b.cx,
            y: b.cy,
            z: b.cz,
            l: b.length,
            w: b.width,
            h: b.height,
            yaw: b.yaw,
        }
    }
}

impl BoxJson {
    pub fn to_box(&self) -> Result<OrientedBox3D> {
        OrientedBox3D::new([self.x, self.y, self.z], self.l, self.w, self.h, self.yaw)
    }
}

/// Scene excerpt by reference: the points of `frame_id` within `radius` of
/// `center` (ground plane) plus the listed annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneExcerpt {
    pub frame_id: String,
    pub center: [f64; 2],
    pub radius: f64,
    pub gt_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditProposal {
    pub rank: usize,
    pub frame_id: String,
    pub box_id: usize,
    pub method: RankingMethod,
    /// Estimated IoU for lmd, objectness score for score, draw index for random.
    pub key: f64,
    #[serde(rename = "box")]
    pub bbox: BoxJson,
    pub class: String,
    pub score: f64,
    pub iou: f64,
    pub excerpt: SceneExcerpt,
}

impl AuditProposal {
    /// Stable reference used by verdicts, e.g. `lmd-3`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.method.as_str(), self.rank)
    }
}

fn column(table: &FeatureTable, name: &str) -> Result<Vec<f64>> {
    table
        .column(name)
        .ok_or_else(|| Error::validation(format!("audit needs feature column {name:?}")))
}

/// Ranks the false positives of `table` and keeps the top `k`.
///
/// `estimates` holds one meta-model output per row and is required for
/// `lmd`. Excerpts are filled in with the crop radius but without
/// annotation ids; see [`attach_ground_truth`].
pub fn build_proposals(
    table: &FeatureTable,
    estimates: Option<&[f64]>,
    method: RankingMethod,
    k: usize,
    seed: u64,
    classes: &[String],
    radius: f64,
) -> Result<Vec<AuditProposal>> {
    if k == 0 {
        return Err(Error::usage("number of proposals must be at least 1"));
    }
    if let Some(e) = estimates {
        if e.len() != table.len() {
            return Err(Error::validation(format!(
                "{} estimates for {} feature rows",
                e.len(),
                table.len()
            )));
        }
    }
    let geometry: Vec<Vec<f64>> = ["x", "y", "z", "length", "width", "height", "yaw"]
        .iter()
        .map(|c| column(table, c))
        .collect::<Result<_>>()?;
    let score = column(table, "score")?;
    let class = column(table, "class")?;

    let fps: Vec<usize> = (0..table.len()).filter(|&i| table.rows[i].iou < TP_IOU_THRESHOLD).collect();
    if fps.is_empty() {
        log::warn!("no false positives to propose");
        return Ok(Vec::new());
    }
    let by_frame = |a: usize, b: usize| {
        let (ra, rb) = (&table.rows[a], &table.rows[b]);
        ra.frame_id.cmp(&rb.frame_id).then(ra.box_id.cmp(&rb.box_id))
    };
    let ranked: Vec<(usize, f64)> = match method {
        RankingMethod::Lmd => {
            let est = estimates.ok_or_else(|| Error::usage("lmd ranking needs meta-model estimates"))?;
            let mut order = fps;
            order.sort_by(|&a, &b| {
                est[b]
                    .total_cmp(&est[a])
                    .then(score[b].total_cmp(&score[a]))
                    .then(by_frame(a, b))
            });
            order.into_iter().map(|i| (i, est[i])).collect()
        }
        RankingMethod::Score => {
            let mut order = fps;
            order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(by_frame(a, b)));
            order.into_iter().map(|i| (i, score[i])).collect()
        }
        RankingMethod::Random => {
            let mut order = fps;
            order.sort_by(|&a, &b| by_frame(a, b));
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order.into_iter().enumerate().map(|(d, i)| (i, d as f64)).collect()
        }
    };

    ranked
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(pos, (i, key))| {
            let row = &table.rows[i];
            let g: Vec<f64> = geometry.iter().map(|c| c[i]).collect();
            let bbox = OrientedBox3D::new([g[0], g[1], g[2]], g[3], g[4], g[5], g[6])
                .map_err(|e| Error::validation(format!("frame {} box {}: {e}", row.frame_id, row.box_id)))?;
            let class_name = classes
                .get(class[i] as usize)
                .cloned()
                .ok_or_else(|| Error::validation(format!("class index {} out of range", class[i])))?;
            Ok(AuditProposal {
                rank: pos + 1,
                frame_id: row.frame_id.clone(),
                box_id: row.box_id,
                method,
                key,
                bbox: BoxJson::from(&bbox),
                class: class_name,
                score: score[i],
                iou: row.iou,
                excerpt: SceneExcerpt {
                    frame_id: row.frame_id.clone(),
                    center: [bbox.cx, bbox.cy],
                    radius,
                    gt_ids: Vec::new(),
                    image: None,
                },
            })
        })
        .collect()
}

/// Annotations whose footprint reaches into a disk of `radius` around `center`.
pub fn gt_in_crop<'a>(gt: &'a [GroundTruthBox], center: [f64; 2], radius: f64) -> Vec<&'a GroundTruthBox> {
    gt.iter()
        .filter(|g| (g.bbox.cx - center[0]).hypot(g.bbox.cy - center[1]) <= radius + g.bbox.bev_radius())
        .collect()
}

/// Fills in the annotation ids of every excerpt from the dataset.
pub fn attach_ground_truth(proposals: &mut [AuditProposal], manifest: &DatasetManifest) -> Result<()> {
    let mut cache: BTreeMap<String, Vec<GroundTruthBox>> = BTreeMap::new();
    for p in proposals.iter_mut() {
        if !cache.contains_key(&p.frame_id) {
            let entry = manifest
                .frames
                .iter()
                .find(|f| f.id == p.frame_id)
                .ok_or_else(|| Error::validation(format!("frame {} not in manifest", p.frame_id)))?;
            let path = manifest.resolve(&entry.ground_truth);
            let gt = crate::ingest::read_ground_truth(&path, &manifest.classes)?;
            cache.insert(p.frame_id.clone(), gt);
        }
        let gt = &cache[&p.frame_id];
        p.excerpt.gt_ids = gt_in_crop(gt, p.excerpt.center, p.excerpt.radius)
            .into_iter()
            .map(|g| g.id)
            .collect();
    }
    Ok(())
}

pub fn write_proposals(path: &Path, proposals: &[AuditProposal]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in proposals {
        let line = serde_json::to_string(p).expect("proposal serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_proposals(path: &Path) -> Result<Vec<AuditProposal>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<AuditProposal> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let p: AuditProposal = serde_json::from_str(line)
            .map_err(|e| Error::validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if p.rank != out.len() + 1 {
            return Err(Error::validation(format!(
                "{}:{}: rank {} breaks the 1..K sequence",
                path.display(),
                i + 1,
                p.rank
            )));
        }
        if out.first().is_some_and(|f| f.method != p.method) {
            return Err(Error::validation(format!(
                "{}:{}: proposal lists must hold a single method",
                path.display(),
                i + 1
            )));
        }
        out.push(p);
    }
    Ok(out)
}

/// Fraction of `planted` annotations that some proposal points at, i.e.
/// overlaps in BEV by at least the TP threshold.
pub fn planted_recall(proposals: &[AuditProposal], planted: &[GroundTruthBox]) -> Result<f64> {
    if planted.is_empty() {
        return Err(Error::numeric("recall undefined without planted annotations"));
    }
    let boxes: Vec<(String, OrientedBox3D)> = proposals
        .iter()
        .map(|p| Ok((p.frame_id.clone(), p.bbox.to_box()?)))
        .collect::<Result<_>>()?;
    let found = planted
        .iter()
        .filter(|g| {
            boxes
                .iter()
                .any(|(f, b)| *f == g.frame_id && iou_bev(b, &g.bbox) >= TP_IOU_THRESHOLD)
        })
        .count();
    Ok(found as f64 / planted.len() as f64)
}

// ---- review packets ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketAnnotation {
    pub id: u64,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: BoxJson,
}

/// Everything the review UI needs to render one proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalPacket {
    pub proposal: AuditProposal,
    /// Points in the crop, `[x, y, z, r]`.
    pub points: Vec<[f64; 4]>,
    /// Number of crop points before downsampling.
    pub crop_points: usize,
    pub ground_truth: Vec<PacketAnnotation>,
}

/// Deterministic even-stride subsample to at most `max` points.
pub fn downsample(points: Vec<LidarPoint>, max: usize) -> Vec<LidarPoint> {
    if points.len() <= max {
        return points;
    }
    let n = points.len();
    (0..max).map(|j| points[j * n / max]).collect()
}

pub fn build_packet(proposal: &AuditProposal, manifest: &DatasetManifest) -> Result<ProposalPacket> {
    let entry = manifest
        .frames
        .iter()
        .find(|f| f.id == proposal.frame_id)
        .ok_or_else(|| Error::validation(format!("frame {} not in manifest", proposal.frame_id)))?;
    let frame = manifest.load_frame(entry)?;
    let ex = &proposal.excerpt;
    let crop: Vec<LidarPoint> = frame
        .cloud
        .points
        .iter()
        .filter(|p| (p.x - ex.center[0]).hypot(p.y - ex.center[1]) <= ex.radius)
        .copied()
        .collect();
    let crop_points = crop.len();
    let points = downsample(crop, MAX_PACKET_POINTS)
        .into_iter()
        .map(|p| [p.x, p.y, p.z, p.r])
        .collect();
    let ground_truth = frame
        .ground_truth
        .iter()
        .filter(|g| ex.gt_ids.contains(&g.id))
        .map(|g| PacketAnnotation {
            id: g.id,
            class: manifest.classes[g.class].clone(),
            bbox: BoxJson::from(&g.bbox),
        })
        .collect();
    Ok(ProposalPacket {
        proposal: proposal.clone(),
        points,
        crop_points,
        ground_truth,
    })
}

// ---- verdicts ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AnnotationError,
    NotError,
    Unsure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    MissingLabel,
    WrongClass,
    Misaligned,
    Other,
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub proposal: String,
    pub method: RankingMethod,
    pub class: String,
    pub decision: Decision,
    #[serde(default)]
    pub error_kind: ErrorKind,
    pub reviewer: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// What a reviewer submits; the ledger fills in the rest from the proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictRequest {
    pub rank: usize,
    pub decision: Decision,
    #[serde(default)]
    pub error_kind: ErrorKind,
    pub reviewer: String,
    #[serde(default)]
    pub timestamp: Option<u64>,
}

/// Append-only verdict log; the last verdict per (proposal, reviewer) wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    pub entries: Vec<Verdict>,
}

impl Ledger {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(Self::default());
        }
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Verdict = serde_json::from_str(&line)
                .map_err(|e| Error::validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(v);
        }
        Ok(Self { entries })
    }

    /// Checks `req` against `proposals` and appends the resulting verdict.
    pub fn record(&mut self, proposals: &[AuditProposal], req: &VerdictRequest, now: u64) -> Result<Verdict> {
        let p = proposals
            .iter()
            .find(|p| p.rank == req.rank)
            .ok_or_else(|| Error::validation(format!("no proposal with rank {}", req.rank)))?;
        if req.reviewer.trim().is_empty() {
            return Err(Error::validation("verdict needs a reviewer id"));
        }
        let v = Verdict {
            proposal: p.id(),
            method: p.method,
            class: p.class.clone(),
            decision: req.decision,
            error_kind: req.error_kind,
            reviewer: req.reviewer.clone(),
            timestamp: req.timestamp.unwrap_or(now),
        };
        self.entries.push(v.clone());
        Ok(v)
    }

    /// Appends one verdict line to the ledger file.
    pub fn append_to(path: &Path, v: &Verdict) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let line = serde_json::to_string(v).expect("verdict serializes");
        writeln!(f, "{line}").map_err(|e| Error::io(path, e))
    }

    /// Effective verdicts, one per (proposal, reviewer), in first-seen order.
    pub fn effective(&self) -> Vec<&Verdict> {
        let mut slot: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        let mut out: Vec<&Verdict> = Vec::new();
        for v in &self.entries {
            match slot.get(&(v.proposal.as_str(), v.reviewer.as_str())) {
                Some(&i) => out[i] = v,
                None => {
                    slot.insert((&v.proposal, &v.reviewer), out.len());
                    out.push(v);
                }
            }
        }
        out
    }

    /// Rank of the first proposal without any verdict.
    pub fn next_unreviewed(&self, proposals: &[AuditProposal]) -> Option<usize> {
        let done: std::collections::HashSet<&str> = self.entries.iter().map(|v| v.proposal.as_str()).collect();
        proposals.iter().find(|p| !done.contains(p.id().as_str())).map(|p| p.rank)
    }

    pub fn summarize(&self) -> AuditSummary {
        let mut s = AuditSummary::default();
        for v in self.effective() {
            let found = u64::from(v.decision == Decision::AnnotationError);
            let m = s.methods.entry(v.method.as_str().to_string()).or_default();
            m.overall.add(found);
            m.classes.entry(v.class.clone()).or_default().add(found);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Count {
    pub errors: u64,
    pub reviewed: u64,
}

impl Count {
    fn add(&mut self, found: u64) {
        self.errors += found;
        self.reviewed += 1;
    }
}

impl std::fmt::Display for Count {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.errors, self.reviewed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub overall: Count,
    pub classes: BTreeMap<String, Count>,
}

/// Errors found over proposals reviewed. Unsure verdicts count as reviewed
/// but not as errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub methods: BTreeMap<String, MethodSummary>,
}

impl AuditSummary {
    /// `method  class  errors/reviewed` lines; `all` is the overall cell.
    pub fn to_text(&self) -> String {
        let mut s = String::from("method\tclass\tfound\n");
        for (m, ms) in &self.methods {
            s.push_str(&format!("{m}\tall\t{}\n", ms.overall));
            for (c, n) in &ms.classes {
                s.push_str(&format!("{m}\t{c}\t{n}\n"));
            }
        }
        s
    }

    pub fn cell(&self, method: RankingMethod, class: Option<&str>) -> Count {
        self.methods.get(method.as_str()).map_or(Count::default(), |m| match class {
            None => m.overall,
            Some(c) => m.classes.get(c).copied().unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{lmd_feature_names, FeatureRow};

    fn table(rows: &[(&str, usize, f64, f64)]) -> FeatureTable {
        let names = lmd_feature_names().to_vec();
        let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
        let rows = rows
            .iter()
            .map(|&(frame, box_id, score, iou)| {
                let mut values = vec![0.0; names.len()];
                values[idx("x")] = box_id as f64 * 10.0;
                for n in ["length", "width", "height"] {
                    values[idx(n)] = 1.0;
                }
                values[idx("score")] = score;
                values[idx("class")] = 1.0;
                FeatureRow {
                    frame_id: frame.into(),
                    box_id,
                    values,
                    iou,
                    tp: iou >= 0.5,
                }
            })
            .collect();
        FeatureTable::new(names, rows)
    }

    fn classes() -> Vec<String> {
        vec!["car".into(), "pedestrian".into()]
    }

    fn sample() -> FeatureTable {
        table(&[
            ("a", 0, 0.9, 0.8),
            ("a", 1, 0.4, 0.1),
            ("a", 2, 0.7, 0.0),
            ("b", 0, 0.3, 0.49),
            ("b", 1, 0.6, 0.5),
            ("b", 2, 0.2, 0.0),
        ])
    }

    #[test]
    fn only_false_positives_are_proposed() {
        let t = sample();
        let est = [0.9, 0.2, 0.6, 0.6, 0.95, 0.1];
        for m in RankingMethod::ALL {
            let p = build_proposals(&t, Some(&est), m, 10, 1, &classes(), 15.0).unwrap();
            assert_eq!(p.len(), 4);
            assert!(p.iter().all(|p| p.iou < 0.5));
            assert_eq!(p.iter().map(|p| p.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
        }
    }

    #[test]
    fn lmd_sorts_by_estimate_then_score() {
        let t = sample();
        let est = [0.9, 0.2, 0.6, 0.6, 0.95, 0.1];
        let p = build_proposals(&t, Some(&est), RankingMethod::Lmd, 3, 0, &classes(), 15.0).unwrap();
        let ids: Vec<_> = p.iter().map(|p| (p.frame_id.as_str(), p.box_id)).collect();
        // (a,2) and (b,0) tie on 0.6; the higher score wins
        assert_eq!(ids, [("a", 2), ("b", 0), ("a", 1)]);
        assert!(p.windows(2).all(|w| w[0].key >= w[1].key));
        assert_eq!(p[0].class, "pedestrian");
        assert_eq!(p[0].id(), "lmd-1");
    }

    #[test]
    fn score_and_random_rankings() {
        let t = sample();
        let p = build_proposals(&t, None, RankingMethod::Score, 2, 0, &classes(), 15.0).unwrap();
        assert_eq!(p.iter().map(|p| p.score).collect::<Vec<_>>(), [0.7, 0.4]);
        let r1 = build_proposals(&t, None, RankingMethod::Random, 4, 9, &classes(), 15.0).unwrap();
        let r2 = build_proposals(&t, None, RankingMethod::Random, 4, 9, &classes(), 15.0).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.iter().map(|p| p.key).collect::<Vec<_>>(), [0.0, 1.0, 2.0, 3.0]);
        assert!(build_proposals(&t, None, RankingMethod::Lmd, 2, 0, &classes(), 15.0).is_err());
    }

    #[test]
    fn all_true_positives_give_no_proposals() {
        let t = table(&[("a", 0, 0.9, 1.0), ("a", 1, 0.5, 0.7)]);
        let p = build_proposals(&t, None, RankingMethod::Score, 5, 0, &classes(), 15.0).unwrap();
        assert!(p.is_empty());
    }

    fn verdict(rank: usize, d: Decision, reviewer: &str) -> VerdictRequest {
        VerdictRequest {
            rank,
            decision: d,
            error_kind: ErrorKind::None,
            reviewer: reviewer.into(),
            timestamp: Some(0),
        }
    }

    #[test]
    fn summary_counts_conservatively() {
        let t = sample();
        let p = build_proposals(&t, None, RankingMethod::Score, 4, 0, &classes(), 15.0).unwrap();
        let mut l = Ledger::default();
        assert_eq!(l.summarize().cell(RankingMethod::Score, None).to_string(), "0/0");
        l.record(&p, &verdict(1, Decision::AnnotationError, "r"), 0).unwrap();
        l.record(&p, &verdict(2, Decision::Unsure, "r"), 0).unwrap();
        l.record(&p, &verdict(3, Decision::NotError, "r"), 0).unwrap();
        assert_eq!(l.summarize().cell(RankingMethod::Score, None).to_string(), "1/3");
        // resubmission overwrites
        l.record(&p, &verdict(3, Decision::AnnotationError, "r"), 0).unwrap();
        let s = l.summarize();
        assert_eq!(s.cell(RankingMethod::Score, None).to_string(), "2/3");
        assert_eq!(s.cell(RankingMethod::Score, Some("pedestrian")).to_string(), "2/3");
        assert_eq!(l.next_unreviewed(&p), Some(4));
        assert!(l.record(&p, &verdict(99, Decision::Unsure, "r"), 0).is_err());
    }

    #[test]
    fn ledger_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let t = sample();
        let p = build_proposals(&t, None, RankingMethod::Score, 4, 0, &classes(), 15.0).unwrap();
        let mut l = Ledger::default();
        for r in 1..=2 {
            let v = l.record(&p, &verdict(r, Decision::AnnotationError, "x"), 5).unwrap();
            Ledger::append_to(&path, &v).unwrap();
        }
        assert_eq!(Ledger::load(&path).unwrap(), l);
        let pp = dir.path().join("p.jsonl");
        write_proposals(&pp, &p).unwrap();
        assert_eq!(read_proposals(&pp).unwrap(), p);
    }

    #[test]
    fn downsample_is_bounded_and_even() {
        let pts: Vec<LidarPoint> = (0..10).map(|i| LidarPoint::new(i as f64, 0.0, 0.0, 0.0)).collect();
        let d = downsample(pts.clone(), 4);
        assert_eq!(d.iter().map(|p| p.x).collect::<Vec<_>>(), [0.0, 2.0, 5.0, 7.0]);
        assert_eq!(downsample(pts, 20).len(), 10);
    }
}
