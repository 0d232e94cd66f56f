//! Readers and writers for point clouds, annotation/detection records and
//! dataset manifests.
//!
//! * Point clouds are flat little-endian `f32` quadruples `(x, y, z, r)` with
//!   no header, the same layout as KITTI velodyne `.bin` files.
//! * Ground truth and detections are JSON lines, one object per line, floats
//!   rounded to 9 significant digits.
//! * A manifest is a JSON document listing frames, their split and their
//!   files (relative to the manifest's directory).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{LidarPoint, OrientedBox3D, PointCloud};

const POINT_RECORD_BYTES: usize = 16;
const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// One raw (pre-NMS) detector output.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    pub frame_id: String,
    pub bbox: OrientedBox3D,
    pub score: f64,
    pub class_probs: Vec<f64>,
}

impl RawDetection {
    /// Predicted class: argmax of the class distribution, ties to the lowest index.
    pub fn class_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.class_probs.iter().enumerate() {
            if p > self.class_probs[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub frame_id: String,
    pub id: u64,
    pub class: usize,
    pub bbox: OrientedBox3D,
}

/// Everything known about one Lidar frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame_id: String,
    pub cloud: PointCloud,
    pub ground_truth: Vec<GroundTruthBox>,
    pub detections: Vec<RawDetection>,
}

/// Result of reading a point-cloud file.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudRead {
    pub cloud: PointCloud,
    /// Points whose reflectance was clamped into `[0, 1]`.
    pub clamped: usize,
    /// Points dropped for non-finite values.
    pub dropped_non_finite: usize,
}

pub fn decode_point_cloud(frame_id: &str, bytes: &[u8]) -> Result<PointCloudRead> {
    if bytes.len() % POINT_RECORD_BYTES != 0 {
        let offset = bytes.len() - bytes.len() % POINT_RECORD_BYTES;
        return Err(Error::validation(format!(
            "point cloud {frame_id}: truncated record at byte offset {offset} \
             (file length {} is not a multiple of {POINT_RECORD_BYTES})",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / POINT_RECORD_BYTES);
    let mut clamped = 0;
    let mut dropped_non_finite = 0;
    for rec in bytes.chunks_exact(POINT_RECORD_BYTES) {
        let f = |i: usize| f32::from_le_bytes(rec[4 * i..4 * i + 4].try_into().unwrap()) as f64;
        let (x, y, z, r) = (f(0), f(1), f(2), f(3));
        if ![x, y, z, r].iter().all(|v| v.is_finite()) {
            dropped_non_finite += 1;
            continue;
        }
        let rc = r.clamp(0.0, 1.0);
        if rc != r {
            clamped += 1;
        }
        points.push(LidarPoint::new(x, y, z, rc));
    }
    Ok(PointCloudRead {
        cloud: PointCloud::new(frame_id, points),
        clamped,
        dropped_non_finite,
    })
}

/// Reads a `.bin` point cloud; the frame id is the file stem.
pub fn read_point_cloud(path: &Path) -> Result<PointCloudRead> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let frame_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_point_cloud(&frame_id, &bytes).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_RECORD_BYTES);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.r] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode_point_cloud(cloud)).map_err(|e| Error::io(path, e))
}

/// Rounds to 9 significant digits, the precision of every text record.
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    frame: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    score: f64,
    probs: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroundTruthRecord {
    frame: String,
    id: u64,
    class: String,
    x: f64,
    y: f64,
    z: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
}

fn box_fields(b: &OrientedBox3D) -> [f64; 7] {
    [b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw].map(round_sig9)
}

pub fn detection_to_line(det: &RawDetection) -> String {
    let [x, y, z, l, w, h, yaw] = box_fields(&det.bbox);
    let rec = DetectionRecord {
        frame: det.frame_id.clone(),
        x,
        y,
        z,
        l,
        w,
        h,
        yaw,
        score: round_sig9(det.score),
        probs: det.class_probs.iter().copied().map(round_sig9).collect(),
    };
    serde_json::to_string(&rec).expect("detection record serializes")
}

pub fn ground_truth_to_line(gt: &GroundTruthBox, classes: &[String]) -> String {
    let [x, y, z, l, w, h, yaw] = box_fields(&gt.bbox);
    let rec = GroundTruthRecord {
        frame: gt.frame_id.clone(),
        id: gt.id,
        class: classes[gt.class].clone(),
        x,
        y,
        z,
        l,
        w,
        h,
        yaw,
    };
    serde_json::to_string(&rec).expect("ground-truth record serializes")
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_detections(path: &Path, dets: &[RawDetection]) -> Result<()> {
    write_lines(path, dets.iter().map(detection_to_line))
}

pub fn write_ground_truth(path: &Path, gts: &[GroundTruthBox], classes: &[String]) -> Result<()> {
    write_lines(path, gts.iter().map(|g| ground_truth_to_line(g, classes)))
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_box(vals: [f64; 7], ctx: &str) -> Result<OrientedBox3D> {
    let [x, y, z, l, w, h, yaw] = vals;
    OrientedBox3D::new([x, y, z], l, w, h, yaw)
        .map_err(|e| Error::validation(format!("{ctx}: {e}")))
}

/// Parses detection lines. `num_classes` fixes the distribution length.
pub fn read_detections(path: &Path, num_classes: usize) -> Result<Vec<RawDetection>> {
    let mut out = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let ctx = format!("{}:{lineno}", path.display());
        let rec: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::validation(format!("{ctx}: malformed detection record: {e}")))?;
        let bbox = parse_box([rec.x, rec.y, rec.z, rec.l, rec.w, rec.h, rec.yaw], &ctx)?;
        if !(0.0..=1.0).contains(&rec.score) {
            return Err(Error::validation(format!("{ctx}: score {} outside [0, 1]", rec.score)));
        }
        if rec.probs.len() != num_classes {
            return Err(Error::validation(format!(
                "{ctx}: class distribution has {} entries, expected {num_classes}",
                rec.probs.len()
            )));
        }
        let sum: f64 = rec.probs.iter().sum();
        if rec.probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::validation(format!(
                "{ctx}: class distribution {:?} is not a probability vector",
                rec.probs
            )));
        }
        out.push(RawDetection {
            frame_id: rec.frame,
            bbox,
            score: rec.score,
            class_probs: rec.probs,
        });
    }
    Ok(out)
}

pub fn read_ground_truth(path: &Path, classes: &[String]) -> Result<Vec<GroundTruthBox>> {
    let mut out: Vec<GroundTruthBox> = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let ctx = format!("{}:{lineno}", path.display());
        let rec: GroundTruthRecord = serde_json::from_str(&line)
            .map_err(|e| Error::validation(format!("{ctx}: malformed annotation record: {e}")))?;
        let bbox = parse_box([rec.x, rec.y, rec.z, rec.l, rec.w, rec.h, rec.yaw], &ctx)?;
        let class = classes
            .iter()
            .position(|c| *c == rec.class)
            .ok_or_else(|| Error::validation(format!("{ctx}: unknown class {:?}", rec.class)))?;
        if out.iter().any(|g| g.id == rec.id && g.frame_id == rec.frame) {
            return Err(Error::validation(format!("{ctx}: duplicate annotation id {}", rec.id)));
        }
        out.push(GroundTruthBox {
            frame_id: rec.frame,
            id: rec.id,
            class,
            bbox,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::usage(format!("unknown split {other:?} (train|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    pub split: Split,
    pub points: PathBuf,
    pub ground_truth: PathBuf,
    pub detections: PathBuf,
}

/// Dataset description. File paths are relative to `root`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub classes: Vec<String>,
    pub frames: Vec<FrameEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads and checks the manifest: non-empty class list, unique frame
    /// ids and every referenced file present.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("{}: malformed manifest: {e}", path.display())))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::validation("manifest declares no classes"));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.frames {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::validation(format!("frame id {:?} listed twice", f.id)));
            }
            for rel in [&f.points, &f.ground_truth, &f.detections] {
                let p = self.resolve(rel);
                if !p.is_file() {
                    return Err(Error::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn frames_in(&self, split: Option<Split>) -> impl Iterator<Item = &FrameEntry> {
        self.frames
            .iter()
            .filter(move |f| split.is_none_or(|s| f.split == s))
    }

    pub fn split_of(&self, frame_id: &str) -> Option<Split> {
        self.frames.iter().find(|f| f.id == frame_id).map(|f| f.split)
    }

    /// Loads one frame and checks it against the manifest.
    pub fn load_frame(&self, entry: &FrameEntry) -> Result<FrameBundle> {
        let mut pc = read_point_cloud(&self.resolve(&entry.points))?;
        if pc.dropped_non_finite > 0 || pc.clamped > 0 {
            log::warn!(
                "frame {}: dropped {} non-finite points, clamped {} reflectances",
                entry.id,
                pc.dropped_non_finite,
                pc.clamped
            );
        }
        pc.cloud.frame_id = entry.id.clone();
        let ground_truth = read_ground_truth(&self.resolve(&entry.ground_truth), &self.classes)?;
        let detections = read_detections(&self.resolve(&entry.detections), self.num_classes())?;
        if let Some(g) = ground_truth.iter().find(|g| g.frame_id != entry.id) {
            return Err(Error::validation(format!(
                "frame {}: annotation {} references frame {:?}",
                entry.id, g.id, g.frame_id
            )));
        }
        if let Some(d) = detections.iter().find(|d| d.frame_id != entry.id) {
            return Err(Error::validation(format!(
                "frame {}: detection references frame {:?}",
                entry.id, d.frame_id
            )));
        }
        Ok(FrameBundle {
            frame_id: entry.id.clone(),
            cloud: pc.cloud,
            ground_truth,
            detections,
        })
    }

    /// Streams the frames of `split` (all frames when `None`) in manifest order.
    pub fn read_frames(&self, split: Option<Split>, strict: bool) -> FrameStream<'_> {
        FrameStream {
            manifest: self,
            entries: self.frames_in(split).collect::<Vec<_>>().into_iter(),
            strict,
            diagnostics: Vec::new(),
        }
    }
}

/// Iterator over validated frames. In lenient mode invalid frames are
/// skipped and described in [`FrameStream::diagnostics`].
pub struct FrameStream<'a> {
    manifest: &'a DatasetManifest,
    entries: std::vec::IntoIter<&'a FrameEntry>,
    strict: bool,
    diagnostics: Vec<String>,
}

impl FrameStream<'_> {
    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }
}

impl Iterator for FrameStream<'_> {
    type Item = Result<FrameBundle>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let entry = self.entries.next()?;
            match self.manifest.load_frame(entry) {
                Ok(f) => return Some(Ok(f)),
                Err(e) if self.strict => return Some(Err(e)),
                Err(e) => {
                    log::warn!("skipping frame {}: {e}", entry.id);
                    self.diagnostics.push(format!("frame {}: {e}", entry.id));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(vals: [f32; 4]) -> Vec<u8> {
        vals.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    #[test]
    fn empty_cloud() {
        let r = decode_point_cloud("f", &[]).unwrap();
        assert!(r.cloud.is_empty());
    }

    #[test]
    fn single_record() {
        let r = decode_point_cloud("f", &record([1.0, 2.0, 3.0, 0.5])).unwrap();
        assert_eq!(r.cloud.points, vec![LidarPoint::new(1.0, 2.0, 3.0, 0.5)]);
        assert_eq!(r.clamped, 0);
    }

    #[test]
    fn reflectance_clamped() {
        let r = decode_point_cloud("f", &record([1.0, 2.0, 3.0, 1.5])).unwrap();
        assert_eq!(r.cloud.points[0].r, 1.0);
        assert_eq!(r.clamped, 1);
    }

    #[test]
    fn non_finite_dropped() {
        let mut bytes = record([f32::NAN, 0.0, 0.0, 0.1]);
        bytes.extend(record([0.0, 0.0, 0.0, 0.1]));
        let r = decode_point_cloud("f", &bytes).unwrap();
        assert_eq!(r.cloud.len(), 1);
        assert_eq!(r.dropped_non_finite, 1);
    }

    #[test]
    fn truncated_names_offset() {
        let mut bytes = record([1.0, 2.0, 3.0, 0.5]);
        bytes.extend([0u8; 5]);
        let err = decode_point_cloud("f", &bytes).unwrap_err().to_string();
        assert!(err.contains("byte offset 16"), "{err}");
    }

    #[test]
    fn sig9_rounding() {
        assert_eq!(round_sig9(0.123456789012), 0.123456789);
        assert_eq!(round_sig9(1.0), 1.0);
        assert_eq!(round_sig9(-2.5e-7), -2.5e-7);
        let x = round_sig9(std::f64::consts::PI);
        assert_eq!(serde_json::to_string(&x).unwrap(), "3.14159265");
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let d = RawDetection {
            frame_id: "f".into(),
            bbox: OrientedBox3D::new([0.0; 3], 1.0, 1.0, 1.0, 0.0).unwrap(),
            score: 0.5,
            class_probs: vec![0.25, 0.375, 0.375],
        };
        assert_eq!(d.class_index(), 1);
    }

    #[test]
    fn split_parsing() {
        assert_eq!("train".parse::<Split>().unwrap(), Split::Train);
        assert!("val".parse::<Split>().is_err());
    }
}
