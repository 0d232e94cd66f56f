//! Seeded synthetic Lidar datasets with a simulated detector.
//!
//! Every object gets a hidden visibility in `(0, 1]`. Together with its range
//! it sets a detection quality that drives how many points land on the
//! object, how many raw proposals the detector emits, how far they scatter
//! and how confident the detector is. Ground points, clutter blobs and
//! injected false positives complete the scene. A fraction of annotations
//! can be deleted from the ground truth (while the object stays in the
//! cloud and the detections); those deletions are written to a sidecar file.
//!
//! Output is a directory with `manifest.json`, `points/`, `labels/`,
//! `detections/` and `deletions.jsonl`. Same config and seed give
//! byte-identical files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geom::{LidarPoint, OrientedBox3D, PointCloud};
use crate::ingest::{
    round_sig9, write_detections, write_ground_truth, write_point_cloud, DatasetManifest, FrameBundle, FrameEntry,
    GroundTruthBox, RawDetection, Split,
};
use crate::models::splitmix64;

pub const CLASSES: [&str; 3] = ["car", "pedestrian", "cyclist"];
const CLASS_PRIOR: [f64; 3] = [0.6, 0.25, 0.15];
/// Mean (length, width, height) per class.
const CLASS_SIZE: [[f64; 3]; 3] = [[4.2, 1.8, 1.6], [0.8, 0.7, 1.75], [1.8, 0.7, 1.7]];
const CLASS_REFLECTANCE: [f64; 3] = [0.55, 0.3, 0.4];
const MAX_RANGE: f64 = 50.0;
const MIN_RANGE: f64 = 5.0;

/// Generator knobs. Rates are per object unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub frames: usize,
    pub objects_min: usize,
    pub objects_max: usize,
    /// Object points per m² of footprint for a fully visible object at 10 m.
    pub point_density: f64,
    /// Ground returns per frame.
    pub ground_points: usize,
    /// Clutter blobs (vegetation, poles) per frame.
    pub clutter_blobs: usize,
    /// Std of the detector's center error (m) at perfect quality.
    pub translation_jitter: f64,
    /// Relative std of the extent error.
    pub extent_jitter: f64,
    /// Std of the yaw error (rad).
    pub yaw_jitter: f64,
    /// Std of the logit noise on detector scores.
    pub score_noise: f64,
    /// Mean number of extra raw proposals per detected object.
    pub proposals_mean: f64,
    /// Probability of predicting a wrong class at zero quality.
    pub class_confusion: f64,
    /// Probability of missing an object at zero quality.
    pub miss_rate: f64,
    /// Expected injected false-positive clusters per object.
    pub fp_rate: f64,
    /// Probability that an annotation is deleted from the ground truth.
    pub deletion_rate: f64,
    /// Fraction of frames assigned to the training split.
    pub train_fraction: f64,
}

impl SynthConfig {
    /// Named noise profiles: `none`, `low`, `medium`, `high`.
    pub fn profile(name: &str, frames: usize) -> Result<Self> {
        let base = Self {
            frames,
            objects_min: 4,
            objects_max: 12,
            point_density: 20.0,
            ground_points: 800,
            clutter_blobs: 3,
            translation_jitter: 0.0,
            extent_jitter: 0.0,
            yaw_jitter: 0.0,
            score_noise: 0.0,
            proposals_mean: 4.0,
            class_confusion: 0.0,
            miss_rate: 0.0,
            fp_rate: 0.0,
            deletion_rate: 0.0,
            train_fraction: 0.5,
        };
        let cfg = match name {
            "none" => base,
            "low" => Self {
                translation_jitter: 0.15,
                extent_jitter: 0.04,
                yaw_jitter: 0.04,
                score_noise: 0.5,
                class_confusion: 0.05,
                miss_rate: 0.1,
                fp_rate: 0.2,
                ..base
            },
            "medium" => Self {
                translation_jitter: 0.35,
                extent_jitter: 0.08,
                yaw_jitter: 0.08,
                score_noise: 1.0,
                class_confusion: 0.15,
                miss_rate: 0.3,
                fp_rate: 0.5,
                deletion_rate: 0.05,
                ..base
            },
            "high" => Self {
                translation_jitter: 0.6,
                extent_jitter: 0.15,
                yaw_jitter: 0.15,
                score_noise: 1.5,
                class_confusion: 0.25,
                miss_rate: 0.45,
                fp_rate: 0.8,
                deletion_rate: 0.05,
                ..base
            },
            other => {
                return Err(Error::usage(format!(
                    "unknown noise profile {other:?} (none|low|medium|high)"
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let non_neg = [
            ("point_density", self.point_density),
            ("translation_jitter", self.translation_jitter),
            ("extent_jitter", self.extent_jitter),
            ("yaw_jitter", self.yaw_jitter),
            ("score_noise", self.score_noise),
            ("proposals_mean", self.proposals_mean),
            ("fp_rate", self.fp_rate),
        ];
        for (k, v) in non_neg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("synthetic config: {k} must be non-negative, got {v}")));
            }
        }
        let probs = [
            ("class_confusion", self.class_confusion),
            ("miss_rate", self.miss_rate),
            ("deletion_rate", self.deletion_rate),
            ("train_fraction", self.train_fraction),
        ];
        for (k, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("synthetic config: {k} must lie in [0, 1], got {v}")));
            }
        }
        if self.objects_min > self.objects_max {
            return Err(Error::validation("synthetic config: objects_min exceeds objects_max"));
        }
        Ok(())
    }

    /// Overrides one knob by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::usage(format!("invalid value {value:?} for synthetic knob {key}"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "frames" => self.frames = u()?,
            "objects_min" => self.objects_min = u()?,
            "objects_max" => self.objects_max = u()?,
            "point_density" => self.point_density = f()?,
            "ground_points" => self.ground_points = u()?,
            "clutter_blobs" => self.clutter_blobs = u()?,
            "translation_jitter" => self.translation_jitter = f()?,
            "extent_jitter" => self.extent_jitter = f()?,
            "yaw_jitter" => self.yaw_jitter = f()?,
            "score_noise" => self.score_noise = f()?,
            "proposals_mean" => self.proposals_mean = f()?,
            "class_confusion" => self.class_confusion = f()?,
            "miss_rate" => self.miss_rate = f()?,
            "fp_rate" => self.fp_rate = f()?,
            "deletion_rate" => self.deletion_rate = f()?,
            "train_fraction" => self.train_fraction = f()?,
            _ => return Err(Error::usage(format!("unknown synthetic knob {key:?}"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "objects_min = {}", self.objects_min);
        let _ = writeln!(s, "objects_max = {}", self.objects_max);
        let _ = writeln!(s, "point_density = {}", self.point_density);
        let _ = writeln!(s, "ground_points = {}", self.ground_points);
        let _ = writeln!(s, "clutter_blobs = {}", self.clutter_blobs);
        let _ = writeln!(s, "translation_jitter = {}", self.translation_jitter);
        let _ = writeln!(s, "extent_jitter = {}", self.extent_jitter);
        let _ = writeln!(s, "yaw_jitter = {}", self.yaw_jitter);
        let _ = writeln!(s, "score_noise = {}", self.score_noise);
        let _ = writeln!(s, "proposals_mean = {}", self.proposals_mean);
        let _ = writeln!(s, "class_confusion = {}", self.class_confusion);
        let _ = writeln!(s, "miss_rate = {}", self.miss_rate);
        let _ = writeln!(s, "fp_rate = {}", self.fp_rate);
        let _ = writeln!(s, "deletion_rate = {}", self.deletion_rate);
        let _ = writeln!(s, "train_fraction = {}", self.train_fraction);
        s
    }
}

/// One generated frame plus its split and the annotations deleted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub bundle: FrameBundle,
    pub split: Split,
    pub deleted: Vec<GroundTruthBox>,
}

fn rounded_box(center: [f64; 3], l: f64, w: f64, h: f64, yaw: f64) -> OrientedBox3D {
    let b = OrientedBox3D::new(center, l.max(0.05), w.max(0.05), h.max(0.05), yaw).expect("finite box");
    OrientedBox3D::new(
        [round_sig9(b.cx), round_sig9(b.cy), round_sig9(b.cz)],
        round_sig9(b.length),
        round_sig9(b.width),
        round_sig9(b.height),
        round_sig9(b.yaw),
    )
    .expect("rounded box stays valid")
}

fn gauss<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).unwrap().sample(rng)
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).unwrap().sample(rng) as usize
}

fn sample_class<R: Rng>(rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, p) in CLASS_PRIOR.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    CLASS_PRIOR.len() - 1
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn class_distribution<R: Rng>(rng: &mut R, predicted: usize) -> Vec<f64> {
    let top = 0.5 + 0.5 * rng.random::<f64>();
    let rest = 1.0 - top;
    let split: f64 = rng.random();
    let mut probs = vec![0.0; CLASSES.len()];
    probs[predicted] = top;
    let others: Vec<usize> = (0..CLASSES.len()).filter(|&c| c != predicted).collect();
    probs[others[0]] = round_sig9(rest * split);
    probs[others[1]] = round_sig9(rest - probs[others[0]]);
    probs[predicted] = round_sig9(1.0 - probs[others[0]] - probs[others[1]]);
    probs
}

/// Uniform point strictly inside `b`.
fn point_in_box<R: Rng>(rng: &mut R, b: &OrientedBox3D) -> (f64, f64, f64) {
    let u = (rng.random::<f64>() - 0.5) * 0.98 * b.length;
    let v = (rng.random::<f64>() - 0.5) * 0.98 * b.width;
    let w = (rng.random::<f64>() - 0.5) * 0.98 * b.height;
    let (s, c) = b.yaw.sin_cos();
    (b.cx + c * u - s * v, b.cy + s * u + c * v, b.cz + w)
}

fn push_point(points: &mut Vec<LidarPoint>, x: f64, y: f64, z: f64, r: f64) {
    // stored as f32 on disk; keep memory identical
    let q = |v: f64| v as f32 as f64;
    points.push(LidarPoint::new(q(x), q(y), q(z), q(r.clamp(0.0, 1.0))));
}

struct Object {
    bbox: OrientedBox3D,
    class: usize,
    quality: f64,
}

/// Generates frame `index` of a dataset.
pub fn generate_frame(cfg: &SynthConfig, seed: u64, index: usize) -> SynthFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64)));
    let frame_id = format!("{index:06}");
    let split = if rng.random::<f64>() < cfg.train_fraction {
        Split::Train
    } else {
        Split::Test
    };

    // scene layout
    let n_obj = rng.random_range(cfg.objects_min..=cfg.objects_max);
    let mut objects: Vec<Object> = Vec::with_capacity(n_obj);
    for _ in 0..n_obj {
        for _attempt in 0..20 {
            let class = sample_class(&mut rng);
            let [ml, mw, mh] = CLASS_SIZE[class];
            let l = ml * (1.0 + 0.08 * gauss(&mut rng, 1.0)).max(0.6);
            let w = mw * (1.0 + 0.08 * gauss(&mut rng, 1.0)).max(0.6);
            let h = mh * (1.0 + 0.06 * gauss(&mut rng, 1.0)).max(0.6);
            let range = rng.random_range(MIN_RANGE..MAX_RANGE);
            let az = rng.random_range(-PI..PI);
            let yaw = rng.random_range(-PI..PI);
            let bbox = rounded_box([range * az.cos(), range * az.sin(), 0.5 * h], l, w, h, yaw);
            let clear = objects.iter().all(|o| {
                (o.bbox.cx - bbox.cx).hypot(o.bbox.cy - bbox.cy) > o.bbox.bev_radius() + bbox.bev_radius() + 0.5
            });
            if clear {
                let visibility = rng.random_range(0.15..1.0);
                let quality = visibility * (-range / 60.0).exp();
                objects.push(Object { bbox, class, quality });
                break;
            }
        }
    }

    // point cloud
    let mut points = Vec::new();
    for o in &objects {
        let range = o.bbox.cx.hypot(o.bbox.cy);
        let falloff = (10.0 / range).powi(2).min(1.0);
        let visibility = o.quality / (-range / 60.0).exp();
        let expected = cfg.point_density * o.bbox.footprint_area() * visibility * falloff;
        let n = poisson(&mut rng, expected.min(400.0));
        for _ in 0..n {
            let (x, y, z) = point_in_box(&mut rng, &o.bbox);
            let r = CLASS_REFLECTANCE[o.class] + gauss(&mut rng, 0.08);
            push_point(&mut points, x, y, z, r);
        }
    }
    for _ in 0..cfg.ground_points {
        let range = MAX_RANGE * 1.1 * rng.random::<f64>().sqrt();
        let az = rng.random_range(-PI..PI);
        let z = gauss(&mut rng, 0.03);
        let r = 0.1 + gauss(&mut rng, 0.04);
        push_point(&mut points, range * az.cos(), range * az.sin(), z, r);
    }
    let mut blobs = Vec::new();
    for _ in 0..cfg.clutter_blobs {
        let range = rng.random_range(MIN_RANGE..MAX_RANGE);
        let az = rng.random_range(-PI..PI);
        let (bx, by) = (range * az.cos(), range * az.sin());
        let n = rng.random_range(15..60);
        for _ in 0..n {
            let x = bx + gauss(&mut rng, 0.5);
            let y = by + gauss(&mut rng, 0.5);
            let z = rng.random_range(0.0..1.8);
            push_point(&mut points, x, y, z, 0.25 + gauss(&mut rng, 0.1));
        }
        blobs.push((bx, by));
    }

    // simulated detector
    let mut detections = Vec::new();
    let push_det = |dets: &mut Vec<RawDetection>, bbox: OrientedBox3D, score: f64, probs: Vec<f64>| {
        dets.push(RawDetection {
            frame_id: frame_id.clone(),
            bbox,
            score: round_sig9(score.clamp(0.0, 1.0)),
            class_probs: probs,
        });
    };
    for o in &objects {
        let q = o.quality;
        if rng.random::<f64>() < cfg.miss_rate * (1.0 - q) {
            continue;
        }
        let spread = 0.3 + 1.5 * (1.0 - q);
        let sigma_t = cfg.translation_jitter * spread;
        let sigma_e = cfg.extent_jitter * (0.5 + (1.0 - q));
        let sigma_y = cfg.yaw_jitter * (0.5 + (1.0 - q));
        let b = &o.bbox;
        let cx = b.cx + gauss(&mut rng, sigma_t);
        let cy = b.cy + gauss(&mut rng, sigma_t);
        let cz = b.cz + gauss(&mut rng, 0.3 * sigma_t);
        let l = b.length * (1.0 + gauss(&mut rng, sigma_e));
        let w = b.width * (1.0 + gauss(&mut rng, sigma_e));
        let h = b.height * (1.0 + gauss(&mut rng, sigma_e));
        let yaw = b.yaw + gauss(&mut rng, sigma_y);
        let predicted = if rng.random::<f64>() < cfg.class_confusion * (1.0 - q) {
            (o.class + rng.random_range(1..CLASSES.len())) % CLASSES.len()
        } else {
            o.class
        };
        let object_logit = -0.2 + 3.0 * q + gauss(&mut rng, cfg.score_noise);
        let k = 1 + poisson(&mut rng, cfg.proposals_mean * q);
        for _ in 0..k {
            let bbox = rounded_box(
                [
                    cx + gauss(&mut rng, 0.5 * sigma_t),
                    cy + gauss(&mut rng, 0.5 * sigma_t),
                    cz + gauss(&mut rng, 0.15 * sigma_t),
                ],
                l * (1.0 + gauss(&mut rng, 0.5 * sigma_e)),
                w * (1.0 + gauss(&mut rng, 0.5 * sigma_e)),
                h * (1.0 + gauss(&mut rng, 0.5 * sigma_e)),
                yaw + gauss(&mut rng, 0.5 * sigma_y),
            );
            let score = sigmoid(object_logit + gauss(&mut rng, 0.3 * cfg.score_noise));
            let probs = class_distribution(&mut rng, predicted);
            push_det(&mut detections, bbox, score, probs);
        }
    }
    let n_fp = poisson(&mut rng, cfg.fp_rate * objects.len() as f64);
    for _ in 0..n_fp {
        let (x, y) = if !blobs.is_empty() && rng.random::<f64>() < 0.5 {
            blobs[rng.random_range(0..blobs.len())]
        } else {
            let range = rng.random_range(MIN_RANGE..MAX_RANGE);
            let az = rng.random_range(-PI..PI);
            (range * az.cos(), range * az.sin())
        };
        let class = sample_class(&mut rng);
        let [ml, mw, mh] = CLASS_SIZE[class];
        let size_err = 1.0 + 0.2 * gauss(&mut rng, 1.0);
        let l = ml * size_err.max(0.4);
        let w = mw * (size_err + 0.1 * gauss(&mut rng, 1.0)).max(0.4);
        let h = mh * (1.0 + 0.15 * gauss(&mut rng, 1.0)).max(0.4);
        let yaw = rng.random_range(-PI..PI);
        let fp_logit = -1.0 + gauss(&mut rng, cfg.score_noise);
        let k = 1 + poisson(&mut rng, 1.0);
        for _ in 0..k {
            let bbox = rounded_box(
                [x + gauss(&mut rng, 0.3), y + gauss(&mut rng, 0.3), 0.5 * h + gauss(&mut rng, 0.1)],
                l * (1.0 + gauss(&mut rng, 0.1)),
                w * (1.0 + gauss(&mut rng, 0.1)),
                h,
                yaw + gauss(&mut rng, 0.2),
            );
            let score = sigmoid(fp_logit + gauss(&mut rng, 0.5));
            let probs = class_distribution(&mut rng, class);
            push_det(&mut detections, bbox, score, probs);
        }
    }

    // annotations, some deleted
    let mut ground_truth = Vec::new();
    let mut deleted = Vec::new();
    for (id, o) in objects.iter().enumerate() {
        let gt = GroundTruthBox {
            frame_id: frame_id.clone(),
            id: id as u64,
            class: o.class,
            bbox: o.bbox,
        };
        if rng.random::<f64>() < cfg.deletion_rate {
            deleted.push(gt);
        } else {
            ground_truth.push(gt);
        }
    }

    SynthFrame {
        bundle: FrameBundle {
            cloud: PointCloud::new(frame_id.clone(), points),
            frame_id,
            ground_truth,
            detections,
        },
        split,
        deleted,
    }
}

/// All frames of a dataset, in index order.
pub fn generate_frames(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthFrame>> {
    cfg.validate()?;
    Ok((0..cfg.frames).map(|i| generate_frame(cfg, seed, i)).collect())
}

pub const DELETIONS_FILE: &str = "deletions.jsonl";

/// Writes a dataset under `out` and returns its manifest.
pub fn generate_synthetic_dataset(cfg: &SynthConfig, seed: u64, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let classes: Vec<String> = CLASSES.iter().map(|s| s.to_string()).collect();
    for sub in ["points", "labels", "detections"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut deletions = Vec::new();
    for i in 0..cfg.frames {
        let f = generate_frame(cfg, seed, i);
        let id = &f.bundle.frame_id;
        let entry = FrameEntry {
            id: id.clone(),
            split: f.split,
            points: format!("points/{id}.bin").into(),
            ground_truth: format!("labels/{id}.jsonl").into(),
            detections: format!("detections/{id}.jsonl").into(),
        };
        write_point_cloud(&out.join(&entry.points), &f.bundle.cloud)?;
        write_ground_truth(&out.join(&entry.ground_truth), &f.bundle.ground_truth, &classes)?;
        write_detections(&out.join(&entry.detections), &f.bundle.detections)?;
        deletions.extend(f.deleted);
        frames.push(entry);
    }
    write_ground_truth(&out.join(DELETIONS_FILE), &deletions, &classes)?;
    let p = out.join("synth_config.txt");
    fs::write(&p, format!("seed = {seed}\n{}", cfg.to_text())).map_err(|e| Error::io(&p, e))?;
    let manifest = DatasetManifest {
        name: format!("synthetic-{seed}"),
        classes,
        frames,
        root: out.to_path_buf(),
    };
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads the planted-deletion sidecar of a synthetic dataset.
pub fn read_deletions(manifest: &DatasetManifest) -> Result<Vec<GroundTruthBox>> {
    crate::ingest::read_ground_truth(&manifest.root.join(DELETIONS_FILE), &manifest.classes)
}
