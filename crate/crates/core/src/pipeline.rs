//! Run configuration and manifest-level feature extraction.
//!
//! The config file is flat `key = value` text; `#` starts a comment.
//! Hyperparameters use a `hyper.` prefix, e.g. `hyper.n_trees = 300`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::assoc::{greedy_nms, NmsConfig, OverlapMetric};
use crate::error::{Error, Result};
use crate::features::{compute_features, lmd_feature_names, FeatureOptions, FeatureRow, FeatureSetSpec, FeatureTable};
use crate::ingest::{DatasetManifest, FrameBundle, Split};
use crate::models::{Family, Hyperparameters, Task};

pub const CONFIG_FILE: &str = "pipeline.conf";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub nms: NmsConfig,
    pub features: FeatureOptions,
    pub feature_set: FeatureSetSpec,
    pub task: Task,
    pub family: Family,
    /// `hyper.*` overrides in the order they were given.
    pub hyper_overrides: Vec<(String, String)>,
    pub seed: u64,
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            output: None,
            nms: NmsConfig::default(),
            features: FeatureOptions::default(),
            feature_set: FeatureSetSpec::lmd(),
            task: Task::Classification,
            family: Family::Gbt,
            hyper_overrides: Vec::new(),
            seed: 0,
            strict: true,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::usage(format!("{key} expects true or false, got {v:?}"))),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::usage(format!("{key} expects a number, got {v:?}")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some(h) = key.strip_prefix("hyper.") {
            self.hyper_overrides.retain(|(k, _)| k != h);
            self.hyper_overrides.push((h.to_string(), value.to_string()));
            return Ok(());
        }
        match key {
            "manifest" => self.manifest = Some(value.into()),
            "output" => self.output = Some(value.into()),
            "nms_metric" => self.nms.metric = value.parse::<OverlapMetric>()?,
            "nms_threshold" => self.nms.threshold = parse_f64(key, value)?,
            "score_floor" => self.nms.score_floor = parse_f64(key, value)?,
            "class_aware_nms" => self.nms.class_aware = parse_bool(key, value)?,
            "class_aware_matching" => self.features.class_aware_matching = parse_bool(key, value)?,
            "exclude_self_from_prop_stats" => self.features.exclude_self_from_prop_stats = parse_bool(key, value)?,
            "feature_set" => self.feature_set = FeatureSetSpec::parse(value)?,
            "task" => self.task = value.parse()?,
            "family" => self.family = value.parse()?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::usage(format!("seed expects an unsigned integer, got {value:?}")))?
            }
            "strict" => self.strict = parse_bool(key, value)?,
            _ => return Err(Error::usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v)
                .map_err(|e| Error::usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))
    }

    /// Family defaults with the overrides applied.
    pub fn hyperparameters(&self) -> Result<Hyperparameters> {
        let mut h = self.family.default_hyper();
        for (k, v) in &self.hyper_overrides {
            h.set(k, v)?;
        }
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nms.threshold > 0.0 && self.nms.threshold <= 1.0) {
            return Err(Error::validation(format!(
                "nms_threshold must lie in (0, 1], got {}",
                self.nms.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.nms.score_floor) {
            return Err(Error::validation(format!(
                "score_floor must lie in [0, 1], got {}",
                self.nms.score_floor
            )));
        }
        if !self.family.supports(self.task) {
            return Err(Error::usage(format!(
                "{} does not support {}",
                self.family.as_str(),
                self.task.as_str()
            )));
        }
        self.hyperparameters()?.validate()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.manifest {
            let _ = writeln!(s, "manifest = {}", m.display());
        }
        if let Some(o) = &self.output {
            let _ = writeln!(s, "output = {}", o.display());
        }
        let _ = writeln!(s, "nms_metric = {}", self.nms.metric);
        let _ = writeln!(s, "nms_threshold = {}", self.nms.threshold);
        let _ = writeln!(s, "score_floor = {}", self.nms.score_floor);
        let _ = writeln!(s, "class_aware_nms = {}", self.nms.class_aware);
        let _ = writeln!(s, "class_aware_matching = {}", self.features.class_aware_matching);
        let _ = writeln!(
            s,
            "exclude_self_from_prop_stats = {}",
            self.features.exclude_self_from_prop_stats
        );
        let _ = writeln!(s, "feature_set = {}", self.feature_set.label());
        let _ = writeln!(s, "task = {}", self.task.as_str());
        let _ = writeln!(s, "family = {}", self.family.as_str());
        for (k, v) in &self.hyper_overrides {
            let _ = writeln!(s, "hyper.{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "strict = {}", self.strict);
        s
    }

    /// Writes the effective config into `dir`. The output entry is left
    /// out since it names `dir` itself.
    pub fn write_into(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(CONFIG_FILE);
        let text = Self {
            output: None,
            ..self.clone()
        }
        .to_text();
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

/// NMS plus feature computation for one frame.
pub fn frame_rows(frame: &FrameBundle, nms: &NmsConfig, opts: &FeatureOptions) -> Vec<FeatureRow> {
    let result = greedy_nms(&frame.detections, nms);
    compute_features(frame, &result, opts)
}

/// Full 90-column table over in-memory frames.
pub fn table_from_frames<'a>(
    frames: impl IntoIterator<Item = &'a FrameBundle>,
    nms: &NmsConfig,
    opts: &FeatureOptions,
) -> FeatureTable {
    let rows = frames.into_iter().flat_map(|f| frame_rows(f, nms, opts)).collect();
    FeatureTable::new(lmd_feature_names().to_vec(), rows)
}

/// Feature table for one split of a manifest (`None` = all frames), along
/// with diagnostics for frames skipped in lenient mode.
pub fn extract_features(
    manifest: &DatasetManifest,
    split: Option<Split>,
    nms: &NmsConfig,
    opts: &FeatureOptions,
    strict: bool,
) -> Result<(FeatureTable, Vec<String>)> {
    let mut stream = manifest.read_frames(split, strict);
    let mut rows = Vec::new();
    for frame in stream.by_ref() {
        rows.extend(frame_rows(&frame?, nms, opts));
    }
    let diagnostics = stream.diagnostics().to_vec();
    Ok((FeatureTable::new(lmd_feature_names().to_vec(), rows), diagnostics))
}
