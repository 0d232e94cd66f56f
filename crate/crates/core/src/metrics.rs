//! Evaluation statistics for meta classifiers and regressors, plus the
//! plain-text exports consumed by plotting tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureTable;

/// Decision threshold shared by every classifier metric.
pub const DECISION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CALIBRATION_BINS: usize = 10;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::numeric(format!("length mismatch: {a} predictions vs {b} labels")));
    }
    Ok(())
}

/// Fraction of samples with `(prob >= threshold) == label`.
pub fn accuracy(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    check_lengths(probs.len(), labels.len())?;
    if probs.is_empty() {
        return Err(Error::numeric("accuracy of an empty sample"));
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, l)| (**p >= threshold) == **l)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

/// Average 1-based ranks with ties sharing their mid-rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve in the Mann–Whitney form:
/// `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::numeric(format!(
            "AUROC undefined for single-class labels ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let ranks = mid_ranks(scores);
    let pos_rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, l)| **l).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok(((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn)).clamp(0.0, 1.0))
}

/// Coefficient of determination about the target mean.
pub fn r_squared(estimates: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(estimates.len(), targets.len())?;
    if targets.len() < 2 {
        return Err(Error::numeric("R² needs at least two samples"));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::numeric("R² undefined for constant targets"));
    }
    let ss_res: f64 = estimates.iter().zip(targets).map(|(e, t)| (t - e).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub ece: f64,
    pub mce: f64,
    /// All bins, empty ones included (with zero count).
    pub bins: Vec<ReliabilityBin>,
}

/// Bin index for equal-width bins over [0, 1]; interior edges go up, 1.0 goes
/// to the last bin.
pub fn calibration_bin(prob: f64, bins: usize) -> usize {
    ((prob * bins as f64).floor() as usize).min(bins - 1)
}

/// Expected and maximum calibration error over equal-width confidence bins.
/// Empty bins enter neither.
pub fn calibration(probs: &[f64], labels: &[bool], bins: usize) -> Result<Calibration> {
    check_lengths(probs.len(), labels.len())?;
    if bins == 0 {
        return Err(Error::usage("calibration needs at least one bin"));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::numeric(format!("probability {p} outside [0, 1]")));
    }
    let mut conf_sum = vec![0.0; bins];
    let mut pos = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    for (&p, &l) in probs.iter().zip(labels) {
        let b = calibration_bin(p, bins);
        conf_sum[b] += p;
        pos[b] += usize::from(l);
        count[b] += 1;
    }
    let n = probs.len() as f64;
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    let mut table = Vec::with_capacity(bins);
    for b in 0..bins {
        let (mean_confidence, accuracy) = if count[b] > 0 {
            let c = count[b] as f64;
            (conf_sum[b] / c, pos[b] as f64 / c)
        } else {
            (0.0, 0.0)
        };
        if count[b] > 0 {
            let gap = (accuracy - mean_confidence).abs();
            ece += count[b] as f64 / n * gap;
            mce = mce.max(gap);
        }
        table.push(ReliabilityBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            mean_confidence,
            accuracy,
            count: count[b],
        });
    }
    Ok(Calibration {
        ece: ece.min(mce),
        mce,
        bins: table,
    })
}

/// Counts of the meta decision `prob >= threshold` against the TP labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

pub fn confusion(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_lengths(probs.len(), labels.len())?;
    let mut c = Confusion::default();
    for (&p, &l) in probs.iter().zip(labels) {
        match (p >= threshold, l) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Sample Pearson correlation; `None` if either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-feature correlation with the IoU target.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    /// Sorted by absolute correlation, descending; ties keep feature order.
    pub entries: Vec<(String, f64)>,
    /// Features whose correlation is undefined (zero variance).
    pub undefined: Vec<String>,
}

impl CorrelationTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("feature\tpearson\n");
        for (name, r) in &self.entries {
            let _ = writeln!(out, "{name}\t{r}");
        }
        for name in &self.undefined {
            let _ = writeln!(out, "{name}\tundefined");
        }
        out
    }
}

pub fn correlation_table(table: &FeatureTable) -> CorrelationTable {
    let targets = table.targets();
    let mut entries = Vec::new();
    let mut undefined = Vec::new();
    for (j, name) in table.names.iter().enumerate() {
        let col: Vec<f64> = table.rows.iter().map(|r| r.values[j]).collect();
        match pearson(&col, &targets) {
            Some(r) => entries.push((name.clone(), r)),
            None => undefined.push(name.clone()),
        }
    }
    entries.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    CorrelationTable { entries, undefined }
}

/// Evaluation summary of one model on one table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: String,
    pub feature_set: String,
    pub family: String,
    pub samples: usize,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub r_squared: Option<f64>,
    pub ece: Option<f64>,
    pub mce: Option<f64>,
    pub confusion: Option<Confusion>,
    pub reliability: Vec<ReliabilityBin>,
}

impl EvalReport {
    /// Classification report from confidences and TP labels.
    pub fn classification(family: &str, feature_set: &str, probs: &[f64], labels: &[bool]) -> Result<Self> {
        let cal = calibration(probs, labels, DEFAULT_CALIBRATION_BINS)?;
        Ok(Self {
            task: "classification".into(),
            feature_set: feature_set.into(),
            family: family.into(),
            samples: probs.len(),
            accuracy: Some(accuracy(probs, labels, DECISION_THRESHOLD)?),
            auroc: Some(auroc(probs, labels)?),
            r_squared: None,
            ece: Some(cal.ece),
            mce: Some(cal.mce),
            confusion: Some(confusion(probs, labels, DECISION_THRESHOLD)?),
            reliability: cal.bins,
        })
    }

    pub fn regression(family: &str, feature_set: &str, estimates: &[f64], targets: &[f64]) -> Result<Self> {
        Ok(Self {
            task: "regression".into(),
            feature_set: feature_set.into(),
            family: family.into(),
            samples: estimates.len(),
            accuracy: None,
            auroc: None,
            r_squared: Some(r_squared(estimates, targets)?),
            ece: None,
            mce: None,
            confusion: None,
            reliability: Vec::new(),
        })
    }

    /// One `key<TAB>value` line per metric.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "task\t{}", self.task);
        let _ = writeln!(out, "feature_set\t{}", self.feature_set);
        let _ = writeln!(out, "family\t{}", self.family);
        let _ = writeln!(out, "samples\t{}", self.samples);
        for (k, v) in [
            ("accuracy", self.accuracy),
            ("auroc", self.auroc),
            ("r_squared", self.r_squared),
            ("ece", self.ece),
            ("mce", self.mce),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}\t{v}");
            }
        }
        if let Some(c) = self.confusion {
            let _ = writeln!(out, "confusion_tp\t{}", c.true_pos);
            let _ = writeln!(out, "confusion_fp\t{}", c.false_pos);
            let _ = writeln!(out, "confusion_fn\t{}", c.false_neg);
            let _ = writeln!(out, "confusion_tn\t{}", c.true_neg);
        }
        out
    }
}

/// Parses the `key<TAB>value` lines written by [`EvalReport::to_text`].
pub fn parse_report(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn scatter_export(estimates: &[f64], targets: &[f64], path: &Path) -> Result<()> {
    check_lengths(estimates.len(), targets.len())?;
    let mut out = String::from("estimate\ttarget\n");
    for (e, t) in estimates.iter().zip(targets) {
        let _ = writeln!(out, "{e}\t{t}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_scatter(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            let bad = || Error::validation(format!("{}:{}: malformed scatter row", path.display(), i + 2));
            let (a, b) = l.split_once('\t').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn reliability_export(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = String::from("bin_lower\tbin_upper\tmean_confidence\taccuracy\tcount\n");
    for b in &report.reliability {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            b.lower, b.upper, b.mean_confidence, b.accuracy, b.count
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
