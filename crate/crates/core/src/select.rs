//! Greedy forward feature selection.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureSetSpec, FeatureTable};
use crate::metrics::{accuracy, auroc, r_squared, DECISION_THRESHOLD};
use crate::models::{fit_table, row_key, splitmix64, Hyperparameters, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMetric {
    Auroc,
    Accuracy,
    RSquared,
}

impl SelectionMetric {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Classification => SelectionMetric::Auroc,
            Task::Regression => SelectionMetric::RSquared,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMetric::Auroc => "auroc",
            SelectionMetric::Accuracy => "accuracy",
            SelectionMetric::RSquared => "r2",
        }
    }

    fn task(self) -> Task {
        match self {
            SelectionMetric::Auroc | SelectionMetric::Accuracy => Task::Classification,
            SelectionMetric::RSquared => Task::Regression,
        }
    }

    /// Scores predictions against the targets of `eval`.
    pub fn evaluate(self, predictions: &[f64], eval: &FeatureTable) -> Result<f64> {
        match self {
            SelectionMetric::Auroc => auroc(predictions, &eval.labels()),
            SelectionMetric::Accuracy => accuracy(predictions, &eval.labels(), DECISION_THRESHOLD),
            SelectionMetric::RSquared => r_squared(predictions, &eval.targets()),
        }
    }
}

impl std::str::FromStr for SelectionMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auroc" => Ok(SelectionMetric::Auroc),
            "accuracy" => Ok(SelectionMetric::Accuracy),
            "r2" => Ok(SelectionMetric::RSquared),
            other => Err(Error::usage(format!("unknown selection metric {other:?} (auroc|accuracy|r2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub feature: String,
    pub value: f64,
    /// Metric of every candidate tried at this step, in candidate order.
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub metric: SelectionMetric,
    pub task: Task,
    pub family: String,
    pub steps: Vec<SelectionStep>,
    /// Metric of the model using every candidate.
    pub reference: Option<f64>,
}

impl SelectionTrace {
    pub fn features(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.feature.as_str()).collect()
    }

    /// `step, feature, metric` rows with a header.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tfeature\tmetric\n");
        for (i, st) in self.steps.iter().enumerate() {
            let _ = writeln!(s, "{}\t{}\t{}", i + 1, st.feature, st.value);
        }
        s
    }

    /// Every candidate fit: `step, candidate, metric`.
    pub fn scores_tsv(&self) -> String {
        let mut s = String::from("step\tcandidate\tmetric\n");
        for (i, st) in self.steps.iter().enumerate() {
            for (c, v) in &st.scores {
                let _ = writeln!(s, "{}\t{c}\t{v}", i + 1);
            }
        }
        s
    }

    /// Writes `selection.tsv`, `selection_scores.tsv` and, when known, the
    /// full-set reference into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("selection.tsv", self.to_tsv()),
            ("selection_scores.tsv", self.scores_tsv()),
        ];
        if let Some(r) = self.reference {
            files.push((
                "selection_reference.txt",
                format!(
                    "metric\t{}\nfamily\t{}\nreference\t{r}\n",
                    self.metric.as_str(),
                    self.family
                ),
            ));
        }
        for (name, text) in files {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Seed for the fit of `candidate` at `step`.
pub fn candidate_seed(seed: u64, step: usize, candidate: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((step as u64) << 32) | candidate as u64))
}

/// Splits a table by frame id into (fit, selection) parts; roughly
/// `fraction` of the frames go to the selection part.
pub fn selection_split(table: &FeatureTable, fraction: f64, seed: u64) -> (FeatureTable, FeatureTable) {
    let held = |frame: &str| {
        let h = splitmix64(row_key(frame, 0) ^ seed);
        ((h >> 11) as f64 / (1u64 << 53) as f64) < fraction
    };
    (table.filter_frames(|f| !held(f)), table.filter_frames(held))
}

fn score_subset(
    train: &FeatureTable,
    eval: &FeatureTable,
    features: Vec<String>,
    metric: SelectionMetric,
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<f64> {
    let spec = FeatureSetSpec {
        name: "custom".into(),
        features,
    };
    let model = fit_table(metric.task(), hyper, &train.select_columns(&spec)?, seed)?;
    let pred = model.predict(&eval.select_columns(&spec)?)?;
    metric.evaluate(&pred, eval)
}

/// Applies `f` to every item on all available cores, keeping input order.
fn parallel_map<T: Send>(items: &[usize], f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers <= 1 {
        return items.iter().map(|&i| f(i)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(|| part.iter().map(|&i| f(i)).collect::<Vec<T>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("candidate fit panicked"))
            .collect()
    })
}

#[derive(Debug, Clone)]
pub struct SelectionRequest<'a> {
    pub candidates: &'a [String],
    pub budget: usize,
    pub metric: SelectionMetric,
    pub hyper: &'a Hyperparameters,
    pub seed: u64,
    /// Also fit the all-candidates model.
    pub reference: bool,
}

/// Adds one feature at a time, each time the candidate whose model scores
/// best on `eval`. Ties go to the earlier candidate. Models see their
/// columns in candidate order.
pub fn greedy_select(train: &FeatureTable, eval: &FeatureTable, req: &SelectionRequest<'_>) -> Result<SelectionTrace> {
    let cands = req.candidates;
    if req.budget == 0 || req.budget > cands.len() {
        return Err(Error::usage(format!(
            "selection budget must lie in 1..={}, got {}",
            cands.len(),
            req.budget
        )));
    }
    let mut seen = HashSet::new();
    for c in cands {
        if !seen.insert(c) {
            return Err(Error::usage(format!("candidate {c:?} listed twice")));
        }
        for t in [train, eval] {
            if t.column_index(c).is_none() {
                return Err(Error::usage(format!("candidate {c:?} not present in feature table")));
            }
        }
    }
    let train_frames: HashSet<&str> = train.rows.iter().map(|r| r.frame_id.as_str()).collect();
    if let Some(r) = eval.rows.iter().find(|r| train_frames.contains(r.frame_id.as_str())) {
        return Err(Error::validation(format!(
            "frame {} appears in both the fit and the selection rows",
            r.frame_id
        )));
    }
    let task = req.metric.task();
    let family = req.hyper.family();
    if !family.supports(task) {
        return Err(Error::usage(format!(
            "{} does not support {}",
            family.as_str(),
            task.as_str()
        )));
    }

    let mut chosen = vec![false; cands.len()];
    let mut steps = Vec::with_capacity(req.budget);
    for step in 0..req.budget {
        let remaining: Vec<usize> = (0..cands.len()).filter(|&j| !chosen[j]).collect();
        let values = parallel_map(&remaining, |ci| {
            let subset = cands
                .iter()
                .enumerate()
                .filter(|&(j, _)| chosen[j] || j == ci)
                .map(|(_, f)| f.clone())
                .collect();
            score_subset(train, eval, subset, req.metric, req.hyper, candidate_seed(req.seed, step, ci))
        });
        let mut best: Option<(usize, f64)> = None;
        let mut scores = Vec::with_capacity(remaining.len());
        for (&ci, v) in remaining.iter().zip(values) {
            let v = v?;
            log::debug!("step {} candidate {}: {v}", step + 1, cands[ci]);
            scores.push((cands[ci].clone(), v));
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((ci, v));
            }
        }
        let (ci, v) = best.expect("budget leaves a candidate");
        chosen[ci] = true;
        log::info!("step {}: {} ({} = {v})", step + 1, cands[ci], req.metric.as_str());
        steps.push(SelectionStep {
            feature: cands[ci].clone(),
            value: v,
            scores,
        });
    }
    let reference = if req.reference {
        Some(score_subset(train, eval, cands.to_vec(), req.metric, req.hyper, req.seed)?)
    } else {
        None
    };
    Ok(SelectionTrace {
        metric: req.metric,
        task,
        family: family.as_str().to_string(),
        steps,
        reference,
    })
}
