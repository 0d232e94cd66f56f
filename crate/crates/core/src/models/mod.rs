//! Light-weight meta classifiers and meta regressors.
//!
//! Five families are available: logistic regression (classification only),
//! ridge regression (regression only), random forest, gradient boosting and a
//! two-hidden-layer perceptron. Linear and MLP models see standardized
//! features; the tree families consume raw values.
//!
//! Fitting is deterministic in `(data, seed, hyperparameters)`.

pub mod forest;
pub mod gbt;
pub mod linear;
pub mod mlp;
pub mod tree;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureTable;

pub use forest::ForestParams;
pub use gbt::GbtParams;
pub use linear::LinearParams;
pub use mlp::{Activation, MlpParams};

const MODEL_MAGIC: &str = "lidar-meta-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }

    /// Target of one feature row: TP flag as 0/1, or the IoU.
    pub fn targets(self, table: &FeatureTable) -> Vec<f64> {
        table
            .rows
            .iter()
            .map(|r| match self {
                Task::Classification => f64::from(u8::from(r.tp)),
                Task::Regression => r.iou,
            })
            .collect()
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::usage(format!(
                "unknown task {other:?} (classification|regression)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logreg,
    Ridge,
    Forest,
    Gbt,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Logreg, Family::Ridge, Family::Forest, Family::Gbt, Family::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logreg => "logreg",
            Family::Ridge => "ridge",
            Family::Forest => "forest",
            Family::Gbt => "gbt",
            Family::Mlp => "mlp",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        !matches!(
            (self, task),
            (Family::Logreg, Task::Regression) | (Family::Ridge, Task::Classification)
        )
    }

    pub fn default_hyper(self) -> Hyperparameters {
        match self {
            Family::Logreg => Hyperparameters::Logreg(LinearParams::default()),
            Family::Ridge => Hyperparameters::Ridge(LinearParams::default()),
            Family::Forest => Hyperparameters::Forest(ForestParams::default()),
            Family::Gbt => Hyperparameters::Gbt(GbtParams::default()),
            Family::Mlp => Hyperparameters::Mlp(MlpParams::default()),
        }
    }

    fn uses_standardization(self) -> bool {
        matches!(self, Family::Logreg | Family::Ridge | Family::Mlp)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::usage(format!("unknown model family {s:?} (logreg|ridge|forest|gbt|mlp)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Hyperparameters {
    Logreg(LinearParams),
    Ridge(LinearParams),
    Forest(ForestParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("invalid value {value:?} for hyperparameter {key}")))
}

impl Hyperparameters {
    pub fn family(&self) -> Family {
        match self {
            Hyperparameters::Logreg(_) => Family::Logreg,
            Hyperparameters::Ridge(_) => Family::Ridge,
            Hyperparameters::Forest(_) => Family::Forest,
            Hyperparameters::Gbt(_) => Family::Gbt,
            Hyperparameters::Mlp(_) => Family::Mlp,
        }
    }

    /// Overrides one hyperparameter by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let unknown = || Error::usage(format!("unknown hyperparameter {key:?} for this family"));
        match self {
            Hyperparameters::Logreg(p) | Hyperparameters::Ridge(p) => match key {
                "l2" => p.l2 = parse_num(key, value)?,
                "max_iter" => p.max_iter = parse_num(key, value)?,
                "tol" => p.tol = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
            Hyperparameters::Forest(p) => match key {
                "n_trees" => p.n_trees = parse_num(key, value)?,
                "max_depth" => p.max_depth = parse_num(key, value)?,
                "row_subsample" => p.row_subsample = parse_num(key, value)?,
                "feature_subsample" => p.feature_subsample = value.parse()?,
                "min_leaf" => p.min_leaf = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
            Hyperparameters::Gbt(p) => match key {
                "n_trees" => p.n_trees = parse_num(key, value)?,
                "max_depth" => p.max_depth = parse_num(key, value)?,
                "learning_rate" => p.learning_rate = parse_num(key, value)?,
                "min_leaf" => p.min_leaf = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
            Hyperparameters::Mlp(p) => match key {
                "hidden1" => p.hidden[0] = parse_num(key, value)?,
                "hidden2" => p.hidden[1] = parse_num(key, value)?,
                "activation" => p.activation = value.parse()?,
                "learning_rate" => p.learning_rate = parse_num(key, value)?,
                "epochs" => p.epochs = parse_num(key, value)?,
                "batch_size" => p.batch_size = parse_num(key, value)?,
                _ => return Err(unknown()),
            },
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::usage(format!("hyperparameter {what} must be positive")));
        match self {
            Hyperparameters::Logreg(p) | Hyperparameters::Ridge(p) => {
                if !(p.l2 >= 0.0) {
                    return Err(Error::usage("hyperparameter l2 must be non-negative"));
                }
                if p.max_iter == 0 {
                    return bad("max_iter");
                }
                if !(p.tol > 0.0) {
                    return bad("tol");
                }
            }
            Hyperparameters::Forest(p) => {
                if p.n_trees == 0 {
                    return bad("n_trees");
                }
                if p.max_depth == 0 {
                    return bad("max_depth");
                }
                if p.min_leaf == 0 {
                    return bad("min_leaf");
                }
                if !(p.row_subsample > 0.0 && p.row_subsample <= 1.0) {
                    return Err(Error::usage("row_subsample must lie in (0, 1]"));
                }
                p.feature_subsample.validate()?;
            }
            Hyperparameters::Gbt(p) => {
                if p.n_trees == 0 {
                    return bad("n_trees");
                }
                if p.max_depth == 0 {
                    return bad("max_depth");
                }
                if p.min_leaf == 0 {
                    return bad("min_leaf");
                }
                if !(p.learning_rate > 0.0) {
                    return bad("learning_rate");
                }
            }
            Hyperparameters::Mlp(p) => {
                if p.hidden.contains(&0) {
                    return bad("hidden width");
                }
                if p.epochs == 0 {
                    return bad("epochs");
                }
                if p.batch_size == 0 {
                    return bad("batch_size");
                }
                if !(p.learning_rate > 0.0) {
                    return bad("learning_rate");
                }
            }
        }
        Ok(())
    }
}

/// Per-feature training mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        // constant columns map to 0 after centering
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    /// Degenerate training targets: every prediction is this value.
    Constant { value: f64 },
    Linear(linear::LinearModel),
    Forest(forest::Forest),
    Gbt(gbt::Boosted),
    Mlp(mlp::Network),
}

/// A fitted meta model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub task: Task,
    pub family: Family,
    pub features: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub seed: u64,
    pub hyper: Hyperparameters,
    pub params: Params,
}

/// Training inputs: row-major features, targets and stable per-row keys
/// (used for seeded row subsampling).
pub struct TrainingData<'a> {
    pub features: &'a [String],
    pub x: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub row_keys: &'a [u64],
}

/// FNV-1a over `frame_id` and `box_id`: a stable identity for a feature row.
pub fn row_key(frame_id: &str, box_id: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in frame_id.bytes().chain([0xff]).chain((box_id as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn columns_of(x: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

/// Fits a model of the family given by `hyper`.
pub fn fit(task: Task, hyper: &Hyperparameters, data: &TrainingData<'_>, seed: u64) -> Result<MetaModel> {
    let family = hyper.family();
    if !family.supports(task) {
        return Err(Error::usage(format!(
            "{} does not support {}",
            family.as_str(),
            task.as_str()
        )));
    }
    hyper.validate()?;
    let n = data.x.len();
    let d = data.features.len();
    if n < 2 {
        return Err(Error::validation(format!("need at least 2 training rows, got {n}")));
    }
    if data.y.len() != n || data.row_keys.len() != n {
        return Err(Error::validation("features, targets and row keys differ in length"));
    }
    for (i, row) in data.x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::validation(format!("row {i} has {} values, expected {d}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("row {i} holds non-finite value {v}")));
        }
    }
    for (i, &t) in data.y.iter().enumerate() {
        let ok = match task {
            Task::Classification => t == 0.0 || t == 1.0,
            Task::Regression => (0.0..=1.0).contains(&t),
        };
        if !ok {
            return Err(Error::validation(format!(
                "target {t} of row {i} is invalid for {}",
                task.as_str()
            )));
        }
    }

    let standardizer = family.uses_standardization().then(|| Standardizer::fit(data.x));
    let params = if data.y.iter().all(|&t| t == data.y[0]) {
        Params::Constant { value: data.y[0] }
    } else {
        match hyper {
            Hyperparameters::Logreg(p) => {
                let z: Vec<Vec<f64>> = data.x.iter().map(|r| standardizer.as_ref().unwrap().apply(r)).collect();
                Params::Linear(linear::fit_logistic(&z, data.y, p))
            }
            Hyperparameters::Ridge(p) => {
                let z: Vec<Vec<f64>> = data.x.iter().map(|r| standardizer.as_ref().unwrap().apply(r)).collect();
                Params::Linear(linear::fit_ridge(&z, data.y, p)?)
            }
            Hyperparameters::Forest(p) => {
                let cols = columns_of(data.x, d);
                Params::Forest(forest::fit(task, &cols, data.y, data.row_keys, p, seed))
            }
            Hyperparameters::Gbt(p) => {
                let cols = columns_of(data.x, d);
                Params::Gbt(gbt::fit(task, &cols, data.x, data.y, p, seed))
            }
            Hyperparameters::Mlp(p) => {
                let z: Vec<Vec<f64>> = data.x.iter().map(|r| standardizer.as_ref().unwrap().apply(r)).collect();
                Params::Mlp(mlp::fit(task, &z, data.y, p, seed))
            }
        }
    };
    Ok(MetaModel {
        task,
        family,
        features: data.features.to_vec(),
        standardizer,
        seed,
        hyper: hyper.clone(),
        params,
    })
}

/// Fits on a feature table, using all of its columns.
pub fn fit_table(task: Task, hyper: &Hyperparameters, table: &FeatureTable, seed: u64) -> Result<MetaModel> {
    let x = table.matrix();
    let y = task.targets(table);
    let keys: Vec<u64> = table.rows.iter().map(|r| row_key(&r.frame_id, r.box_id)).collect();
    fit(
        task,
        hyper,
        &TrainingData {
            features: &table.names,
            x: &x,
            y: &y,
            row_keys: &keys,
        },
        seed,
    )
}

impl MetaModel {
    /// Predicts rows whose values follow `self.features` order.
    pub fn predict_rows(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.features.len();
        x.iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != d {
                    return Err(Error::validation(format!(
                        "row {i} has {} values, model expects {d}",
                        row.len()
                    )));
                }
                Ok(self.predict_one(row))
            })
            .collect()
    }

    fn predict_one(&self, row: &[f64]) -> f64 {
        let scaled;
        let input = match &self.standardizer {
            Some(s) => {
                scaled = s.apply(row);
                &scaled[..]
            }
            None => row,
        };
        let raw = match &self.params {
            Params::Constant { value } => *value,
            Params::Linear(m) => m.predict(input, self.task),
            Params::Forest(f) => f.predict(input),
            Params::Gbt(g) => g.predict(input, self.task),
            Params::Mlp(net) => net.predict(input, self.task),
        };
        raw.clamp(0.0, 1.0)
    }

    /// Predicts a table, projecting it onto the model's feature list first.
    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<f64>> {
        if table.names == self.features {
            return self.predict_rows(&table.matrix());
        }
        let idx: Vec<usize> = self
            .features
            .iter()
            .map(|f| {
                table
                    .column_index(f)
                    .ok_or_else(|| Error::validation(format!("feature mismatch: table lacks {f:?}")))
            })
            .collect::<Result<_>>()?;
        let x: Vec<Vec<f64>> = table
            .rows
            .iter()
            .map(|r| idx.iter().map(|&i| r.values[i]).collect())
            .collect();
        self.predict_rows(&x)
    }

    /// Two-line text container: a header with format version and SHA-256 of
    /// the second line, then the model as JSON.
    pub fn to_container(&self) -> String {
        let body = serde_json::to_string(self).expect("model serializes");
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        format!("{MODEL_MAGIC} v{MODEL_FORMAT_VERSION} sha256={digest}\n{body}\n")
    }

    pub fn from_container(text: &str) -> Result<Self> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| Error::validation("model file: missing header line"))?;
        let body = body.strip_suffix('\n').unwrap_or(body);
        let mut parts = header.split(' ');
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(Error::validation("model file: not a lidar-meta model"));
        }
        let version = parts.next().unwrap_or("");
        if version != format!("v{MODEL_FORMAT_VERSION}") {
            return Err(Error::validation(format!(
                "model file: version mismatch ({version}, this build reads v{MODEL_FORMAT_VERSION})"
            )));
        }
        let expected = parts
            .next()
            .and_then(|p| p.strip_prefix("sha256="))
            .ok_or_else(|| Error::validation("model file: missing checksum"))?;
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != expected {
            return Err(Error::validation("model file: checksum mismatch (corrupted)"));
        }
        let model: MetaModel = serde_json::from_str(body)
            .map_err(|e| Error::validation(format!("model file: malformed body: {e}")))?;
        model.hyper.validate()?;
        Ok(model)
    }
}

pub fn save_model(model: &MetaModel, path: &Path) -> Result<()> {
    fs::write(path, model.to_container()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MetaModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetaModel::from_container(&text).map_err(|e| match e {
        Error::Validation(msg) => Error::validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}
