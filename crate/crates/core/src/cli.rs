//! The `lidar-meta` command line.
//!
//! Every subcommand reads earlier artifacts by path and writes into an
//! output directory together with the effective `pipeline.conf`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{
    attach_ground_truth, build_proposals, planted_recall, read_proposals, write_proposals, Ledger, RankingMethod,
    DEFAULT_CROP_RADIUS,
};
use crate::error::{Error, Result};
use crate::features::{registry_text, FeatureSetSpec, FeatureTable};
use crate::ingest::{read_ground_truth, DatasetManifest, Split};
use crate::metrics::{correlation_table, reliability_export, scatter_export, EvalReport};
use crate::models::{fit_table, load_model, save_model, Task};
use crate::pipeline::{extract_features, PipelineConfig};
use crate::select::{greedy_select, selection_split, SelectionMetric, SelectionRequest};
use crate::serve::{resolve_port, start, ReviewService};
use crate::synth::{generate_synthetic_dataset, SynthConfig};
use crate::table::{read_feature_table, write_feature_table};

pub const MODEL_FILE: &str = "model.lmm";

#[derive(Debug, Parser)]
#[command(name = "lidar-meta", version, about = "Quality estimation for 3D Lidar object detections")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a dataset manifest and every file it references.
    Validate(ValidateArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Extract per-box feature tables.
    Features(FeaturesArgs),
    /// Fit a meta classifier or regressor.
    Fit(FitArgs),
    /// Evaluate a model on a feature table.
    Eval(EvalArgs),
    /// Pearson correlation of every feature with the IoU target.
    Correlate(CorrelateArgs),
    /// Greedy forward feature selection.
    Select(SelectArgs),
    /// Rank annotation-error proposals.
    Audit(AuditArgs),
    /// Serve proposals and record verdicts over HTTP.
    Serve(ServeArgs),
}

/// Pipeline knobs shared by several subcommands; each one overrides the
/// config file.
#[derive(Debug, Args, Default)]
pub struct PipelineFlags {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// NMS overlap metric: bev or 3d.
    #[arg(long)]
    pub nms_metric: Option<String>,
    #[arg(long)]
    pub nms_threshold: Option<f64>,
    #[arg(long)]
    pub score_floor: Option<f64>,
    #[arg(long)]
    pub class_aware_nms: Option<bool>,
    #[arg(long)]
    pub class_aware_matching: Option<bool>,
    #[arg(long)]
    pub exclude_self_from_prop_stats: Option<bool>,
    /// score, box, lmd or custom:a,b,c
    #[arg(long)]
    pub feature_set: Option<String>,
    /// classification or regression
    #[arg(long)]
    pub task: Option<String>,
    /// logreg, ridge, forest, gbt or mlp
    #[arg(long)]
    pub family: Option<String>,
    /// Hyperparameter override `key=value` (repeatable).
    #[arg(long = "hyper", value_name = "KEY=VALUE")]
    pub hyper: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip invalid frames with a diagnostic instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

impl PipelineFlags {
    fn config(&self, manifest: Option<&Path>) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let mut set = |k: &str, v: Option<String>| v.map_or(Ok(()), |v| cfg.set(k, &v));
        set("manifest", manifest.map(|m| m.display().to_string()))?;
        set("nms_metric", self.nms_metric.clone())?;
        set("nms_threshold", self.nms_threshold.map(|v| v.to_string()))?;
        set("score_floor", self.score_floor.map(|v| v.to_string()))?;
        set("class_aware_nms", self.class_aware_nms.map(|v| v.to_string()))?;
        set("class_aware_matching", self.class_aware_matching.map(|v| v.to_string()))?;
        set(
            "exclude_self_from_prop_stats",
            self.exclude_self_from_prop_stats.map(|v| v.to_string()),
        )?;
        set("feature_set", self.feature_set.clone())?;
        set("task", self.task.clone())?;
        set("family", self.family.clone())?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        if self.lenient {
            cfg.strict = false;
        }
        for kv in &self.hyper {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("--hyper expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(&format!("hyper.{}", k.trim()), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Noise profile: none, low, medium or high.
    #[arg(long, default_value = "medium")]
    pub profile: String,
    #[arg(long, default_value_t = 100)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator knob override `key=value` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Print the feature registry and exit.
    #[arg(long)]
    pub registry: bool,
    #[arg(long, required_unless_present = "registry")]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "registry")]
    pub out: Option<PathBuf>,
    /// train, test or all; default writes one table per split.
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub table: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Rows models are fitted on.
    #[arg(long)]
    pub train: PathBuf,
    /// Rows candidates are scored on; default carves a selection split
    /// out of the training table by frame.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub budget: usize,
    /// auroc, accuracy or r2; default follows the task.
    #[arg(long)]
    pub metric: Option<String>,
    /// Candidate feature set.
    #[arg(long, default_value = "lmd")]
    pub candidates: String,
    #[arg(long, default_value_t = 0.25)]
    pub selection_fraction: f64,
    /// Skip the all-candidates reference fit.
    #[arg(long)]
    pub no_reference: bool,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Print the summary of a verdict ledger and exit.
    #[arg(long, value_name = "LEDGER")]
    pub summarize: Option<PathBuf>,
    /// Feature table of the audited frames.
    #[arg(long, required_unless_present = "summarize")]
    pub table: Option<PathBuf>,
    #[arg(long, required_unless_present = "summarize")]
    pub manifest: Option<PathBuf>,
    #[arg(long, required_unless_present = "summarize")]
    pub out: Option<PathBuf>,
    /// Meta model whose output ranks lmd proposals.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// lmd, score, random or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CROP_RADIUS)]
    pub radius: f64,
    /// Annotation file of planted errors; reports recall per method.
    #[arg(long)]
    pub planted: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub proposals: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ledger: PathBuf,
    /// Overrides the LIDAR_META_PORT environment variable.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::Features(a) => features(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Correlate(a) => correlate(a),
        Command::Select(a) => select(a),
        Command::Audit(a) => audit(a),
        Command::Serve(a) => serve(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn validate(a: ValidateArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let mut stream = manifest.read_frames(None, !a.lenient);
    let (mut frames, mut dets, mut gts, mut points) = (0usize, 0usize, 0usize, 0usize);
    for frame in stream.by_ref() {
        let f = frame?;
        frames += 1;
        dets += f.detections.len();
        gts += f.ground_truth.len();
        points += f.cloud.len();
    }
    for d in stream.diagnostics() {
        eprintln!("skipped: {d}");
    }
    println!(
        "{}: {frames} frames, {points} points, {gts} annotations, {dets} detections, {} skipped",
        manifest.name,
        stream.diagnostics().len()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::profile(&a.profile, a.frames)?;
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let manifest = generate_synthetic_dataset(&cfg, a.seed, &a.out)?;
    println!("{}", a.out.join("manifest.json").display());
    log::info!("{} frames written", manifest.frames.len());
    Ok(())
}

fn features(a: FeaturesArgs) -> Result<()> {
    if a.registry {
        print!("{}", registry_text());
        return Ok(());
    }
    let manifest_path = a.manifest.expect("required by clap");
    let out = a.out.expect("required by clap");
    let cfg = a.pipeline.config(Some(&manifest_path))?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let jobs: Vec<(Option<Split>, &str)> = match a.split.as_deref() {
        None => vec![(Some(Split::Train), "train"), (Some(Split::Test), "test")],
        Some("all") => vec![(None, "all")],
        Some(s) => {
            let split: Split = s.parse()?;
            vec![(Some(split), s)]
        }
    };
    create_dir(&out)?;
    for (split, name) in jobs {
        let (table, diagnostics) = extract_features(&manifest, split, &cfg.nms, &cfg.features, cfg.strict)?;
        for d in &diagnostics {
            eprintln!("skipped: {d}");
        }
        let path = out.join(format!("{name}.tsv"));
        write_feature_table(&path, &table)?;
        println!("{}: {} rows", path.display(), table.len());
    }
    cfg.write_into(&out)
}

fn fit(a: FitArgs) -> Result<()> {
    let cfg = a.pipeline.config(None)?;
    let table = read_feature_table(&a.table, None)?.select_columns(&cfg.feature_set)?;
    let model = fit_table(cfg.task, &cfg.hyperparameters()?, &table, cfg.seed)?;
    create_dir(&a.out)?;
    let path = a.out.join(MODEL_FILE);
    save_model(&model, &path)?;
    println!("{}", path.display());
    cfg.write_into(&a.out)
}

/// Report of `model` on `table`, plus the raw predictions.
pub fn evaluate(model: &crate::models::MetaModel, table: &FeatureTable) -> Result<(EvalReport, Vec<f64>)> {
    let pred = model.predict(table)?;
    let set = FeatureSetSpec::describe(&model.features).label();
    let report = match model.task {
        Task::Classification => EvalReport::classification(model.family.as_str(), &set, &pred, &table.labels())?,
        Task::Regression => EvalReport::regression(model.family.as_str(), &set, &pred, &table.targets())?,
    };
    Ok((report, pred))
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let table = read_feature_table(&a.table, None)?;
    let (report, pred) = evaluate(&model, &table)?;
    create_dir(&a.out)?;
    write_text(&a.out.join("report.txt"), &report.to_text())?;
    let mut rows = String::from("frame_id\tbox_id\tprediction\tiou\ttp\n");
    for (r, p) in table.rows.iter().zip(&pred) {
        let _ = writeln!(rows, "{}\t{}\t{p}\t{}\t{}", r.frame_id, r.box_id, r.iou, u8::from(r.tp));
    }
    write_text(&a.out.join("predictions.tsv"), &rows)?;
    match model.task {
        Task::Classification => reliability_export(&report, &a.out.join("reliability.tsv"))?,
        Task::Regression => scatter_export(&pred, &table.targets(), &a.out.join("scatter.tsv"))?,
    }
    print!("{}", report.to_text());
    Ok(())
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let table = read_feature_table(&a.table, None)?;
    let corr = correlation_table(&table);
    create_dir(&a.out)?;
    write_text(&a.out.join("correlations.tsv"), &corr.to_tsv())?;
    for (name, r) in corr.entries.iter().take(10) {
        println!("{name}\t{r:.4}");
    }
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let cfg = a.pipeline.config(None)?;
    let candidates = FeatureSetSpec::parse(&a.candidates)?;
    let train = read_feature_table(&a.train, None)?;
    let (fit_rows, eval_rows) = match &a.eval {
        Some(p) => (train, read_feature_table(p, None)?),
        None => {
            if !(a.selection_fraction > 0.0 && a.selection_fraction < 1.0) {
                return Err(Error::usage("--selection-fraction must lie in (0, 1)"));
            }
            selection_split(&train, a.selection_fraction, cfg.seed)
        }
    };
    let metric = match &a.metric {
        Some(m) => m.parse()?,
        None => SelectionMetric::default_for(cfg.task),
    };
    let hyper = cfg.hyperparameters()?;
    let trace = greedy_select(
        &fit_rows,
        &eval_rows,
        &SelectionRequest {
            candidates: &candidates.features,
            budget: a.budget,
            metric,
            hyper: &hyper,
            seed: cfg.seed,
            reference: !a.no_reference,
        },
    )?;
    trace.write(&a.out)?;
    print!("{}", trace.to_tsv());
    if let Some(r) = trace.reference {
        println!("reference\t{r}");
    }
    cfg.write_into(&a.out)
}

fn audit(a: AuditArgs) -> Result<()> {
    if let Some(ledger) = &a.summarize {
        print!("{}", Ledger::load(ledger)?.summarize().to_text());
        return Ok(());
    }
    let (table_path, manifest_path, out) = (
        a.table.expect("required by clap"),
        a.manifest.expect("required by clap"),
        a.out.expect("required by clap"),
    );
    let manifest = DatasetManifest::load(&manifest_path)?;
    let table = read_feature_table(&table_path, None)?;
    let methods: Vec<RankingMethod> = match a.method.as_str() {
        "all" => RankingMethod::ALL.to_vec(),
        m => vec![m.parse()?],
    };
    let estimates = match &a.model {
        Some(p) => Some(load_model(p)?.predict(&table)?),
        None if methods.contains(&RankingMethod::Lmd) => {
            return Err(Error::usage("lmd ranking needs --model"));
        }
        None => None,
    };
    let planted = match &a.planted {
        Some(p) => Some(read_ground_truth(p, &manifest.classes)?),
        None => None,
    };
    create_dir(&out)?;
    let mut recall = String::from("method\tk\trecall\n");
    for m in methods {
        let mut proposals = build_proposals(
            &table,
            estimates.as_deref(),
            m,
            a.k,
            a.seed,
            &manifest.classes,
            a.radius,
        )?;
        if proposals.is_empty() {
            eprintln!("{}: no false positives, nothing to propose", m.as_str());
        }
        attach_ground_truth(&mut proposals, &manifest)?;
        let path = out.join(format!("proposals_{}.jsonl", m.as_str()));
        write_proposals(&path, &proposals)?;
        println!("{}: {} proposals", path.display(), proposals.len());
        if let Some(planted) = &planted {
            let frames: std::collections::HashSet<&str> = table.rows.iter().map(|r| r.frame_id.as_str()).collect();
            let in_scope: Vec<_> = planted
                .iter()
                .filter(|g| frames.contains(g.frame_id.as_str()))
                .cloned()
                .collect();
            let r = planted_recall(&proposals, &in_scope)?;
            let _ = writeln!(recall, "{}\t{}\t{r}", m.as_str(), a.k);
        }
    }
    if planted.is_some() {
        write_text(&out.join("recall.tsv"), &recall)?;
        print!("{recall}");
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let proposals = read_proposals(&a.proposals)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let port = resolve_port(a.port)?;
    let service = ReviewService::new(proposals, manifest, a.ledger)?;
    let server = start(service, &format!("{}:{port}", a.host))?;
    println!("serving on http://{}/v1/", server.addr);
    server.join();
    Ok(())
}
