//! Meta classification and regression with every model family, compared on
//! the score, box and full feature sets.
//!
//! cargo run --release --example meta_models -- [frames]

use lidar_meta::assoc::NmsConfig;
use lidar_meta::features::{FeatureOptions, FeatureSetSpec};
use lidar_meta::ingest::Split;
use lidar_meta::metrics::{auroc, calibration, EvalReport};
use lidar_meta::models::{fit_table, Family, MetaModel, Task};
use lidar_meta::pipeline::table_from_frames;
use lidar_meta::synth::{generate_frames, SynthConfig};

fn main() -> lidar_meta::Result<()> {
    let frames: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let data = generate_frames(&SynthConfig::profile("medium", frames)?, 7)?;
    let split = |s: Split| data.iter().filter(move |f| f.split == s).map(|f| &f.bundle);
    let (nms, opts) = (NmsConfig::default(), FeatureOptions::default());
    let train = table_from_frames(split(Split::Train), &nms, &opts);
    let test = table_from_frames(split(Split::Test), &nms, &opts);
    println!("{} train rows, {} test rows", train.len(), test.len());

    let raw = test.column("score").unwrap();
    println!(
        "raw detector score: auroc {:.4} ece {:.4}\n",
        auroc(&raw, &test.labels())?,
        calibration(&raw, &test.labels(), 10)?.ece
    );

    println!("{:<8} {:<6} {:>8} {:>8} {:>8}", "family", "set", "auroc", "ece", "r2");
    for family in Family::ALL {
        for spec in [FeatureSetSpec::score(), FeatureSetSpec::boxes(), FeatureSetSpec::lmd()] {
            let (tr, te) = (train.select_columns(&spec)?, test.select_columns(&spec)?);
            let hyper = family.default_hyper();
            let mut cells = ["-".to_string(), "-".to_string(), "-".to_string()];
            if family.supports(Task::Classification) {
                let m = fit_table(Task::Classification, &hyper, &tr, 1)?;
                let r = EvalReport::classification(family.as_str(), &spec.label(), &m.predict(&te)?, &te.labels())?;
                cells[0] = format!("{:.4}", r.auroc.unwrap());
                cells[1] = format!("{:.4}", r.ece.unwrap());
            }
            if family.supports(Task::Regression) {
                let m = fit_table(Task::Regression, &hyper, &tr, 1)?;
                let r = EvalReport::regression(family.as_str(), &spec.label(), &m.predict(&te)?, &te.targets())?;
                cells[2] = format!("{:.4}", r.r_squared.unwrap());
            }
            println!("{:<8} {:<6} {:>8} {:>8} {:>8}", family.as_str(), spec.label(), cells[0], cells[1], cells[2]);
        }
    }

    // models serialize to a checksummed text container
    let m = fit_table(Task::Classification, &Family::Logreg.default_hyper(), &train.select_columns(&FeatureSetSpec::boxes())?, 1)?;
    let text = m.to_container();
    println!("\ncontainer header: {}", text.lines().next().unwrap_or(""));
    assert_eq!(MetaModel::from_container(&text)?.predict(&test)?, m.predict(&test)?);
    Ok(())
}
