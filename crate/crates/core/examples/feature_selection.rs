//! Greedy forward selection over the box-wise features.
//!
//! cargo run --release --example feature_selection -- [family] [budget]

use lidar_meta::assoc::NmsConfig;
use lidar_meta::features::FeatureOptions;
use lidar_meta::ingest::Split;
use lidar_meta::models::{Family, Task};
use lidar_meta::pipeline::table_from_frames;
use lidar_meta::select::{greedy_select, selection_split, SelectionMetric, SelectionRequest};
use lidar_meta::synth::{generate_frames, SynthConfig};

fn main() -> lidar_meta::Result<()> {
    let mut args = std::env::args().skip(1);
    let family: Family = args.next().unwrap_or_else(|| "logreg".into()).parse()?;
    let budget: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);

    let frames = generate_frames(&SynthConfig::profile("medium", 300)?, 5)?;
    let train = table_from_frames(
        frames.iter().filter(|f| f.split == Split::Train).map(|f| &f.bundle),
        &NmsConfig::default(),
        &FeatureOptions::default(),
    );
    let (fit_rows, sel_rows) = selection_split(&train, 0.25, 5);
    println!("{} rows to fit, {} to score candidates", fit_rows.len(), sel_rows.len());

    let hyper = family.default_hyper();
    let trace = greedy_select(
        &fit_rows,
        &sel_rows,
        &SelectionRequest {
            candidates: &train.names,
            budget,
            metric: SelectionMetric::default_for(Task::Classification),
            hyper: &hyper,
            seed: 5,
            reference: true,
        },
    )?;
    print!("{}", trace.to_tsv());
    if let Some(r) = trace.reference {
        println!("all {} features: {r:.4}", train.names.len());
    }
    Ok(())
}
