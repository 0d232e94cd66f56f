//! Features most correlated with the BEV IoU of each detection.
//!
//! cargo run --example correlations

use lidar_meta::assoc::NmsConfig;
use lidar_meta::features::FeatureOptions;
use lidar_meta::metrics::correlation_table;
use lidar_meta::pipeline::table_from_frames;
use lidar_meta::synth::{generate_frames, SynthConfig};

fn main() -> lidar_meta::Result<()> {
    let frames = generate_frames(&SynthConfig::profile("medium", 300)?, 11)?;
    let table = table_from_frames(frames.iter().map(|f| &f.bundle), &NmsConfig::default(), &FeatureOptions::default());
    let corr = correlation_table(&table);
    println!("{} rows; strongest correlations with iou:", table.len());
    for (name, r) in corr.entries.iter().take(15) {
        println!("  {name:<28} {r:+.4}");
    }
    if !corr.undefined.is_empty() {
        println!("constant columns: {}", corr.undefined.join(", "));
    }
    Ok(())
}
