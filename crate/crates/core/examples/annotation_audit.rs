//! Rank false positives for review and measure how many planted annotation
//! deletions each ranking surfaces.
//!
//! cargo run --release --example annotation_audit

use lidar_meta::assoc::NmsConfig;
use lidar_meta::audit::{build_proposals, planted_recall, RankingMethod, DEFAULT_CROP_RADIUS};
use lidar_meta::features::FeatureOptions;
use lidar_meta::ingest::Split;
use lidar_meta::models::{fit_table, Family, Task};
use lidar_meta::pipeline::table_from_frames;
use lidar_meta::synth::{generate_frames, SynthConfig, CLASSES};

fn main() -> lidar_meta::Result<()> {
    let mut cfg = SynthConfig::profile("medium", 600)?;
    cfg.set("deletion_rate", "0.08")?;
    let frames = generate_frames(&cfg, 9)?;
    let split = |s: Split| frames.iter().filter(move |f| f.split == s);
    let (nms, opts) = (NmsConfig::default(), FeatureOptions::default());
    let train = table_from_frames(split(Split::Train).map(|f| &f.bundle), &nms, &opts);
    let test = table_from_frames(split(Split::Test).map(|f| &f.bundle), &nms, &opts);
    let planted: Vec<_> = split(Split::Test).flat_map(|f| f.deleted.iter().cloned()).collect();

    let model = fit_table(Task::Regression, &Family::Gbt.default_hyper(), &train, 9)?;
    let estimates = model.predict(&test)?;
    let classes: Vec<String> = CLASSES.iter().map(|s| s.to_string()).collect();
    println!("{} planted deletions in the test frames", planted.len());
    for method in RankingMethod::ALL {
        for k in [25, 50, 100] {
            let props = build_proposals(&test, Some(&estimates), method, k, 9, &classes, DEFAULT_CROP_RADIUS)?;
            println!("{:<7} recall@{k:<3} {:.4}", method.as_str(), planted_recall(&props, &planted)?);
        }
    }
    let top = build_proposals(&test, Some(&estimates), RankingMethod::Lmd, 5, 9, &classes, DEFAULT_CROP_RADIUS)?;
    println!("\ntop proposals:");
    for p in &top {
        println!(
            "  {} frame {} box {} {} score {:.3} estimated iou {:.3} (actual {:.3})",
            p.id(),
            p.frame_id,
            p.box_id,
            p.class,
            p.score,
            p.key,
            p.iou
        );
    }
    Ok(())
}
