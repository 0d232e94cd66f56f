//! NMS with pre-image ownership and the 90 box-wise features.
//!
//! cargo run --example feature_extraction

use lidar_meta::assoc::{greedy_nms, NmsConfig};
use lidar_meta::features::{compute_features, feature_index, registry_text, FeatureOptions, FeatureSetSpec};
use lidar_meta::pipeline::table_from_frames;
use lidar_meta::synth::{generate_frame, SynthConfig};

fn main() -> lidar_meta::Result<()> {
    let cfg = SynthConfig::profile("medium", 20)?;
    let frame = generate_frame(&cfg, 3, 0).bundle;
    let nms = NmsConfig::default();
    let result = greedy_nms(&frame.detections, &nms);
    println!(
        "frame {}: {} raw detections, {} survivors",
        frame.frame_id,
        frame.detections.len(),
        result.survivors.len()
    );
    for (s, pre) in result.survivors.iter().zip(result.pre_images()) {
        println!("  survivor {s:>3} owns {pre:?}");
    }

    let rows = compute_features(&frame, &result, &FeatureOptions::default());
    let show = ["score", "num_points", "num_proposals", "prop_score_std", "iou3d_mean"];
    println!("\n{:>6} {:>6} {:>6}  {}", "box", "iou", "tp", show.join("  "));
    for r in &rows {
        let vals: Vec<String> = show.iter().map(|n| format!("{:.3}", r.values[feature_index(n).unwrap()])).collect();
        println!("{:>6} {:>6.3} {:>6}  {}", r.box_id, r.iou, r.tp, vals.join("  "));
    }

    let frames: Vec<_> = (0..20).map(|i| generate_frame(&cfg, 3, i).bundle).collect();
    let table = table_from_frames(&frames, &nms, &FeatureOptions::default());
    for spec in [FeatureSetSpec::score(), FeatureSetSpec::boxes(), FeatureSetSpec::lmd()] {
        println!("{} set: {} columns", spec.label(), table.select_columns(&spec)?.names.len());
    }
    println!("\nfirst registry entries:");
    for line in registry_text().lines().take(12) {
        println!("  {line}");
    }
    Ok(())
}
