//! Generate a synthetic Lidar dataset with planted annotation deletions and
//! read it back through the manifest.
//!
//! cargo run --example synthetic_dataset -- [out_dir] [profile] [frames]

use std::path::PathBuf;

use lidar_meta::ingest::Split;
use lidar_meta::synth::{generate_synthetic_dataset, read_deletions, SynthConfig};

fn main() -> lidar_meta::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lidar-meta-synth"));
    let profile = args.next().unwrap_or_else(|| "medium".into());
    let frames: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);

    let mut cfg = SynthConfig::profile(&profile, frames)?;
    cfg.set("deletion_rate", "0.1")?;
    print!("{}", cfg.to_text());

    let manifest = generate_synthetic_dataset(&cfg, 42, &out)?;
    let (mut points, mut gts, mut dets) = (0, 0, 0);
    for frame in manifest.read_frames(None, true) {
        let f = frame?;
        points += f.cloud.len();
        gts += f.ground_truth.len();
        dets += f.detections.len();
    }
    let train = manifest.frames_in(Some(Split::Train)).count();
    println!("{} at {}", manifest.name, out.display());
    println!("{} frames ({train} train), {points} points, {gts} annotations, {dets} raw detections", manifest.frames.len());
    println!("{} annotations deleted and recorded for the audit", read_deletions(&manifest)?.len());
    Ok(())
}
