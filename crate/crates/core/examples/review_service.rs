//! Serve an audit queue to the review UI and record a few verdicts.
//!
//! cargo run --release --example review_service            # scripted session
//! cargo run --release --example review_service -- --keep  # keep serving

use std::io::{Read, Write};
use std::net::TcpStream;

use lidar_meta::assoc::NmsConfig;
use lidar_meta::audit::{attach_ground_truth, build_proposals, RankingMethod, DEFAULT_CROP_RADIUS};
use lidar_meta::features::FeatureOptions;
use lidar_meta::pipeline::extract_features;
use lidar_meta::serve::{resolve_port, start, ReviewService};
use lidar_meta::synth::{generate_synthetic_dataset, SynthConfig};

fn request(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> std::io::Result<String> {
    let mut s = TcpStream::connect(addr)?;
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )?;
    let mut reply = String::new();
    s.read_to_string(&mut reply)?;
    Ok(reply.split_once("\r\n\r\n").map_or(reply.clone(), |(_, b)| b.to_string()))
}

fn main() -> lidar_meta::Result<()> {
    let keep = std::env::args().any(|a| a == "--keep");
    let root = std::env::temp_dir().join("lidar-meta-review");
    let manifest = generate_synthetic_dataset(&SynthConfig::profile("medium", 40)?, 1, &root.join("data"))?;
    let (table, _) = extract_features(&manifest, None, &NmsConfig::default(), &FeatureOptions::default(), true)?;
    let mut proposals =
        build_proposals(&table, None, RankingMethod::Score, 20, 0, &manifest.classes, DEFAULT_CROP_RADIUS)?;
    attach_ground_truth(&mut proposals, &manifest)?;

    let count = proposals.len();
    let ledger = root.join("ledger.jsonl");
    let _ = std::fs::remove_file(&ledger);
    let addr = if keep { format!("127.0.0.1:{}", resolve_port(None)?) } else { "127.0.0.1:0".into() };
    let server = start(ReviewService::new(proposals, manifest, ledger.clone())?, &addr)?;
    println!("serving {count} proposals on http://{}/v1/", server.addr);

    let io = |e: std::io::Error| lidar_meta::Error::io(&root, e);
    for (rank, decision) in [(1, "annotation_error"), (2, "not_error"), (3, "unsure")] {
        let body = format!(r#"{{"rank": {rank}, "decision": "{decision}", "reviewer": "demo"}}"#);
        println!("POST /v1/verdicts -> {}", request(server.addr, "POST", "/v1/verdicts", &body).map_err(io)?);
    }
    println!("GET /v1/summary -> {}", request(server.addr, "GET", "/v1/summary", "").map_err(io)?);
    println!("ledger at {}", ledger.display());
    if keep {
        server.join();
    } else {
        server.stop();
    }
    Ok(())
}
