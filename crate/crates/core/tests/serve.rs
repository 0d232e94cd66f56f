use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};

use lidar_meta::assoc::NmsConfig;
use lidar_meta::audit::{
    attach_ground_truth, build_proposals, write_proposals, AuditProposal, Ledger, RankingMethod, MAX_PACKET_POINTS,
};
use lidar_meta::features::FeatureOptions;
use lidar_meta::geom::{LidarPoint, PointCloud};
use lidar_meta::ingest::{write_point_cloud, DatasetManifest};
use lidar_meta::pipeline::extract_features;
use lidar_meta::serve::{resolve_port, start, ReviewService, DEFAULT_PORT, PORT_ENV};
use lidar_meta::synth::{generate_synthetic_dataset, SynthConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
    manifest: DatasetManifest,
    proposals: Vec<AuditProposal>,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        let cfg = SynthConfig::profile("high", 30).unwrap();
        let manifest = generate_synthetic_dataset(&cfg, 21, &data).unwrap();
        let (table, _) =
            extract_features(&manifest, None, &NmsConfig::default(), &FeatureOptions::default(), true).unwrap();
        let mut proposals =
            build_proposals(&table, None, RankingMethod::Score, 12, 0, &manifest.classes, 15.0).unwrap();
        assert_eq!(proposals.len(), 12, "fixture needs a dozen false positives");
        attach_ground_truth(&mut proposals, &manifest).unwrap();
        write_proposals(&dir.path().join("proposals.jsonl"), &proposals).unwrap();
        Self { dir, manifest, proposals }
    }

    fn ledger(&self) -> PathBuf {
        self.dir.path().join("ledger.jsonl")
    }

    fn service(&self) -> ReviewService {
        ReviewService::new(self.proposals.clone(), self.manifest.clone(), self.ledger()).unwrap()
    }
}

struct HttpReply {
    status: u16,
    content_type: Option<String>,
    body: Value,
}

fn http(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> HttpReply {
    let mut stream = TcpStream::connect(addr).unwrap();
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let text = String::from_utf8(raw).unwrap();
    let (head, payload) = text.split_once("\r\n\r\n").expect("header terminator");
    let mut lines = head.lines();
    let status = lines.next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    let content_type = lines
        .filter_map(|l| l.split_once(':'))
        .find(|(k, _)| k.eq_ignore_ascii_case("content-type"))
        .map(|(_, v)| v.trim().to_string());
    let body = if payload.is_empty() {
        Value::Null
    } else {
        serde_json::from_str(payload).unwrap_or_else(|e| panic!("non-JSON body {payload:?}: {e}"))
    };
    HttpReply { status, content_type, body }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn ten_verdicts_summarize_to_seven_of_ten() {
    let fx = Fixture::new();
    let before = snapshot(fx.dir.path());
    let server = start(fx.service(), "127.0.0.1:0").unwrap();
    let decisions = [
        "annotation_error", "annotation_error", "not_error", "annotation_error", "unsure",
        "annotation_error", "annotation_error", "not_error", "annotation_error", "annotation_error",
    ];
    for (i, d) in decisions.iter().enumerate() {
        let kind = if *d == "annotation_error" { "missing_label" } else { "none" };
        let body = json!({"rank": i + 1, "decision": d, "error_kind": kind, "reviewer": "r1", "timestamp": 1000 + i});
        let r = http(server.addr, "POST", "/v1/verdicts", Some(&body.to_string()));
        assert_eq!(r.status, 201, "{:?}", r.body);
        assert_eq!(r.body["decision"], json!(d));
        assert_eq!(r.body["proposal"], json!(format!("score-{}", i + 1)));
    }
    let summary = http(server.addr, "GET", "/v1/summary", None);
    assert_eq!(summary.status, 200);
    let overall = &summary.body["methods"]["score"]["overall"];
    assert_eq!((overall["errors"].as_u64(), overall["reviewed"].as_u64()), (Some(7), Some(10)));
    let per_class: u64 = summary.body["methods"]["score"]["classes"]
        .as_object()
        .unwrap()
        .values()
        .map(|c| c["reviewed"].as_u64().unwrap())
        .sum();
    assert_eq!(per_class, 10);

    let list = http(server.addr, "GET", "/v1/proposals", None);
    assert_eq!(list.body["next_unreviewed"], json!(11));
    assert_eq!(list.body["proposals"].as_array().unwrap().len(), 12);
    server.stop();

    // the ledger is the only file written, and replaying it gives the same summary
    let after = snapshot(fx.dir.path());
    let ledger = fx.ledger();
    let new: Vec<_> = after.iter().filter(|(p, _)| !before.iter().any(|(q, _)| q == p)).collect();
    assert_eq!(new.len(), 1);
    assert_eq!(new[0].0, ledger);
    for (p, bytes) in &before {
        assert_eq!(after.iter().find(|(q, _)| q == p).map(|(_, b)| b), Some(bytes), "{} changed", p.display());
    }
    let replay = Ledger::load(&ledger).unwrap().summarize();
    assert_eq!(replay.cell(RankingMethod::Score, None).to_string(), "7/10");
    assert_eq!(fs::read_to_string(&ledger).unwrap().lines().count(), 10);
}

#[test]
fn later_verdicts_replace_earlier_ones_and_survive_restart() {
    let fx = Fixture::new();
    let server = start(fx.service(), "127.0.0.1:0").unwrap();
    for d in ["annotation_error", "not_error"] {
        let body = json!({"rank": 1, "decision": d, "reviewer": "a"}).to_string();
        assert_eq!(http(server.addr, "POST", "/v1/verdicts", Some(&body)).status, 201);
    }
    let body = json!({"rank": 1, "decision": "annotation_error", "error_kind": "wrong_class", "reviewer": "b"});
    assert_eq!(http(server.addr, "POST", "/v1/verdicts", Some(&body.to_string())).status, 201);
    server.stop();

    let server = start(fx.service(), "127.0.0.1:0").unwrap();
    let s = http(server.addr, "GET", "/v1/summary", None);
    let overall = &s.body["methods"]["score"]["overall"];
    assert_eq!((overall["errors"].as_u64(), overall["reviewed"].as_u64()), (Some(1), Some(2)));
    assert_eq!(http(server.addr, "GET", "/v1/proposals", None).body["next_unreviewed"], json!(2));
    server.stop();
}

#[test]
fn bad_requests_get_the_right_status() {
    let fx = Fixture::new();
    let server = start(fx.service(), "127.0.0.1:0").unwrap();
    let a = server.addr;
    let cases: [(&str, &str, Option<&str>, u16); 9] = [
        ("GET", "/v1/proposals/999", None, 404),
        ("GET", "/v1/proposals/abc", None, 404),
        ("GET", "/v1/nowhere", None, 404),
        ("DELETE", "/v1/proposals", None, 405),
        ("GET", "/v1/verdicts", None, 405),
        ("POST", "/v1/summary", Some("{}"), 405),
        ("POST", "/v1/verdicts", Some("not json"), 400),
        ("POST", "/v1/verdicts", Some(r#"{"rank": 99, "decision": "unsure", "reviewer": "x"}"#), 404),
        ("POST", "/v1/verdicts", Some(r#"{"rank": 1, "decision": "unsure", "reviewer": "  "}"#), 422),
    ];
    for (method, path, body, status) in cases {
        let r = http(a, method, path, body);
        assert_eq!(r.status, status, "{method} {path}");
        assert_eq!(r.content_type.as_deref(), Some("application/json"));
        assert!(r.body["error"].is_string());
    }
    let r = http(a, "POST", "/v1/verdicts", Some(r#"{"rank": 1, "decision": "maybe", "reviewer": "x"}"#));
    assert_eq!(r.status, 400);
    server.stop();
    assert!(!fx.ledger().exists());
}

#[test]
fn packets_carry_the_crop_and_are_capped() {
    let fx = Fixture::new();
    let target = fx.proposals[0].clone();
    // a very dense cloud around the proposal
    let entry = fx.manifest.frames.iter().find(|f| f.id == target.frame_id).unwrap();
    let (cx, cy) = (target.bbox.x, target.bbox.y);
    let n = 130_000;
    let points: Vec<LidarPoint> = (0..n)
        .map(|i| {
            let a = i as f64 * 0.618_033_988_7 * std::f64::consts::TAU;
            let r = 10.0 * ((i as f64 + 0.5) / n as f64).sqrt();
            LidarPoint::new(cx + r * a.cos(), cy + r * a.sin(), (i % 7) as f64 * 0.2, 0.5)
        })
        .collect();
    write_point_cloud(&fx.manifest.resolve(&entry.points), &PointCloud::new(target.frame_id.clone(), points))
        .unwrap();

    let server = start(fx.service(), "127.0.0.1:0").unwrap();
    let r = http(server.addr, "GET", "/v1/proposals/1", None);
    assert_eq!(r.status, 200);
    assert_eq!(r.content_type.as_deref(), Some("application/json"));
    let pts = r.body["points"].as_array().unwrap();
    assert!(pts.len() <= MAX_PACKET_POINTS && pts.len() > MAX_PACKET_POINTS / 2);
    assert_eq!(r.body["crop_points"].as_u64(), Some(n as u64));
    assert!(pts.iter().all(|p| p.as_array().unwrap().len() == 4));
    assert_eq!(r.body["proposal"]["rank"], json!(1));
    assert!(r.body["ground_truth"].is_array());

    // an ordinary frame is sent whole
    let r = http(server.addr, "GET", "/v1/proposals/2", None);
    assert_eq!(r.status, 200);
    let sent = r.body["points"].as_array().unwrap().len() as u64;
    if fx.proposals[1].frame_id != target.frame_id {
        assert_eq!(Some(sent), r.body["crop_points"].as_u64());
    }
    server.stop();
}

#[test]
fn port_comes_from_flag_then_environment_then_default() {
    std::env::remove_var(PORT_ENV);
    assert_eq!(resolve_port(None).unwrap(), DEFAULT_PORT);
    std::env::set_var(PORT_ENV, "9123");
    assert_eq!(resolve_port(None).unwrap(), 9123);
    assert_eq!(resolve_port(Some(7001)).unwrap(), 7001);
    std::env::set_var(PORT_ENV, "not-a-port");
    assert!(resolve_port(None).is_err());
    std::env::remove_var(PORT_ENV);
}
