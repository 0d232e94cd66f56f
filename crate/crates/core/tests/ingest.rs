use std::fs;
use std::path::Path;

use lidar_meta::features::{lmd_feature_names, FeatureRow, FeatureTable};
use lidar_meta::geom::{LidarPoint, OrientedBox3D, PointCloud};
use lidar_meta::ingest::*;
use lidar_meta::synth::{generate_synthetic_dataset, read_deletions, SynthConfig};
use lidar_meta::table::{read_feature_table, write_feature_table};
use lidar_meta::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn classes() -> Vec<String> {
    vec!["car".into(), "pedestrian".into()]
}

fn det(frame: &str, x: f64) -> RawDetection {
    RawDetection {
        frame_id: frame.into(),
        bbox: OrientedBox3D::new([x, 1.5, -0.25], 4.0, 1.8, 1.5, 0.3).unwrap(),
        score: 0.75,
        class_probs: vec![0.6, 0.4],
    }
}

fn gt(frame: &str, id: u64) -> GroundTruthBox {
    GroundTruthBox {
        frame_id: frame.into(),
        id,
        class: 1,
        bbox: OrientedBox3D::new([id as f64, 0.0, 0.9], 0.8, 0.7, 1.8, -2.0).unwrap(),
    }
}

#[test]
fn point_cloud_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.bin");
    let pts = vec![LidarPoint::new(1.0, -2.5, 0.125, 0.5), LidarPoint::new(30.0, 4.0, -1.0, 1.0)];
    write_point_cloud(&p, &PointCloud::new("f", pts.clone())).unwrap();
    assert_eq!(fs::metadata(&p).unwrap().len(), 32);
    let back = read_point_cloud(&p).unwrap();
    assert_eq!(back.cloud.points, pts);
    assert_eq!((back.clamped, back.dropped_non_finite), (0, 0));
}

#[test]
fn record_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let dp = dir.path().join("d.jsonl");
    let dets = vec![det("f", 1.0), det("f", -7.123456789)];
    write_detections(&dp, &dets).unwrap();
    let back = read_detections(&dp, 2).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[0], dets[0]);
    assert_eq!(back[1].bbox.cx, -7.12345679);

    let gp = dir.path().join("g.jsonl");
    let gts = vec![gt("f", 0), gt("f", 3)];
    write_ground_truth(&gp, &gts, &classes()).unwrap();
    assert_eq!(read_ground_truth(&gp, &classes()).unwrap(), gts);
    // written records are stable under a second pass
    let first = fs::read(&gp).unwrap();
    write_ground_truth(&gp, &read_ground_truth(&gp, &classes()).unwrap(), &classes()).unwrap();
    assert_eq!(fs::read(&gp).unwrap(), first);
}

fn expect_validation(path: &Path, text: &str, read: impl Fn(&Path) -> lidar_meta::Result<()>) -> String {
    fs::write(path, text).unwrap();
    match read(path) {
        Err(Error::Validation(msg)) => msg,
        other => panic!("expected validation error for {text:?}, got {other:?}"),
    }
}

#[test]
fn detection_records_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.jsonl");
    let read = |p: &Path| read_detections(p, 2).map(|_| ());
    let ok = detection_to_line(&det("f", 1.0));
    let cases = [
        ok.replace("\"score\":0.75", "\"score\":1.5"),
        ok.replace("[0.6,0.4]", "[0.6,0.4,0.0]"),
        ok.replace("[0.6,0.4]", "[0.6,0.5]"),
        ok.replace("[0.6,0.4]", "[1.2,-0.2]"),
        ok.replace("\"l\":4.0", "\"l\":-4.0"),
        ok.replace("\"frame\"", "\"frame_id\""),
        ok.replace('}', ",\"extra\":1}"),
        ok[..ok.len() - 3].to_string(),
    ];
    for c in cases {
        let msg = expect_validation(&p, &format!("{ok}\n{c}\n"), read);
        assert!(msg.contains(":2:"), "{msg}");
    }
}

#[test]
fn annotation_records_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.jsonl");
    let read = |p: &Path| read_ground_truth(p, &classes()).map(|_| ());
    let line = ground_truth_to_line(&gt("f", 1), &classes());
    let msg = expect_validation(&p, &line.replace("pedestrian", "truck"), read);
    assert!(msg.contains("unknown class"));
    let msg = expect_validation(&p, &format!("{line}\n{line}\n"), read);
    assert!(msg.contains("duplicate annotation id 1"));
}

/// Flipping bytes of a record file never changes how many records it holds
/// without an error.
#[test]
fn corrupted_record_files_never_misparse_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.jsonl");
    let dets: Vec<_> = (0..5).map(|i| det("f", i as f64)).collect();
    write_detections(&p, &dets).unwrap();
    let clean = fs::read(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..500 {
        let mut bytes = clean.clone();
        let flips = rng.random_range(1..4);
        for _ in 0..flips {
            let i = rng.random_range(0..bytes.len());
            bytes[i] = rng.random();
        }
        fs::write(&p, &bytes).unwrap();
        match read_detections(&p, 2) {
            Ok(back) => assert_eq!(back.len(), dets.len()),
            Err(Error::Validation(_)) | Err(Error::Io { .. }) => {}
            Err(e) => panic!("unexpected error kind: {e}"),
        }
    }
}

#[test]
fn truncated_point_cloud_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.bin");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let records = rng.random_range(0..20);
        let extra = rng.random_range(1..16);
        let bytes: Vec<u8> = (0..records * 16 + extra).map(|_| rng.random()).collect();
        fs::write(&p, &bytes).unwrap();
        let err = read_point_cloud(&p).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains(&format!("{}", records * 16)), "{err}");
    }
}

fn random_table(n: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = lmd_feature_names().to_vec();
    let rows = (0..n)
        .map(|i| FeatureRow {
            frame_id: format!("{:04}", i / 7),
            box_id: i % 7,
            values: (0..names.len())
                .map(|_| {
                    let mag: f64 = rng.random_range(-30.0..30.0);
                    rng.random_range(-1.0..1.0) * 10f64.powf(mag)
                })
                .collect(),
            iou: rng.random(),
            tp: rng.random(),
        })
        .collect();
    FeatureTable::new(names, rows)
}

#[test]
fn feature_table_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.tsv");
    let t = random_table(100, 5);
    write_feature_table(&p, &t).unwrap();
    let back = read_feature_table(&p, Some(lmd_feature_names())).unwrap();
    assert_eq!(back.names, t.names);
    for (a, b) in back.rows.iter().zip(&t.rows) {
        assert_eq!((a.frame_id.as_str(), a.box_id, a.tp), (b.frame_id.as_str(), b.box_id, b.tp));
        assert_eq!(a.iou.to_bits(), b.iou.to_bits());
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn feature_table_with_a_dropped_column_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.tsv");
    let t = random_table(3, 1);
    let spec = lidar_meta::features::FeatureSetSpec {
        name: "custom".into(),
        features: t.names.iter().filter(|n| *n != "refl_std").cloned().collect(),
    };
    write_feature_table(&p, &t.select_columns(&spec).unwrap()).unwrap();
    let err = read_feature_table(&p, Some(lmd_feature_names())).unwrap_err();
    assert!(err.to_string().contains("refl_std"), "{err}");
}

fn small_dataset(dir: &Path, frames: usize) -> DatasetManifest {
    let cfg = SynthConfig::profile("low", frames).unwrap();
    generate_synthetic_dataset(&cfg, 11, dir).unwrap()
}

#[test]
fn manifest_round_trip_and_stream_order() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_dataset(dir.path(), 3);
    let loaded = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded, m);
    let ids: Vec<String> = loaded
        .read_frames(None, true)
        .map(|f| f.unwrap().frame_id)
        .collect();
    assert_eq!(ids, ["000000", "000001", "000002"]);
    let n_train = loaded.read_frames(Some(Split::Train), true).count();
    let n_test = loaded.read_frames(Some(Split::Test), true).count();
    assert_eq!(n_train + n_test, 3);
}

#[test]
fn empty_manifest_streams_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest {
        name: "empty".into(),
        classes: classes(),
        frames: vec![],
        root: dir.path().to_path_buf(),
    };
    let p = dir.path().join("manifest.json");
    m.save(&p).unwrap();
    assert_eq!(DatasetManifest::load(&p).unwrap().read_frames(None, true).count(), 0);
}

#[test]
fn foreign_frame_id_is_skipped_leniently_and_fatal_strictly() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_dataset(dir.path(), 3);
    let entry = &m.frames[1];
    let path = m.resolve(&entry.detections);
    let mut dets = read_detections(&path, m.num_classes()).unwrap();
    dets.push(RawDetection {
        frame_id: "elsewhere".into(),
        ..det("x", 0.0)
    });
    dets.last_mut().unwrap().class_probs = vec![0.2, 0.3, 0.5];
    write_detections(&path, &dets).unwrap();

    let mut lenient = m.read_frames(None, false);
    let ids: Vec<String> = lenient.by_ref().map(|f| f.unwrap().frame_id).collect();
    assert_eq!(ids, ["000000", "000002"]);
    assert_eq!(lenient.diagnostics().len(), 1);
    assert!(lenient.diagnostics()[0].contains("elsewhere"));

    let results: Vec<_> = m.read_frames(None, true).collect();
    assert!(matches!(results[1], Err(Error::Validation(_))));
}

#[test]
fn manifest_with_missing_file_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_dataset(dir.path(), 2);
    fs::remove_file(m.resolve(&m.frames[0].points)).unwrap();
    let err = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn synthetic_dataset_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = SynthConfig::profile("medium", 4).unwrap();
    generate_synthetic_dataset(&cfg, 9, a.path()).unwrap();
    generate_synthetic_dataset(&cfg, 9, b.path()).unwrap();
    let mut files = Vec::new();
    for sub in ["", "points", "labels", "detections"] {
        for e in fs::read_dir(a.path().join(sub)).unwrap() {
            let e = e.unwrap();
            if e.file_type().unwrap().is_file() {
                files.push(Path::new(sub).join(e.file_name()));
            }
        }
    }
    assert!(files.len() >= 13);
    for f in files {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f:?}");
    }
}

#[test]
fn synthetic_files_match_the_in_memory_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::profile("high", 3).unwrap();
    let m = generate_synthetic_dataset(&cfg, 2, dir.path()).unwrap();
    let mem = lidar_meta::synth::generate_frames(&cfg, 2).unwrap();
    for (f, entry) in mem.iter().zip(&m.frames) {
        assert_eq!(m.load_frame(entry).unwrap(), f.bundle);
        assert_eq!(entry.split, f.split);
    }
    let deleted: Vec<_> = mem.iter().flat_map(|f| f.deleted.clone()).collect();
    assert_eq!(read_deletions(&m).unwrap(), deleted);
}

#[test]
fn ten_percent_deletions_over_a_hundred_objects() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::profile("none", 10).unwrap();
    cfg.objects_min = 10;
    cfg.objects_max = 10;
    cfg.deletion_rate = 0.1;
    let m = generate_synthetic_dataset(&cfg, 4, dir.path()).unwrap();
    let annotated: usize = m
        .read_frames(None, true)
        .map(|f| f.unwrap().ground_truth.len())
        .sum();
    let deleted = read_deletions(&m).unwrap();
    assert_eq!(annotated + deleted.len(), 100);
    // exact count of the seeded draw, read back from the sidecar
    assert_eq!(deleted.len(), 16);
    let mem: usize = lidar_meta::synth::generate_frames(&cfg, 4)
        .unwrap()
        .iter()
        .map(|f| f.deleted.len())
        .sum();
    assert_eq!(mem, 16);
    // binomial(100, 0.1): within three standard deviations
    assert!((1..=19).contains(&deleted.len()));
}

#[test]
fn negative_generator_rates_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = SynthConfig::profile("low", 2).unwrap();
    cfg.translation_jitter = -1.0;
    assert!(matches!(
        generate_synthetic_dataset(&cfg, 0, dir.path()),
        Err(Error::Validation(_))
    ));
}
