//! Integration tests for the face-dataset builder on generated fixtures.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use dfdet_core::catalog::{load_catalog, Partition, SplitPlan};
use dfdet_core::config::PipelineConfig;
use dfdet_core::facepipe::dataset::{build_face_dataset, load_index, DatasetPaths};
use dfdet_core::facepipe::detector::LumaBlobDetector;
use dfdet_core::fixture::{generate_fixture, FixtureSpec};

fn plan_all(catalog: &dfdet_core::Catalog, partition: Partition) -> SplitPlan {
    let assignments: BTreeMap<String, Partition> = catalog
        .records()
        .iter()
        .map(|r| (r.video_id.clone(), partition))
        .collect();
    SplitPlan {
        seed: 0,
        assignments,
        per_class_counts: BTreeMap::new(),
    }
}

fn fixture_catalog(root: &Path, videos: usize, frames: usize) -> dfdet_core::Catalog {
    let spec = FixtureSpec {
        videos_per_class: videos,
        frames_per_video: frames,
        ..FixtureSpec::default()
    };
    let manifest = generate_fixture(root, 5, &spec).unwrap();
    load_catalog(&manifest).unwrap()
}

#[test]
fn two_videos_three_frames_each_yield_six_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = fixture_catalog(tmp.path(), 1, 3); // 1 per class = 2 videos
    let plan = plan_all(&catalog, Partition::Train);
    let out = tmp.path().join("ds");

    let report = build_face_dataset(&catalog, &plan, &PipelineConfig::default(), &LumaBlobDetector, &out).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert!(report.faceless.is_empty());
    assert!(report.failures.is_empty());
    for row in &report.rows {
        assert!(out.join(&row.sample_path).is_file(), "{} missing", row.sample_path);
        assert!(row.confidence >= 0.8);
    }
}

#[test]
fn test_only_plan_writes_only_the_test_partition() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = fixture_catalog(tmp.path(), 2, 2);
    let plan = plan_all(&catalog, Partition::Test);
    let out = tmp.path().join("ds");

    let report = build_face_dataset(&catalog, &plan, &PipelineConfig::default(), &LumaBlobDetector, &out).unwrap();
    assert!(!report.rows.is_empty());
    assert!(report.rows.iter().all(|r| r.partition == Partition::Test));
    assert!(out.join("test").is_dir());
    assert!(!out.join("train").exists());
    assert!(!out.join("val").exists());
}

#[test]
fn rebuild_is_byte_identical_and_overwrites_stale_samples() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = fixture_catalog(tmp.path(), 2, 3);
    let plan = plan_all(&catalog, Partition::Train);
    let out = tmp.path().join("ds");
    let cfg = PipelineConfig::default();

    build_face_dataset(&catalog, &plan, &cfg, &LumaBlobDetector, &out).unwrap();
    let index1 = fs::read(DatasetPaths::index(&out)).unwrap();

    // plant a stale artifact that a second build must remove
    let stale = out.join("train/real/stale_000000.png");
    fs::write(&stale, b"junk").unwrap();

    build_face_dataset(&catalog, &plan, &cfg, &LumaBlobDetector, &out).unwrap();
    let index2 = fs::read(DatasetPaths::index(&out)).unwrap();
    assert_eq!(index1, index2);
    assert!(!stale.exists());
}

#[test]
fn per_video_cap_limits_qualifying_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = fixture_catalog(tmp.path(), 1, 8);
    let plan = plan_all(&catalog, Partition::Train);
    let cfg = PipelineConfig {
        max_qualifying: 5,
        ..PipelineConfig::default()
    };
    let out = tmp.path().join("ds");

    let report = build_face_dataset(&catalog, &plan, &cfg, &LumaBlobDetector, &out).unwrap();
    let mut per_video: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &report.rows {
        *per_video.entry(row.video_id.as_str()).or_default() += 1;
    }
    assert!(per_video.values().all(|&n| n == 5), "{per_video:?}");
}

#[test]
fn samples_land_in_their_planned_partition_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let catalog = fixture_catalog(tmp.path(), 3, 2);
    // hand out all three partitions across the six videos
    let mut ids: Vec<String> = catalog.records().iter().map(|r| r.video_id.clone()).collect();
    ids.sort();
    let assignments: BTreeMap<String, Partition> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let p = [Partition::Train, Partition::Val, Partition::Test][i % 3];
            (id.clone(), p)
        })
        .collect();
    let plan = SplitPlan {
        seed: 0,
        assignments: assignments.clone(),
        per_class_counts: BTreeMap::new(),
    };
    let out = tmp.path().join("ds");

    build_face_dataset(&catalog, &plan, &PipelineConfig::default(), &LumaBlobDetector, &out).unwrap();
    let rows = load_index(&DatasetPaths::index(&out)).unwrap();
    assert!(!rows.is_empty());
    for row in &rows {
        assert_eq!(Some(row.partition), assignments.get(&row.video_id).copied());
        assert!(row.sample_path.starts_with(row.partition.as_str()));
    }
}

#[test]
fn faceless_videos_are_reported_not_indexed() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = FixtureSpec {
        videos_per_class: 1,
        frames_per_video: 2,
        faceless_videos: 2,
        ..FixtureSpec::default()
    };
    let manifest = generate_fixture(tmp.path(), 9, &spec).unwrap();
    let catalog = load_catalog(&manifest).unwrap();
    let plan = plan_all(&catalog, Partition::Train);
    let out = tmp.path().join("ds");

    let report = build_face_dataset(&catalog, &plan, &PipelineConfig::default(), &LumaBlobDetector, &out).unwrap();
    assert_eq!(report.faceless.len(), 2);
    assert!(report.rows.iter().all(|r| !r.video_id.starts_with("faceless")));
}
