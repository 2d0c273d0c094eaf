//! Labeled video manifests, class balancing and blind video-level splits.
//!
//! A split is "blind" when no video contributes frames to more than one
//! partition, so the test subset never shares a source video with training
//! or validation data.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary class of a video or face sample. `Fake` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "real" => Some(Label::Real),
            "fake" => Some(Label::Fake),
            _ => None,
        }
    }

    /// Class index used by the classifier head (fake = 1).
    pub fn index(self) -> usize {
        match self {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dataset partition a video is assigned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Partition> {
        match s {
            "train" => Some(Partition::Train),
            "val" => Some(Partition::Val),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }

    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One source video row from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub label: Label,
    pub path: PathBuf,
    pub duration_s: Option<f64>,
    pub fps: Option<f64>,
}

/// All videos known to a run, with per-class tallies derivable on demand.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    records: Vec<VideoRecord>,
}

impl Catalog {
    pub fn new(records: Vec<VideoRecord>) -> Result<Catalog, CatalogError> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.video_id.clone()) {
                return Err(CatalogError::DuplicateVideoId(r.video_id.clone()));
            }
        }
        Ok(Catalog { records })
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::from([(Label::Real, 0), (Label::Fake, 0)]);
        for r in &self.records {
            *counts.get_mut(&r.label).unwrap() += 1;
        }
        counts
    }

    pub fn count(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.label == label).count()
    }

    pub fn get(&self, video_id: &str) -> Option<&VideoRecord> {
        self.records.iter().find(|r| r.video_id == video_id)
    }
}

/// Deterministic assignment of every catalog video to exactly one partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub assignments: BTreeMap<String, Partition>,
    pub per_class_counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl SplitPlan {
    pub fn partition_of(&self, video_id: &str) -> Option<Partition> {
        self.assignments.get(video_id).copied()
    }

    pub fn video_ids(&self, partition: Partition) -> BTreeSet<String> {
        self.assignments
            .iter()
            .filter(|(_, p)| **p == partition)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Key-sorted JSON bytes; byte equality implies plan equality.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("plan serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn save(&self, path: &Path) -> Result<(), CatalogError> {
        let mut f = fs::File::create(path).map_err(|e| CatalogError::Io(path.into(), e))?;
        f.write_all(&self.to_json_bytes())
            .map_err(|e| CatalogError::Io(path.into(), e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SplitPlan, CatalogError> {
        let bytes = fs::read(path).map_err(|_| CatalogError::MissingFile(path.into()))?;
        serde_json::from_slice(&bytes).map_err(|e| CatalogError::SchemaViolation {
            row: 0,
            message: format!("invalid split plan: {e}"),
        })
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("manifest file not found: {0}")]
    MissingFile(PathBuf),
    #[error("manifest schema violation at row {row}: {message}")]
    SchemaViolation { row: usize, message: String },
    #[error("duplicate video_id in manifest: {0}")]
    DuplicateVideoId(String),
    #[error("class {0} has zero videos")]
    EmptyClass(Label),
    #[error("catalog is not balanced: real={real}, fake={fake}")]
    UnbalancedCatalog { real: usize, fake: usize },
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("invalid split fraction: {0}")]
    InvalidFraction(String),
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

/// Reads a manifest CSV (`video_id,label,path` with a header row) into a
/// catalog. Duplicate ids and unknown labels are rejected with the offending
/// row number.
pub fn load_catalog(manifest_path: &Path) -> Result<Catalog, CatalogError> {
    if !manifest_path.is_file() {
        return Err(CatalogError::MissingFile(manifest_path.into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(manifest_path)
        .map_err(|e| CatalogError::SchemaViolation {
            row: 0,
            message: e.to_string(),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| CatalogError::SchemaViolation {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, label_col, path_col) = match (col("video_id"), col("label"), col("path")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(CatalogError::SchemaViolation {
                row: 0,
                message: format!(
                    "header must contain video_id,label,path; got {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            })
        }
    };

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, row) in reader.records().enumerate() {
        let rownum = i + 2; // 1-based, after header
        let row = row.map_err(|e| CatalogError::SchemaViolation {
            row: rownum,
            message: e.to_string(),
        })?;
        let field = |c: usize| {
            row.get(c).ok_or(CatalogError::SchemaViolation {
                row: rownum,
                message: "missing field".into(),
            })
        };
        let video_id = field(id_col)?.to_string();
        if video_id.is_empty() {
            return Err(CatalogError::SchemaViolation {
                row: rownum,
                message: "empty video_id".into(),
            });
        }
        let label_raw = field(label_col)?;
        let label = Label::parse(label_raw).ok_or_else(|| CatalogError::SchemaViolation {
            row: rownum,
            message: format!("label must be real|fake, got {label_raw:?}"),
        })?;
        let path = PathBuf::from(field(path_col)?);
        if !seen.insert(video_id.clone()) {
            return Err(CatalogError::DuplicateVideoId(video_id));
        }
        records.push(VideoRecord {
            video_id,
            label,
            path,
            duration_s: None,
            fps: None,
        });
    }
    Catalog::new(records)
}

fn sorted_ids(catalog: &Catalog, label: Label) -> Vec<String> {
    let mut ids: Vec<String> = catalog
        .records
        .iter()
        .filter(|r| r.label == label)
        .map(|r| r.video_id.clone())
        .collect();
    ids.sort();
    ids
}

fn class_rng(seed: u64, label: Label, salt: u64) -> ChaCha8Rng {
    // Distinct stream per (seed, class, purpose) so classes do not share draws.
    let mix = seed
        ^ (label.index() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mix)
}

/// Downsamples the majority class to the minority count by seeded uniform
/// sampling without replacement. The minority class is kept whole. Output
/// record order is sorted by video id so equal inputs give equal bytes.
pub fn balance_classes(catalog: &Catalog, seed: u64) -> Result<Catalog, CatalogError> {
    for label in [Label::Real, Label::Fake] {
        if catalog.count(label) == 0 {
            return Err(CatalogError::EmptyClass(label));
        }
    }
    let target = catalog.count(Label::Real).min(catalog.count(Label::Fake));

    let mut keep: BTreeSet<String> = BTreeSet::new();
    for label in [Label::Real, Label::Fake] {
        let mut ids = sorted_ids(catalog, label);
        if ids.len() > target {
            let mut rng = class_rng(seed, label, 1);
            ids.shuffle(&mut rng);
            ids.truncate(target);
        }
        keep.extend(ids);
    }

    let mut records: Vec<VideoRecord> = catalog
        .records
        .iter()
        .filter(|r| keep.contains(&r.video_id))
        .cloned()
        .collect();
    records.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    Ok(Catalog { records })
}

/// Per class: seeded shuffle, then floor(test_fraction) videos to TEST, of
/// the remainder floor(val_fraction) to VAL and the rest to TRAIN. All three
/// partitions are video-disjoint by construction.
pub fn split_videos(
    catalog: &Catalog,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitPlan, CatalogError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CatalogError::InvalidFraction(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(CatalogError::InvalidFraction(format!(
            "val_fraction must be in [0,1), got {val_fraction}"
        )));
    }
    let real = catalog.count(Label::Real);
    let fake = catalog.count(Label::Fake);
    if real != fake {
        return Err(CatalogError::UnbalancedCatalog { real, fake });
    }

    let mut assignments: BTreeMap<String, Partition> = BTreeMap::new();
    let mut per_class_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();

    for label in [Label::Real, Label::Fake] {
        let mut ids = sorted_ids(catalog, label);
        let n = ids.len();
        let mut rng = class_rng(seed, label, 2);
        ids.shuffle(&mut rng);

        let n_test = (n as f64 * test_fraction).floor() as usize;
        let remainder = n - n_test;
        let n_val = (remainder as f64 * val_fraction).floor() as usize;
        let n_train = remainder - n_val;

        if n_test == 0 {
            return Err(CatalogError::DegenerateSplit(format!(
                "class {label}: test partition would be empty ({n} videos, fraction {test_fraction})"
            )));
        }
        if val_fraction > 0.0 && n_val == 0 {
            return Err(CatalogError::DegenerateSplit(format!(
                "class {label}: val partition would be empty ({remainder} remaining videos, fraction {val_fraction})"
            )));
        }
        if n_train == 0 {
            return Err(CatalogError::DegenerateSplit(format!(
                "class {label}: train partition would be empty"
            )));
        }

        let counts = per_class_counts.entry(label.as_str().into()).or_default();
        for (i, id) in ids.into_iter().enumerate() {
            let partition = if i < n_test {
                Partition::Test
            } else if i < n_test + n_val {
                Partition::Val
            } else {
                Partition::Train
            };
            *counts.entry(partition.as_str().into()).or_insert(0) += 1;
            assignments.insert(id, partition);
        }
        for p in Partition::ALL {
            counts.entry(p.as_str().into()).or_insert(0);
        }
    }

    Ok(SplitPlan {
        seed,
        assignments,
        per_class_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, label: Label) -> VideoRecord {
        VideoRecord {
            video_id: id.into(),
            label,
            path: PathBuf::from(format!("videos/{id}")),
            duration_s: None,
            fps: None,
        }
    }

    fn synthetic(real: usize, fake: usize) -> Catalog {
        let mut records = Vec::new();
        for i in 0..real {
            records.push(record(&format!("real_{i:05}"), Label::Real));
        }
        for i in 0..fake {
            records.push(record(&format!("fake_{i:05}"), Label::Fake));
        }
        Catalog::new(records).unwrap()
    }

    fn write_manifest(rows: &[(&str, &str)]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "video_id,label,path").unwrap();
        for (id, label) in rows {
            writeln!(f, "{id},{label},videos/{id}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn load_counts_imbalanced_manifest() {
        let rows: Vec<(String, &str)> = (0..590)
            .map(|i| (format!("r{i}"), "real"))
            .chain((0..5639).map(|i| (format!("f{i}"), "fake")))
            .collect();
        let refs: Vec<(&str, &str)> = rows.iter().map(|(a, b)| (a.as_str(), *b)).collect();
        let manifest = write_manifest(&refs);
        let catalog = load_catalog(manifest.path()).unwrap();
        assert_eq!(catalog.count(Label::Real), 590);
        assert_eq!(catalog.count(Label::Fake), 5639);
    }

    #[test]
    fn load_empty_manifest() {
        let manifest = write_manifest(&[]);
        let catalog = load_catalog(manifest.path()).unwrap();
        assert!(catalog.is_empty());
        assert_eq!(
            catalog.class_counts(),
            BTreeMap::from([(Label::Real, 0), (Label::Fake, 0)])
        );
    }

    #[test]
    fn load_rejects_duplicate_id() {
        let manifest = write_manifest(&[("v1", "real"), ("v1", "fake")]);
        match load_catalog(manifest.path()) {
            Err(CatalogError::DuplicateVideoId(id)) => assert_eq!(id, "v1"),
            other => panic!("expected DuplicateVideoId, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_bad_label_with_row() {
        let manifest = write_manifest(&[("v1", "real"), ("v2", "legit")]);
        match load_catalog(manifest.path()) {
            Err(CatalogError::SchemaViolation { row, .. }) => assert_eq!(row, 3),
            other => panic!("expected SchemaViolation, got {other:?}"),
        }
    }

    #[test]
    fn load_missing_file() {
        let err = load_catalog(Path::new("/nonexistent/manifest.csv")).unwrap_err();
        assert!(matches!(err, CatalogError::MissingFile(_)));
    }

    #[test]
    fn balance_caps_majority_class() {
        let catalog = synthetic(590, 5639);
        let balanced = balance_classes(&catalog, 42).unwrap();
        assert_eq!(balanced.count(Label::Real), 590);
        assert_eq!(balanced.count(Label::Fake), 590);
    }

    #[test]
    fn balance_leaves_balanced_catalog_untouched() {
        let catalog = synthetic(7, 7);
        let balanced = balance_classes(&catalog, 0).unwrap();
        let mut expected: Vec<String> =
            catalog.records().iter().map(|r| r.video_id.clone()).collect();
        expected.sort();
        let got: Vec<String> = balanced.records().iter().map(|r| r.video_id.clone()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn balance_deterministic_and_subset() {
        let catalog = synthetic(3, 10);
        let a = balance_classes(&catalog, 1).unwrap();
        let b = balance_classes(&catalog, 1).unwrap();
        let ids = |c: &Catalog| -> Vec<String> {
            c.records().iter().map(|r| r.video_id.clone()).collect()
        };
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(a.count(Label::Fake), 3);
        // brute-force: every retained video exists in the input
        let input: BTreeSet<String> = ids(&catalog).into_iter().collect();
        for id in ids(&a) {
            assert!(input.contains(&id));
        }
    }

    #[test]
    fn balance_rejects_empty_class() {
        let catalog = synthetic(0, 5);
        assert!(matches!(
            balance_classes(&catalog, 0),
            Err(CatalogError::EmptyClass(Label::Real))
        ));
    }

    #[test]
    fn split_reproduces_table_counts() {
        let catalog = synthetic(590, 590);
        let plan = split_videos(&catalog, 0.2, 0.0, 7).unwrap();
        for label in ["real", "fake"] {
            let counts = &plan.per_class_counts[label];
            assert_eq!(counts["test"], 118);
            assert_eq!(counts["train"], 472);
            assert_eq!(counts["val"], 0);
        }
    }

    #[test]
    fn split_floor_arithmetic() {
        let catalog = synthetic(10, 10);
        let plan = split_videos(&catalog, 0.2, 0.2, 7).unwrap();
        for label in ["real", "fake"] {
            let counts = &plan.per_class_counts[label];
            assert_eq!(counts["test"], 2);
            assert_eq!(counts["val"], 1);
            assert_eq!(counts["train"], 7);
        }
    }

    #[test]
    fn split_deterministic() {
        let catalog = synthetic(25, 25);
        let a = split_videos(&catalog, 0.2, 0.25, 99).unwrap();
        let b = split_videos(&catalog, 0.2, 0.25, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json_bytes(), b.to_json_bytes());
    }

    #[test]
    fn split_rejects_unbalanced() {
        let catalog = synthetic(4, 6);
        assert!(matches!(
            split_videos(&catalog, 0.25, 0.0, 0),
            Err(CatalogError::UnbalancedCatalog { .. })
        ));
    }

    #[test]
    fn split_rejects_degenerate_test() {
        let catalog = synthetic(3, 3);
        assert!(matches!(
            split_videos(&catalog, 0.1, 0.0, 0),
            Err(CatalogError::DegenerateSplit(_))
        ));
    }

    #[test]
    fn plan_roundtrip() {
        let catalog = synthetic(10, 10);
        let plan = split_videos(&catalog, 0.2, 0.0, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        plan.save(&path).unwrap();
        let loaded = SplitPlan::load(&path).unwrap();
        assert_eq!(plan, loaded);
    }

    proptest! {
        #[test]
        fn split_partitions_are_video_disjoint(
            n in 5usize..60,
            seed in any::<u64>(),
            test_pct in 20u32..50,
            val_pct in 0u32..40,
        ) {
            let catalog = synthetic(n, n);
            let plan = split_videos(&catalog, test_pct as f64 / 100.0, val_pct as f64 / 100.0, seed);
            prop_assume!(plan.is_ok());
            let plan = plan.unwrap();
            let test = plan.video_ids(Partition::Test);
            let train = plan.video_ids(Partition::Train);
            let val = plan.video_ids(Partition::Val);
            prop_assert!(test.is_disjoint(&train));
            prop_assert!(test.is_disjoint(&val));
            prop_assert!(train.is_disjoint(&val));
            // every assigned video exists in the input, each exactly once
            prop_assert_eq!(test.len() + train.len() + val.len(), 2 * n);
            for id in plan.assignments.keys() {
                prop_assert!(catalog.get(id).is_some());
            }
        }

        #[test]
        fn balance_makes_counts_equal(
            real in 1usize..40,
            fake in 1usize..40,
            seed in any::<u64>(),
        ) {
            let catalog = synthetic(real, fake);
            let balanced = balance_classes(&catalog, seed).unwrap();
            prop_assert_eq!(balanced.count(Label::Real), balanced.count(Label::Fake));
            prop_assert_eq!(balanced.count(Label::Real), real.min(fake));
        }
    }
}
