//! In-memory view of one dataset partition, loaded from the index file and
//! the stored face crops.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array4, Axis};

use crate::catalog::{Label, Partition};
use crate::facepipe::dataset::{load_index, load_sample, IndexRow};
use crate::facepipe::FacepipeError;

/// One partition's samples as a normalized NCHW tensor plus provenance.
pub struct LoadedSet {
    pub x: Array4<f32>,
    pub labels: Vec<Label>,
    pub video_ids: Vec<String>,
    pub sample_paths: Vec<String>,
}

impl LoadedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn video_id_set(&self) -> BTreeSet<String> {
        self.video_ids.iter().cloned().collect()
    }

    pub fn batch(&self, indices: &[usize]) -> (Array4<f32>, Vec<Label>) {
        let views: Vec<_> = indices.iter().map(|&i| self.x.index_axis(Axis(0), i)).collect();
        let x = ndarray::stack(Axis(0), &views).expect("consistent sample shapes");
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (x, labels)
    }

    /// Builds a set directly from tensors; used by synthetic test data.
    pub fn from_parts(x: Array4<f32>, labels: Vec<Label>, video_ids: Vec<String>) -> LoadedSet {
        assert_eq!(x.dim().0, labels.len());
        assert_eq!(labels.len(), video_ids.len());
        let sample_paths = video_ids.iter().map(|v| format!("mem/{v}")).collect();
        LoadedSet {
            x,
            labels,
            video_ids,
            sample_paths,
        }
    }
}

/// Loads every sample of `partition` from a dataset directory.
pub fn load_partition(
    root: &Path,
    partition: Partition,
    means: [f32; 3],
    stds: [f32; 3],
) -> Result<LoadedSet, FacepipeError> {
    let index = load_index(&crate::facepipe::dataset::DatasetPaths::index(root))?;
    let rows: Vec<IndexRow> = index.into_iter().filter(|r| r.partition == partition).collect();
    load_rows(root, &rows, means, stds)
}

pub fn load_rows(
    root: &Path,
    rows: &[IndexRow],
    means: [f32; 3],
    stds: [f32; 3],
) -> Result<LoadedSet, FacepipeError> {
    let n = rows.len();
    let mut x = Array4::<f32>::zeros((n, 3, 224, 224));
    let mut labels = Vec::with_capacity(n);
    let mut video_ids = Vec::with_capacity(n);
    let mut sample_paths = Vec::with_capacity(n);
    for (i, row) in rows.iter().enumerate() {
        let sample = load_sample(root, row, means, stds)?;
        x.index_axis_mut(Axis(0), i).assign(&sample.pixels);
        labels.push(row.label);
        video_ids.push(row.video_id.clone());
        sample_paths.push(row.sample_path.clone());
    }
    Ok(LoadedSet {
        x,
        labels,
        video_ids,
        sample_paths,
    })
}
