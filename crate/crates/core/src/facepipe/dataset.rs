//! Dataset builder: walks the split plan, extracts frames, gates them
//! through the detector and writes face crops plus a sorted index file.
//!
//! A "video" on disk is a directory of frame images read in filename order;
//! that is the decodable format this crate ships. Container formats would
//! need an external decoder behind [`extract_frames`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::catalog::{Catalog, Label, Partition, SplitPlan, VideoRecord};
use crate::config::PipelineConfig;
use crate::facepipe::detector::FaceDetector;
use crate::facepipe::{
    crop_face, detect_face, resize_bilinear, FaceSample, FacepipeError, FrameImage, FACE_SIZE,
};

/// Iterator over the decoded frames of one video, in temporal order.
pub struct FrameIter {
    video_id: String,
    files: Vec<PathBuf>,
    pos: usize,
}

impl Iterator for FrameIter {
    type Item = Result<FrameImage, FacepipeError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.files.get(self.pos)?.clone();
        let frame_index = self.pos as u32;
        self.pos += 1;
        let item = image::open(&path)
            .map(|img| FrameImage {
                video_id: self.video_id.clone(),
                frame_index,
                pixels: img.to_rgb8(),
            })
            .map_err(|_| FacepipeError::UndecodableVideo(path));
        Some(item)
    }
}

const FRAME_EXTS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

/// Opens a video for frame extraction. Frames come back with strictly
/// increasing `frame_index`; the per-video qualifying cap is enforced
/// downstream by the dataset builder.
pub fn extract_frames(video: &VideoRecord) -> Result<FrameIter, FacepipeError> {
    let dir = &video.path;
    if !dir.is_dir() {
        return Err(FacepipeError::UndecodableVideo(dir.clone()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| FacepipeError::Io(dir.clone(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| FRAME_EXTS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(FacepipeError::ZeroFrames(dir.clone()));
    }
    Ok(FrameIter {
        video_id: video.video_id.clone(),
        files,
        pos: 0,
    })
}

/// One row of the dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow {
    pub sample_path: String,
    pub video_id: String,
    pub frame_index: u32,
    pub label: Label,
    pub partition: Partition,
    pub confidence: f32,
}

/// Well-known file locations inside a dataset root.
pub struct DatasetPaths;

impl DatasetPaths {
    pub fn index(root: &Path) -> PathBuf {
        root.join("index.csv")
    }

    pub fn sample_rel_path(partition: Partition, label: Label, video_id: &str, frame_index: u32) -> String {
        format!("{partition}/{label}/{video_id}_{frame_index:06}.png")
    }
}

/// Outcome of a dataset build: the written index plus per-video trouble.
#[derive(Debug, Default)]
pub struct BuildReport {
    pub rows: Vec<IndexRow>,
    /// Videos where no frame passed the detection gate.
    pub faceless: Vec<String>,
    /// Videos that failed outright, with the failure message.
    pub failures: Vec<(String, String)>,
}

impl BuildReport {
    pub fn samples_per_video(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for row in &self.rows {
            *m.entry(row.video_id.as_str()).or_insert(0) += 1;
        }
        m
    }
}

fn to_u8_image(px: &ndarray::Array3<f32>) -> RgbImage {
    let (h, w) = (px.shape()[1] as u32, px.shape()[2] as u32);
    RgbImage::from_fn(w, h, |x, y| {
        let v = |c: usize| px[(c, y as usize, x as usize)].round().clamp(0.0, 255.0) as u8;
        image::Rgb([v(0), v(1), v(2)])
    })
}

fn process_video(
    record: &VideoRecord,
    partition: Partition,
    cfg: &PipelineConfig,
    detector: &dyn FaceDetector,
    root: &Path,
) -> Result<Vec<IndexRow>, FacepipeError> {
    let mut rows = Vec::new();
    for frame in extract_frames(record)? {
        if rows.len() as u32 >= cfg.max_qualifying {
            break;
        }
        let frame = frame?;
        let Some(detection) = detect_face(&frame, cfg.threshold, detector)? else {
            continue;
        };
        let crop = crop_face(&frame, &detection, cfg.margin_fraction)?;
        let resized = resize_bilinear(&crop, FACE_SIZE, FACE_SIZE);

        let rel = DatasetPaths::sample_rel_path(
            partition,
            record.label,
            &record.video_id,
            frame.frame_index,
        );
        let out_path = root.join(&rel);
        fs::create_dir_all(out_path.parent().unwrap())
            .map_err(|e| FacepipeError::Io(out_path.clone(), e))?;
        to_u8_image(&resized)
            .save(&out_path)
            .map_err(|e| FacepipeError::DegenerateInput(format!("png encode: {e}")))?;

        rows.push(IndexRow {
            sample_path: rel,
            video_id: record.video_id.clone(),
            frame_index: frame.frame_index,
            label: record.label,
            partition,
            confidence: detection.confidence,
        });
    }
    Ok(rows)
}

/// Builds the on-disk face dataset for every video in the plan.
///
/// Layout: `<root>/<partition>/<label>/<video_id>_<frame_index>.png` plus
/// `<root>/index.csv` sorted by (video_id, frame_index). Per-video failures
/// go into the report; only an index write failure is fatal. Re-running with
/// identical inputs reproduces the index byte for byte.
pub fn build_face_dataset(
    catalog: &Catalog,
    plan: &SplitPlan,
    cfg: &PipelineConfig,
    detector: &dyn FaceDetector,
    root: &Path,
) -> Result<BuildReport, FacepipeError> {
    fs::create_dir_all(root).map_err(|e| FacepipeError::Io(root.into(), e))?;
    // drop stale samples from previous runs so reruns are exact overwrites
    for p in Partition::ALL {
        let dir = root.join(p.as_str());
        if dir.is_dir() {
            fs::remove_dir_all(&dir).map_err(|e| FacepipeError::Io(dir.clone(), e))?;
        }
    }

    let mut videos: Vec<(&VideoRecord, Partition)> = plan
        .assignments
        .iter()
        .filter_map(|(id, p)| catalog.get(id).map(|r| (r, *p)))
        .collect();
    videos.sort_by(|a, b| a.0.video_id.cmp(&b.0.video_id));

    let mut report = BuildReport::default();
    for (record, partition) in videos {
        match process_video(record, partition, cfg, detector, root) {
            Ok(rows) if rows.is_empty() => report.faceless.push(record.video_id.clone()),
            Ok(mut rows) => report.rows.append(&mut rows),
            Err(e) => report.failures.push((record.video_id.clone(), e.to_string())),
        }
    }
    report
        .rows
        .sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));

    write_index(&DatasetPaths::index(root), &report.rows)?;
    Ok(report)
}

pub fn write_index(path: &Path, rows: &[IndexRow]) -> Result<(), FacepipeError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| FacepipeError::IndexWriteFailure(e.to_string()))?;
    w.write_record([
        "sample_path",
        "video_id",
        "frame_index",
        "label",
        "partition",
        "confidence",
    ])
    .map_err(|e| FacepipeError::IndexWriteFailure(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.sample_path.as_str(),
            r.video_id.as_str(),
            &r.frame_index.to_string(),
            r.label.as_str(),
            r.partition.as_str(),
            &format!("{:.6}", r.confidence),
        ])
        .map_err(|e| FacepipeError::IndexWriteFailure(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| FacepipeError::IndexWriteFailure(e.to_string()))
}

pub fn load_index(path: &Path) -> Result<Vec<IndexRow>, FacepipeError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| FacepipeError::IndexWriteFailure(format!("read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| FacepipeError::IndexWriteFailure(e.to_string()))?;
        let get = |i: usize| rec.get(i).unwrap_or("").to_string();
        rows.push(IndexRow {
            sample_path: get(0),
            video_id: get(1),
            frame_index: get(2).parse().map_err(|_| {
                FacepipeError::IndexWriteFailure(format!("bad frame_index {:?}", get(2)))
            })?,
            label: Label::parse(&get(3)).ok_or_else(|| {
                FacepipeError::IndexWriteFailure(format!("bad label {:?}", get(3)))
            })?,
            partition: Partition::parse(&get(4)).ok_or_else(|| {
                FacepipeError::IndexWriteFailure(format!("bad partition {:?}", get(4)))
            })?,
            confidence: get(5).parse().map_err(|_| {
                FacepipeError::IndexWriteFailure(format!("bad confidence {:?}", get(5)))
            })?,
        });
    }
    Ok(rows)
}

/// Loads one stored face sample back as a normalized tensor.
pub fn load_sample(
    root: &Path,
    row: &IndexRow,
    means: [f32; 3],
    stds: [f32; 3],
) -> Result<FaceSample, FacepipeError> {
    let path = root.join(&row.sample_path);
    let img = image::open(&path)
        .map_err(|_| FacepipeError::UndecodableVideo(path.clone()))?
        .to_rgb8();
    if img.dimensions() != (FACE_SIZE, FACE_SIZE) {
        return Err(FacepipeError::DegenerateInput(format!(
            "sample {} is not {FACE_SIZE}x{FACE_SIZE}",
            row.sample_path
        )));
    }
    Ok(FaceSample {
        video_id: row.video_id.clone(),
        frame_index: row.frame_index,
        label: row.label,
        confidence: row.confidence,
        pixels: crate::facepipe::normalize_u8(&img, means, stds),
    })
}
