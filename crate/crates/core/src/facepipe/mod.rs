//! Video-to-face-dataset pipeline: frame extraction with a per-video cap,
//! confidence-gated face detection, landmark-bounded cropping, resizing and
//! normalization.

pub mod detector;

pub mod dataset;

pub use dataset::{
    build_face_dataset, load_index, write_index, BuildReport, DatasetPaths, IndexRow,
};

use std::path::PathBuf;

use image::RgbImage;
use ndarray::Array3;
use thiserror::Error;

use crate::catalog::Label;
use detector::{DetectorFailure, FaceDetector, RawDetection};

/// Target spatial size of every emitted face sample.
pub const FACE_SIZE: u32 = 224;

/// One decoded video frame, RGB, 8-bit channels.
#[derive(Debug, Clone)]
pub struct FrameImage {
    pub video_id: String,
    pub frame_index: u32,
    pub pixels: RgbImage,
}

/// Axis-aligned box in pixel coordinates, `min` inclusive, `max` exclusive
/// only after rasterization; stored as floats straight from the landmarks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
}

impl BBox {
    pub fn area(&self) -> f32 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// A face accepted by the confidence gate: the winning detection plus the
/// tight landmark hull clipped to the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDetection {
    pub confidence: f32,
    pub landmarks: Vec<(f32, f32)>,
    pub bbox: BBox,
}

/// One preprocessed face: 3x224x224 normalized channels plus provenance.
#[derive(Debug, Clone)]
pub struct FaceSample {
    pub video_id: String,
    pub frame_index: u32,
    pub label: Label,
    pub confidence: f32,
    pub pixels: Array3<f32>,
}

#[derive(Debug, Error)]
pub enum FacepipeError {
    #[error("cannot decode video at {0}")]
    UndecodableVideo(PathBuf),
    #[error("video at {0} has zero frames")]
    ZeroFrames(PathBuf),
    #[error(transparent)]
    DetectorFailure(#[from] DetectorFailure),
    #[error("bbox collapsed to zero area after clipping")]
    DegenerateBox,
    #[error("degenerate input image ({0})")]
    DegenerateInput(String),
    #[error("failed to write dataset index: {0}")]
    IndexWriteFailure(String),
    #[error("i/o error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
}

fn hull_bbox(landmarks: &[(f32, f32)], width: u32, height: u32) -> Option<BBox> {
    let mut b = BBox {
        x_min: f32::MAX,
        y_min: f32::MAX,
        x_max: f32::MIN,
        y_max: f32::MIN,
    };
    for &(x, y) in landmarks {
        b.x_min = b.x_min.min(x);
        b.y_min = b.y_min.min(y);
        b.x_max = b.x_max.max(x);
        b.y_max = b.y_max.max(y);
    }
    b.x_min = b.x_min.clamp(0.0, width as f32);
    b.x_max = b.x_max.clamp(0.0, width as f32);
    b.y_min = b.y_min.clamp(0.0, height as f32);
    b.y_max = b.y_max.clamp(0.0, height as f32);
    (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
}

/// Runs the configured detector on one frame and applies the confidence
/// gate. Returns `None` when no candidate reaches `threshold` (the frame is
/// rejected, which is not an error). Ties on confidence go to the larger
/// bbox area.
pub fn detect_face(
    frame: &FrameImage,
    threshold: f32,
    detector: &dyn FaceDetector,
) -> Result<Option<FaceDetection>, FacepipeError> {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold in (0,1]");
    let (w, h) = frame.pixels.dimensions();
    let candidates = detector.detect(&frame.pixels)?;

    let mut best: Option<FaceDetection> = None;
    for RawDetection {
        confidence,
        landmarks,
    } in candidates
    {
        if confidence < threshold || landmarks.len() < 4 {
            continue;
        }
        let Some(bbox) = hull_bbox(&landmarks, w, h) else {
            continue;
        };
        let det = FaceDetection {
            confidence,
            landmarks,
            bbox,
        };
        best = match best {
            None => Some(det),
            Some(cur) => {
                let better = det.confidence > cur.confidence
                    || (det.confidence == cur.confidence && det.bbox.area() > cur.bbox.area());
                Some(if better { det } else { cur })
            }
        };
    }
    Ok(best)
}

/// Cuts the detection bbox out of the frame, expanded by `margin_fraction`
/// of the bbox side on each edge and clipped to the frame. The returned crop
/// always contains the full landmark hull.
pub fn crop_face(
    frame: &FrameImage,
    detection: &FaceDetection,
    margin_fraction: f32,
) -> Result<RgbImage, FacepipeError> {
    assert!(margin_fraction >= 0.0, "margin_fraction must be >= 0");
    let (w, h) = frame.pixels.dimensions();
    let b = &detection.bbox;
    let mx = margin_fraction * (b.x_max - b.x_min);
    let my = margin_fraction * (b.y_max - b.y_min);

    let x0 = (b.x_min - mx).floor().clamp(0.0, w as f32) as u32;
    let y0 = (b.y_min - my).floor().clamp(0.0, h as f32) as u32;
    let x1 = (b.x_max + mx).ceil().clamp(0.0, w as f32) as u32;
    let y1 = (b.y_max + my).ceil().clamp(0.0, h as f32) as u32;
    if x1 <= x0 || y1 <= y0 {
        return Err(FacepipeError::DegenerateBox);
    }

    let mut out = RgbImage::new(x1 - x0, y1 - y0);
    for y in y0..y1 {
        for x in x0..x1 {
            out.put_pixel(x - x0, y - y0, *frame.pixels.get_pixel(x, y));
        }
    }
    Ok(out)
}

/// Bilinear resize to `(w, h)` with center-aligned sampling; output values
/// stay in the input's 0..=255 range. Same-size input is the identity.
pub fn resize_bilinear(src: &RgbImage, w: u32, h: u32) -> Array3<f32> {
    let (sw, sh) = src.dimensions();
    let mut out = Array3::<f32>::zeros((3, h as usize, w as usize));
    let sx = sw as f32 / w as f32;
    let sy = sh as f32 / h as f32;
    for oy in 0..h {
        let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f32);
        let y0 = fy.floor() as u32;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f32;
        for ox in 0..w {
            let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f32);
            let x0 = fx.floor() as u32;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f32;
            for c in 0..3 {
                let p = |x: u32, y: u32| src.get_pixel(x, y).0[c] as f32;
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bot = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                out[(c, oy as usize, ox as usize)] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    out
}

/// Bilinear resize to the target size, scale to [0,1], then standardize per
/// channel: `(x - mean) / std`. Output shape is exactly (3, 224, 224).
pub fn normalize_resize(
    crop: &RgbImage,
    target: (u32, u32),
    channel_means: [f32; 3],
    channel_stds: [f32; 3],
) -> Result<Array3<f32>, FacepipeError> {
    let (w, h) = crop.dimensions();
    if w == 0 || h == 0 {
        return Err(FacepipeError::DegenerateInput("empty crop".into()));
    }
    if channel_stds.iter().any(|&s| s <= 0.0) {
        return Err(FacepipeError::DegenerateInput(
            "channel stds must be strictly positive".into(),
        ));
    }
    let mut px = resize_bilinear(crop, target.0, target.1);
    for c in 0..3 {
        let mean = channel_means[c];
        let std = channel_stds[c];
        px.index_axis_mut(ndarray::Axis(0), c)
            .mapv_inplace(|v| (v / 255.0 - mean) / std);
    }
    Ok(px)
}

/// Standardizes an already-resized u8 image; used when samples are loaded
/// back from the on-disk dataset.
pub fn normalize_u8(img: &RgbImage, means: [f32; 3], stds: [f32; 3]) -> Array3<f32> {
    let (w, h) = img.dimensions();
    let mut out = Array3::<f32>::zeros((3, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out[(c, y as usize, x as usize)] = (p.0[c] as f32 / 255.0 - means[c]) / stds[c];
        }
    }
    out
}
