//! Pluggable face-landmark detection.
//!
//! The pipeline only needs `image -> list of (confidence, landmarks)`; a
//! production landmark toolkit plugs in through [`FaceDetector`]. The
//! built-in [`LumaBlobDetector`] locates a single bright face-like region
//! and is what the bundled synthetic fixture is built around.

use image::RgbImage;
use thiserror::Error;

/// One candidate face as reported by a detector backend.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDetection {
    /// Detector-reported confidence in [0,1].
    pub confidence: f32,
    /// At least 4 (x, y) landmark points in pixel coordinates.
    pub landmarks: Vec<(f32, f32)>,
}

#[derive(Debug, Error)]
#[error("detector backend failure: {0}")]
pub struct DetectorFailure(pub String);

pub trait FaceDetector: Send + Sync {
    fn detect(&self, frame: &RgbImage) -> Result<Vec<RawDetection>, DetectorFailure>;
}

/// Finds the bounding box of high-luminance pixels and scores it by the
/// luminance contrast between the box interior and the rest of the frame.
///
/// Deterministic, dependency-free, and good enough for synthetic frames
/// whose "face" is a bright region on a dark background.
#[derive(Debug, Clone, Default)]
pub struct LumaBlobDetector;

impl LumaBlobDetector {
    const MIN_AREA: u32 = 16;

    fn luma(p: &image::Rgb<u8>) -> f32 {
        0.299 * p.0[0] as f32 + 0.587 * p.0[1] as f32 + 0.114 * p.0[2] as f32
    }
}

impl FaceDetector for LumaBlobDetector {
    fn detect(&self, frame: &RgbImage) -> Result<Vec<RawDetection>, DetectorFailure> {
        let (w, h) = frame.dimensions();
        if w == 0 || h == 0 {
            return Err(DetectorFailure("empty frame".into()));
        }
        let mut lo = f32::MAX;
        let mut hi = f32::MIN;
        for p in frame.pixels() {
            let l = Self::luma(p);
            lo = lo.min(l);
            hi = hi.max(l);
        }
        if hi - lo < 32.0 {
            // flat frame, nothing face-like
            return Ok(Vec::new());
        }
        let thr = (lo + hi) / 2.0;

        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for (x, y, p) in frame.enumerate_pixels() {
            if Self::luma(p) > thr {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
        if x0 == u32::MAX || (x1 - x0 + 1) * (y1 - y0 + 1) < Self::MIN_AREA {
            return Ok(Vec::new());
        }

        let mut sum_in = 0.0f64;
        let mut n_in = 0u64;
        let mut sum_out = 0.0f64;
        let mut n_out = 0u64;
        for (x, y, p) in frame.enumerate_pixels() {
            let l = Self::luma(p) as f64;
            if x >= x0 && x <= x1 && y >= y0 && y <= y1 {
                sum_in += l;
                n_in += 1;
            } else {
                sum_out += l;
                n_out += 1;
            }
        }
        let mean_in = sum_in / n_in.max(1) as f64;
        let mean_out = if n_out > 0 { sum_out / n_out as f64 } else { 0.0 };
        let confidence = ((mean_in - mean_out) / 255.0).clamp(0.0, 1.0) as f32;

        let (fx0, fy0, fx1, fy1) = (x0 as f32, y0 as f32, x1 as f32, y1 as f32);
        Ok(vec![RawDetection {
            confidence,
            landmarks: vec![(fx0, fy0), (fx1, fy0), (fx0, fy1), (fx1, fy1)],
        }])
    }
}

/// Test/fixture detector returning a fixed detection list for every frame.
#[derive(Debug, Clone, Default)]
pub struct StubDetector {
    pub detections: Vec<RawDetection>,
}

impl StubDetector {
    pub fn with(detections: Vec<RawDetection>) -> StubDetector {
        StubDetector { detections }
    }
}

impl FaceDetector for StubDetector {
    fn detect(&self, _frame: &RgbImage) -> Result<Vec<RawDetection>, DetectorFailure> {
        Ok(self.detections.clone())
    }
}

/// Test detector whose backend always errors.
#[derive(Debug, Clone, Default)]
pub struct FailingDetector;

impl FaceDetector for FailingDetector {
    fn detect(&self, _frame: &RgbImage) -> Result<Vec<RawDetection>, DetectorFailure> {
        Err(DetectorFailure("injected backend failure".into()))
    }
}

/// Builds the detector named in a run config.
pub fn detector_by_name(name: &str) -> Option<Box<dyn FaceDetector>> {
    match name {
        "luma" => Some(Box::new(LumaBlobDetector)),
        _ => None,
    }
}
