//! Synthetic end-to-end fixture: tiny generated "videos" (frame folders)
//! with bright face-like regions the luminance detector finds at high
//! confidence. Keeps the whole pipeline runnable without any licensed
//! corpus.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::Label;

pub struct FixtureSpec {
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub frame_size: u32,
    pub face_size: u32,
    /// Extra videos with no face, to exercise the faceless path.
    pub faceless_videos: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            videos_per_class: 4,
            frames_per_video: 6,
            frame_size: 128,
            face_size: 56,
            faceless_videos: 0,
        }
    }
}

fn face_color(label: Label, rng: &mut ChaCha8Rng) -> Rgb<u8> {
    // real and fake faces share luminance (so detection treats them the
    // same) but differ strongly in chroma (so a classifier can learn them)
    let jitter = rng.random_range(-6i16..=6);
    let v = |base: i16| (base + jitter).clamp(0, 255) as u8;
    match label {
        Label::Real => Rgb([v(235), v(235), v(235)]),
        Label::Fake => Rgb([v(255), v(250), v(185)]),
    }
}

fn write_video(
    dir: &Path,
    label: Option<Label>,
    frames: usize,
    frame_size: u32,
    face_size: u32,
    rng: &mut ChaCha8Rng,
) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let max_pos = frame_size - face_size - 8;
    let fx = rng.random_range(4..=max_pos);
    let fy = rng.random_range(4..=max_pos);
    for f in 0..frames {
        let mut img = RgbImage::from_fn(frame_size, frame_size, |_, _| {
            let v = rng.random_range(0u8..24);
            Rgb([v, v, v])
        });
        if let Some(label) = label {
            let color = face_color(label, rng);
            // the face drifts a little between frames, staying in bounds
            let dx = (f as i64 % 3) as u32;
            let dy = (f as i64 % 2) as u32;
            for y in fy + dy..fy + dy + face_size {
                for x in fx + dx..fx + dx + face_size {
                    img.put_pixel(x, y, color);
                }
            }
        }
        img.save(dir.join(format!("frame_{f:04}.png")))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(())
}

/// Generates the fixture tree under `root` and returns the manifest path.
///
/// Layout: `root/videos/<video_id>/frame_NNNN.png` plus `root/manifest.csv`.
pub fn generate_fixture(root: &Path, seed: u64, spec: &FixtureSpec) -> std::io::Result<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos_dir = root.join("videos");
    fs::create_dir_all(&videos_dir)?;

    let mut manifest = String::from("video_id,label,path\n");
    for label in [Label::Real, Label::Fake] {
        for i in 0..spec.videos_per_class {
            let id = format!("{}_{i:02}", label.as_str());
            let dir = videos_dir.join(&id);
            write_video(
                &dir,
                Some(label),
                spec.frames_per_video,
                spec.frame_size,
                spec.face_size,
                &mut rng,
            )?;
            manifest.push_str(&format!("{id},{label},{}\n", dir.display()));
        }
    }
    for i in 0..spec.faceless_videos {
        let id = format!("faceless_{i:02}");
        let dir = videos_dir.join(&id);
        write_video(
            &dir,
            None,
            spec.frames_per_video,
            spec.frame_size,
            spec.face_size,
            &mut rng,
        )?;
        manifest.push_str(&format!("{id},real,{}\n", dir.display()));
    }

    let manifest_path = root.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}
