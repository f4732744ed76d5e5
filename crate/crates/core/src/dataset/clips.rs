use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::ImageFormat;

use super::{ClipEntry, DatasetManifest};
use crate::error::{Error, Result};
use crate::vision::FrameSample;

/// Supplies the frames of a clip, every `stride`-th one.
pub trait FrameSource: Sync {
    fn frames(&self, manifest: &DatasetManifest, clip: &ClipEntry, stride: usize) -> Result<Vec<FrameSample>>;
}

/// Reads clips from disk: a directory of numbered image files (PNG, JPEG,
/// PPM) or a `.mjpeg`/`.mjpg` file of concatenated JPEG frames.
#[derive(Clone, Copy, Debug, Default)]
pub struct FileClipDecoder {
    /// Timestamp spacing assigned to consecutive source frames.
    pub frame_interval_ms: u64,
}

impl FileClipDecoder {
    pub fn new() -> Self {
        Self { frame_interval_ms: 40 }
    }
}

fn numeric_key(path: &Path) -> (u64, String) {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
    (digits.parse().unwrap_or(u64::MAX), stem.to_string())
}

fn to_frame(img: image::DynamicImage, t_ms: u64) -> Result<FrameSample> {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    FrameSample::new(t_ms, w, h, rgb.into_raw())
}

/// Splits a motion-JPEG byte stream on SOI/EOI markers.
pub fn decode_mjpeg(bytes: &[u8], stride: usize, frame_interval_ms: u64) -> Result<Vec<FrameSample>> {
    let stride = stride.max(1);
    let mut frames = Vec::new();
    let mut pos = 0;
    let mut index = 0u64;
    while let Some(start) = find(&bytes[pos..], &[0xFF, 0xD8]).map(|i| pos + i) {
        let Some(end) = find(&bytes[start + 2..], &[0xFF, 0xD9]).map(|i| start + 2 + i + 2) else {
            return Err(Error::Decode(format!("truncated JPEG frame at byte {start}")));
        };
        if index % stride as u64 == 0 {
            let img = image::load_from_memory_with_format(&bytes[start..end], ImageFormat::Jpeg)
                .map_err(|e| Error::Decode(format!("frame {index}: {e}")))?;
            frames.push(to_frame(img, index * frame_interval_ms)?);
        }
        index += 1;
        pos = end;
    }
    Ok(frames)
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

impl FrameSource for FileClipDecoder {
    fn frames(&self, manifest: &DatasetManifest, clip: &ClipEntry, stride: usize) -> Result<Vec<FrameSample>> {
        let path = manifest.resolve(clip);
        let stride = stride.max(1);
        let decode_err = |e: &dyn std::fmt::Display| Error::Load {
            path: path.clone(),
            message: e.to_string(),
        };
        if path.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&path)
                .map_err(|e| decode_err(&e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| ImageFormat::from_path(p).is_ok())
                .collect();
            files.sort_by_key(|p| numeric_key(p));
            if files.len() != clip.frame_count {
                log::warn!(
                    "{}: manifest says {} frames, found {}",
                    path.display(),
                    clip.frame_count,
                    files.len()
                );
            }
            files
                .iter()
                .enumerate()
                .step_by(stride)
                .map(|(i, f)| {
                    let img = image::open(f).map_err(|e| decode_err(&e))?;
                    to_frame(img, i as u64 * self.frame_interval_ms)
                })
                .collect()
        } else {
            let bytes = fs::read(&path).map_err(|e| decode_err(&e))?;
            decode_mjpeg(&bytes, stride, self.frame_interval_ms).map_err(|e| decode_err(&e))
        }
    }
}

/// In-memory clips keyed by manifest path; used for generated datasets.
#[derive(Clone, Debug, Default)]
pub struct MemoryClips {
    clips: HashMap<PathBuf, Vec<FrameSample>>,
}

impl MemoryClips {
    pub fn insert(&mut self, path: impl Into<PathBuf>, frames: Vec<FrameSample>) {
        self.clips.insert(path.into(), frames);
    }

    pub fn get(&self, path: &Path) -> Option<&[FrameSample]> {
        self.clips.get(path).map(Vec::as_slice)
    }

    /// Writes every clip as a directory of numbered PNG files under `dir`.
    pub fn write_png_dirs(&self, dir: &Path) -> Result<()> {
        for (path, frames) in &self.clips {
            let clip_dir = dir.join(path);
            fs::create_dir_all(&clip_dir)?;
            for (i, frame) in frames.iter().enumerate() {
                let img = image::RgbImage::from_raw(frame.width(), frame.height(), frame.pixels().to_vec())
                    .expect("frame buffer matches dimensions");
                img.save(clip_dir.join(format!("{i:05}.png")))
                    .map_err(|e| Error::Decode(e.to_string()))?;
            }
        }
        Ok(())
    }
}

impl FrameSource for MemoryClips {
    fn frames(&self, _manifest: &DatasetManifest, clip: &ClipEntry, stride: usize) -> Result<Vec<FrameSample>> {
        self.clips
            .get(&clip.path)
            .map(|frames| frames.iter().step_by(stride.max(1)).cloned().collect())
            .ok_or_else(|| Error::Load {
                path: clip.path.clone(),
                message: "clip not in memory store".into(),
            })
    }
}
