//! Hand presence by background segmentation, classifier backends, and the
//! K-of-N step-pass rule.

mod classifier;
mod decision;

pub use classifier::{
    downsample_features, BackendDescriptor, BaselineClassifier, GestureClassifier, ScriptedClassifier,
    FEATURE_SIDE,
};
pub(crate) use classifier::sigmoid;
pub use decision::{decide_step, ClassIndex, ClassScores, DecisionPolicy, StepVerdict, NUM_CLASSES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A timestamped RGB frame, row-major, 8 bits per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameSample {
    pub t_ms: u64,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl FrameSample {
    pub fn new(t_ms: u64, width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        let area = width as usize * height as usize;
        if area == 0 {
            return Err(Error::Input(format!("empty frame {width}x{height}")));
        }
        if pixels.len() != 3 * area {
            return Err(Error::Input(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                3 * area,
                pixels.len()
            )));
        }
        Ok(Self {
            t_ms,
            width,
            height,
            pixels,
        })
    }

    pub fn uniform(t_ms: u64, width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let area = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(3 * area).collect();
        Self::new(t_ms, width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Paints the part of `roi` that lies inside the frame.
    pub fn fill_rect(&mut self, roi: Roi, rgb: [u8; 3]) {
        let x_end = roi.x.saturating_add(roi.w).min(self.width);
        let y_end = roi.y.saturating_add(roi.h).min(self.height);
        for y in roi.y..y_end {
            for x in roi.x..x_end {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    pub fn lumas(&self) -> impl Iterator<Item = u8> + '_ {
        self.pixels.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]]))
    }
}

/// Rec. 601 luma, rounded half up: round(0.299 R + 0.587 G + 0.114 B).
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    let weighted = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
    ((weighted + 500) / 1000) as u8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub reference_luma: u8,
    pub tolerance: u8,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        Self {
            reference_luma: 240,
            tolerance: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Roi {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn fits(&self, width: u32, height: u32) -> bool {
        self.w > 0
            && self.h > 0
            && self.x as u64 + self.w as u64 <= width as u64
            && self.y as u64 + self.h as u64 <= height as u64
    }

    /// The centered rectangle covering `fraction` of each frame dimension.
    pub fn centered(width: u32, height: u32, fraction: f64) -> Self {
        let w = ((width as f64 * fraction).round() as u32).clamp(1, width.max(1));
        let h = ((height as f64 * fraction).round() as u32).clamp(1, height.max(1));
        Self::new((width - w) / 2, (height - h) / 2, w, h)
    }
}

/// Binary foreground mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Marks a pixel foreground iff its luma differs from the background
/// reference by more than the tolerance.
pub fn compute_foreground_mask(frame: &FrameSample, bg: &BackgroundModel) -> Mask {
    let bits = frame
        .lumas()
        .map(|l| l.abs_diff(bg.reference_luma) > bg.tolerance)
        .collect();
    Mask {
        width: frame.width,
        height: frame.height,
        bits,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Presence {
    pub present: bool,
    pub coverage: f64,
}

pub fn hand_presence(mask: &Mask, roi: Roi, min_coverage: f64) -> Result<Presence> {
    if !roi.fits(mask.width, mask.height) {
        return Err(Error::Input(format!(
            "roi {roi:?} outside {}x{} mask",
            mask.width, mask.height
        )));
    }
    let mut hits = 0u64;
    for y in roi.y..roi.y + roi.h {
        let row = y as usize * mask.width as usize;
        hits += mask.bits[row + roi.x as usize..row + (roi.x + roi.w) as usize]
            .iter()
            .filter(|&&b| b)
            .count() as u64;
    }
    let coverage = hits as f64 / roi.area() as f64;
    Ok(Presence {
        present: coverage >= min_coverage,
        coverage,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresenceConfig {
    pub background: BackgroundModel,
    /// ROI as a centered fraction of the frame; `None` uses the whole frame.
    pub roi_fraction: Option<f64>,
    pub min_coverage: f64,
}

impl Default for PresenceConfig {
    fn default() -> Self {
        Self {
            background: BackgroundModel::default(),
            roi_fraction: Some(0.6),
            min_coverage: 0.15,
        }
    }
}

impl PresenceConfig {
    pub fn roi_for(&self, width: u32, height: u32) -> Roi {
        match self.roi_fraction {
            Some(f) => Roi::centered(width, height, f),
            None => Roi::new(0, 0, width, height),
        }
    }

    pub fn detect(&self, frame: &FrameSample) -> Result<Presence> {
        let mask = compute_foreground_mask(frame, &self.background);
        hand_presence(&mask, self.roi_for(frame.width, frame.height), self.min_coverage)
    }
}

/// Admits at most one frame per `min_interval_ms` of frame time.
#[derive(Clone, Debug)]
pub struct FrameThrottle {
    min_interval_ms: u64,
    last: Option<u64>,
}

impl FrameThrottle {
    pub fn from_fps(fps: f64) -> Self {
        let min_interval_ms = if fps > 0.0 { (1000.0 / fps).floor() as u64 } else { 0 };
        Self {
            min_interval_ms,
            last: None,
        }
    }

    pub fn admit(&mut self, t_ms: u64) -> bool {
        match self.last {
            Some(last) if t_ms < last + self.min_interval_ms => false,
            _ => {
                self.last = Some(t_ms);
                true
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch_frame(bg: u8, patch: Roi, patch_luma: u8) -> FrameSample {
        let mut frame = FrameSample::uniform(0, 100, 80, [bg; 3]).unwrap();
        frame.fill_rect(patch, [patch_luma; 3]);
        frame
    }

    #[test]
    fn luma_of_grey_is_identity() {
        for v in 0..=255u8 {
            assert_eq!(luma([v, v, v]), v);
        }
    }

    #[test]
    fn zero_sized_frame_is_rejected() {
        assert!(FrameSample::new(0, 0, 10, vec![]).is_err());
        assert!(FrameSample::new(0, 2, 2, vec![0; 11]).is_err());
    }

    #[test]
    fn uniform_background_has_no_foreground() {
        let frame = FrameSample::uniform(0, 32, 24, [240; 3]).unwrap();
        let mask = compute_foreground_mask(&frame, &BackgroundModel::default());
        assert_eq!(mask.count(), 0);
    }

    #[test]
    fn dark_patch_is_exactly_foreground() {
        let patch = Roi::new(10, 20, 40, 40);
        let frame = patch_frame(240, patch, 30);
        let bg = BackgroundModel {
            reference_luma: 240,
            tolerance: 60,
        };
        let mask = compute_foreground_mask(&frame, &bg);
        assert_eq!(mask.count(), 1600);
        for y in 0..80 {
            for x in 0..100 {
                let inside = (10..50).contains(&x) && (20..60).contains(&y);
                assert_eq!(mask.get(x, y), inside);
            }
        }
    }

    #[test]
    fn saturated_tolerance_masks_nothing() {
        let frame = patch_frame(255, Roi::new(0, 0, 50, 50), 0);
        let bg = BackgroundModel {
            reference_luma: 0,
            tolerance: 255,
        };
        assert_eq!(compute_foreground_mask(&frame, &bg).count(), 0);
    }

    #[test]
    fn presence_examples() {
        let roi = Roi::new(0, 0, 10, 10);
        let empty = Mask::from_fn(20, 20, |_, _| false);
        let p = hand_presence(&empty, roi, 0.15).unwrap();
        assert_eq!((p.present, p.coverage), (false, 0.0));

        let full = Mask::from_fn(20, 20, |x, y| x < 10 && y < 10);
        let p = hand_presence(&full, roi, 0.15).unwrap();
        assert_eq!((p.present, p.coverage), (true, 1.0));

        let forty = Mask::from_fn(20, 20, |x, y| x < 4 && y < 10);
        let p = hand_presence(&forty, roi, 0.15).unwrap();
        assert!(p.present);
        assert!((p.coverage - 0.40).abs() < 1e-12);
    }

    #[test]
    fn roi_outside_mask_is_an_error() {
        let mask = Mask::from_fn(10, 10, |_, _| true);
        assert!(hand_presence(&mask, Roi::new(5, 5, 6, 5), 0.1).is_err());
        assert!(hand_presence(&mask, Roi::new(0, 0, 0, 5), 0.1).is_err());
    }

    #[test]
    fn throttle_admits_at_rate() {
        let mut throttle = FrameThrottle::from_fps(10.0);
        let admitted: Vec<u64> = (0..20u64).map(|i| i * 33).filter(|&t| throttle.admit(t)).collect();
        assert_eq!(admitted, vec![0, 132, 264, 396, 528]);
    }
}
