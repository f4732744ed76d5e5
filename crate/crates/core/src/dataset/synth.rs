//! Generated gesture frames: each class is a distinct dark shape on the
//! bright background, with per-subject tone and small per-frame jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Background, ClipEntry, DatasetManifest, MemoryClips};
use crate::error::Result;
use crate::vision::{ClassIndex, FrameSample, Roi, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub subjects: usize,
    pub frames_per_class: usize,
    pub background_luma: u8,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 48,
            subjects: 10,
            frames_per_class: 200,
            background_luma: 240,
            seed: 7,
        }
    }
}

/// Skin tone of one generated subject.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubjectStyle {
    pub rgb: [u8; 3],
}

impl SubjectStyle {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let base = rng.random_range(60..=160u8);
        Self {
            rgb: [
                base.saturating_add(rng.random_range(10..=40)),
                base,
                base.saturating_sub(rng.random_range(0..=30)),
            ],
        }
    }
}

fn disk(frame: &mut FrameSample, cx: i32, cy: i32, r: i32, rgb: [u8; 3]) {
    for y in 0..frame.height() as i32 {
        for x in 0..frame.width() as i32 {
            if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                frame.set_pixel(x as u32, y as u32, rgb);
            }
        }
    }
}

fn band(frame: &mut FrameSample, dx: i32, anti: bool, half_width: i32, rgb: [u8; 3]) {
    let (w, h) = (frame.width() as i32, frame.height() as i32);
    for y in 0..h {
        for x in 0..w {
            // distance (in x units) from the frame diagonal
            let on_diag = if anti { w - 1 - y * w / h } else { y * w / h };
            if (x - dx - on_diag).abs() <= half_width {
                frame.set_pixel(x as u32, y as u32, rgb);
            }
        }
    }
}

fn rect(frame: &mut FrameSample, x: i32, y: i32, w: i32, h: i32, rgb: [u8; 3]) {
    let x0 = x.max(0);
    let y0 = y.max(0);
    let x1 = (x + w).min(frame.width() as i32);
    let y1 = (y + h).min(frame.height() as i32);
    if x1 > x0 && y1 > y0 {
        frame.fill_rect(Roi::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32), rgb);
    }
}

/// Renders one frame of `class` with random jitter and sensor noise.
pub fn gesture_frame(
    class: ClassIndex,
    style: SubjectStyle,
    spec: &SynthSpec,
    t_ms: u64,
    rng: &mut impl Rng,
) -> FrameSample {
    let (w, h) = (spec.width as i32, spec.height as i32);
    let bg = spec.background_luma;
    let mut frame = FrameSample::uniform(t_ms, spec.width, spec.height, [bg, bg, bg]).expect("non-empty spec");
    let jx = rng.random_range(-3..=3);
    let jy = rng.random_range(-3..=3);
    let c = style.rgb;
    match class.get() {
        0 => {}
        1 => {
            rect(&mut frame, 2 + jx, h - h / 3 + jy, w / 5, h / 4, c);
            rect(&mut frame, w - 2 - w / 5 + jx, h - h / 3 + jy, w / 5, h / 4, c);
        }
        2 => rect(&mut frame, w / 4 + jx, h / 4 + jy, w / 2, h / 2, c),
        3 => rect(&mut frame, 4 + jx, 4 + jy, w - 8, h / 4, c),
        4 => rect(&mut frame, 4 + jx, 4 + jy, w / 5, h - 8, c),
        5 => rect(&mut frame, 4 + jx, h - 4 - h / 4 + jy, w - 8, h / 4, c),
        6 => disk(&mut frame, w / 2 + jx, h / 2 + jy, h / 6, c),
        7 => band(&mut frame, jx, false, w / 12, c),
        _ => band(&mut frame, jx, true, w / 12, c),
    }
    for px in 0..(w * h) as u32 {
        let (x, y) = (px % spec.width, px / spec.width);
        let [r, g, b] = frame.pixel(x, y);
        let n: i16 = rng.random_range(-6..=6);
        let add = |v: u8| (v as i16 + n).clamp(0, 255) as u8;
        frame.set_pixel(x, y, [add(r), add(g), add(b)]);
    }
    frame
}

/// One clip per (subject, class), `frames_per_class / subjects` frames each.
pub fn synthetic_dataset(spec: &SynthSpec) -> Result<(DatasetManifest, MemoryClips)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per_clip = spec.frames_per_class.div_ceil(spec.subjects.max(1));
    let mut clips = Vec::new();
    let mut store = MemoryClips::default();
    for subject in 0..spec.subjects {
        let style = SubjectStyle::sample(&mut rng);
        let background = if subject % 2 == 0 { Background::Green } else { Background::Wooden };
        for class in ClassIndex::all() {
            let path = format!("subject{subject:02}/{}", class.name());
            let frames = (0..per_clip)
                .map(|i| gesture_frame(class, style, spec, i as u64 * 40, &mut rng))
                .collect();
            store.insert(path.clone(), frames);
            clips.push(ClipEntry {
                path: path.into(),
                subject_id: format!("subject{subject:02}"),
                background,
                label: class,
                frame_count: per_clip,
            });
        }
    }
    debug_assert_eq!(clips.len(), spec.subjects * NUM_CLASSES);
    Ok((DatasetManifest::new(clips, "")?, store))
}
