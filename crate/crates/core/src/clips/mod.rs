//! Clip data model, the on-disk corpus layout and clip-window sampling.
//!
//! A corpus is a manifest (see [`manifest`]) plus one directory of
//! `frame_00000.png`-style lossless frames per video.

mod manifest;
pub mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::{load_manifest, write_manifest, MANIFEST_HEADER};
pub use synth::{generate_synthetic_dataset, render_video, SyntheticConfig, VideoTrace};

/// Smallest accepted frame side in pixels.
pub const MIN_FRAME_SIDE: usize = 64;

/// One RGB frame, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width < MIN_FRAME_SIDE || height < MIN_FRAME_SIDE {
            return Err(Error::InvalidInput(format!(
                "frame {width}x{height} is smaller than {MIN_FRAME_SIDE}x{MIN_FRAME_SIDE}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Frame filled with a single colour.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, pixels)
    }

    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        debug_assert_eq!(pixels.len(), width * height * 3);
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })?
            .into_rgb8();
        let (w, h) = img.dimensions();
        Frame::new(w as usize, h as usize, img.into_raw())
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| match source {
            image::ImageError::IoError(e) => Error::io(path, e),
            source => Error::Image {
                path: path.to_owned(),
                source,
            },
        })
    }
}

/// An ordered stack of equally sized frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoClip {
    frames: Vec<Frame>,
    source_id: String,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, source_id: impl Into<String>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a clip needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let (w, h) = (frames[0].width, frames[0].height);
        if let Some(i) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(Error::Shape(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                frames[i].width, frames[i].height
            )));
        }
        Ok(Self {
            frames,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Ground-truth label. Fake is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Real = 0,
    Fake = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Fake => "fake",
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "0" => Ok(Label::Real),
            "1" => Ok(Label::Fake),
            other => Err(format!("unknown label {other:?} (expected 0 or 1)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    pub video_id: String,
    /// Directory holding the frames. Relative paths in a manifest are
    /// resolved against the manifest's directory when loaded.
    pub frame_dir: PathBuf,
    pub label: Label,
    pub domain: String,
    pub split: Split,
    pub frame_count: usize,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

impl ClipRecord {
    pub fn frame_path(&self, index: usize) -> PathBuf {
        self.frame_dir.join(frame_file_name(index))
    }

    /// Check that exactly `frame_count` frame files exist.
    pub fn verify_on_disk(&self) -> Result<()> {
        let entries = std::fs::read_dir(&self.frame_dir).map_err(|e| Error::io(&self.frame_dir, e))?;
        let mut count = 0;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&self.frame_dir, e))?;
            let name = entry.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("frame_") && name.ends_with(".png") {
                count += 1;
            }
        }
        if count != self.frame_count {
            return Err(Error::InvalidInput(format!(
                "{}: manifest says {} frames, found {count}",
                self.video_id, self.frame_count
            )));
        }
        Ok(())
    }
}

/// Load `clip_len` consecutive frames starting at `start`.
pub fn load_clip(record: &ClipRecord, clip_len: usize, start: usize) -> Result<VideoClip> {
    load_clip_strided(record, clip_len, start, 1)
}

/// Load frames `start, start + stride, ...` (`clip_len` of them).
pub fn load_clip_strided(record: &ClipRecord, clip_len: usize, start: usize, stride: usize) -> Result<VideoClip> {
    if stride == 0 || clip_len == 0 {
        return Err(Error::InvalidInput("clip_len and stride must be positive".into()));
    }
    let span = (clip_len - 1) * stride + 1;
    if start + span > record.frame_count {
        return Err(Error::InvalidInput(format!(
            "{}: window [{start}, {}) exceeds {} frames",
            record.video_id,
            start + span,
            record.frame_count
        )));
    }
    let frames = (0..clip_len)
        .map(|k| Frame::load(&record.frame_path(start + k * stride)))
        .collect::<Result<Vec<_>>>()?;
    VideoClip::new(frames, record.video_id.clone())
}

/// Starts of consecutive non-overlapping windows; a trailing partial window is dropped.
pub fn window_starts(frame_count: usize, clip_len: usize) -> Result<Vec<usize>> {
    if clip_len == 0 {
        return Err(Error::InvalidInput("clip_len must be positive".into()));
    }
    if frame_count < clip_len {
        return Err(Error::InvalidInput(format!(
            "video has {frame_count} frames, fewer than clip_len {clip_len}"
        )));
    }
    Ok((0..frame_count / clip_len).map(|w| w * clip_len).collect())
}

pub fn sample_clip_windows(record: &ClipRecord, clip_len: usize) -> Result<Vec<VideoClip>> {
    window_starts(record.frame_count, clip_len)?
        .into_iter()
        .map(|start| load_clip(record, clip_len, start))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_drop_partial_tail() {
        assert_eq!(window_starts(200, 96).unwrap(), vec![0, 96]);
        assert_eq!(window_starts(96, 96).unwrap(), vec![0]);
        assert!(window_starts(95, 96).is_err());
    }

    #[test]
    fn frame_rejects_small_or_misshapen() {
        assert!(Frame::filled(32, 64, [0, 0, 0]).is_err());
        assert!(Frame::new(64, 64, vec![0; 10]).is_err());
    }

    #[test]
    fn clip_requires_uniform_size_and_two_frames() {
        let a = Frame::filled(64, 64, [1, 2, 3]).unwrap();
        let b = Frame::filled(80, 64, [1, 2, 3]).unwrap();
        assert!(VideoClip::new(vec![a.clone()], "x").is_err());
        assert!(VideoClip::new(vec![a.clone(), b], "x").is_err());
        assert_eq!(VideoClip::new(vec![a.clone(), a], "x").unwrap().len(), 2);
    }

    #[test]
    fn label_and_split_parse() {
        assert_eq!("1".parse::<Label>().unwrap(), Label::Fake);
        assert!("2".parse::<Label>().is_err());
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
        assert!("dev".parse::<Split>().is_err());
    }
}
