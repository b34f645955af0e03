//! Temporal-preserved augmentation.
//!
//! Transforms come in two groups. Clip-level transforms (crop, Gaussian blur,
//! horizontal and vertical flip) are drawn once per clip and applied
//! identically to every frame at source resolution, so the motion between
//! frames is untouched. Frame-level transforms (colour jitter, greyscale,
//! cutout) are drawn independently for every frame after the resize to the
//! output canvas; they move no pixels.
//!
//! [`AugmentMode::NonTemporal`] draws the clip-level group per frame as well.
//! It exists for ablations only: it breaks the inter-frame consistency the
//! detector relies on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clips::{Frame, VideoClip};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    /// Resize only.
    Off,
    #[default]
    TemporalPreserved,
    /// Every transform redrawn per frame.
    NonTemporal,
}

/// How often the frame-level flags are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FrameFlagScope {
    #[default]
    PerFrame,
    /// Flags and parameters drawn once and reused for all frames.
    PerClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    pub frame_flags: FrameFlagScope,
    pub p_crop: f64,
    pub p_blur: f64,
    pub p_flip: f64,
    pub p_vflip: f64,
    pub p_colorjitter: f64,
    pub p_greyscale: f64,
    pub p_cutout: f64,
    /// Crop area as a fraction of the frame area.
    pub size_ratio_range: [f64; 2],
    /// Crop width / height.
    pub aspect_range: [f64; 2],
    /// Cutout side in output-canvas pixels.
    pub cutout_side_range: [usize; 2],
    pub output_size: usize,
    pub brightness_range: [f64; 2],
    pub contrast_range: [f64; 2],
    pub saturation_range: [f64; 2],
    /// Hue shift as a fraction of the hue circle.
    pub hue_range: [f64; 2],
    pub blur_sigma_range: [f64; 2],
    /// Cutout fill colour, normally the per-channel dataset mean.
    pub cutout_fill: [u8; 3],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            mode: AugmentMode::TemporalPreserved,
            frame_flags: FrameFlagScope::PerFrame,
            p_crop: 0.20,
            p_blur: 0.10,
            p_flip: 0.50,
            p_vflip: 0.50,
            p_colorjitter: 0.70,
            p_greyscale: 0.70,
            p_cutout: 0.70,
            size_ratio_range: [0.8, 1.0],
            aspect_range: [0.75, 1.3],
            cutout_side_range: [32, 64],
            output_size: 224,
            brightness_range: [0.6, 1.4],
            contrast_range: [0.6, 1.4],
            saturation_range: [0.6, 1.4],
            hue_range: [-0.1, 0.1],
            blur_sigma_range: [0.1, 2.0],
            cutout_fill: [128, 128, 128],
        }
    }
}

impl AugmentConfig {
    /// Same probabilities, canvas shrunk to `output_size` with the cutout range scaled from 224.
    pub fn scaled_to(output_size: usize) -> Self {
        let base = Self::default();
        let scale = |v: usize| ((v * output_size) as f64 / 224.0).round().max(1.0) as usize;
        Self {
            output_size,
            cutout_side_range: base.cutout_side_range.map(scale),
            ..base
        }
    }

    /// Every flag forced off: the identity path (resize only) under any mode.
    pub fn all_off(output_size: usize) -> Self {
        Self {
            p_crop: 0.0,
            p_blur: 0.0,
            p_flip: 0.0,
            p_vflip: 0.0,
            p_colorjitter: 0.0,
            p_greyscale: 0.0,
            p_cutout: 0.0,
            ..Self::scaled_to(output_size)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_crop", self.p_crop),
            ("p_blur", self.p_blur),
            ("p_flip", self.p_flip),
            ("p_vflip", self.p_vflip),
            ("p_colorjitter", self.p_colorjitter),
            ("p_greyscale", self.p_greyscale),
            ("p_cutout", self.p_cutout),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} is not a probability")));
            }
        }
        let ranges = [
            ("size_ratio_range", self.size_ratio_range),
            ("aspect_range", self.aspect_range),
            ("brightness_range", self.brightness_range),
            ("contrast_range", self.contrast_range),
            ("saturation_range", self.saturation_range),
            ("hue_range", self.hue_range),
            ("blur_sigma_range", self.blur_sigma_range),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::config(format!("{name} = [{lo}, {hi}] is empty")));
            }
        }
        let [s_lo, s_hi] = self.size_ratio_range;
        if s_lo <= 0.0 || s_hi > 1.0 {
            return Err(Error::config("size_ratio_range must lie in (0, 1]"));
        }
        if self.aspect_range[0] <= 0.0 || self.blur_sigma_range[0] <= 0.0 {
            return Err(Error::config("aspect and blur sigma ranges must be positive"));
        }
        if self.brightness_range[0] < 0.0 || self.contrast_range[0] < 0.0 || self.saturation_range[0] < 0.0 {
            return Err(Error::config("jitter factors must be non-negative"));
        }
        let [c_lo, c_hi] = self.cutout_side_range;
        if c_lo == 0 || c_lo > c_hi {
            return Err(Error::config(format!("cutout_side_range = [{c_lo}, {c_hi}] is empty")));
        }
        if self.output_size <= c_hi {
            return Err(Error::config(format!(
                "output_size {} must exceed the largest cutout side {c_hi}",
                self.output_size
            )));
        }
        if self.output_size < crate::clips::MIN_FRAME_SIDE {
            return Err(Error::config(format!(
                "output_size must be >= {}",
                crate::clips::MIN_FRAME_SIDE
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipLevelParams {
    pub crop_on: bool,
    pub crop_rect: CropRect,
    pub blur_on: bool,
    pub blur_sigma: f64,
    pub flip_on: bool,
    pub vflip_on: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterFactors {
    pub brightness: f64,
    pub contrast: f64,
    pub saturation: f64,
    pub hue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoutRect {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

impl CutoutRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.side && y >= self.y && y < self.y + self.side
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLevelParams {
    pub jitter_on: bool,
    pub jitter: JitterFactors,
    pub greyscale_on: bool,
    pub cutout_on: bool,
    pub cutout: CutoutRect,
}

/// Parameters actually used by one [`apply_traced`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentTrace {
    /// One entry per frame (identical entries under temporal-preserved mode).
    pub clip: Vec<Option<ClipLevelParams>>,
    pub frames: Vec<Option<FrameLevelParams>>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn flag<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn crop_is_legal(rect: &CropRect, width: usize, height: usize, config: &AugmentConfig) -> bool {
    const EPS: f64 = 1e-12;
    let area = (rect.w * rect.h) as f64 / (width * height) as f64;
    let aspect = rect.w as f64 / rect.h as f64;
    rect.w >= 1
        && rect.h >= 1
        && rect.x + rect.w <= width
        && rect.y + rect.h <= height
        && area >= config.size_ratio_range[0] - EPS
        && area <= config.size_ratio_range[1] + EPS
        && aspect >= config.aspect_range[0] - EPS
        && aspect <= config.aspect_range[1] + EPS
}

fn draw_crop<R: Rng + ?Sized>(rng: &mut R, config: &AugmentConfig, height: usize, width: usize) -> CropRect {
    let total = (width * height) as f64;
    let mut size = None;
    for _ in 0..32 {
        let s = uniform(rng, config.size_ratio_range);
        let a = uniform(rng, config.aspect_range);
        let w = (total * s * a).sqrt().round() as usize;
        let h = (total * s / a).sqrt().round() as usize;
        let rect = CropRect { x: 0, y: 0, w, h };
        if crop_is_legal(&rect, width, height, config) {
            size = Some((w, h));
            break;
        }
    }
    let (w, h) = size.unwrap_or_else(|| {
        // largest centred crop with the aspect clamped into range
        let aspect = (width as f64 / height as f64).clamp(config.aspect_range[0], config.aspect_range[1]);
        let w = ((height as f64 * aspect).round() as usize).clamp(1, width);
        let h = ((w as f64 / aspect).round() as usize).clamp(1, height);
        (w, h)
    });
    CropRect {
        x: rng.random_range(0..=width - w),
        y: rng.random_range(0..=height - h),
        w,
        h,
    }
}

/// Draw the clip-level group for a frame of `height` x `width`.
pub fn draw_clip_params<R: Rng + ?Sized>(
    rng: &mut R,
    config: &AugmentConfig,
    (height, width): (usize, usize),
) -> ClipLevelParams {
    let crop_on = flag(rng, config.p_crop);
    let crop_rect = draw_crop(rng, config, height, width);
    let blur_on = flag(rng, config.p_blur);
    let blur_sigma = uniform(rng, config.blur_sigma_range);
    let flip_on = flag(rng, config.p_flip);
    let vflip_on = flag(rng, config.p_vflip);
    ClipLevelParams {
        crop_on,
        crop_rect,
        blur_on,
        blur_sigma,
        flip_on,
        vflip_on,
    }
}

/// Draw the frame-level group for one frame of the output canvas.
pub fn draw_frame_params<R: Rng + ?Sized>(rng: &mut R, config: &AugmentConfig) -> FrameLevelParams {
    let jitter_on = flag(rng, config.p_colorjitter);
    let jitter = JitterFactors {
        brightness: uniform(rng, config.brightness_range),
        contrast: uniform(rng, config.contrast_range),
        saturation: uniform(rng, config.saturation_range),
        hue: uniform(rng, config.hue_range),
    };
    let greyscale_on = flag(rng, config.p_greyscale);
    let cutout_on = flag(rng, config.p_cutout);
    let [lo, hi] = config.cutout_side_range;
    let side = rng.random_range(lo..=hi);
    let cutout = CutoutRect {
        x: rng.random_range(0..=config.output_size - side),
        y: rng.random_range(0..=config.output_size - side),
        side,
    };
    FrameLevelParams {
        jitter_on,
        jitter,
        greyscale_on,
        cutout_on,
        cutout,
    }
}

/// Float RGB working image.
#[derive(Debug, Clone)]
struct Img {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Img {
    fn from_frame(f: &Frame) -> Self {
        Self {
            w: f.width(),
            h: f.height(),
            data: f.pixels().iter().map(|&v| v as f32).collect(),
        }
    }

    fn to_frame(&self) -> Frame {
        let pixels = self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
        Frame::from_raw(self.w, self.h, pixels)
    }

    fn crop(&self, r: &CropRect) -> Img {
        let mut data = Vec::with_capacity(r.w * r.h * 3);
        for y in r.y..r.y + r.h {
            let row = (y * self.w + r.x) * 3;
            data.extend_from_slice(&self.data[row..row + r.w * 3]);
        }
        Img { w: r.w, h: r.h, data }
    }

    fn flip_horizontal(&mut self) {
        let w = self.w;
        for row in self.data.chunks_exact_mut(w * 3) {
            for x in 0..w / 2 {
                for c in 0..3 {
                    row.swap(x * 3 + c, (w - 1 - x) * 3 + c);
                }
            }
        }
    }

    fn flip_vertical(&mut self) {
        let stride = self.w * 3;
        for y in 0..self.h / 2 {
            let (top, bottom) = self.data.split_at_mut((self.h - 1 - y) * stride);
            top[y * stride..(y + 1) * stride].swap_with_slice(&mut bottom[..stride]);
        }
    }

    fn blur(&mut self, sigma: f64) {
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let sum: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= sum);

        let (w, h) = (self.w as isize, self.h as isize);
        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0f64;
                    for (k, wk) in kernel.iter().enumerate() {
                        let sx = (x + k as isize - radius).clamp(0, w - 1);
                        acc += wk * self.data[((y * w + sx) * 3 + c as isize) as usize] as f64;
                    }
                    tmp[((y * w + x) * 3 + c as isize) as usize] = acc as f32;
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    let mut acc = 0.0f64;
                    for (k, wk) in kernel.iter().enumerate() {
                        let sy = (y + k as isize - radius).clamp(0, h - 1);
                        acc += wk * tmp[((sy * w + x) * 3 + c as isize) as usize] as f64;
                    }
                    self.data[((y * w + x) * 3 + c as isize) as usize] = acc as f32;
                }
            }
        }
    }

    /// Bilinear resize with half-pixel centres and edge clamping. Mirror
    /// symmetric: resizing a flipped image equals flipping the resized one.
    fn resize(&self, out_w: usize, out_h: usize) -> Img {
        fn taps(out: usize, src: usize) -> Vec<(usize, usize, f32, f32)> {
            let scale = src as f64 / out as f64;
            (0..out)
                .map(|o| {
                    let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                    let i0 = s.floor() as usize;
                    let i1 = (i0 + 1).min(src - 1);
                    let f = (s - i0 as f64) as f32;
                    (i0, i1, 1.0 - f, f)
                })
                .collect()
        }
        if out_w == self.w && out_h == self.h {
            return self.clone();
        }
        let xt = taps(out_w, self.w);
        let yt = taps(out_h, self.h);
        let mut data = vec![0f32; out_w * out_h * 3];
        let px = |x: usize, y: usize, c: usize| self.data[(y * self.w + x) * 3 + c];
        for (oy, &(y0, y1, wy0, wy1)) in yt.iter().enumerate() {
            for (ox, &(x0, x1, wx0, wx1)) in xt.iter().enumerate() {
                for c in 0..3 {
                    let top = px(x0, y0, c) * wx0 + px(x1, y0, c) * wx1;
                    let bottom = px(x0, y1, c) * wx0 + px(x1, y1, c) * wx1;
                    data[(oy * out_w + ox) * 3 + c] = top * wy0 + bottom * wy1;
                }
            }
        }
        Img {
            w: out_w,
            h: out_h,
            data,
        }
    }

    fn luma(r: f32, g: f32, b: f32) -> f32 {
        0.299 * r + 0.587 * g + 0.114 * b
    }

    fn color_jitter(&mut self, j: &JitterFactors) {
        let clamp = |v: f32| v.clamp(0.0, 255.0);
        let b = j.brightness as f32;
        self.data.iter_mut().for_each(|v| *v = clamp(*v * b));

        let n = (self.w * self.h) as f64;
        let mean = (self
            .data
            .chunks_exact(3)
            .map(|p| Img::luma(p[0], p[1], p[2]) as f64)
            .sum::<f64>()
            / n) as f32;
        let c = j.contrast as f32;
        self.data.iter_mut().for_each(|v| *v = clamp((*v - mean) * c + mean));

        let s = j.saturation as f32;
        for p in self.data.chunks_exact_mut(3) {
            let g = Img::luma(p[0], p[1], p[2]);
            for v in p.iter_mut() {
                *v = clamp((*v - g) * s + g);
            }
        }

        if j.hue != 0.0 {
            let shift = j.hue as f32;
            for p in self.data.chunks_exact_mut(3) {
                let [h, sat, val] = rgb_to_hsv([p[0] / 255.0, p[1] / 255.0, p[2] / 255.0]);
                let rgb = hsv_to_rgb([(h + shift).rem_euclid(1.0), sat, val]);
                for (v, x) in p.iter_mut().zip(rgb) {
                    *v = clamp(x * 255.0);
                }
            }
        }
    }

    fn greyscale(&mut self) {
        for p in self.data.chunks_exact_mut(3) {
            let g = Img::luma(p[0], p[1], p[2]);
            p.fill(g);
        }
    }

    fn cutout(&mut self, r: &CutoutRect, fill: [u8; 3]) {
        for y in r.y..(r.y + r.side).min(self.h) {
            for x in r.x..(r.x + r.side).min(self.w) {
                let i = (y * self.w + x) * 3;
                for c in 0..3 {
                    self.data[i + c] = fill[c] as f32;
                }
            }
        }
    }
}

fn rgb_to_hsv([r, g, b]: [f32; 3]) -> [f32; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f32; 3]) -> [f32; 3] {
    let h6 = h * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (i as i32).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn apply_clip_level(img: &Img, p: &ClipLevelParams) -> Img {
    let mut out = if p.crop_on { img.crop(&p.crop_rect) } else { img.clone() };
    if p.blur_on {
        out.blur(p.blur_sigma);
    }
    if p.flip_on {
        out.flip_horizontal();
    }
    if p.vflip_on {
        out.flip_vertical();
    }
    out
}

fn apply_frame_level(img: &mut Img, p: &FrameLevelParams, fill: [u8; 3]) {
    if p.jitter_on {
        img.color_jitter(&p.jitter);
    }
    if p.greyscale_on {
        img.greyscale();
    }
    if p.cutout_on {
        img.cutout(&p.cutout, fill);
    }
}

/// Bilinear resize of a single frame to `size` x `size`.
pub fn resize_frame(frame: &Frame, size: usize) -> Frame {
    Img::from_frame(frame).resize(size, size).to_frame()
}

/// Augment a clip; output frames are `output_size` x `output_size`.
pub fn apply<R: Rng + ?Sized>(clip: &VideoClip, rng: &mut R, config: &AugmentConfig) -> Result<VideoClip> {
    apply_traced(clip, rng, config).map(|(c, _)| c)
}

/// [`apply`], also returning the parameters drawn for every frame.
pub fn apply_traced<R: Rng + ?Sized>(
    clip: &VideoClip,
    rng: &mut R,
    config: &AugmentConfig,
) -> Result<(VideoClip, AugmentTrace)> {
    config.validate()?;
    let size = config.output_size;
    let shape = (clip.height(), clip.width());
    let n = clip.len();

    let mut trace = AugmentTrace {
        clip: vec![None; n],
        frames: vec![None; n],
    };
    let shared_clip = match config.mode {
        AugmentMode::TemporalPreserved => Some(draw_clip_params(rng, config, shape)),
        _ => None,
    };
    let mut shared_frame = None;

    let mut frames = Vec::with_capacity(n);
    for (i, frame) in clip.frames().iter().enumerate() {
        let src = Img::from_frame(frame);
        let img = match config.mode {
            AugmentMode::Off => src.resize(size, size),
            AugmentMode::TemporalPreserved | AugmentMode::NonTemporal => {
                let cp = shared_clip.unwrap_or_else(|| draw_clip_params(rng, config, shape));
                trace.clip[i] = Some(cp);
                let staged = apply_clip_level(&src, &cp);
                if staged.w == 0 || staged.h == 0 {
                    return Err(Error::InvalidInput(format!(
                        "{}: frame {i} degenerates under crop {:?}",
                        clip.source_id(),
                        cp.crop_rect
                    )));
                }
                let mut img = staged.resize(size, size);
                let fp = match (config.frame_flags, shared_frame) {
                    (FrameFlagScope::PerClip, Some(fp)) => fp,
                    _ => {
                        let fp = draw_frame_params(rng, config);
                        shared_frame = Some(fp);
                        fp
                    }
                };
                trace.frames[i] = Some(fp);
                apply_frame_level(&mut img, &fp, config.cutout_fill);
                img
            }
        };
        frames.push(img.to_frame());
    }
    Ok((VideoClip::new(frames, clip.source_id())?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::seed_keys;

    fn gradient_clip(n: usize, size: usize) -> VideoClip {
        let frames = (0..n)
            .map(|t| {
                let mut px = Vec::with_capacity(size * size * 3);
                for y in 0..size {
                    for x in 0..size {
                        px.extend_from_slice(&[
                            (x * 255 / (size - 1)) as u8,
                            (y * 255 / (size - 1)) as u8,
                            ((x * 7 + y * 3 + t * 11) % 256) as u8,
                        ]);
                    }
                }
                Frame::new(size, size, px).unwrap()
            })
            .collect();
        VideoClip::new(frames, "grad").unwrap()
    }

    #[test]
    fn same_seed_same_params() {
        let cfg = AugmentConfig::default();
        let a = draw_clip_params(&mut seed::rng(seed_keys!(5u64)), &cfg, (224, 224));
        let b = draw_clip_params(&mut seed::rng(seed_keys!(5u64)), &cfg, (224, 224));
        assert_eq!(a, b);
    }

    #[test]
    fn crop_rect_is_always_legal() {
        let cfg = AugmentConfig::default();
        let mut rng = seed::rng(seed_keys!(1u64));
        for (h, w) in [(64, 64), (224, 224), (80, 120), (200, 90)] {
            for _ in 0..2000 {
                let p = draw_clip_params(&mut rng, &cfg, (h, w));
                let r = p.crop_rect;
                assert!(r.x + r.w <= w && r.y + r.h <= h, "{r:?} in {w}x{h}");
                if (w as f64 / h as f64) >= 0.75 && (w as f64 / h as f64) <= 1.3 {
                    assert!(crop_is_legal(&r, w, h, &cfg), "{r:?} in {w}x{h}");
                }
                assert!((0.1..=2.0).contains(&p.blur_sigma));
            }
        }
    }

    #[test]
    fn cutout_side_and_position_in_range() {
        let cfg = AugmentConfig::default();
        let mut rng = seed::rng(seed_keys!(2u64));
        for _ in 0..5000 {
            let p = draw_frame_params(&mut rng, &cfg);
            assert!((32..=64).contains(&p.cutout.side));
            assert!(p.cutout.x + p.cutout.side <= 224 && p.cutout.y + p.cutout.side <= 224);
            assert!((0.6..1.4).contains(&p.jitter.brightness));
            assert!((-0.1..0.1).contains(&p.jitter.hue));
        }
    }

    #[test]
    fn consecutive_frame_draws_differ() {
        let cfg = AugmentConfig::default();
        let mut rng = seed::rng(seed_keys!(3u64));
        let a = draw_frame_params(&mut rng, &cfg);
        let b = draw_frame_params(&mut rng, &cfg);
        assert_ne!(a, b);
    }

    #[test]
    fn all_off_is_resize_only() {
        let clip = gradient_clip(3, 112);
        let cfg = AugmentConfig {
            output_size: 224,
            ..AugmentConfig::all_off(224)
        };
        let out = apply(&clip, &mut seed::rng(seed_keys!(9u64)), &cfg).unwrap();
        for (o, f) in out.frames().iter().zip(clip.frames()) {
            assert_eq!(o, &resize_frame(f, 224));
        }
        let off = AugmentConfig {
            mode: AugmentMode::Off,
            ..AugmentConfig::default()
        };
        let out = apply(&clip, &mut seed::rng(seed_keys!(9u64)), &off).unwrap();
        assert_eq!(out.frames()[1], resize_frame(&clip.frames()[1], 224));
    }

    #[test]
    fn forced_flip_mirrors_every_frame() {
        let clip = gradient_clip(4, 112);
        let cfg = AugmentConfig {
            p_flip: 1.0,
            ..AugmentConfig::all_off(224)
        };
        let out = apply(&clip, &mut seed::rng(seed_keys!(4u64)), &cfg).unwrap();
        for (o, f) in out.frames().iter().zip(clip.frames()) {
            let r = resize_frame(f, 224);
            for y in 0..224 {
                for x in 0..224 {
                    assert_eq!(o.get(x, y), r.get(223 - x, y), "({x},{y})");
                }
            }
        }
    }

    #[test]
    fn forced_vflip_mirrors_rows() {
        let clip = gradient_clip(2, 64);
        let cfg = AugmentConfig {
            p_vflip: 1.0,
            ..AugmentConfig::all_off(64)
        };
        let out = apply(&clip, &mut seed::rng(seed_keys!(4u64)), &cfg).unwrap();
        for (o, f) in out.frames().iter().zip(clip.frames()) {
            for y in 0..64 {
                for x in 0..64 {
                    assert_eq!(o.get(x, y), f.get(x, 63 - y));
                }
            }
        }
    }

    #[test]
    fn greyscale_frames_have_equal_channels() {
        let clip = gradient_clip(3, 64);
        let cfg = AugmentConfig {
            p_greyscale: 1.0,
            ..AugmentConfig::all_off(64)
        };
        let out = apply(&clip, &mut seed::rng(seed_keys!(4u64)), &cfg).unwrap();
        for f in out.frames() {
            assert!(f.pixels().chunks_exact(3).all(|p| p[0] == p[1] && p[1] == p[2]));
        }
    }

    #[test]
    fn same_seed_same_output_and_shape() {
        let clip = gradient_clip(5, 80);
        let cfg = AugmentConfig::default();
        let a = apply(&clip, &mut seed::rng(seed_keys!(11u64)), &cfg).unwrap();
        let b = apply(&clip, &mut seed::rng(seed_keys!(11u64)), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert_eq!((a.width(), a.height()), (224, 224));
        let c = apply(&clip, &mut seed::rng(seed_keys!(12u64)), &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn temporal_mode_shares_clip_params_nontemporal_does_not() {
        let clip = gradient_clip(8, 64);
        let cfg = AugmentConfig::scaled_to(64);
        let (_, t) = apply_traced(&clip, &mut seed::rng(seed_keys!(1u64)), &cfg).unwrap();
        assert!(t.clip.windows(2).all(|w| w[0] == w[1]));
        assert!(t.frames.windows(2).any(|w| w[0] != w[1]));

        let nt = AugmentConfig {
            mode: AugmentMode::NonTemporal,
            ..cfg.clone()
        };
        let (_, t) = apply_traced(&clip, &mut seed::rng(seed_keys!(1u64)), &nt).unwrap();
        assert!(t.clip.windows(2).any(|w| w[0] != w[1]));

        let per_clip = AugmentConfig {
            frame_flags: FrameFlagScope::PerClip,
            ..cfg
        };
        let (_, t) = apply_traced(&clip, &mut seed::rng(seed_keys!(1u64)), &per_clip).unwrap();
        assert!(t.frames.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn config_validation() {
        assert!(AugmentConfig::default().validate().is_ok());
        assert!(AugmentConfig::scaled_to(64).validate().is_ok());
        assert_eq!(AugmentConfig::scaled_to(64).cutout_side_range, [9, 18]);
        let bad = AugmentConfig {
            p_flip: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            output_size: 64,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            aspect_range: [1.3, 0.75],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn hsv_round_trip() {
        for rgb in [[0.2f32, 0.5, 0.9], [1.0, 0.0, 0.0], [0.3, 0.3, 0.3], [0.9, 0.8, 0.1]] {
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for c in 0..3 {
                assert!((back[c] - rgb[c]).abs() < 1e-6);
            }
        }
    }
}
