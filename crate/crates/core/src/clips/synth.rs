//! Synthetic multi-domain corpus.
//!
//! Each video shows a textured patch moving along a smoothed random
//! trajectory over a background. A domain fixes the texture family, the
//! patch tint and the background colour. Fake videos are built the same way
//! except that every frame gets an independent integer position jitter in
//! `[-fake_jitter_px, fake_jitter_px]` per axis and a freshly drawn texture
//! noise field. Any single frame of a fake is therefore distributed like a
//! frame of a real video; only the frame-to-frame consistency differs.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{frame_file_name, write_manifest, ClipRecord, Frame, Label, Split, MIN_FRAME_SIDE};
use crate::error::{Error, Result};
use crate::{parallel, seed_keys};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_domains: usize,
    pub videos_per_domain_per_label: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    /// Weight of the previous velocity in the trajectory update; 1 is constant velocity.
    pub motion_smoothness: f64,
    pub fake_jitter_px: usize,
    pub seed: u64,
    /// Patch side in pixels; defaults to a quarter of the frame.
    #[serde(default)]
    pub patch_size: Option<usize>,
    /// Half-width of the uniform texture noise, in units of full intensity.
    #[serde(default = "default_texture_noise")]
    pub texture_noise: f64,
    /// Patch speed in pixels per frame.
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

fn default_texture_noise() -> f64 {
    0.25
}
fn default_speed() -> f64 {
    1.5
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_domains: 3,
            videos_per_domain_per_label: 10,
            frames_per_video: 16,
            frame_size: 64,
            motion_smoothness: 0.8,
            fake_jitter_px: 2,
            seed: 0,
            patch_size: None,
            texture_noise: default_texture_noise(),
            speed: default_speed(),
            val_fraction: default_val_fraction(),
            test_fraction: default_test_fraction(),
        }
    }
}

impl SyntheticConfig {
    pub fn patch_side(&self) -> usize {
        self.patch_size.unwrap_or(self.frame_size / 4)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.num_domains < 2 {
            return fail(format!("num_domains must be >= 2, got {}", self.num_domains));
        }
        if self.videos_per_domain_per_label == 0 {
            return fail("videos_per_domain_per_label must be >= 1".into());
        }
        if self.frames_per_video < 2 {
            return fail("frames_per_video must be >= 2".into());
        }
        if self.frame_size < MIN_FRAME_SIDE {
            return fail(format!(
                "frame_size must be >= {MIN_FRAME_SIDE}, got {}",
                self.frame_size
            ));
        }
        if !(self.motion_smoothness > 0.0 && self.motion_smoothness <= 1.0) {
            return fail(format!(
                "motion_smoothness must lie in (0, 1], got {}",
                self.motion_smoothness
            ));
        }
        if self.fake_jitter_px == 0 {
            return fail("fake_jitter_px must be >= 1".into());
        }
        let patch = self.patch_side();
        if patch < 4 || patch + 2 * self.fake_jitter_px + 2 > self.frame_size {
            return fail(format!(
                "patch_size {patch} with jitter {} does not fit a {} frame",
                self.fake_jitter_px, self.frame_size
            ));
        }
        if !(0.0..=1.0).contains(&self.texture_noise) || !(self.speed >= 0.0) {
            return fail("texture_noise must lie in [0, 1] and speed must be >= 0".into());
        }
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return fail(format!("val_fraction {v} + test_fraction {t} must be < 1"));
        }
        Ok(())
    }
}

/// Domain tag for index `d`: `A`, `B`, ... then `D26`, `D27`, ...
pub fn domain_name(d: usize) -> String {
    if d < 26 {
        char::from(b'A' + d as u8).to_string()
    } else {
        format!("D{d}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Texture {
    Stripes,
    Checker,
    Diagonal,
    Rings,
}

#[derive(Debug, Clone, Copy)]
struct DomainStyle {
    background: [f64; 3],
    tint: [f64; 3],
    texture: Texture,
    period: f64,
    /// Multiplier on `texture_noise` for this texture family.
    grain: f64,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

const GRAIN_C: f64 = 0.2;

fn domain_style(d: usize) -> DomainStyle {
    // The first three domains occupy disjoint colour channels: A lives in
    // red, B in green, C in blue. A model that sees only A and B in colour
    // never exercises its blue-channel weights.
    const FIXED: [DomainStyle; 3] = [
        DomainStyle {
            background: [70.0, 20.0, 0.0],
            tint: [1.0, 0.3, 0.0],
            texture: Texture::Stripes,
            period: 4.0,
            grain: 1.0,
        },
        DomainStyle {
            background: [20.0, 70.0, 0.0],
            tint: [0.3, 1.0, 0.0],
            texture: Texture::Checker,
            period: 3.0,
            grain: 1.0,
        },
        DomainStyle {
            background: [0.0, 10.0, 70.0],
            tint: [0.0, 0.15, 1.0],
            texture: Texture::Diagonal,
            period: 5.0,
            grain: GRAIN_C,
        },
    ];
    if d < FIXED.len() {
        return FIXED[d];
    }
    let hue = (d as f64 * 0.618_033_988_75).fract();
    let tint = hsv_to_rgb(hue, 0.75, 1.0);
    let bg = hsv_to_rgb(hue + 0.5, 0.6, 0.5);
    DomainStyle {
        background: bg.map(|c| c * 255.0),
        tint,
        texture: [Texture::Stripes, Texture::Checker, Texture::Diagonal, Texture::Rings][d % 4],
        period: 3.0 + (d % 3) as f64,
        grain: 1.0,
    }
}

fn texture_value(style: &DomainStyle, u: usize, v: usize, patch: usize) -> f64 {
    let p = style.period;
    let (u, v) = (u as f64, v as f64);
    match style.texture {
        Texture::Stripes => ((v / p).floor() as i64 % 2) as f64,
        Texture::Checker => (((u / p).floor() + (v / p).floor()) as i64 % 2) as f64,
        Texture::Diagonal => (((u + v) / p).floor() as i64 % 2) as f64,
        Texture::Rings => {
            let c = patch as f64 / 2.0;
            let r = ((u - c).powi(2) + (v - c).powi(2)).sqrt();
            ((r / p).floor() as i64 % 2) as f64
        }
    }
}

/// Ground truth of a rendered video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrace {
    /// Smooth trajectory (top-left corner, rounded), one per frame.
    pub trajectory: Vec<(i64, i64)>,
    /// Where the patch was actually drawn.
    pub positions: Vec<(i64, i64)>,
    pub patch_size: usize,
}

/// Render video `index` of (`domain`, `label`) in memory.
pub fn render_video(
    config: &SyntheticConfig,
    domain: usize,
    label: Label,
    index: usize,
) -> Result<(Vec<Frame>, VideoTrace)> {
    config.validate()?;
    let size = config.frame_size;
    let patch = config.patch_side();
    let jitter = config.fake_jitter_px as i64;
    let style = domain_style(domain);
    let mut rng = crate::seed::rng(seed_keys!(config.seed, "synth", domain, label as u8 as u64, index));

    let lo = jitter as f64;
    let hi = (size - patch) as f64 - jitter as f64;
    let mut pos = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let mut vel = [config.speed * angle.cos(), config.speed * angle.sin()];
    let s = config.motion_smoothness;

    let mut trajectory = Vec::with_capacity(config.frames_per_video);
    for t in 0..config.frames_per_video {
        if t > 0 {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            for k in 0..2 {
                let fresh = config.speed * if k == 0 { a.cos() } else { a.sin() };
                vel[k] = s * vel[k] + (1.0 - s) * fresh;
                pos[k] += vel[k];
                if pos[k] < lo {
                    pos[k] = 2.0 * lo - pos[k];
                    vel[k] = -vel[k];
                }
                if pos[k] > hi {
                    pos[k] = 2.0 * hi - pos[k];
                    vel[k] = -vel[k];
                }
                pos[k] = pos[k].clamp(lo, hi);
            }
        }
        trajectory.push((pos[0].round() as i64, pos[1].round() as i64));
    }

    let static_bg: Vec<f64> = (0..size * size).map(|_| rng.random_range(-8.0..=8.0)).collect();
    let noise_amp = config.texture_noise * style.grain;
    let draw_noise = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..patch * patch)
            .map(|_| {
                if noise_amp > 0.0 {
                    rng.random_range(-noise_amp..=noise_amp)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let video_noise = draw_noise(&mut rng);

    let mut frames = Vec::with_capacity(config.frames_per_video);
    let mut positions = Vec::with_capacity(config.frames_per_video);
    for &(tx, ty) in &trajectory {
        let (px, py, noise) = match label {
            Label::Real => (tx, ty, None),
            Label::Fake => {
                let jx = rng.random_range(-jitter..=jitter);
                let jy = rng.random_range(-jitter..=jitter);
                (tx + jx, ty + jy, Some(draw_noise(&mut rng)))
            }
        };
        let noise = noise.as_deref().unwrap_or(&video_noise);
        positions.push((px, py));

        let mut pixels = vec![0u8; size * size * 3];
        for y in 0..size {
            for x in 0..size {
                let i = y * size + x;
                let (u, v) = (x as i64 - px, y as i64 - py);
                let rgb = if (0..patch as i64).contains(&u) && (0..patch as i64).contains(&v) {
                    let (u, v) = (u as usize, v as usize);
                    let value =
                        (0.25 + 0.5 * texture_value(&style, u, v, patch) + noise[v * patch + u]).clamp(0.0, 1.0);
                    style.tint.map(|c| c * value * 255.0)
                } else {
                    // background grain only in channels the palette uses
                    style.background.map(|c| if c > 0.0 { c + static_bg[i] } else { 0.0 })
                };
                for c in 0..3 {
                    pixels[i * 3 + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
                }
            }
        }
        frames.push(Frame::from_raw(size, size, pixels));
    }

    Ok((
        frames,
        VideoTrace {
            trajectory,
            positions,
            patch_size: patch,
        },
    ))
}

fn split_for(index: usize, n: usize, config: &SyntheticConfig) -> Split {
    let n_test = (n as f64 * config.test_fraction).round() as usize;
    let n_val = (n as f64 * config.val_fraction).round() as usize;
    let n_train = n.saturating_sub(n_test + n_val);
    if index < n_train {
        Split::Train
    } else if index < n_train + n_val {
        Split::Val
    } else {
        Split::Test
    }
}

/// Write the corpus under `out_dir` and return the manifest path.
///
/// Layout: `out_dir/manifest.tsv` and `out_dir/videos/<video_id>/frame_00000.png ...`.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, out_dir: &Path) -> Result<PathBuf> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let n = config.videos_per_domain_per_label;
    let mut jobs = Vec::new();
    for d in 0..config.num_domains {
        for label in [Label::Real, Label::Fake] {
            for i in 0..n {
                jobs.push((d, label, i));
            }
        }
    }

    let records = parallel::try_map(&jobs, |&(d, label, i)| -> Result<ClipRecord> {
        let domain = domain_name(d);
        let video_id = format!("{domain}_{}_{i:04}", label.name());
        let frame_dir = out_dir.join("videos").join(&video_id);
        std::fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        let (frames, _) = render_video(config, d, label, i)?;
        for (t, frame) in frames.iter().enumerate() {
            frame.save(&frame_dir.join(frame_file_name(t)))?;
        }
        Ok(ClipRecord {
            video_id,
            frame_dir,
            label,
            domain,
            split: split_for(i, n, config),
            frame_count: config.frames_per_video,
        })
    })?;

    let manifest = out_dir.join("manifest.tsv");
    write_manifest(&manifest, &records)?;
    Ok(manifest)
}
