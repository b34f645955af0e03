//! Video encoder: clip -> 2048-dim representation.
//!
//! [`VideoEncoder`] is the plug point for backbones. The built-in
//! [`Toy3d`] is a small 3D convolutional network: stages of 3x3x3
//! convolution + ReLU with strided temporal/spatial downsampling, global
//! average pooling and a linear projection to [`REPRESENTATION_DIM`].

use serde::{Deserialize, Serialize};

use crate::clips::VideoClip;
use crate::error::{Error, Result};
use crate::parallel;
use crate::params::{relative_error, with_param_mut, Parameters, Tensor};

pub const REPRESENTATION_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderVariant {
    Toy3d,
    /// Externally supplied backbone; only the [`VideoEncoder`] interface is provided here.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Normalization {
    /// Pixel / 255.
    UnitRange,
    /// (pixel / 255 - mean) / std, per channel.
    MeanStd { mean: [f64; 3], std: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub channels: usize,
    /// (temporal, vertical, horizontal) stride.
    pub stride: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: EncoderVariant,
    pub stages: Vec<StageConfig>,
    pub output_dim: usize,
    pub normalization: Normalization,
}

impl EncoderConfig {
    /// Four stages, 4-8-16-32 channels; sized for 8 x 64 x 64 clips.
    pub fn desk() -> Self {
        Self::with_widths([4, 8, 16, 32])
    }

    pub fn with_widths(widths: [usize; 4]) -> Self {
        let strides = [[1, 2, 2], [2, 2, 2], [2, 2, 2], [2, 2, 2]];
        Self {
            variant: EncoderVariant::Toy3d,
            stages: widths
                .iter()
                .zip(strides)
                .map(|(&channels, stride)| StageConfig { channels, stride })
                .collect(),
            output_dim: REPRESENTATION_DIM,
            normalization: Normalization::UnitRange,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.output_dim == 0 {
            return Err(Error::config("encoder output_dim must be positive"));
        }
        if self.variant == EncoderVariant::Toy3d {
            if self.stages.is_empty() {
                return Err(Error::config("toy3d needs at least one stage"));
            }
            for (i, s) in self.stages.iter().enumerate() {
                if s.channels == 0 || s.stride.contains(&0) {
                    return Err(Error::config(format!(
                        "stage {i}: channels and strides must be positive"
                    )));
                }
            }
        }
        if let Normalization::MeanStd { std, .. } = &self.normalization {
            if std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::config("normalization std must be positive"));
            }
        }
        Ok(())
    }
}

/// One clip as a `3 x T x H x W` float volume (channel-major).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTensor {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ClipTensor {
    pub fn from_clip(clip: &VideoClip, norm: &Normalization) -> Self {
        let (t, h, w) = (clip.len(), clip.height(), clip.width());
        let plane = t * h * w;
        let mut data = vec![0.0; 3 * plane];
        for (ti, frame) in clip.frames().iter().enumerate() {
            for (p, px) in frame.pixels().chunks_exact(3).enumerate() {
                for c in 0..3 {
                    let v = px[c] as f64 / 255.0;
                    data[c * plane + ti * h * w + p] = match norm {
                        Normalization::UnitRange => v,
                        Normalization::MeanStd { mean, std } => (v - mean[c]) / std[c],
                    };
                }
            }
        }
        Self {
            frames: t,
            height: h,
            width: w,
            data,
        }
    }

    /// From an `N x H x W x 3` (frame-major, channels last) slice.
    pub fn from_nhwc(frames: usize, height: usize, width: usize, nhwc: &[f64]) -> Result<Self> {
        if nhwc.len() != frames * height * width * 3 {
            return Err(Error::Shape(format!(
                "expected {frames}x{height}x{width}x3 values, got {}",
                nhwc.len()
            )));
        }
        let plane = frames * height * width;
        let mut data = vec![0.0; nhwc.len()];
        for (p, px) in nhwc.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = px[c];
            }
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }
}

/// A batch of clips with a uniform frame count.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    clips: Vec<ClipTensor>,
}

impl EncoderInput {
    pub fn new(clips: Vec<ClipTensor>) -> Result<Self> {
        if let Some(first) = clips.first() {
            if let Some(i) = clips.iter().position(|c| c.frames != first.frames) {
                return Err(Error::Shape(format!(
                    "clip {i} has {} frames, clip 0 has {}",
                    clips[i].frames, first.frames
                )));
            }
        }
        if let Some(i) = clips.iter().position(|c| c.data.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("encoder input clip {i}")));
        }
        Ok(Self { clips })
    }

    pub fn from_clips(clips: &[VideoClip], norm: &Normalization) -> Result<Self> {
        Self::new(clips.iter().map(|c| ClipTensor::from_clip(c, norm)).collect())
    }

    pub fn clips(&self) -> &[ClipTensor] {
        &self.clips
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// `B x 2048` representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub rows: Vec<Vec<f64>>,
}

/// A differentiable clip encoder.
pub trait VideoEncoder: Parameters + Clone + Send + Sync {
    type Cache: Send + Sync;

    fn output_dim(&self) -> usize;

    fn forward(&self, clip: &ClipTensor) -> (Vec<f64>, Self::Cache);

    /// Accumulate parameter gradients for `grad_out` into `grads`.
    fn backward(&self, cache: &Self::Cache, grad_out: &[f64], grads: &mut Self);
}

/// Encode a batch, one clip per row.
pub fn encode<E: VideoEncoder>(input: &EncoderInput, encoder: &E) -> Result<EncoderOutput> {
    let rows = parallel::map(input.clips(), |c| encoder.forward(c).0);
    if rows
        .iter()
        .any(|r| r.len() != encoder.output_dim() || r.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite(
            "encoder produced a non-finite or misshapen row".into(),
        ));
    }
    Ok(EncoderOutput { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Vol {
    c: usize,
    t: usize,
    h: usize,
    w: usize,
}

impl Vol {
    fn len(&self) -> usize {
        self.c * self.t * self.h * self.w
    }

    fn plane(&self) -> usize {
        self.t * self.h * self.w
    }
}

/// Output positions `o` with `0 <= o * stride + k - 1 < len` (padding 1).
#[inline]
fn valid(k: usize, stride: usize, len: usize, out: usize) -> (usize, usize) {
    let lo = if k == 0 { 1usize.div_ceil(stride) } else { 0 };
    let hi = if len + 1 > k {
        ((len + 1 - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    /// `out x in x 3 x 3 x 3`
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: [usize; 3],
}

impl Conv3d {
    fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    fn out_dims(&self, d: Vol) -> Vol {
        let [st, sh, sw] = self.stride;
        Vol {
            c: self.out_channels(),
            t: (d.t - 1) / st + 1,
            h: (d.h - 1) / sh + 1,
            w: (d.w - 1) / sw + 1,
        }
    }

    fn forward(&self, x: &[f64], d: Vol) -> (Vec<f64>, Vol) {
        let od = self.out_dims(d);
        let [st, sh, sw] = self.stride;
        let mut out = vec![0.0; od.len()];
        let (ip, op) = (d.plane(), od.plane());
        for co in 0..od.c {
            let out_c = &mut out[co * op..(co + 1) * op];
            out_c.fill(self.bias.data[co]);
            for ci in 0..d.c {
                let in_c = &x[ci * ip..(ci + 1) * ip];
                let wk = &self.weight.data[(co * d.c + ci) * 27..][..27];
                for kt in 0..3 {
                    let (tlo, thi) = valid(kt, st, d.t, od.t);
                    for to in tlo..thi {
                        let ti = to * st + kt - 1;
                        for kh in 0..3 {
                            let (hlo, hhi) = valid(kh, sh, d.h, od.h);
                            for ho in hlo..hhi {
                                let hi = ho * sh + kh - 1;
                                let in_row = &in_c[(ti * d.h + hi) * d.w..][..d.w];
                                let out_row = &mut out_c[(to * od.h + ho) * od.w..][..od.w];
                                for kw in 0..3 {
                                    let w = wk[kt * 9 + kh * 3 + kw];
                                    let (wlo, whi) = valid(kw, sw, d.w, od.w);
                                    if sw == 1 {
                                        let src = &in_row[wlo + kw - 1..whi + kw - 1];
                                        for (o, s) in out_row[wlo..whi].iter_mut().zip(src) {
                                            *o += w * s;
                                        }
                                    } else {
                                        for wo in wlo..whi {
                                            out_row[wo] += w * in_row[wo * sw + kw - 1];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, od)
    }

    /// Accumulate weight/bias gradients; write the input gradient when asked.
    fn backward(&self, x: &[f64], d: Vol, dout: &[f64], grads: &mut Conv3d, mut dx: Option<&mut [f64]>) {
        let od = self.out_dims(d);
        let [st, sh, sw] = self.stride;
        let (ip, op) = (d.plane(), od.plane());
        for co in 0..od.c {
            let dout_c = &dout[co * op..(co + 1) * op];
            grads.bias.data[co] += dout_c.iter().sum::<f64>();
            for ci in 0..d.c {
                let in_c = &x[ci * ip..(ci + 1) * ip];
                let base = (co * d.c + ci) * 27;
                let wk = &self.weight.data[base..base + 27];
                let mut gk = [0.0f64; 27];
                for kt in 0..3 {
                    let (tlo, thi) = valid(kt, st, d.t, od.t);
                    for to in tlo..thi {
                        let ti = to * st + kt - 1;
                        for kh in 0..3 {
                            let (hlo, hhi) = valid(kh, sh, d.h, od.h);
                            for ho in hlo..hhi {
                                let hi = ho * sh + kh - 1;
                                let in_off = (ti * d.h + hi) * d.w;
                                let in_row = &in_c[in_off..in_off + d.w];
                                let dout_row = &dout_c[(to * od.h + ho) * od.w..][..od.w];
                                for kw in 0..3 {
                                    let (wlo, whi) = valid(kw, sw, d.w, od.w);
                                    let mut acc = 0.0;
                                    for wo in wlo..whi {
                                        acc += dout_row[wo] * in_row[wo * sw + kw - 1];
                                    }
                                    gk[kt * 9 + kh * 3 + kw] += acc;
                                    if let Some(dx) = dx.as_deref_mut() {
                                        let w = wk[kt * 9 + kh * 3 + kw];
                                        let dx_row = &mut dx[ci * ip + in_off..][..d.w];
                                        for wo in wlo..whi {
                                            dx_row[wo * sw + kw - 1] += w * dout_row[wo];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                for (g, v) in grads.weight.data[base..base + 27].iter_mut().zip(gk) {
                    *g += v;
                }
            }
        }
    }
}

/// Small 3D convolutional encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Toy3d {
    pub convs: Vec<Conv3d>,
    /// `2048 x C_last`
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Toy3dCache {
    input: Vec<f64>,
    input_dims: Vol,
    /// Post-ReLU activations and their shapes, one per stage.
    acts: Vec<(Vec<f64>, Vol)>,
    pooled: Vec<f64>,
}

impl Toy3d {
    /// He-uniform convolutions, fan-in scaled projection, zero biases.
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if config.variant != EncoderVariant::Toy3d {
            return Err(Error::config(
                "the external encoder variant has no built-in weights; supply a VideoEncoder implementation",
            ));
        }
        let mut convs = Vec::new();
        let mut cin = 3;
        for (i, stage) in config.stages.iter().enumerate() {
            let fan_in = (cin * 27) as f64;
            convs.push(Conv3d {
                weight: Tensor::uniform(
                    &[stage.channels, cin, 3, 3, 3],
                    (6.0 / fan_in).sqrt(),
                    seed,
                    &format!("encoder.conv{i}.weight"),
                ),
                bias: Tensor::zeros(&[stage.channels]),
                stride: stage.stride,
            });
            cin = stage.channels;
        }
        Ok(Self {
            convs,
            proj_weight: Tensor::uniform(
                &[config.output_dim, cin],
                (1.0 / cin as f64).sqrt(),
                seed,
                "encoder.proj.weight",
            ),
            proj_bias: Tensor::zeros(&[config.output_dim]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }
}

impl Parameters for Toy3d {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut v = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            v.push((format!("conv{i}.weight"), &c.weight));
            v.push((format!("conv{i}.bias"), &c.bias));
        }
        v.push(("proj.weight".into(), &self.proj_weight));
        v.push(("proj.bias".into(), &self.proj_bias));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        for c in &mut self.convs {
            v.push(&mut c.weight);
            v.push(&mut c.bias);
        }
        v.push(&mut self.proj_weight);
        v.push(&mut self.proj_bias);
        v
    }
}

impl VideoEncoder for Toy3d {
    type Cache = Toy3dCache;

    fn output_dim(&self) -> usize {
        self.proj_bias.len()
    }

    fn forward(&self, clip: &ClipTensor) -> (Vec<f64>, Toy3dCache) {
        let input_dims = Vol {
            c: 3,
            t: clip.frames,
            h: clip.height,
            w: clip.width,
        };
        let mut acts: Vec<(Vec<f64>, Vol)> = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (x, d) = match acts.last() {
                Some((a, d)) => (a.as_slice(), *d),
                None => (clip.data.as_slice(), input_dims),
            };
            let (mut z, od) = conv.forward(x, d);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            acts.push((z, od));
        }
        let (last, ld) = acts.last().expect("at least one stage");
        let plane = ld.plane();
        let pooled: Vec<f64> = last
            .chunks_exact(plane)
            .map(|c| c.iter().sum::<f64>() / plane as f64)
            .collect();
        let cl = pooled.len();
        let out = (0..self.output_dim())
            .map(|o| crate::params::dot(&self.proj_weight.data[o * cl..(o + 1) * cl], &pooled) + self.proj_bias.data[o])
            .collect();
        (
            out,
            Toy3dCache {
                input: clip.data.clone(),
                input_dims,
                acts,
                pooled,
            },
        )
    }

    fn backward(&self, cache: &Toy3dCache, grad_out: &[f64], grads: &mut Self) {
        let cl = cache.pooled.len();
        let mut dpooled = vec![0.0; cl];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grads.proj_bias.data[o] += g;
            crate::params::axpy(g, &cache.pooled, &mut grads.proj_weight.data[o * cl..(o + 1) * cl]);
            crate::params::axpy(g, &self.proj_weight.data[o * cl..(o + 1) * cl], &mut dpooled);
        }

        let (_, ld) = cache.acts.last().expect("at least one stage");
        let plane = ld.plane();
        let mut dact: Vec<f64> = dpooled
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g / plane as f64, plane))
            .collect();

        for s in (0..self.convs.len()).rev() {
            let (act, _) = &cache.acts[s];
            for (d, a) in dact.iter_mut().zip(act) {
                if *a <= 0.0 {
                    *d = 0.0;
                }
            }
            let (x, xd) = if s == 0 {
                (cache.input.as_slice(), cache.input_dims)
            } else {
                (cache.acts[s - 1].0.as_slice(), cache.acts[s - 1].1)
            };
            if s == 0 {
                self.convs[0].backward(x, xd, &dact, &mut grads.convs[0], None);
            } else {
                let mut dx = vec![0.0; xd.len()];
                self.convs[s].backward(x, xd, &dact, &mut grads.convs[s], Some(&mut dx));
                dact = dx;
            }
        }
    }
}

/// Relative-error floor for gradient checks: entries below it are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Largest relative error between analytic parameter gradients of
/// `sum(outputs)` and central finite differences with the given step.
pub fn encoder_grad_check(encoder: &Toy3d, input: &ClipTensor, step: f64) -> f64 {
    let loss = |e: &Toy3d| e.forward(input).0.iter().sum::<f64>();
    let (out, cache) = encoder.forward(input);
    let mut grads = encoder.zeros_like();
    encoder.backward(&cache, &vec![1.0; out.len()], &mut grads);
    let analytic = grads.flatten();

    let mut probe = encoder.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = with_param_mut(&mut probe, i, |p| {
            let o = *p;
            *p = o + step;
            o
        });
        let plus = loss(&probe);
        with_param_mut(&mut probe, i, |p| *p = orig - step);
        let minus = loss(&probe);
        with_param_mut(&mut probe, i, |p| *p = orig);
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(a, numeric, GRAD_CHECK_FLOOR));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed_keys;
    use rand::Rng;

    fn random_clip(frames: usize, size: usize, seed: u64) -> ClipTensor {
        let mut rng = crate::seed::rng(seed_keys!(seed, "clip"));
        let data = (0..3 * frames * size * size).map(|_| rng.random::<f64>()).collect();
        ClipTensor {
            frames,
            height: size,
            width: size,
            data,
        }
    }

    fn tiny() -> Toy3d {
        Toy3d::new(&EncoderConfig::with_widths([2, 3, 3, 4]), 7).unwrap()
    }

    /// Direct 7-loop convolution used as an independent reference.
    fn conv_reference(conv: &Conv3d, x: &[f64], d: Vol) -> Vec<f64> {
        let od = conv.out_dims(d);
        let [st, sh, sw] = conv.stride;
        let mut out = vec![0.0; od.len()];
        for co in 0..od.c {
            for to in 0..od.t {
                for ho in 0..od.h {
                    for wo in 0..od.w {
                        let mut acc = conv.bias.data[co];
                        for ci in 0..d.c {
                            for kt in 0..3 {
                                for kh in 0..3 {
                                    for kw in 0..3 {
                                        let ti = (to * st + kt) as isize - 1;
                                        let hi = (ho * sh + kh) as isize - 1;
                                        let wi = (wo * sw + kw) as isize - 1;
                                        if ti < 0 || hi < 0 || wi < 0 {
                                            continue;
                                        }
                                        let (ti, hi, wi) = (ti as usize, hi as usize, wi as usize);
                                        if ti >= d.t || hi >= d.h || wi >= d.w {
                                            continue;
                                        }
                                        acc += conv.weight.data[(co * d.c + ci) * 27 + kt * 9 + kh * 3 + kw]
                                            * x[ci * d.plane() + (ti * d.h + hi) * d.w + wi];
                                    }
                                }
                            }
                        }
                        out[co * od.plane() + (to * od.h + ho) * od.w + wo] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_reference_for_all_strides() {
        let clip = random_clip(5, 9, 1);
        let d = Vol { c: 3, t: 5, h: 9, w: 9 };
        for stride in [[1, 1, 1], [1, 2, 2], [2, 2, 2], [2, 1, 3]] {
            let conv = Conv3d {
                weight: Tensor::uniform(&[2, 3, 3, 3, 3], 1.0, 3, "w"),
                bias: Tensor::uniform(&[2], 1.0, 3, "b"),
                stride,
            };
            let (fast, _) = conv.forward(&clip.data, d);
            let slow = conv_reference(&conv, &clip.data, d);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "stride {stride:?}");
            }
        }
    }

    #[test]
    fn batch_of_four_gives_2048_finite_rows() {
        let enc = Toy3d::new(&EncoderConfig::desk(), 1).unwrap();
        let clips = (0..4).map(|i| random_clip(4, 32, i)).collect();
        let out = encode(&EncoderInput::new(clips).unwrap(), &enc).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out
            .rows
            .iter()
            .all(|r| r.len() == 2048 && r.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn identical_clips_give_identical_rows_and_batch_permutes() {
        let enc = tiny();
        let a = random_clip(4, 16, 1);
        let b = random_clip(4, 16, 2);
        let out = encode(&EncoderInput::new(vec![a.clone(), b.clone(), a.clone()]).unwrap(), &enc).unwrap();
        assert_eq!(out.rows[0], out.rows[2]);
        let swapped = encode(&EncoderInput::new(vec![b, a]).unwrap(), &enc).unwrap();
        assert_eq!(swapped.rows[0], out.rows[1]);
        assert_eq!(swapped.rows[1], out.rows[0]);
    }

    #[test]
    fn zero_input_rows_are_equal() {
        let enc = tiny();
        let z = ClipTensor {
            frames: 4,
            height: 16,
            width: 16,
            data: vec![0.0; 3 * 4 * 16 * 16],
        };
        let out = encode(&EncoderInput::new(vec![z.clone(), z]).unwrap(), &enc).unwrap();
        assert_eq!(out.rows[0], out.rows[1]);
        // zero biases everywhere -> zero output
        assert!(out.rows[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frame_order_matters() {
        let enc = tiny();
        let clip = random_clip(4, 16, 5);
        let plane = 16 * 16;
        let mut rev = clip.clone();
        for c in 0..3 {
            for t in 0..4 {
                let src = &clip.data[c * 4 * plane + (3 - t) * plane..][..plane];
                rev.data[c * 4 * plane + t * plane..][..plane].copy_from_slice(src);
            }
        }
        let a = enc.forward(&clip).0;
        let b = enc.forward(&rev).0;
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(dist > 1e-12, "{dist}");
    }

    #[test]
    fn input_validation() {
        let a = random_clip(4, 16, 1);
        let b = random_clip(5, 16, 1);
        assert!(matches!(EncoderInput::new(vec![a.clone(), b]), Err(Error::Shape(_))));
        let mut nan = a;
        nan.data[3] = f64::NAN;
        assert!(matches!(EncoderInput::new(vec![nan]), Err(Error::NonFinite(_))));
        let bad = EncoderConfig {
            output_dim: 0,
            ..EncoderConfig::desk()
        };
        assert!(Toy3d::new(&bad, 0).is_err());
        let ext = EncoderConfig {
            variant: EncoderVariant::External,
            ..EncoderConfig::desk()
        };
        assert!(Toy3d::new(&ext, 0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let enc = tiny();
        let clip = random_clip(4, 32, 3);
        let err = encoder_grad_check(&enc, &clip, 1e-6);
        assert!(err < 1e-3, "max relative error {err}");
    }

    #[test]
    fn zero_weights_leave_only_output_bias_gradient() {
        let mut enc = tiny();
        enc.zero();
        let clip = random_clip(4, 16, 3);
        let (out, cache) = enc.forward(&clip);
        let mut g = enc.zeros_like();
        enc.backward(&cache, &vec![1.0; out.len()], &mut g);
        for (name, t) in g.named_tensors() {
            if name == "proj.bias" {
                assert!(t.data.iter().all(|v| *v == 1.0));
            } else {
                assert!(t.data.iter().all(|v| *v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn gradients_are_deterministic() {
        let enc = tiny();
        let clip = random_clip(4, 16, 8);
        let run = || {
            let (out, cache) = enc.forward(&clip);
            let mut g = enc.zeros_like();
            enc.backward(&cache, &vec![1.0; out.len()], &mut g);
            g.flatten()
        };
        assert_eq!(run(), run());
    }
}
