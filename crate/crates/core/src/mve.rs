//! Multi-view expansion.
//!
//! A representation `I` (length `rep_dim`, 2048 by default) is lifted by a
//! 1-D convolution (1 -> `views` channels, same padding) into a map of
//! `views` vectors of length `rep_dim`. Squeeze-and-excitation produces one
//! weight per view,
//!
//! ```text
//! W = sigmoid(fc_r(fc_c(GAP(I_mv^T))))
//! ```
//!
//! and each view `v` is fused as `v + v * W[v]` and projected to a scalar by
//! a projection shared across views, giving `Z` (length `views`). A linear
//! classifier on `Z` followed by a sigmoid gives the fake probability.
//!
//! Everything before the sigmoid gate is linear in `I`, so the training path
//! ([`MveParams::forward`]) never materialises the `rep_dim x views` map: the
//! pooled view descriptors and the projected views are obtained from
//! `kernel` shifted sums of `I`. The explicit route ([`expand`],
//! [`se_weights`], [`fuse`]) is kept for inspection and for checking the
//! fast path.

use serde::{Deserialize, Serialize};

use crate::encoder::REPRESENTATION_DIM;
use crate::error::{Error, Result};
use crate::params::{dot, sigmoid, Parameters, Tensor};

/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MveDims {
    pub rep_dim: usize,
    pub views: usize,
    /// Compression ratio `r`; the squeeze layer has `views / r` units.
    pub ratio: usize,
    /// Odd kernel size of the expansion convolution.
    pub kernel: usize,
}

impl Default for MveDims {
    fn default() -> Self {
        Self {
            rep_dim: REPRESENTATION_DIM,
            views: 512,
            ratio: 4,
            kernel: 3,
        }
    }
}

impl MveDims {
    pub fn squeezed(&self) -> usize {
        self.views / self.ratio
    }

    pub fn validate(&self) -> Result<()> {
        if self.rep_dim == 0 || self.views == 0 {
            return Err(Error::config("mve rep_dim and views must be positive"));
        }
        if self.ratio == 0 || !self.views.is_multiple_of(self.ratio) {
            return Err(Error::config(format!(
                "compression ratio {} must divide views {}",
                self.ratio, self.views
            )));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::config("expansion kernel must be odd"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MveParams {
    pub dims: MveDims,
    /// `views x kernel`
    pub conv_weight: Tensor,
    pub conv_bias: Tensor,
    /// `views/r x views`
    pub fc_c_weight: Tensor,
    pub fc_c_bias: Tensor,
    /// `views x views/r`
    pub fc_r_weight: Tensor,
    pub fc_r_bias: Tensor,
    /// Per-view projection `rep_dim -> 1`, shared by all views.
    pub fc_weight: Tensor,
    pub fc_bias: Tensor,
    pub cls_weight: Tensor,
    pub cls_bias: Tensor,
}

impl MveParams {
    pub fn new(dims: MveDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let (v, s, k, n) = (dims.views, dims.squeezed(), dims.kernel, dims.rep_dim);
        let u = |shape: &[usize], fan_in: usize, name: &str| {
            Tensor::uniform(shape, (1.0 / fan_in as f64).sqrt(), seed, name)
        };
        Ok(Self {
            dims,
            conv_weight: u(&[v, k], k, "mve.conv.weight"),
            conv_bias: Tensor::zeros(&[v]),
            fc_c_weight: u(&[s, v], v, "mve.fc_c.weight"),
            fc_c_bias: Tensor::zeros(&[s]),
            fc_r_weight: u(&[v, s], s, "mve.fc_r.weight"),
            fc_r_bias: Tensor::zeros(&[v]),
            fc_weight: u(&[n], n, "mve.fc.weight"),
            fc_bias: Tensor::zeros(&[1]),
            cls_weight: u(&[v], v, "mve.cls.weight"),
            cls_bias: Tensor::zeros(&[1]),
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    /// Offset of kernel tap `k` relative to the centre.
    fn offset(&self, k: usize) -> isize {
        k as isize - (self.dims.kernel / 2) as isize
    }
}

impl Parameters for MveParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("conv.weight".into(), &self.conv_weight),
            ("conv.bias".into(), &self.conv_bias),
            ("fc_c.weight".into(), &self.fc_c_weight),
            ("fc_c.bias".into(), &self.fc_c_bias),
            ("fc_r.weight".into(), &self.fc_r_weight),
            ("fc_r.bias".into(), &self.fc_r_bias),
            ("fc.weight".into(), &self.fc_weight),
            ("fc.bias".into(), &self.fc_bias),
            ("cls.weight".into(), &self.cls_weight),
            ("cls.bias".into(), &self.cls_bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.conv_weight,
            &mut self.conv_bias,
            &mut self.fc_c_weight,
            &mut self.fc_c_bias,
            &mut self.fc_r_weight,
            &mut self.fc_r_bias,
            &mut self.fc_weight,
            &mut self.fc_bias,
            &mut self.cls_weight,
            &mut self.cls_bias,
        ]
    }
}

/// `I_mv`, stored view-major: `views[c]` is the length-`rep_dim` view `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewMap {
    pub views: Vec<Vec<f64>>,
}

impl MultiViewMap {
    /// `(rep_dim, views)`
    pub fn shape(&self) -> (usize, usize) {
        (self.views.first().map_or(0, Vec::len), self.views.len())
    }
}

/// View weights, each strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewWeights(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct FusedRepresentation(pub Vec<f64>);

fn check_finite(xs: &[f64], what: &str) -> Result<()> {
    if xs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Explicit expansion convolution.
pub fn expand(rep: &[f64], params: &MveParams) -> Result<MultiViewMap> {
    if rep.len() != params.dims.rep_dim {
        return Err(Error::Shape(format!(
            "representation has {} entries, expected {}",
            rep.len(),
            params.dims.rep_dim
        )));
    }
    check_finite(rep, "mve input")?;
    let n = rep.len() as isize;
    let k = params.dims.kernel;
    let views = (0..params.dims.views)
        .map(|c| {
            let w = &params.conv_weight.data[c * k..(c + 1) * k];
            (0..n)
                .map(|p| {
                    let mut acc = params.conv_bias.data[c];
                    for (t, wt) in w.iter().enumerate() {
                        let q = p + params.offset(t);
                        if (0..n).contains(&q) {
                            acc += wt * rep[q as usize];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(MultiViewMap { views })
}

/// Global average pool of each view over the representation axis.
pub fn gap(map: &MultiViewMap) -> Vec<f64> {
    map.views
        .iter()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect()
}

fn excite(pooled: &[f64], params: &MveParams) -> (Vec<f64>, Vec<f64>) {
    let (v, s) = (params.dims.views, params.dims.squeezed());
    let squeezed: Vec<f64> = (0..s)
        .map(|j| dot(&params.fc_c_weight.data[j * v..(j + 1) * v], pooled) + params.fc_c_bias.data[j])
        .collect();
    let weights = (0..v)
        .map(|c| sigmoid(dot(&params.fc_r_weight.data[c * s..(c + 1) * s], &squeezed) + params.fc_r_bias.data[c]))
        .collect();
    (squeezed, weights)
}

/// Squeeze-and-excitation view weights.
pub fn se_weights(map: &MultiViewMap, params: &MveParams) -> Result<ViewWeights> {
    if map.views.len() != params.dims.views {
        return Err(Error::Shape(format!(
            "map has {} views, expected {}",
            map.views.len(),
            params.dims.views
        )));
    }
    Ok(ViewWeights(excite(&gap(map), params).1))
}

/// Residual reweighting `v + v * W[v]` before the projection.
pub fn fuse_pre_projection(map: &MultiViewMap, weights: &ViewWeights) -> Result<Vec<Vec<f64>>> {
    if map.views.len() != weights.0.len() {
        return Err(Error::Shape(format!(
            "{} views but {} weights",
            map.views.len(),
            weights.0.len()
        )));
    }
    Ok(map
        .views
        .iter()
        .zip(&weights.0)
        .map(|(v, w)| v.iter().map(|x| x + x * w).collect())
        .collect())
}

/// Fuse and project every view to a scalar.
pub fn fuse(map: &MultiViewMap, weights: &ViewWeights, params: &MveParams) -> Result<FusedRepresentation> {
    let pre = fuse_pre_projection(map, weights)?;
    if let Some(v) = pre.iter().find(|v| v.len() != params.fc_weight.len()) {
        return Err(Error::Shape(format!(
            "view length {} != {}",
            v.len(),
            params.fc_weight.len()
        )));
    }
    Ok(FusedRepresentation(
        pre.iter()
            .map(|v| dot(&params.fc_weight.data, v) + params.fc_bias.data[0])
            .collect(),
    ))
}

pub fn classifier_logit(z: &[f64], params: &MveParams) -> f64 {
    dot(&params.cls_weight.data, z) + params.cls_bias.data[0]
}

/// Fake probability.
pub fn classify(z: &FusedRepresentation, params: &MveParams) -> f64 {
    sigmoid(classifier_logit(&z.0, params))
}

/// Binary cross-entropy `-[y log p + (1-y) log(1-p)]` with `p` clamped to `[eps, 1-eps]`.
pub fn bce_loss(prob: f64, label: f64) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// d bce / d logit, consistent with the clamp in [`bce_loss`].
pub fn bce_logit_grad(prob: f64, label: f64) -> f64 {
    if prob <= BCE_EPS || prob >= 1.0 - BCE_EPS {
        0.0
    } else {
        prob - label
    }
}

/// Forward intermediates of the fast path.
#[derive(Debug, Clone)]
pub struct MveCache {
    /// Shifted means of `I`, one per kernel tap.
    shift_means: Vec<f64>,
    /// Shifted projections `sum_p fc[p] I[p + off]`, one per tap.
    shift_proj: Vec<f64>,
    fc_sum: f64,
    pooled: Vec<f64>,
    squeezed: Vec<f64>,
    weights: Vec<f64>,
    /// Projection of each un-gated view.
    base: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MveOutput {
    pub z: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
    pub cache: MveCache,
}

impl MveCache {
    pub fn view_weights(&self) -> &[f64] {
        &self.weights
    }
}

impl MveParams {
    /// Range of `p` with `0 <= p + off < n`.
    fn shifted(&self, n: usize, off: isize) -> std::ops::Range<usize> {
        let lo = (-off).max(0) as usize;
        let hi = (n as isize - off).clamp(0, n as isize) as usize;
        lo..hi.max(lo)
    }

    /// Factored forward pass: `I -> (Z, logit, prob)`.
    pub fn forward(&self, rep: &[f64]) -> Result<MveOutput> {
        let d = self.dims;
        if rep.len() != d.rep_dim {
            return Err(Error::Shape(format!(
                "representation has {} entries, expected {}",
                rep.len(),
                d.rep_dim
            )));
        }
        check_finite(rep, "mve input")?;
        let n = d.rep_dim;
        let k = d.kernel;
        let f = &self.fc_weight.data;

        let mut shift_means = Vec::with_capacity(k);
        let mut shift_proj = Vec::with_capacity(k);
        for t in 0..k {
            let off = self.offset(t);
            let r = self.shifted(n, off);
            let src = (r.start as isize + off) as usize;
            let len = r.len();
            shift_means.push(rep[src..src + len].iter().sum::<f64>() / n as f64);
            shift_proj.push(dot(&f[r.clone()], &rep[src..src + len]));
        }
        let fc_sum: f64 = f.iter().sum();

        let taps = |c: usize, xs: &[f64]| -> f64 { dot(&self.conv_weight.data[c * k..(c + 1) * k], xs) };
        let pooled: Vec<f64> = (0..d.views)
            .map(|c| taps(c, &shift_means) + self.conv_bias.data[c])
            .collect();
        let (squeezed, weights) = excite(&pooled, self);
        let base: Vec<f64> = (0..d.views)
            .map(|c| taps(c, &shift_proj) + self.conv_bias.data[c] * fc_sum)
            .collect();
        let z: Vec<f64> = base
            .iter()
            .zip(&weights)
            .map(|(b, w)| (1.0 + w) * b + self.fc_bias.data[0])
            .collect();
        let logit = classifier_logit(&z, self);
        Ok(MveOutput {
            prob: sigmoid(logit),
            logit,
            z,
            cache: MveCache {
                shift_means,
                shift_proj,
                fc_sum,
                pooled,
                squeezed,
                weights,
                base,
            },
        })
    }

    /// Backward pass of [`MveParams::forward`] given `dL/dZ` and `dL/dlogit`.
    /// Accumulates into `grads` and returns `dL/dI`.
    pub fn backward(
        &self,
        rep: &[f64],
        out: &MveOutput,
        dz_in: &[f64],
        dlogit: f64,
        grads: &mut MveParams,
    ) -> Vec<f64> {
        let d = self.dims;
        let (n, k, v, s) = (d.rep_dim, d.kernel, d.views, d.squeezed());
        let c = &out.cache;

        // classifier
        let mut dz = dz_in.to_vec();
        grads.cls_bias.data[0] += dlogit;
        for j in 0..v {
            grads.cls_weight.data[j] += dlogit * out.z[j];
            dz[j] += dlogit * self.cls_weight.data[j];
        }

        // Z[c] = (1 + W[c]) * base[c] + fc_bias
        grads.fc_bias.data[0] += dz.iter().sum::<f64>();
        let dw: Vec<f64> = (0..v).map(|j| dz[j] * c.base[j]).collect();
        let dbase: Vec<f64> = (0..v).map(|j| dz[j] * (1.0 + c.weights[j])).collect();

        // excitation
        let da: Vec<f64> = (0..v).map(|j| dw[j] * c.weights[j] * (1.0 - c.weights[j])).collect();
        let mut dsq = vec![0.0; s];
        for j in 0..v {
            grads.fc_r_bias.data[j] += da[j];
            crate::params::axpy(da[j], &c.squeezed, &mut grads.fc_r_weight.data[j * s..(j + 1) * s]);
            crate::params::axpy(da[j], &self.fc_r_weight.data[j * s..(j + 1) * s], &mut dsq);
        }
        let mut dpooled = vec![0.0; v];
        for i in 0..s {
            grads.fc_c_bias.data[i] += dsq[i];
            crate::params::axpy(dsq[i], &c.pooled, &mut grads.fc_c_weight.data[i * v..(i + 1) * v]);
            crate::params::axpy(dsq[i], &self.fc_c_weight.data[i * v..(i + 1) * v], &mut dpooled);
        }

        // pooled[c] = w[c] . shift_means + b[c];  base[c] = w[c] . shift_proj + b[c] * fc_sum
        let mut dmeans = vec![0.0; k];
        let mut dproj = vec![0.0; k];
        let mut dfc_sum = 0.0;
        for j in 0..v {
            let w = &self.conv_weight.data[j * k..(j + 1) * k];
            let gw = &mut grads.conv_weight.data[j * k..(j + 1) * k];
            for t in 0..k {
                gw[t] += dpooled[j] * c.shift_means[t] + dbase[j] * c.shift_proj[t];
                dmeans[t] += dpooled[j] * w[t];
                dproj[t] += dbase[j] * w[t];
            }
            grads.conv_bias.data[j] += dpooled[j] + dbase[j] * c.fc_sum;
            dfc_sum += dbase[j] * self.conv_bias.data[j];
        }

        let mut drep = vec![0.0; n];
        let f = &self.fc_weight.data;
        let gf = &mut grads.fc_weight.data;
        gf.iter_mut().for_each(|g| *g += dfc_sum);
        for t in 0..k {
            let off = self.offset(t);
            for p in self.shifted(n, off) {
                let q = (p as isize + off) as usize;
                gf[p] += dproj[t] * rep[q];
                drep[q] += dproj[t] * f[p] + dmeans[t] / n as f64;
            }
        }
        drep
    }
}

/// A loss and its logit gradient, swappable so checks can be run against a broken pair.
#[derive(Clone, Copy)]
pub struct Bce {
    pub loss: fn(f64, f64) -> f64,
    pub logit_grad: fn(f64, f64) -> f64,
}

impl Bce {
    pub const STANDARD: Bce = Bce {
        loss: bce_loss,
        logit_grad: bce_logit_grad,
    };
}

/// Largest relative error between the factored backward pass of
/// `bce(classify(fuse(se(expand(rep)))))` and central differences through the
/// explicit route, over every parameter and every input entry.
pub fn chain_grad_check(params: &MveParams, rep: &[f64], label: f64, bce: Bce, step: f64) -> Result<f64> {
    let explicit = |p: &MveParams, rep: &[f64]| -> Result<f64> {
        let map = expand(rep, p)?;
        let w = se_weights(&map, p)?;
        Ok((bce.loss)(classify(&fuse(&map, &w, p)?, p), label))
    };
    let out = params.forward(rep)?;
    let mut g = params.zeros_like();
    let zero = vec![0.0; params.dims.views];
    let drep = params.backward(rep, &out, &zero, (bce.logit_grad)(out.prob, label), &mut g);

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for (i, a) in g.flatten().into_iter().enumerate() {
        let orig = crate::params::with_param_mut(&mut probe, i, |x| std::mem::replace(x, 0.0));
        crate::params::with_param_mut(&mut probe, i, |x| *x = orig + step);
        let plus = explicit(&probe, rep)?;
        crate::params::with_param_mut(&mut probe, i, |x| *x = orig - step);
        let minus = explicit(&probe, rep)?;
        crate::params::with_param_mut(&mut probe, i, |x| *x = orig);
        worst = worst.max(crate::params::relative_error(a, (plus - minus) / (2.0 * step), 1e-6));
    }
    let mut r = rep.to_vec();
    for (q, a) in drep.into_iter().enumerate() {
        let orig = r[q];
        r[q] = orig + step;
        let plus = explicit(params, &r)?;
        r[q] = orig - step;
        let minus = explicit(params, &r)?;
        r[q] = orig;
        worst = worst.max(crate::params::relative_error(a, (plus - minus) / (2.0 * step), 1e-6));
    }
    Ok(worst)
}
