//! Multi-head interaction score between fused representations.
//!
//! Head `h` projects a representation with `w_h` (`head_dim x input_dim`) and
//! scores a pair by the scaled dot product `w_h(Z) . w_h(Z') / sqrt(d)`. Head
//! scores are combined into one scalar, by default their mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{axpy, dot, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadCombine {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDims {
    pub heads: usize,
    pub head_dim: usize,
    pub input_dim: usize,
    #[serde(default)]
    pub combine: HeadCombine,
}

impl Default for HeadDims {
    fn default() -> Self {
        Self {
            heads: 8,
            head_dim: 64,
            input_dim: 512,
            combine: HeadCombine::Mean,
        }
    }
}

impl HeadDims {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.head_dim == 0 || self.input_dim == 0 {
            return Err(Error::config(
                "attention heads, head_dim and input_dim must be positive",
            ));
        }
        Ok(())
    }

    /// Factor applied to the summed raw dot products of all heads.
    fn scale(&self) -> f64 {
        let per_head = 1.0 / (self.head_dim as f64).sqrt();
        match self.combine {
            HeadCombine::Mean => per_head / self.heads as f64,
            HeadCombine::Sum => per_head,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub dims: HeadDims,
    /// `heads x head_dim x input_dim`
    pub weight: Tensor,
}

impl HeadParams {
    /// Uniform init in `+-1/sqrt(input_dim)`.
    pub fn new(dims: HeadDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let bound = 1.0 / (dims.input_dim as f64).sqrt();
        Ok(Self {
            dims,
            weight: Tensor::uniform(
                &[dims.heads, dims.head_dim, dims.input_dim],
                bound,
                seed,
                "attention.weight",
            ),
        })
    }

    pub fn from_weights(dims: HeadDims, weight: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        let shape = [dims.heads, dims.head_dim, dims.input_dim];
        if weight.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} weights for head shape {shape:?}",
                weight.len()
            )));
        }
        Ok(Self {
            dims,
            weight: Tensor::from_vec(&shape, weight),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            weight: Tensor::zeros(&self.weight.shape),
        }
    }

    fn head(&self, h: usize) -> &[f64] {
        let n = self.dims.head_dim * self.dims.input_dim;
        &self.weight.data[h * n..(h + 1) * n]
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dims.input_dim {
            return Err(Error::Shape(format!(
                "representation has {} entries, expected {}",
                z.len(),
                self.dims.input_dim
            )));
        }
        Ok(())
    }

    /// `w_h(z)`
    pub fn project(&self, h: usize, z: &[f64]) -> Vec<f64> {
        let m = self.dims.input_dim;
        self.head(h).chunks_exact(m).map(|row| dot(row, z)).collect()
    }

    /// All heads concatenated: `heads * head_dim` entries.
    pub fn project_all(&self, z: &[f64]) -> Vec<f64> {
        let m = self.dims.input_dim;
        self.weight.data.chunks_exact(m).map(|row| dot(row, z)).collect()
    }
}

impl Parameters for HeadParams {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        vec![("weight".into(), &self.weight)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight]
    }
}

/// Pairwise scores over a batch, row-major `len x len`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    pub len: usize,
    pub scores: Vec<f64>,
}

impl AttentionMatrix {
    pub fn from_fn(len: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let scores = (0..len * len).map(|k| f(k / len, k % len)).collect();
        Self { len, scores }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.len + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.scores[i * self.len + j] = v;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.len).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Score of head `h`.
pub fn head_score(z: &[f64], z2: &[f64], h: usize, params: &HeadParams) -> Result<f64> {
    params.check(z)?;
    params.check(z2)?;
    if h >= params.dims.heads {
        return Err(Error::InvalidInput(format!("head {h} out of range")));
    }
    let a = params.project(h, z);
    let b = params.project(h, z2);
    Ok(dot(&a, &b) / (params.dims.head_dim as f64).sqrt())
}

/// Combined score over all heads.
pub fn att(z: &[f64], z2: &[f64], params: &HeadParams) -> Result<f64> {
    params.check(z)?;
    params.check(z2)?;
    let a = params.project_all(z);
    let b = params.project_all(z2);
    Ok(dot(&a, &b) * params.dims.scale())
}

/// Projections of a batch; kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    projections: Vec<Vec<f64>>,
}

/// Batched scores. Row `i` of the result is `att(batch[i], batch[j])` for every `j`.
pub fn pairwise_att(batch: &[Vec<f64>], params: &HeadParams) -> Result<(AttentionMatrix, AttentionCache)> {
    if batch.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pairwise attention needs at least 2 representations, got {}",
            batch.len()
        )));
    }
    for z in batch {
        params.check(z)?;
    }
    let projections: Vec<Vec<f64>> = crate::parallel::map(batch, |z| params.project_all(z));
    let scale = params.dims.scale();
    let b = batch.len();
    let mut m = AttentionMatrix {
        len: b,
        scores: vec![0.0; b * b],
    };
    for i in 0..b {
        for j in 0..=i {
            let s = dot(&projections[i], &projections[j]) * scale;
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    Ok((m, AttentionCache { projections }))
}

/// Backward of [`pairwise_att`] for upstream gradient `grad` (`len x len`).
/// Accumulates into `grads` and returns `dL/dZ_i` for every batch element.
pub fn pairwise_att_backward(
    batch: &[Vec<f64>],
    cache: &AttentionCache,
    grad: &AttentionMatrix,
    params: &HeadParams,
    grads: &mut HeadParams,
) -> Vec<Vec<f64>> {
    let b = batch.len();
    let scale = params.dims.scale();
    let m = params.dims.input_dim;
    let width = cache.projections[0].len();
    // dP_i = scale * sum_j (G_ij + G_ji) P_j
    let dproj: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            let mut d = vec![0.0; width];
            for j in 0..b {
                let g = (grad.get(i, j) + grad.get(j, i)) * scale;
                if g != 0.0 {
                    axpy(g, &cache.projections[j], &mut d);
                }
            }
            d
        })
        .collect();
    for i in 0..b {
        for (r, row) in grads.weight.data.chunks_exact_mut(m).enumerate() {
            if dproj[i][r] != 0.0 {
                axpy(dproj[i][r], &batch[i], row);
            }
        }
    }
    dproj
        .iter()
        .map(|dp| {
            let mut dz = vec![0.0; m];
            for (r, row) in params.weight.data.chunks_exact(m).enumerate() {
                if dp[r] != 0.0 {
                    axpy(dp[r], row, &mut dz);
                }
            }
            dz
        })
        .collect()
}

/// Max relative error between analytic and central-difference gradients of
/// `head_score(z, z2, h)` with respect to the weights of head `h`.
pub fn head_grad_check(z: &[f64], z2: &[f64], h: usize, params: &HeadParams, step: f64) -> Result<f64> {
    let d = params.dims;
    let sqrt_d = (d.head_dim as f64).sqrt();
    let a = params.project(h, z);
    let b = params.project(h, z2);
    let mut probe = params.clone();
    let base = h * d.head_dim * d.input_dim;
    let mut worst: f64 = 0.0;
    for r in 0..d.head_dim {
        for c in 0..d.input_dim {
            let analytic = (b[r] * z[c] + a[r] * z2[c]) / sqrt_d;
            let k = base + r * d.input_dim + c;
            let orig = probe.weight.data[k];
            probe.weight.data[k] = orig + step;
            let plus = head_score(z, z2, h, &probe)?;
            probe.weight.data[k] = orig - step;
            let minus = head_score(z, z2, h, &probe)?;
            probe.weight.data[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(crate::params::relative_error(analytic, numeric, 1e-6));
        }
    }
    Ok(worst)
}
