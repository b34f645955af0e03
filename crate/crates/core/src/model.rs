//! Encoder, multi-view expansion and attention heads trained as one network.

use serde::{Deserialize, Serialize};

use crate::attention::{pairwise_att, pairwise_att_backward, HeadDims, HeadParams};
use crate::clips::Label;
use crate::contrastive::{contrastive_terms, total_loss, BatchPartition, LossBreakdown};
use crate::encoder::{ClipTensor, EncoderConfig, Toy3d, VideoEncoder};
use crate::error::{Error, Result};
use crate::mve::{bce_logit_grad, bce_loss, MveDims, MveParams};
use crate::params::{prefixed, Parameters, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "EncoderConfig::desk")]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub mve: MveDims,
    #[serde(default)]
    pub attention: HeadDims,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::desk(),
            mve: MveDims::default(),
            attention: HeadDims::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.mve.validate()?;
        self.attention.validate()?;
        if self.encoder.output_dim != self.mve.rep_dim {
            return Err(Error::config(format!(
                "encoder output_dim {} does not match mve rep_dim {}",
                self.encoder.output_dim, self.mve.rep_dim
            )));
        }
        if self.mve.views != self.attention.input_dim {
            return Err(Error::config(format!(
                "mve views {} does not match attention input_dim {}",
                self.mve.views, self.attention.input_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: Toy3d,
    pub mve: MveParams,
    pub attention: HeadParams,
}

impl Parameters for Model {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = prefixed("encoder", self.encoder.named_tensors());
        out.extend(prefixed("mve", self.mve.named_tensors()));
        out.extend(prefixed("attention", self.attention.named_tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.mve.tensors_mut());
        out.extend(self.attention.tensors_mut());
        out
    }
}

/// Per-clip forward result.
#[derive(Debug, Clone)]
pub struct ClipPrediction {
    pub representation: Vec<f64>,
    pub fused: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

/// One labelled clip of a training batch.
#[derive(Debug, Clone)]
pub struct Sample {
    pub clip: ClipTensor,
    pub label: Label,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            encoder: Toy3d::new(&config.encoder, seed)?,
            mve: MveParams::new(config.mve, seed)?,
            attention: HeadParams::new(config.attention, seed)?,
            config,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.zero();
        z
    }

    pub fn predict(&self, clip: &ClipTensor) -> Result<ClipPrediction> {
        let (rep, _) = self.encoder.forward(clip);
        let out = self.mve.forward(&rep)?;
        Ok(ClipPrediction {
            representation: rep,
            fused: out.z,
            logit: out.logit,
            prob: out.prob,
        })
    }

    /// Losses of a batch and the gradient of `L_total` with respect to every parameter.
    ///
    /// Per-sample work runs through [`crate::parallel`]; per-sample gradients
    /// are summed in batch order so the result does not depend on scheduling.
    pub fn batch_gradients(&self, batch: &[Sample], alpha: f64, tau: f64) -> Result<(LossBreakdown, Model)> {
        if batch.len() < 2 {
            return Err(Error::InvalidInput("a batch needs at least 2 clips".into()));
        }
        total_loss(0.0, 0.0, alpha)?;
        let forwards = crate::parallel::try_map(batch, |s| {
            let (rep, cache) = self.encoder.forward(&s.clip);
            let out = self.mve.forward(&rep)?;
            Ok((rep, cache, out))
        })?;

        let labels: Vec<Label> = batch.iter().map(|s| s.label).collect();
        let partition = BatchPartition::from_labels(&labels);
        let fused: Vec<Vec<f64>> = forwards.iter().map(|f| f.2.z.clone()).collect();
        let (scores, att_cache) = pairwise_att(&fused, &self.attention)?;
        let terms = contrastive_terms(&scores, &partition, tau)?;

        let n = batch.len() as f64;
        let l_ce = forwards
            .iter()
            .zip(&labels)
            .map(|(f, l)| bce_loss(f.2.prob, l.as_f64()))
            .sum::<f64>()
            / n;
        let l_total = total_loss(terms.l_in, l_ce, alpha)?;
        let breakdown = LossBreakdown {
            l_r: terms.l_r,
            l_f: terms.l_f,
            l_in: terms.l_in,
            l_ce,
            l_total,
            alpha,
            tau,
        };

        let mut grads = self.zeros_like();
        let mut g_att = terms.grad;
        g_att.scores.iter_mut().for_each(|g| *g *= alpha);
        let dz = pairwise_att_backward(&fused, &att_cache, &g_att, &self.attention, &mut grads.attention);

        let idx: Vec<usize> = (0..batch.len()).collect();
        let per_sample = crate::parallel::map(&idx, |&i| {
            let (rep, cache, out) = &forwards[i];
            let mut g = Model {
                config: self.config.clone(),
                encoder: self.encoder.zeros_like(),
                mve: self.mve.zeros_like(),
                attention: HeadParams::new(self.config.attention, 0)
                    .map(|h| h.zeros_like())
                    .expect("validated dims"),
            };
            let dlogit = (1.0 - alpha) * bce_logit_grad(out.prob, labels[i].as_f64()) / n;
            let drep = self.mve.backward(rep, out, &dz[i], dlogit, &mut g.mve);
            self.encoder.backward(cache, &drep, &mut g.encoder);
            (g.encoder, g.mve)
        });
        for (enc, mve) in &per_sample {
            grads.encoder.accumulate(enc);
            grads.mve.accumulate(mve);
        }
        if !l_total.is_finite() || !grads.all_finite() {
            return Err(Error::NonFinite(format!("loss {l_total}")));
        }
        Ok((breakdown, grads))
    }

    /// Copy every named array from `arrays` into the model. All names must match.
    pub fn load_arrays(&mut self, arrays: &[(String, Tensor)]) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape.clone()))
            .collect();
        let mut found = 0;
        for (k, dst) in self.tensors_mut().into_iter().enumerate() {
            let (name, shape) = &names[k];
            let src = arrays
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::InvalidInput(format!("array {name} missing")))?;
            if &src.1.shape != shape {
                return Err(Error::Shape(format!(
                    "array {name}: shape {:?}, expected {shape:?}",
                    src.1.shape
                )));
            }
            dst.data.copy_from_slice(&src.1.data);
            found += 1;
        }
        debug_assert_eq!(found, names.len());
        Ok(())
    }
}
