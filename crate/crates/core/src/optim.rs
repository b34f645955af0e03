//! Adam.

use serde::{Deserialize, Serialize};

use crate::params::{Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new<P: Parameters>(config: AdamConfig, params: &P) -> Self {
        let zeros: Vec<Tensor> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(&t.shape))
            .collect();
        Self {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let gs = grads.named_tensors();
        for (k, p) in params.tensors_mut().into_iter().enumerate() {
            let g = &gs[k].1.data;
            let m = &mut self.m[k].data;
            let v = &mut self.v[k].data;
            for i in 0..p.data.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.data[i] -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

/// Scale `grads` so its global L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads
        .named_tensors()
        .iter()
        .flat_map(|(_, t)| t.data.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quad(Tensor);

    impl Parameters for Quad {
        fn named_tensors(&self) -> Vec<(String, &Tensor)> {
            vec![("x".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Quad(Tensor::from_vec(&[2], vec![1.0, -1.0]));
        let g = Quad(Tensor::from_vec(&[2], vec![0.5, -3.0]));
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), &p);
        opt.update(&mut p, &g);
        assert!((p.0.data[0] - 0.9).abs() < 1e-6);
        assert!((p.0.data[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = Quad(Tensor::from_vec(&[3], vec![3.0, -2.0, 0.5]));
        let mut opt = Adam::new(AdamConfig::with_lr(0.05), &p);
        for _ in 0..2000 {
            let g = Quad(Tensor::from_vec(&[3], p.0.data.iter().map(|x| 2.0 * x).collect()));
            opt.update(&mut p, &g);
        }
        assert!(p.0.data.iter().all(|x| x.abs() < 1e-2));
    }

    #[test]
    fn clipping() {
        let mut g = Quad(Tensor::from_vec(&[2], vec![3.0, 4.0]));
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g.0.data[0] - 0.6).abs() < 1e-15);
        let mut small = Quad(Tensor::from_vec(&[2], vec![0.3, 0.4]));
        clip_grad_norm(&mut small, 1.0);
        assert_eq!(small.0.data, vec![0.3, 0.4]);
    }
}
