//! Built-in numerical checks run by `uci selfcheck`.

use rand::Rng;
use serde::Serialize;

use crate::attention::{head_grad_check, AttentionMatrix, HeadDims, HeadParams};
use crate::clips::Label;
use crate::contrastive::{equal_score_closed_form, loss_fake, loss_real, BatchPartition, DEFAULT_TAU};
use crate::encoder::{encoder_grad_check, ClipTensor, EncoderConfig, Toy3d};
use crate::error::Result;
use crate::eval::auc_of;
use crate::mve::{chain_grad_check, Bce, MveDims, MveParams};
use crate::params::Parameters;
use crate::seed_keys;

/// Relative-error bound for every gradient check.
pub const GRAD_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

pub struct Options {
    pub bce: Bce,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            bce: Bce::STANDARD,
            seed: 0,
        }
    }
}

pub fn run(opts: &Options) -> Vec<Check> {
    vec![
        Check::from_result("contrastive closed form", closed_form()),
        Check::from_result("contrastive small-loss value", small_loss()),
        Check::from_result("bce values", bce_values(opts.bce)),
        Check::from_result("mve chain gradient", mve_chain(opts)),
        Check::from_result("head gradient", head_gradient(opts.seed)),
        Check::from_result("encoder gradient", encoder_gradient(opts.seed)),
        Check::from_result("auc vs pairwise count", auc_oracle(opts.seed)),
    ]
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

fn closed_form() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for n in 2..=4 {
        let scores = AttentionMatrix::from_fn(2 * n, |_, _| 0.7);
        let part = BatchPartition::new((0..n).collect(), (n..2 * n).collect())?;
        let expect = equal_score_closed_form(n);
        worst = worst
            .max((loss_real(&scores, &part, DEFAULT_TAU)? - expect).abs())
            .max((loss_fake(&scores, &part, DEFAULT_TAU)? - expect).abs());
    }
    Ok((worst < 1e-9, format!("max abs error {worst:.3e}")))
}

fn small_loss() -> Result<(bool, String)> {
    let scores = AttentionMatrix::from_fn(4, |i, j| if i < 2 && j < 2 { 1.0 } else { 0.0 });
    let part = BatchPartition::new(vec![0, 1], vec![2, 3])?;
    let got = loss_real(&scores, &part, DEFAULT_TAU)?;
    let expect = (2.0 * (-10.0f64).exp()).ln_1p();
    let err = (got - expect).abs() / expect;
    Ok((err < 1e-9, format!("{got:.6e} vs {expect:.6e}")))
}

fn bce_values(bce: Bce) -> Result<(bool, String)> {
    let half = (bce.loss)(0.5, 1.0);
    let grad_pos = (bce.logit_grad)(0.8, 1.0);
    let grad_neg = (bce.logit_grad)(0.8, 0.0);
    let ok = (half - std::f64::consts::LN_2).abs() < 1e-12
        && (grad_pos + 0.2).abs() < 1e-12
        && (grad_neg - 0.8).abs() < 1e-12;
    Ok((
        ok,
        format!("L(0.5,1)={half:.6} dL/dz(0.8,1)={grad_pos:.3} dL/dz(0.8,0)={grad_neg:.3}"),
    ))
}

fn mve_chain(opts: &Options) -> Result<(bool, String)> {
    let dims = MveDims {
        rep_dim: 24,
        views: 8,
        ratio: 4,
        kernel: 3,
    };
    let mut params = MveParams::new(dims, opts.seed)?;
    let mut rng = crate::seed::rng(seed_keys!(opts.seed, "selfcheck", "mve"));
    for t in params.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let rep: Vec<f64> = (0..dims.rep_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    for label in [0.0, 1.0] {
        worst = worst.max(chain_grad_check(&params, &rep, label, opts.bce, 1e-5)?);
    }
    Ok((worst < GRAD_TOLERANCE, format!("max relative error {worst:.3e}")))
}

fn head_gradient(seed: u64) -> Result<(bool, String)> {
    let dims = HeadDims {
        heads: 2,
        head_dim: 8,
        input_dim: 16,
        ..HeadDims::default()
    };
    let params = HeadParams::new(dims, seed)?;
    let mut rng = crate::seed::rng(seed_keys!(seed, "selfcheck", "head"));
    let z: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z2: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    for h in 0..dims.heads {
        worst = worst.max(head_grad_check(&z, &z2, h, &params, 1e-5)?);
    }
    Ok((worst < GRAD_TOLERANCE, format!("max relative error {worst:.3e}")))
}

fn encoder_gradient(seed: u64) -> Result<(bool, String)> {
    let config = EncoderConfig {
        output_dim: 16,
        ..EncoderConfig::with_widths([2, 2, 3, 3])
    };
    let mut enc = Toy3d::new(&config, seed)?;
    let mut rng = crate::seed::rng(seed_keys!(seed, "selfcheck", "encoder"));
    // move zero biases off the ReLU kink
    for t in enc.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    }
    let (frames, size) = (4, 16);
    let clip = ClipTensor {
        frames,
        height: size,
        width: size,
        data: (0..3 * frames * size * size).map(|_| rng.random::<f64>()).collect(),
    };
    let worst = encoder_grad_check(&enc, &clip, 1e-6);
    Ok((worst < GRAD_TOLERANCE, format!("max relative error {worst:.3e}")))
}

fn pairwise_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (s, l) in scores.iter().zip(labels) {
        if *l != Label::Fake {
            continue;
        }
        for (t, m) in scores.iter().zip(labels) {
            if *m == Label::Real {
                pairs += 1.0;
                wins += if s > t {
                    1.0
                } else if s == t {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn auc_oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = crate::seed::rng(seed_keys!(seed, "selfcheck", "auc"));
    let mut mismatches = 0;
    let trials = 50;
    for _ in 0..trials {
        let n = rng.random_range(2..=100);
        let mut labels: Vec<Label> = (0..n)
            .map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake })
            .collect();
        labels[0] = Label::Real;
        labels[1] = Label::Fake;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
        if auc_of(&scores, &labels)? != pairwise_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of {trials} score sets differ")))
}
