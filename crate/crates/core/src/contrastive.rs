//! Supervised InfoNCE over real and fake sets plus the combined objective.
//!
//! For an anchor set `P` and the opposite set `N` the set loss is
//!
//! ```text
//! L = -log( sum_{i!=j in P} e^{S_ij/tau} / (sum_{i!=j in P} e^{S_ij/tau} + sum_{i in P, j in N} e^{S_ij/tau}) )
//! ```
//!
//! evaluated as `LSE(all) - LSE(pos)` with max subtraction.

use serde::{Deserialize, Serialize};

use crate::attention::AttentionMatrix;
use crate::clips::Label;
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPartition {
    pub real: Vec<usize>,
    pub fake: Vec<usize>,
}

impl BatchPartition {
    pub fn new(real: Vec<usize>, fake: Vec<usize>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &i in real.iter().chain(&fake) {
            if !seen.insert(i) {
                return Err(Error::InvalidInput(format!(
                    "batch index {i} appears twice in the partition"
                )));
            }
        }
        Ok(Self { real, fake })
    }

    pub fn from_labels(labels: &[Label]) -> Self {
        let pick = |l: Label| {
            labels
                .iter()
                .enumerate()
                .filter(|(_, x)| **x == l)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            real: pick(Label::Real),
            fake: pick(Label::Fake),
        }
    }

    /// Both sets hold at least two elements.
    pub fn supports_contrast(&self) -> bool {
        self.real.len() >= 2 && self.fake.len() >= 2
    }

    pub fn swapped(&self) -> Self {
        Self {
            real: self.fake.clone(),
            fake: self.real.clone(),
        }
    }

    fn check(&self, scores: &AttentionMatrix) -> Result<()> {
        if let Some(i) = self.real.iter().chain(&self.fake).find(|&&i| i >= scores.len) {
            return Err(Error::InvalidInput(format!(
                "index {i} outside a {}x{} score matrix",
                scores.len, scores.len
            )));
        }
        if !scores.scores.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("attention scores".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_r: f64,
    pub l_f: f64,
    pub l_in: f64,
    pub l_ce: f64,
    pub l_total: f64,
    pub alpha: f64,
    pub tau: f64,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn pairs<'a>(
    pos: &'a [usize],
    neg: &'a [usize],
) -> (
    impl Iterator<Item = (usize, usize)> + Clone + 'a,
    impl Iterator<Item = (usize, usize)> + Clone + 'a,
) {
    let positives = pos
        .iter()
        .flat_map(move |&i| pos.iter().filter(move |&&j| j != i).map(move |&j| (i, j)));
    let negatives = pos.iter().flat_map(move |&i| neg.iter().map(move |&j| (i, j)));
    (positives, negatives)
}

/// Set loss and its gradient with respect to every score entry.
fn set_loss(
    scores: &AttentionMatrix,
    pos: &[usize],
    neg: &[usize],
    tau: f64,
    grad: Option<&mut AttentionMatrix>,
) -> f64 {
    let (p, n) = pairs(pos, neg);
    let logit = |(i, j): (usize, usize)| scores.get(i, j) / tau;
    let lse_pos = log_sum_exp(p.clone().map(logit));
    let lse_all = log_sum_exp(p.clone().chain(n.clone()).map(logit));
    if let Some(g) = grad {
        for ij in p {
            let l = logit(ij);
            let v = g.get(ij.0, ij.1) + ((l - lse_all).exp() - (l - lse_pos).exp()) / tau;
            g.set(ij.0, ij.1, v);
        }
        for ij in n {
            let v = g.get(ij.0, ij.1) + (logit(ij) - lse_all).exp() / tau;
            g.set(ij.0, ij.1, v);
        }
    }
    (lse_all - lse_pos).max(0.0)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("temperature must be positive, got {tau}")))
    }
}

/// Loss anchored on the real set.
pub fn loss_real(scores: &AttentionMatrix, partition: &BatchPartition, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    partition.check(scores)?;
    if partition.real.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 real samples, got {}",
            partition.real.len()
        )));
    }
    Ok(set_loss(scores, &partition.real, &partition.fake, tau, None))
}

/// Loss anchored on the fake set.
pub fn loss_fake(scores: &AttentionMatrix, partition: &BatchPartition, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    partition.check(scores)?;
    if partition.fake.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 fake samples, got {}",
            partition.fake.len()
        )));
    }
    Ok(set_loss(scores, &partition.fake, &partition.real, tau, None))
}

pub fn loss_in(l_r: f64, l_f: f64) -> f64 {
    0.5 * l_r + 0.5 * l_f
}

pub fn total_loss(l_in: f64, l_ce: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(alpha * l_in + (1.0 - alpha) * l_ce)
}

/// `L_r`, `L_f`, `L_in` and `dL_in/dS`.
#[derive(Debug, Clone)]
pub struct ContrastiveTerms {
    pub l_r: f64,
    pub l_f: f64,
    pub l_in: f64,
    pub grad: AttentionMatrix,
    /// False when the partition lacks two of either class and the term was skipped.
    pub active: bool,
}

pub fn contrastive_terms(scores: &AttentionMatrix, partition: &BatchPartition, tau: f64) -> Result<ContrastiveTerms> {
    check_tau(tau)?;
    partition.check(scores)?;
    let mut grad = AttentionMatrix::from_fn(scores.len, |_, _| 0.0);
    if !partition.supports_contrast() {
        return Ok(ContrastiveTerms {
            l_r: 0.0,
            l_f: 0.0,
            l_in: 0.0,
            grad,
            active: false,
        });
    }
    let mut gr = grad.clone();
    let l_r = set_loss(scores, &partition.real, &partition.fake, tau, Some(&mut gr));
    let l_f = set_loss(scores, &partition.fake, &partition.real, tau, Some(&mut grad));
    for (g, r) in grad.scores.iter_mut().zip(&gr.scores) {
        *g = 0.5 * (*g + r);
    }
    Ok(ContrastiveTerms {
        l_r,
        l_f,
        l_in: loss_in(l_r, l_f),
        grad,
        active: true,
    })
}

/// `-log((n-1)/(2n-1))`, the set loss when all scores are equal and both sets have `n` elements.
pub fn equal_score_closed_form(n: usize) -> f64 {
    -(((n - 1) as f64) / ((2 * n - 1) as f64)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed_keys;
    use rand::Rng;

    /// Direct evaluation of the ratio without any rescaling.
    fn naive(scores: &AttentionMatrix, pos: &[usize], neg: &[usize], tau: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in pos {
            for &j in pos {
                if i != j {
                    num += (scores.get(i, j) / tau).exp();
                }
            }
            for &j in neg {
                den += (scores.get(i, j) / tau).exp();
            }
        }
        -(num / (num + den)).ln()
    }

    fn part(nr: usize, nf: usize) -> BatchPartition {
        BatchPartition::new((0..nr).collect(), (nr..nr + nf).collect()).unwrap()
    }

    fn random_scores(b: usize, lo: f64, hi: f64, seed: u64) -> AttentionMatrix {
        let mut rng = crate::seed::rng(seed_keys!(seed, "scores"));
        let mut m = AttentionMatrix::from_fn(b, |_, _| 0.0);
        for i in 0..b {
            for j in 0..=i {
                let v = rng.random_range(lo..hi);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        m
    }

    #[test]
    fn equal_scores_closed_form() {
        for n in 2..=4 {
            let p = part(n, n);
            for c in [-3.0, 0.0, 0.7] {
                let s = AttentionMatrix::from_fn(2 * n, |_, _| c);
                let expect = equal_score_closed_form(n);
                assert!((loss_real(&s, &p, 0.1).unwrap() - expect).abs() < 1e-9);
                assert!((loss_fake(&s, &p, 0.1).unwrap() - expect).abs() < 1e-9);
            }
        }
        assert!((equal_score_closed_form(2) - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn separated_scores_give_tiny_loss() {
        let p = part(2, 2);
        let s = AttentionMatrix::from_fn(4, |i, j| if (i < 2) == (j < 2) { 1.0 } else { 0.0 });
        let expect = (2.0 * (-10f64).exp()).ln_1p();
        let got = loss_real(&s, &p, 0.1).unwrap();
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        assert!((got - 9.08e-5).abs() < 1e-7);
    }

    #[test]
    fn matches_naive_without_max_subtraction() {
        for seed in 0..50 {
            let s = random_scores(9, -50.0, 50.0, seed);
            let p = BatchPartition::new(vec![0, 3, 4, 7], vec![1, 2, 5, 6, 8]).unwrap();
            let a = loss_real(&s, &p, 0.1).unwrap();
            let b = naive(&s, &p.real, &p.fake, 0.1);
            assert!(
                (a - b).abs() <= 1e-9 * b.abs().max(1e-300) || (a - b).abs() < 1e-12,
                "{a} vs {b}"
            );
            let a = loss_fake(&s, &p, 0.1).unwrap();
            let b = naive(&s, &p.fake, &p.real, 0.1);
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300) || (a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let s = random_scores(6, 100.0, 400.0, 1);
        let l = loss_real(&s, &part(3, 3), 0.1).unwrap();
        assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn monotone_in_negative_scores() {
        let mut s = random_scores(6, -1.0, 1.0, 2);
        let p = part(3, 3);
        let before = loss_real(&s, &p, 0.1).unwrap();
        s.set(0, 4, s.get(0, 4) + 0.2);
        s.set(4, 0, s.get(0, 4));
        assert!(loss_real(&s, &p, 0.1).unwrap() > before);
    }

    #[test]
    fn role_swap_and_positivity() {
        let s = random_scores(7, -2.0, 2.0, 3);
        let p = part(3, 4);
        let q = p.swapped();
        assert_eq!(loss_real(&s, &p, 0.1).unwrap(), loss_fake(&s, &q, 0.1).unwrap());
        assert_eq!(loss_fake(&s, &p, 0.1).unwrap(), loss_real(&s, &q, 0.1).unwrap());
        assert!(loss_fake(&s, &p, 0.1).unwrap() > 0.0);
    }

    #[test]
    fn permutation_within_a_set() {
        let s = random_scores(6, -2.0, 2.0, 4);
        let a = BatchPartition::new(vec![0, 1, 2], vec![3, 4, 5]).unwrap();
        let b = BatchPartition::new(vec![2, 0, 1], vec![5, 3, 4]).unwrap();
        let la = contrastive_terms(&s, &a, 0.1).unwrap();
        let lb = contrastive_terms(&s, &b, 0.1).unwrap();
        assert!((la.l_r - lb.l_r).abs() < 1e-12);
        assert!((la.l_f - lb.l_f).abs() < 1e-12);
    }

    #[test]
    fn combination_rules() {
        let l3 = 3f64.ln();
        assert_eq!(loss_in(l3, l3), l3);
        assert_eq!(loss_in(0.0, 2.0), 1.0);
        assert_eq!(total_loss(2.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(total_loss(2.0, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(total_loss(2.0, 1.0, 0.5).unwrap(), 1.5);
        assert!(total_loss(2.0, 1.0, 1.1).is_err());
        assert!(total_loss(2.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn preconditions() {
        let s = random_scores(4, -1.0, 1.0, 0);
        assert!(loss_real(&s, &part(1, 3), 0.1).is_err());
        assert!(loss_fake(&s, &part(3, 1), 0.1).is_err());
        assert!(loss_real(&s, &part(2, 2), 0.0).is_err());
        assert!(BatchPartition::new(vec![0, 1], vec![1, 2]).is_err());
        let skipped = contrastive_terms(&s, &part(3, 1), 0.1).unwrap();
        assert!(!skipped.active);
        assert_eq!(skipped.l_in, 0.0);
    }

    #[test]
    fn gradient_signs_and_values() {
        let s = random_scores(6, -1.0, 1.0, 5);
        let p = part(3, 3);
        let h = 1e-6;
        let mut g = AttentionMatrix::from_fn(6, |_, _| 0.0);
        set_loss(&s, &p.real, &p.fake, 0.1, Some(&mut g));
        for i in 0..6 {
            for j in 0..6 {
                let mut t = s.clone();
                t.set(i, j, s.get(i, j) + h);
                let plus = loss_real(&t, &p, 0.1).unwrap();
                t.set(i, j, s.get(i, j) - h);
                let minus = loss_real(&t, &p, 0.1).unwrap();
                let num = (plus - minus) / (2.0 * h);
                assert!((num - g.get(i, j)).abs() < 1e-6 * (1.0 + num.abs()));
                if i < 3 && j >= 3 {
                    assert!(num > 0.0);
                }
                if i < 3 && j < 3 && i != j {
                    assert!(num < 0.0);
                }
            }
        }
        let terms = contrastive_terms(&s, &p, 0.1).unwrap();
        let mut gf = AttentionMatrix::from_fn(6, |_, _| 0.0);
        set_loss(&s, &p.fake, &p.real, 0.1, Some(&mut gf));
        for k in 0..36 {
            assert!((terms.grad.scores[k] - 0.5 * (g.scores[k] + gf.scores[k])).abs() < 1e-15);
        }
    }
}
