//! Video-level scoring, AUC/ACC and held-out domain reports.
//!
//! Fake is the positive class. A video's score is the mean of its clip
//! probabilities over every non-overlapping window.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::resize_frame;
use crate::checkpoint::Checkpoint;
use crate::clips::{load_clip_strided, load_manifest, ClipRecord, Label, Split, VideoClip};
use crate::encoder::ClipTensor;
use crate::error::{Error, Result};
use crate::model::Model;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    pub score: f64,
    pub label: Label,
    pub domain: String,
}

/// Mean of clip probabilities.
pub fn video_score(clip_probs: &[f64]) -> Result<f64> {
    if clip_probs.is_empty() {
        return Err(Error::InvalidInput("video has no scored clips".into()));
    }
    if let Some(p) = clip_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("clip probability {p} outside [0, 1]")));
    }
    let mut sorted = clip_probs.to_vec();
    // fixed summation order so the mean does not depend on clip order
    sorted.sort_by(f64::total_cmp);
    Ok(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

/// Rank-based AUC: probability that a random fake outscores a random real, ties counting one half.
pub fn auc_of(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|l| **l == Label::Fake).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("AUC needs both real and fake videos".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of the positives, using average ranks for ties
    let mut twice_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the average (i + j + 2) / 2
        let twice_avg = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == Label::Fake).count() as u64;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j + 1;
    }
    let numerator = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(numerator as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn auc(scores: &[VideoScore]) -> Result<f64> {
    let s: Vec<f64> = scores.iter().map(|v| v.score).collect();
    let l: Vec<Label> = scores.iter().map(|v| v.label).collect();
    auc_of(&s, &l)
}

/// Fraction of videos with `(score >= threshold) == (label == fake)`.
pub fn acc(scores: &[VideoScore], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty score list".into()));
    }
    let hits = scores
        .iter()
        .filter(|v| (v.score >= threshold) == (v.label == Label::Fake))
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Anything that turns a clip into a fake probability.
pub trait ClipScorer: Sync {
    fn score_clip(&self, record: &ClipRecord, clip: &VideoClip) -> Result<f64>;
}

/// Scores every clip with its record's label.
#[derive(Debug, Clone, Copy, Default)]
pub struct LabelOracle;

impl ClipScorer for LabelOracle {
    fn score_clip(&self, record: &ClipRecord, _clip: &VideoClip) -> Result<f64> {
        Ok(record.label.as_f64())
    }
}

/// Resize frames to `frame_size` and run the model.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    pub model: Model,
    pub frame_size: usize,
}

impl ModelScorer {
    pub fn tensor(&self, clip: &VideoClip) -> Result<ClipTensor> {
        let frames = clip.frames().iter().map(|f| resize_frame(f, self.frame_size)).collect();
        let resized = VideoClip::new(frames, clip.source_id())?;
        Ok(ClipTensor::from_clip(
            &resized,
            &self.model.config.encoder.normalization,
        ))
    }
}

impl ClipScorer for ModelScorer {
    fn score_clip(&self, _record: &ClipRecord, clip: &VideoClip) -> Result<f64> {
        Ok(self.model.predict(&self.tensor(clip)?)?.prob)
    }
}

/// Windowing used at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalWindows {
    pub clip_len: usize,
    pub frame_stride: usize,
}

impl EvalWindows {
    /// Starts of non-overlapping windows covering a video.
    pub fn starts(&self, frame_count: usize) -> Result<Vec<usize>> {
        let span = (self.clip_len.max(1) - 1) * self.frame_stride + 1;
        if self.clip_len == 0 || self.frame_stride == 0 {
            return Err(Error::InvalidInput("clip_len and frame_stride must be positive".into()));
        }
        if frame_count < span {
            return Err(Error::InvalidInput(format!(
                "video has {frame_count} frames, a window spans {span}"
            )));
        }
        Ok((0..=(frame_count - span) / span).map(|w| w * span).collect())
    }
}

/// Score every video; parallel across videos, results in input order.
pub fn score_videos(records: &[ClipRecord], scorer: &dyn ClipScorer, windows: EvalWindows) -> Result<Vec<VideoScore>> {
    crate::parallel::try_map(records, |r| {
        let probs = windows
            .starts(r.frame_count)?
            .into_iter()
            .map(|s| {
                let clip = load_clip_strided(r, windows.clip_len, s, windows.frame_stride)?;
                scorer.score_clip(r, &clip)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(VideoScore {
            video_id: r.video_id.clone(),
            score: video_score(&probs)?,
            label: r.label,
            domain: r.domain.clone(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain: String,
    pub n_videos: usize,
    pub auc: f64,
    pub acc: f64,
}

pub fn summarise(domain: &str, scores: &[VideoScore]) -> Result<DomainReport> {
    Ok(DomainReport {
        domain: domain.to_string(),
        n_videos: scores.len(),
        auc: auc(scores)?,
        acc: acc(scores, DEFAULT_THRESHOLD)?,
    })
}

/// Test-split records of `domain`.
pub fn held_out_records(records: &[ClipRecord], domain: &str) -> Result<Vec<ClipRecord>> {
    if !records.iter().any(|r| r.domain == domain) {
        let mut known: Vec<&str> = records.iter().map(|r| r.domain.as_str()).collect();
        known.sort();
        known.dedup();
        return Err(Error::InvalidInput(format!(
            "unknown domain {domain:?} (manifest has {})",
            known.join(", ")
        )));
    }
    Ok(records
        .iter()
        .filter(|r| r.domain == domain && r.split == Split::Test)
        .cloned()
        .collect())
}

/// Checkpoint kinds understood by [`load_scorer`].
pub const KIND_MODEL: &str = "model";
pub const KIND_LABEL_ORACLE: &str = "label-oracle";

/// Checkpoint contents needed for scoring.
pub struct LoadedScorer {
    pub scorer: Box<dyn ClipScorer>,
    pub windows: EvalWindows,
}

pub fn load_scorer(path: &Path) -> Result<LoadedScorer> {
    let ckpt = Checkpoint::load(path)?;
    let bad = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let windows: EvalWindows =
        serde_json::from_value(ckpt.meta["windows"].clone()).map_err(|e| bad(format!("windows: {e}")))?;
    match ckpt.meta["kind"].as_str() {
        Some(KIND_LABEL_ORACLE) => Ok(LoadedScorer {
            scorer: Box::new(LabelOracle),
            windows,
        }),
        Some(KIND_MODEL) => {
            let config =
                serde_json::from_value(ckpt.meta["model"].clone()).map_err(|e| bad(format!("model config: {e}")))?;
            let frame_size = ckpt.meta["frame_size"]
                .as_u64()
                .ok_or_else(|| bad("frame_size missing".into()))? as usize;
            let mut model = Model::new(config, 0)?;
            model.load_arrays(&ckpt.arrays_with_prefix("model"))?;
            Ok(LoadedScorer {
                scorer: Box::new(ModelScorer { model, frame_size }),
                windows,
            })
        }
        other => Err(bad(format!("unknown checkpoint kind {other:?}"))),
    }
}

/// A checkpoint that scores every clip with its true label.
pub fn label_oracle_checkpoint(windows: EvalWindows) -> Checkpoint {
    Checkpoint {
        meta: serde_json::json!({ "kind": KIND_LABEL_ORACLE, "windows": windows }),
        arrays: Vec::new(),
    }
}

/// Evaluate a checkpoint on the test split of `held_out`.
pub fn cross_domain_report(
    checkpoint: &Path,
    manifest: &Path,
    held_out: &str,
) -> Result<(DomainReport, Vec<VideoScore>)> {
    let records = load_manifest(manifest)?;
    let test = held_out_records(&records, held_out)?;
    let loaded = load_scorer(checkpoint)?;
    let scores = score_videos(&test, loaded.scorer.as_ref(), loaded.windows)?;
    Ok((summarise(held_out, &scores)?, scores))
}

/// Write `report.csv` and `report.json` into `dir`.
pub fn write_report(rows: &[DomainReport], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("report.csv");
    let mut text = String::from("domain,n_videos,auc,acc\n");
    for r in rows {
        text.push_str(&format!("{},{},{},{}\n", r.domain, r.n_videos, r.auc, r.acc));
    }
    std::fs::write(&csv, text).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join("report.json");
    let body = serde_json::to_string_pretty(rows).expect("report serialises");
    std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(score: f64, label: Label) -> VideoScore {
        VideoScore {
            video_id: String::new(),
            score,
            label,
            domain: "A".into(),
        }
    }

    #[test]
    fn video_score_is_the_mean() {
        assert!((video_score(&[0.2, 0.4, 0.9]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(video_score(&[0.37]).unwrap(), 0.37);
        assert_eq!(
            video_score(&[0.1, 0.7, 0.3]).unwrap(),
            video_score(&[0.7, 0.3, 0.1]).unwrap()
        );
        assert!(video_score(&[]).is_err());
    }

    #[test]
    fn auc_examples() {
        let s = [
            vs(0.9, Label::Fake),
            vs(0.4, Label::Fake),
            vs(0.8, Label::Real),
            vs(0.1, Label::Real),
        ];
        assert_eq!(auc(&s).unwrap(), 0.75);
        let sep = [vs(0.9, Label::Fake), vs(0.1, Label::Real)];
        assert_eq!(auc(&sep).unwrap(), 1.0);
        let tied = [vs(0.5, Label::Fake), vs(0.5, Label::Real), vs(0.5, Label::Real)];
        assert_eq!(auc(&tied).unwrap(), 0.5);
        assert!(auc(&[vs(0.5, Label::Fake)]).is_err());
    }

    #[test]
    fn auc_is_invariant_to_monotone_maps() {
        let s = [0.3f64, 0.9, 0.1, 0.5, 0.5, 0.7];
        let l = [
            Label::Real,
            Label::Fake,
            Label::Real,
            Label::Fake,
            Label::Real,
            Label::Fake,
        ];
        let t: Vec<f64> = s.iter().map(|x| (5.0 * x).exp()).collect();
        assert_eq!(auc_of(&s, &l).unwrap(), auc_of(&t, &l).unwrap());
    }

    #[test]
    fn acc_examples() {
        assert_eq!(acc(&[vs(0.7, Label::Fake), vs(0.3, Label::Real)], 0.5).unwrap(), 1.0);
        assert_eq!(acc(&[vs(0.7, Label::Real), vs(0.3, Label::Fake)], 0.5).unwrap(), 0.0);
        assert_eq!(acc(&[vs(0.5, Label::Fake)], 0.5).unwrap(), 1.0);
        assert!(acc(&[], 0.5).is_err());
    }

    #[test]
    fn window_starts() {
        let w = EvalWindows {
            clip_len: 8,
            frame_stride: 1,
        };
        assert_eq!(w.starts(16).unwrap(), vec![0, 8]);
        assert_eq!(w.starts(20).unwrap(), vec![0, 8]);
        assert!(w.starts(7).is_err());
        let s = EvalWindows {
            clip_len: 4,
            frame_stride: 2,
        };
        assert_eq!(s.starts(16).unwrap(), vec![0, 7]);
    }
}
