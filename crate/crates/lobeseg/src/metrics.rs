//! Segmentation evaluation: per-lobe Jaccard scores, a pixel-weighted overall
//! score, symmetric average surface distance in millimeters, and cumulative
//! histograms over case scores.

use crate::seeding::LobeId;
use crate::volume::{
    distance_transform, surface_voxels, GridMeta, LabelVolume, MaskVolume, MetaMismatch,
};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    MetaMismatch(#[from] MetaMismatch),
    #[error("surface distance needs a nonempty mask on both sides")]
    EmptyMask,
    #[error("no scores to histogram")]
    EmptyScores,
    #[error("invalid histogram range: {0}")]
    InvalidRange(String),
}

/// Per-case scores for the five lobes.
///
/// A lobe absent from both volumes scores Jaccard 1 and distance 0 with zero
/// weight; a lobe present on exactly one side scores Jaccard 0 and infinite
/// distance. The overall Jaccard weights each lobe by its ground-truth voxel
/// count, so absent lobes never dilute it.
#[derive(Debug, Clone, PartialEq)]
pub struct LobeScores {
    pub jaccard: [f64; 5],
    pub asd_mm: [f64; 5],
    pub overall_jaccard: f64,
    pub gt_lobe_voxels: [u64; 5],
}

impl LobeScores {
    pub fn jaccard_of(&self, lobe: LobeId) -> f64 {
        self.jaccard[lobe.label() as usize - 1]
    }

    pub fn asd_of(&self, lobe: LobeId) -> f64 {
        self.asd_mm[lobe.label() as usize - 1]
    }
}

/// Intersection over union; 1 when both masks are empty.
pub fn jaccard(pred: &MaskVolume, gt: &MaskVolume) -> Result<f64, MetricsError> {
    pred.meta().ensure_matches(gt.meta())?;
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        inter += (a && b) as u64;
        union += (a || b) as u64;
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Symmetric mean surface distance in millimeters: every surface voxel of each
/// mask contributes its exact distance to the other mask's surface, and the
/// two sums are averaged over the total surface voxel count.
pub fn avg_surface_distance(pred: &MaskVolume, gt: &MaskVolume) -> Result<f64, MetricsError> {
    pred.meta().ensure_matches(gt.meta())?;
    if !pred.any() || !gt.any() {
        return Err(MetricsError::EmptyMask);
    }
    let meta = *pred.meta();
    let s_pred = surface_voxels(pred);
    let s_gt = surface_voxels(gt);
    let dt_to = |surface: &[usize]| -> Result<crate::volume::ScalarVolume, MetricsError> {
        let mut mask = MaskVolume::new(meta, false);
        for &i in surface {
            mask.data_mut()[i] = true;
        }
        distance_transform(&mask).map_err(|_| MetricsError::EmptyMask)
    };
    let d_gt = dt_to(&s_gt)?;
    let d_pred = dt_to(&s_pred)?;
    let sum: f64 = s_pred.iter().map(|&i| d_gt.data()[i]).sum::<f64>()
        + s_gt.iter().map(|&i| d_pred.data()[i]).sum::<f64>();
    Ok(sum / (s_pred.len() + s_gt.len()) as f64)
}

/// Evaluates predicted labels against ground truth, lobe by lobe.
pub fn lobe_scores(pred: &LabelVolume, gt: &LabelVolume) -> Result<LobeScores, MetricsError> {
    pred.meta().ensure_matches(gt.meta())?;
    let meta = *pred.meta();
    let mut jaccard_scores = [0.0f64; 5];
    let mut asd = [0.0f64; 5];
    let mut gt_voxels = [0u64; 5];
    for lobe in LobeId::ALL {
        let k = lobe.label();
        let pred_mask = label_mask(&meta, pred, k);
        let gt_mask = label_mask(&meta, gt, k);
        gt_voxels[k as usize - 1] = gt_mask.count_true() as u64;
        jaccard_scores[k as usize - 1] = jaccard(&pred_mask, &gt_mask)?;
        asd[k as usize - 1] = match (pred_mask.any(), gt_mask.any()) {
            (true, true) => avg_surface_distance(&pred_mask, &gt_mask)?,
            (false, false) => 0.0,
            _ => f64::INFINITY,
        };
    }
    let total: u64 = gt_voxels.iter().sum();
    let overall_jaccard = if total == 0 {
        1.0
    } else {
        jaccard_scores
            .iter()
            .zip(&gt_voxels)
            .map(|(j, &n)| j * n as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(LobeScores {
        jaccard: jaccard_scores,
        asd_mm: asd,
        overall_jaccard,
        gt_lobe_voxels: gt_voxels,
    })
}

fn label_mask(meta: &GridMeta, labels: &LabelVolume, k: u8) -> MaskVolume {
    let data = labels.data().iter().map(|&l| l == k).collect();
    MaskVolume::from_data(*meta, data).expect("lengths match")
}

/// Fraction of cases at or below each score threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeHistogram {
    /// Right edges of the bins, ascending.
    pub thresholds: Vec<f64>,
    /// Fraction of scores `<=` each threshold; nondecreasing.
    pub fractions: Vec<f64>,
}

pub fn cumulative_histogram(
    scores: &[f64],
    n_bins: usize,
    range: (f64, f64),
) -> Result<CumulativeHistogram, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let (lo, hi) = range;
    if n_bins == 0 {
        return Err(MetricsError::InvalidRange("need at least one bin".into()));
    }
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(MetricsError::InvalidRange(format!(
            "need finite lo < hi, got {lo}..{hi}"
        )));
    }
    let span = hi - lo;
    let thresholds: Vec<f64> = (1..=n_bins)
        .map(|i| lo + span * (i as f64 / n_bins as f64))
        .collect();
    let n = scores.len() as f64;
    let fractions = thresholds
        .iter()
        .map(|&t| scores.iter().filter(|&&s| s <= t).count() as f64 / n)
        .collect();
    Ok(CumulativeHistogram {
        thresholds,
        fractions,
    })
}
