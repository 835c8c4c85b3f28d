//! Global evaluation axes: Dice, threshold-averaged Dice, multi-rater
//! calibration error and the CRPS of the probabilistic tumor volume.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{EvalError, Result};
use crate::grid::{union_bounding_box, BinaryMask, ProbMap};

pub const DSC_EPS: f64 = 1e-5;
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.10, 0.24, 0.38, 0.52, 0.66, 0.80];
pub const DEFAULT_ECE_BINS: usize = 50;
pub const DEFAULT_ECE_PADDING: usize = 5;
pub const DEFAULT_CRPS_GRID: usize = 100;

/// Strictly increasing probability thresholds in `(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSet(Vec<f64>);

impl ThresholdSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EvalError::InvalidParameter("threshold set is empty".into()));
        }
        if values.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(EvalError::InvalidParameter(format!(
                "thresholds must lie in (0,1): {values:?}"
            )));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidParameter(format!(
                "thresholds must be strictly increasing: {values:?}"
            )));
        }
        Ok(ThresholdSet(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        ThresholdSet(DEFAULT_THRESHOLDS.to_vec())
    }
}

impl TryFrom<Vec<f64>> for ThresholdSet {
    type Error = EvalError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ThresholdSet::new(v)
    }
}

impl From<ThresholdSet> for Vec<f64> {
    fn from(t: ThresholdSet) -> Vec<f64> {
        t.0
    }
}

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    a.ensure_same_geometry(b)?;
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        na += usize::from(x);
        nb += usize::from(y);
        both += usize::from(x && y);
    }
    Ok((na, nb, both))
}

/// `2|A∩B| / (|A| + |B| + eps)`. Two empty masks score 0.
pub fn dsc(pred: &BinaryMask, reference: &BinaryMask, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(EvalError::InvalidParameter(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let (na, nb, both) = overlap_counts(pred, reference)?;
    Ok(2.0 * both as f64 / (na as f64 + nb as f64 + eps))
}

/// Dice of `p > t` against `avg > t`, averaged over thresholds.
///
/// A threshold at which both binarizations are empty contributes 1. Otherwise
/// the denominator is positive and the plain ratio `2|A∩B| / (|A| + |B|)` is used.
pub fn thr_dsc(prob: &ProbMap, avg_annotation: &ProbMap, thresholds: &ThresholdSet) -> Result<f64> {
    prob.ensure_same_geometry(avg_annotation)?;
    let mut total = 0.0;
    for &t in thresholds.values() {
        let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
        for (&p, &a) in prob.data().iter().zip(avg_annotation.data()) {
            let x = f64::from(p) > t;
            let y = f64::from(a) > t;
            na += usize::from(x);
            nb += usize::from(y);
            both += usize::from(x && y);
        }
        total += if na + nb == 0 {
            1.0
        } else {
            2.0 * both as f64 / (na + nb) as f64
        };
    }
    Ok(total / thresholds.len() as f64)
}

/// Per-rater calibration errors and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub per_rater: Vec<f64>,
    pub mr_ece: f64,
    pub region_voxels: usize,
}

/// Multi-rater expected calibration error inside the padded union bounding
/// box of the rater masks.
///
/// Confidence is `max(p, 1-p)`, the predicted class is foreground when
/// `p >= 0.5`, and confidences are binned into `bins` equal-width bins on
/// `[0,1]` (the top bin is closed).
pub fn mr_ece(
    prob: &ProbMap,
    raters: &[BinaryMask],
    padding: usize,
    bins: usize,
) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(EvalError::InvalidParameter("bins must be >= 1".into()));
    }
    if raters.is_empty() {
        return Err(EvalError::NoAnnotationSupport);
    }
    for r in raters {
        prob.ensure_same_geometry(r)?;
    }
    let region = union_bounding_box(raters)
        .ok_or(EvalError::NoAnnotationSupport)?
        .padded(padding, prob.dims());
    let geometry = prob.geometry();

    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0f64; bins];
    let mut correct = vec![vec![0usize; bins]; raters.len()];
    let mut total = 0usize;
    for i in region.indices(geometry) {
        let p = f64::from(prob.data()[i]);
        let predicted = p >= 0.5;
        let confidence = p.max(1.0 - p);
        let bin = ((confidence * bins as f64) as usize).min(bins - 1);
        count[bin] += 1;
        conf_sum[bin] += confidence;
        total += 1;
        for (k, rater) in raters.iter().enumerate() {
            if rater.data()[i] == predicted {
                correct[k][bin] += 1;
            }
        }
    }
    let per_rater: Vec<f64> = correct
        .iter()
        .map(|hits| {
            (0..bins)
                .filter(|&m| count[m] > 0)
                .map(|m| (hits[m] as f64 - conf_sum[m]).abs())
                .sum::<f64>()
                / total as f64
        })
        .collect();
    let mr_ece = per_rater.iter().sum::<f64>() / per_rater.len() as f64;
    Ok(CalibrationReport {
        per_rater,
        mr_ece,
        region_voxels: total,
    })
}

/// Annotated volume in cm³.
pub fn expert_volume(mask: &BinaryMask) -> f64 {
    mask.count() as f64 * mask.geometry().voxel_volume()
}

/// Probabilistic volume `Δv Σ p` in cm³.
pub fn prob_volume(prob: &ProbMap) -> f64 {
    let sum: f64 = prob.data().iter().map(|&p| f64::from(p)).sum();
    sum * prob.geometry().voxel_volume()
}

/// Expert volume distribution and the predicted volume, all in cm³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeStats {
    pub expert_volumes: Vec<f64>,
    pub mu_v: f64,
    /// Population standard deviation.
    pub sigma_v: f64,
    pub pred_volume: f64,
}

impl VolumeStats {
    pub fn new(expert_volumes: Vec<f64>, pred_volume: f64) -> Result<Self> {
        if expert_volumes.is_empty() {
            return Err(EvalError::InvalidParameter("no expert volumes".into()));
        }
        if expert_volumes
            .iter()
            .chain([&pred_volume])
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(EvalError::InvalidParameter(
                "volumes must be finite and >= 0".into(),
            ));
        }
        let (mu_v, sigma_v) = mean_and_population_std(&expert_volumes);
        Ok(VolumeStats {
            expert_volumes,
            mu_v,
            sigma_v,
            pred_volume,
        })
    }

    pub fn from_masks(raters: &[BinaryMask], prob: &ProbMap) -> Result<Self> {
        VolumeStats::new(
            raters.iter().map(expert_volume).collect(),
            prob_volume(prob),
        )
    }
}

pub(crate) fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standard deviation used for the reference Gaussian; keeps the percentile
/// grid non-degenerate when all experts agree.
pub fn effective_sigma(mu_v: f64, sigma_v: f64) -> f64 {
    sigma_v.max(1e-6 + 1e-6 * mu_v.abs())
}

/// Discrete CRPS of the predicted volume against `N(mu_v, sigma_v²)`.
///
/// The grid holds `grid_size` uniform points between the 1st and 99th
/// percentiles; `F` is the Gaussian CDF and `H` the step `x >= v̂`.
pub fn crps(stats: &VolumeStats, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(EvalError::InvalidParameter(format!(
            "grid_size must be >= 2, got {grid_size}"
        )));
    }
    let sigma = effective_sigma(stats.mu_v, stats.sigma_v);
    let normal = Normal::new(stats.mu_v, sigma)
        .map_err(|e| EvalError::InvalidParameter(format!("reference gaussian: {e}")))?;
    let lo = normal.inverse_cdf(0.01);
    let hi = normal.inverse_cdf(0.99);
    let dx = (hi - lo) / (grid_size - 1) as f64;
    let sum: f64 = (0..grid_size)
        .map(|l| {
            let x = lo + l as f64 * dx;
            let f = normal.cdf(x);
            let h = if x >= stats.pred_volume { 1.0 } else { 0.0 };
            (f - h).powi(2)
        })
        .sum();
    Ok(dx * sum)
}

/// The four global axes for one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalMetrics {
    pub dsc: f64,
    pub thr_dsc: f64,
    pub mr_ece: f64,
    pub crps: f64,
}
