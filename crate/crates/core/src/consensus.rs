//! Rater fusion and inter-rater agreement.
//!
//! The binary STAPLE estimator runs on the union bounding box of the rater
//! masks (plus a one-voxel margin). Inside the box a voxel's posterior only
//! depends on which raters marked it, so the EM iterates over the (at most
//! `2^K`) observed rater patterns weighted by their voxel counts.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::grid::{union_bounding_box, BinaryMask, Grid, ProbMap};
use crate::io::Reference;
use crate::metrics::{dsc, mean_and_population_std, DSC_EPS};

pub const STAPLE_INIT: f64 = 0.99;
pub const STAPLE_TOL: f64 = 1e-6;
pub const STAPLE_MAX_ITER: usize = 100;
const PRIOR_CLAMP: f64 = 1e-6;
const PARAM_FLOOR: f64 = 1e-12;
const MAX_RATERS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct StapleResult {
    /// Posterior foreground probability per voxel; 0 outside the fused box.
    pub posterior: Grid<f64>,
    /// `posterior >= 0.5`.
    pub consensus_bin: BinaryMask,
    pub sensitivities: Vec<f64>,
    pub specificities: Vec<f64>,
    pub prior: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StapleResult {
    pub fn consensus_prob(&self) -> ProbMap {
        ProbMap::new(self.posterior.map(|&p| p as f32)).expect("posterior lies in [0,1]")
    }
}

fn pattern_posterior(pattern: usize, k: usize, prior: f64, sens: &[f64], spec: &[f64]) -> f64 {
    let mut log_fg = prior.ln();
    let mut log_bg = (1.0 - prior).ln();
    for r in 0..k {
        if pattern >> r & 1 == 1 {
            log_fg += sens[r].ln();
            log_bg += (1.0 - spec[r]).ln();
        } else {
            log_fg += (1.0 - sens[r]).ln();
            log_bg += spec[r].ln();
        }
    }
    1.0 / (1.0 + (log_bg - log_fg).exp())
}

/// Binary STAPLE consensus of `masks`.
///
/// Sensitivity and specificity start at 0.99 for every rater; the prior is the
/// foreground fraction of all rater labels inside the box and stays fixed.
/// Iteration stops when no rater parameter moves by `tol` or more.
pub fn staple(masks: &[BinaryMask], max_iter: usize, tol: f64) -> Result<StapleResult> {
    let k = masks.len();
    if k == 0 || k > MAX_RATERS {
        return Err(EvalError::InvalidParameter(format!(
            "staple needs 1..={MAX_RATERS} masks, got {k}"
        )));
    }
    for m in &masks[1..] {
        masks[0].ensure_same_geometry(m)?;
    }
    let geometry = masks[0].geometry().clone();
    let region = union_bounding_box(masks)
        .ok_or(EvalError::NoForeground)?
        .padded(1, geometry.dims);

    let mut counts = vec![0u64; 1 << k];
    let mut labelled = 0u64;
    for i in region.indices(&geometry) {
        let mut pattern = 0usize;
        for (r, m) in masks.iter().enumerate() {
            if m.data()[i] {
                pattern |= 1 << r;
            }
        }
        counts[pattern] += 1;
        labelled += u64::from(pattern.count_ones());
    }
    let voxels = region.voxel_count() as f64;
    let prior = (labelled as f64 / (voxels * k as f64)).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);

    let observed: Vec<usize> = (0..counts.len()).filter(|&p| counts[p] > 0).collect();
    let mut sens = vec![STAPLE_INIT; k];
    let mut spec = vec![STAPLE_INIT; k];
    let mut weights = vec![0.0; counts.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for &p in &observed {
            weights[p] = pattern_posterior(p, k, prior, &sens, &spec);
        }
        let mut max_change: f64 = 0.0;
        for r in 0..k {
            let (mut fg, mut fg_hit, mut bg, mut bg_hit) = (0.0, 0.0, 0.0, 0.0);
            for &p in &observed {
                let n = counts[p] as f64;
                let w = weights[p];
                let marked = p >> r & 1 == 1;
                fg += n * w;
                bg += n * (1.0 - w);
                if marked {
                    fg_hit += n * w;
                } else {
                    bg_hit += n * (1.0 - w);
                }
            }
            let new_sens = if fg > 0.0 {
                (fg_hit / fg).clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR)
            } else {
                sens[r]
            };
            let new_spec = if bg > 0.0 {
                (bg_hit / bg).clamp(PARAM_FLOOR, 1.0 - PARAM_FLOOR)
            } else {
                spec[r]
            };
            max_change = max_change
                .max((new_sens - sens[r]).abs())
                .max((new_spec - spec[r]).abs());
            sens[r] = new_sens;
            spec[r] = new_spec;
        }
        if max_change < tol {
            converged = true;
            break;
        }
    }
    for &p in &observed {
        weights[p] = pattern_posterior(p, k, prior, &sens, &spec);
    }

    let mut posterior = Grid::filled(geometry, 0.0f64);
    for i in region.indices(masks[0].geometry()) {
        let mut pattern = 0usize;
        for (r, m) in masks.iter().enumerate() {
            if m.data()[i] {
                pattern |= 1 << r;
            }
        }
        posterior.data_mut()[i] = weights[pattern];
    }
    let consensus_bin = posterior.map(|&w| w >= 0.5);
    Ok(StapleResult {
        posterior,
        consensus_bin,
        sensitivities: sens,
        specificities: spec,
        prior,
        iterations,
        converged,
    })
}

/// Voxelwise mean of the rater masks.
pub fn average_annotation(masks: &[BinaryMask]) -> Result<ProbMap> {
    let first = masks
        .first()
        .ok_or_else(|| EvalError::InvalidParameter("no masks to average".into()))?;
    for m in &masks[1..] {
        first.ensure_same_geometry(m)?;
    }
    let n = masks.len() as f32;
    let data = (0..first.data().len())
        .map(|i| masks.iter().filter(|m| m.data()[i]).count() as f32 / n)
        .collect();
    ProbMap::new(Grid::from_vec(first.geometry().clone(), data)?)
}

/// Mean of the pairwise rater DSC values.
pub fn mean_interrater_dsc(raters: &[BinaryMask]) -> Result<f64> {
    if raters.len() < 2 {
        return Err(EvalError::InvalidParameter(
            "need at least two raters".into(),
        ));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..raters.len() {
        for b in a + 1..raters.len() {
            total += dsc(&raters[a], &raters[b], DSC_EPS)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Pairwise DSC among the raters and the STAPLE reference for one case.
/// Index `raters.len()` is the STAPLE mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAgreement {
    pub case_id: String,
    pub dsc: Vec<Vec<f64>>,
}

impl CaseAgreement {
    pub fn compute(reference: &Reference) -> Result<Self> {
        let mut masks: Vec<&BinaryMask> = reference.rater_masks.iter().collect();
        masks.push(&reference.staple_mask);
        let n = masks.len();
        let mut m = vec![vec![1.0; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let d = dsc(masks[a], masks[b], DSC_EPS)?;
                m[a][b] = d;
                m[b][a] = d;
            }
        }
        Ok(CaseAgreement {
            case_id: reference.case_id.clone(),
            dsc: m,
        })
    }

    pub fn rater_count(&self) -> usize {
        self.dsc.len() - 1
    }

    pub fn mean_interrater(&self) -> f64 {
        let k = self.rater_count();
        let mut total = 0.0;
        let mut n = 0;
        for a in 0..k {
            for b in a + 1..k {
                total += self.dsc[a][b];
                n += 1;
            }
        }
        total / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean ± population std of per-case DSC for every pair of raters
/// (and each rater against STAPLE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<MeanStd>>,
    /// Pooled rater-rater DSC values (STAPLE excluded) over every case.
    pub pooled_interrater: MeanStd,
    pub case_count: usize,
}

impl AgreementMatrix {
    pub fn from_cases(cases: &[CaseAgreement]) -> Result<Self> {
        let first = cases.first().ok_or_else(|| {
            EvalError::InvalidParameter("agreement needs at least one case".into())
        })?;
        let n = first.dsc.len();
        if cases.iter().any(|c| c.dsc.len() != n) {
            return Err(EvalError::InvalidParameter(
                "cases disagree on rater count".into(),
            ));
        }
        let raters = n - 1;
        let mut labels: Vec<String> = (1..=raters).map(|k| format!("Rater{k}")).collect();
        labels.push("STAPLE".into());
        let mut cells = vec![
            vec![
                MeanStd {
                    mean: 1.0,
                    std: 0.0
                };
                n
            ];
            n
        ];
        let mut pooled = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let values: Vec<f64> = cases.iter().map(|c| c.dsc[a][b]).collect();
                if b < raters {
                    pooled.extend_from_slice(&values);
                }
                let (mean, std) = mean_and_population_std(&values);
                cells[a][b] = MeanStd { mean, std };
                cells[b][a] = MeanStd { mean, std };
            }
        }
        let (mean, std) = mean_and_population_std(&pooled);
        Ok(AgreementMatrix {
            labels,
            cells,
            pooled_interrater: MeanStd { mean, std },
            case_count: cases.len(),
        })
    }

    /// Writes the matrix with `mean±std` cells.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push(',');
        out.push_str(&self.labels.join(","));
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.cells) {
            out.push_str(label);
            for c in row {
                out.push_str(&format!(",{:.4}±{:.4}", c.mean, c.std));
            }
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| EvalError::io(path, e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| EvalError::io(path, e))
    }
}

pub fn pairwise_agreement(cases: &[Reference]) -> Result<AgreementMatrix> {
    let per_case = cases
        .iter()
        .map(CaseAgreement::compute)
        .collect::<Result<Vec<_>>>()?;
    AgreementMatrix::from_cases(&per_case)
}
