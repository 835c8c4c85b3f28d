//! Tumor–vessel contact and the per-vessel invasion score.

pub mod contact;
pub mod distribution;

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::grid::{BinaryMask, ProbMap};
use crate::io::{CaseBundle, Reference};
use crate::metrics::ThresholdSet;

pub use contact::{
    contact_angle_slice, contact_angle_slice_with, max_contact_angle, ComponentPolicy,
    ContactMethod, ContactOptions, SliceMask, VesselProfile, VesselSlice,
};
pub use distribution::{
    grid_step, sample_gaussian_on_grid, w1_discrete, AngleDistribution, Fallback, GridDensity,
    ANGLE_GRID_SIZE, ANGLE_SMOOTHING, W1,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesselId {
    Porta = 1,
    Smv = 2,
    Aorta = 3,
    CeliacTrunk = 4,
    Sma = 5,
}

impl VesselId {
    pub const ALL: [VesselId; 5] = [
        VesselId::Porta,
        VesselId::Smv,
        VesselId::Aorta,
        VesselId::CeliacTrunk,
        VesselId::Sma,
    ];

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn from_label(label: u8) -> Option<Self> {
        VesselId::ALL.into_iter().find(|v| v.label() == label)
    }

    pub fn name(self) -> &'static str {
        match self {
            VesselId::Porta => "porta",
            VesselId::Smv => "smv",
            VesselId::Aorta => "aorta",
            VesselId::CeliacTrunk => "celiac_trunk",
            VesselId::Sma => "sma",
        }
    }
}

impl std::fmt::Display for VesselId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Slicing planes of the canonical (L-R, A-P, S-I) array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Plane {
    Coronal,
    Sagittal,
    Axial,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Coronal, Plane::Sagittal, Plane::Axial];

    /// Array axis normal to the plane.
    pub fn axis(self) -> usize {
        match self {
            Plane::Sagittal => 0,
            Plane::Coronal => 1,
            Plane::Axial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::Coronal => "coronal",
            Plane::Sagittal => "sagittal",
            Plane::Axial => "axial",
        }
    }
}

impl std::fmt::Display for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VascularConfig {
    pub grid_size: usize,
    pub smoothing: f64,
    pub contact: ContactOptions,
}

impl Default for VascularConfig {
    fn default() -> Self {
        VascularConfig {
            grid_size: ANGLE_GRID_SIZE,
            smoothing: ANGLE_SMOOTHING,
            contact: ContactOptions::default(),
        }
    }
}

/// Per-rater maximum contact angles.
pub fn gt_angle_distribution(
    raters: &[BinaryMask],
    vessel: &BinaryMask,
    plane: Plane,
) -> Result<AngleDistribution> {
    for r in raters {
        r.ensure_same_geometry(vessel)?;
    }
    let profile = VesselProfile::new(vessel, plane);
    Ok(distribution_from_masks(&profile, raters))
}

/// Maximum contact angles of the prediction binarized at each threshold.
pub fn pred_angle_distribution(
    prob: &ProbMap,
    vessel: &BinaryMask,
    plane: Plane,
    thresholds: &ThresholdSet,
) -> Result<AngleDistribution> {
    prob.ensure_same_geometry(vessel)?;
    let profile = VesselProfile::new(vessel, plane);
    let masks: Vec<BinaryMask> = thresholds
        .values()
        .iter()
        .map(|&t| prob.threshold(t))
        .collect();
    Ok(distribution_from_masks(&profile, &masks))
}

fn distribution_from_masks(profile: &VesselProfile, masks: &[BinaryMask]) -> AngleDistribution {
    AngleDistribution::from_samples(masks.iter().map(|m| profile.max_contact_angle(m)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneScore {
    pub plane: Plane,
    pub w1: f64,
    pub fallback: Fallback,
    pub gt: AngleDistribution,
    pub pred: AngleDistribution,
}

/// Invasion score of one vessel: mean of the per-plane W1 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViScore {
    pub vessel: VesselId,
    pub score: f64,
    pub planes: Vec<PlaneScore>,
}

/// Flat per-plane row for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViRecord {
    pub case_id: String,
    pub vessel: VesselId,
    pub plane: Plane,
    pub w1: f64,
    pub gt_mean: f64,
    pub gt_std: f64,
    pub pred_mean: f64,
    pub pred_std: f64,
    pub fallback: Fallback,
}

impl ViScore {
    pub fn records(&self, case_id: &str) -> Vec<ViRecord> {
        self.planes
            .iter()
            .map(|p| ViRecord {
                case_id: case_id.to_string(),
                vessel: self.vessel,
                plane: p.plane,
                w1: p.w1,
                gt_mean: p.gt.mean,
                gt_std: p.gt.std,
                pred_mean: p.pred.mean,
                pred_std: p.pred.std,
                fallback: p.fallback,
            })
            .collect()
    }

    pub fn fallbacks(&self) -> Vec<Fallback> {
        self.planes.iter().map(|p| p.fallback).collect()
    }
}

/// Reference side of one vessel: slice geometry and rater angles per plane.
/// Built once per case and reused for every submission.
#[derive(Debug, Clone)]
pub struct VesselReference {
    pub vessel: VesselId,
    planes: Vec<(VesselProfile, AngleDistribution)>,
}

impl VesselReference {
    pub fn new(reference: &Reference, vessel: VesselId, config: &VascularConfig) -> Self {
        let mask = reference.vessel_map.extract(vessel.label());
        let planes = Plane::ALL
            .iter()
            .map(|&plane| {
                let profile = VesselProfile::with_options(&mask, plane, config.contact);
                let gt = distribution_from_masks(&profile, &reference.rater_masks);
                (profile, gt)
            })
            .collect();
        VesselReference { vessel, planes }
    }

    /// Scores prediction binarizations, one mask per threshold.
    pub fn score(&self, pred_masks: &[BinaryMask], config: &VascularConfig) -> Result<ViScore> {
        let dz = grid_step(config.grid_size);
        let mut planes = Vec::with_capacity(self.planes.len());
        for (profile, gt) in &self.planes {
            let pred = distribution_from_masks(profile, pred_masks);
            let p = sample_gaussian_on_grid(gt, config.grid_size, config.smoothing)?;
            let q = sample_gaussian_on_grid(&pred, config.grid_size, config.smoothing)?;
            let w = w1_discrete(&p, &q, dz)?;
            planes.push(PlaneScore {
                plane: profile.plane,
                w1: w.value,
                fallback: w.fallback,
                gt: gt.clone(),
                pred,
            });
        }
        let score = planes.iter().map(|p| p.w1).sum::<f64>() / planes.len() as f64;
        Ok(ViScore {
            vessel: self.vessel,
            score,
            planes,
        })
    }
}

/// Binarizations `p > t` of a probability map for every threshold.
pub fn threshold_masks(prob: &ProbMap, thresholds: &ThresholdSet) -> Vec<BinaryMask> {
    thresholds
        .values()
        .iter()
        .map(|&t| prob.threshold(t))
        .collect()
}

pub fn vi_score(
    case: &CaseBundle,
    vessel: VesselId,
    thresholds: &ThresholdSet,
    config: &VascularConfig,
) -> Result<ViScore> {
    if config.grid_size < 2 {
        return Err(EvalError::InvalidParameter(format!(
            "grid size {} < 2",
            config.grid_size
        )));
    }
    let reference = VesselReference::new(&case.reference, vessel, config);
    reference.score(
        &threshold_masks(&case.submission.pred_prob, thresholds),
        config,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vessel_label_bijection() {
        for v in VesselId::ALL {
            assert_eq!(VesselId::from_label(v.label()), Some(v));
        }
        assert_eq!(VesselId::from_label(0), None);
        assert_eq!(VesselId::from_label(6), None);
        let codes: Vec<u8> = VesselId::ALL.iter().map(|v| v.label()).collect();
        assert_eq!(codes, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn planes_partition_axes() {
        let mut axes: Vec<usize> = Plane::ALL.iter().map(|p| p.axis()).collect();
        axes.sort();
        assert_eq!(axes, vec![0, 1, 2]);
    }
}
