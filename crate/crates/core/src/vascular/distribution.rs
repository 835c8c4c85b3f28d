//! Angle distributions, their Gaussian discretization and discrete W1.

use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};
use crate::metrics::mean_and_population_std;

pub const ANGLE_GRID_SIZE: usize = 1000;
pub const ANGLE_SMOOTHING: f64 = 1.0;
/// A density with at least this much mass in one cell is treated as a point.
pub const DEGENERATE_MASS: f64 = 0.999;
/// Penalty when exactly one side is empty and the other is spread out.
pub const EMPTY_PENALTY: f64 = 360.0;

/// Contact angles from raters or thresholds, with population statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleDistribution {
    pub mean: f64,
    pub std: f64,
    pub sample_count: usize,
    pub samples: Vec<f64>,
}

impl AngleDistribution {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (mean, std) = mean_and_population_std(&samples);
        AngleDistribution {
            mean,
            std,
            sample_count: samples.len(),
            samples,
        }
    }

    /// True when at least one sample shows tumor contact.
    pub fn has_contact(&self) -> bool {
        self.samples.iter().any(|&a| a > 0.0)
    }
}

/// Grid step for `n` points spanning [0, 360].
pub fn grid_step(n: usize) -> f64 {
    360.0 / (n as f64 - 1.0)
}

/// Normalized weights on the angle grid. `empty` marks a distribution
/// without contact or whose weights vanished during sanitization; its
/// weights are all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub weights: Vec<f64>,
    pub mean: f64,
    pub empty: bool,
}

impl GridDensity {
    pub fn empty(grid_size: usize, mean: f64) -> Self {
        GridDensity {
            weights: vec![0.0; grid_size],
            mean,
            empty: true,
        }
    }

    /// Normalizes arbitrary weights, replacing NaN, infinities and negatives
    /// with zero.
    pub fn from_weights(mut weights: Vec<f64>, mean: f64) -> Self {
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < 0.0 {
                *w = 0.0;
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return GridDensity::empty(weights.len(), mean);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        GridDensity {
            weights,
            mean,
            empty: false,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !self.empty && self.weights.iter().any(|&w| w >= DEGENERATE_MASS)
    }
}

/// Evaluates N(mean, (std + smoothing)²) on `grid_size` uniform points over
/// [0, 360]. Mass outside the window is dropped before normalizing. A
/// distribution whose samples are all zero yields an empty density.
pub fn sample_gaussian_on_grid(
    dist: &AngleDistribution,
    grid_size: usize,
    smoothing: f64,
) -> Result<GridDensity> {
    if grid_size < 2 {
        return Err(EvalError::InvalidParameter(format!(
            "grid size {grid_size} < 2"
        )));
    }
    if !dist.has_contact() {
        return Ok(GridDensity::empty(grid_size, dist.mean));
    }
    let sigma = dist.std + smoothing;
    let dz = grid_step(grid_size);
    let weights = (0..grid_size)
        .map(|n| {
            let z = (n as f64 * dz - dist.mean) / sigma;
            (-0.5 * z * z).exp()
        })
        .collect();
    Ok(GridDensity::from_weights(weights, dist.mean))
}

/// Which branch of the W1 rule produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    BothEmpty,
    OneEmptyDegenerate,
    OneEmptyPenalty,
}

impl Fallback {
    pub fn as_str(self) -> &'static str {
        match self {
            Fallback::None => "none",
            Fallback::BothEmpty => "both_empty",
            Fallback::OneEmptyDegenerate => "one_empty_degenerate",
            Fallback::OneEmptyPenalty => "one_empty_penalty",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W1 {
    pub value: f64,
    pub fallback: Fallback,
}

/// `Δz · Σ |P_n − Q_n|` over cumulative sums, with the empty-side rules.
pub fn w1_discrete(p: &GridDensity, q: &GridDensity, delta_z: f64) -> Result<W1> {
    if p.weights.len() != q.weights.len() {
        return Err(EvalError::LengthMismatch(p.weights.len(), q.weights.len()));
    }
    let (value, fallback) = match (p.empty, q.empty) {
        (true, true) => (0.0, Fallback::BothEmpty),
        (true, false) | (false, true) => {
            let other = if p.empty { q } else { p };
            if other.is_degenerate() {
                (other.mean.abs(), Fallback::OneEmptyDegenerate)
            } else {
                (EMPTY_PENALTY, Fallback::OneEmptyPenalty)
            }
        }
        (false, false) => {
            let (mut cp, mut cq, mut acc) = (0.0, 0.0, 0.0);
            for (a, b) in p.weights.iter().zip(&q.weights) {
                cp += a;
                cq += b;
                acc += (cp - cq).abs();
            }
            (delta_z * acc, Fallback::None)
        }
    };
    Ok(W1 { value, fallback })
}
