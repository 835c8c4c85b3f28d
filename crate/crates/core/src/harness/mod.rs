//! End-to-end evaluation of one or more teams over a dataset directory.

mod plots;
mod report;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{average_annotation, AgreementMatrix, CaseAgreement};
use crate::error::{EvalError, Result};
use crate::grid::ProbMap;
use crate::io::{
    discover_cases, load_reference, load_submission, prediction_files, CaseBundle, CaseDescriptor,
    Reference,
};
use crate::metrics::{
    crps, dsc, expert_volume, mr_ece, prob_volume, thr_dsc, GlobalMetrics, ThresholdSet,
    VolumeStats, DEFAULT_CRPS_GRID, DEFAULT_ECE_BINS, DEFAULT_ECE_PADDING, DSC_EPS,
};
use crate::ranking::{
    bootstrap_ranks, build_leaderboard, high_complexity_filter, Axis, BootstrapResult,
    CaseComplexity, Leaderboard, MetricTable, SignificanceMatrix, DEFAULT_BOOTSTRAP_ITERATIONS,
    DEFAULT_COMPLEXITY_THRESHOLD,
};
use crate::vascular::{
    threshold_masks, ContactOptions, VascularConfig, VesselId, VesselReference, ViScore,
    ANGLE_GRID_SIZE, ANGLE_SMOOTHING,
};

pub use report::{
    leaderboard_from_per_case, read_per_case, table_from_rows, FailureThresholds, PerCaseRow,
    VascularRow,
};

pub const DEFAULT_SEED: u64 = 42;
pub const FAILURE_DSC_PERCENTILE: f64 = 5.0;
pub const FAILURE_CALIBRATION_PERCENTILE: f64 = 90.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamSubmission {
    pub name: String,
    pub root: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeUnit {
    #[default]
    Cm3,
    Mm3,
}

/// Presentation units for JSON reports. CSV outputs always use fractions
/// and cm³.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DisplayUnits {
    /// Report DSC, Thr-DSC and MR-ECE in percent.
    pub percent: bool,
    pub volume: VolumeUnit,
}

impl DisplayUnits {
    pub fn scale(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Dsc | Axis::ThrDsc | Axis::MrEce if self.percent => 100.0,
            Axis::Crps if self.volume == VolumeUnit::Mm3 => 1000.0,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub dataset_root: PathBuf,
    pub submissions: Vec<TeamSubmission>,
    pub output_dir: PathBuf,
    pub thresholds: ThresholdSet,
    pub ece_padding: usize,
    pub ece_bins: usize,
    pub crps_grid: usize,
    pub angle_grid: usize,
    pub smoothing: f64,
    pub contact: ContactOptions,
    pub bootstrap_iterations: usize,
    pub seed: u64,
    pub complexity_threshold: f64,
    pub units: DisplayUnits,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub plots: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            dataset_root: PathBuf::new(),
            submissions: Vec::new(),
            output_dir: PathBuf::from("results"),
            thresholds: ThresholdSet::default(),
            ece_padding: DEFAULT_ECE_PADDING,
            ece_bins: DEFAULT_ECE_BINS,
            crps_grid: DEFAULT_CRPS_GRID,
            angle_grid: ANGLE_GRID_SIZE,
            smoothing: ANGLE_SMOOTHING,
            contact: ContactOptions::default(),
            bootstrap_iterations: DEFAULT_BOOTSTRAP_ITERATIONS,
            seed: DEFAULT_SEED,
            complexity_threshold: DEFAULT_COMPLEXITY_THRESHOLD,
            units: DisplayUnits::default(),
            workers: 0,
            plots: false,
        }
    }
}

impl EvalConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn vascular(&self) -> VascularConfig {
        VascularConfig {
            grid_size: self.angle_grid,
            smoothing: self.smoothing,
            contact: self.contact,
        }
    }

    /// Checks the metric parameters; paths are checked when used.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::InvalidParameter(m));
        if self.ece_bins == 0 {
            return bad("ece_bins must be positive".into());
        }
        if self.crps_grid < 2 || self.angle_grid < 2 {
            return bad("grid sizes must be at least 2".into());
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return bad(format!(
                "smoothing {} must be finite and non-negative",
                self.smoothing
            ));
        }
        if !self.complexity_threshold.is_finite() {
            return bad("complexity threshold must be finite".into());
        }
        let mut names = HashSet::new();
        for s in &self.submissions {
            if s.name.is_empty() || !names.insert(&s.name) {
                return bad(format!("team name {:?} empty or repeated", s.name));
            }
        }
        Ok(())
    }
}

/// All metrics of one submission on one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub case_id: String,
    pub metrics: GlobalMetrics,
    pub ece_per_rater: Vec<f64>,
    pub ece_region_voxels: usize,
    pub expert_volumes_cm3: Vec<f64>,
    pub pred_volume_cm3: f64,
    pub mean_interrater_dsc: f64,
    pub vascular: Vec<ViScore>,
}

impl MetricReport {
    pub fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Dsc => self.metrics.dsc,
            Axis::ThrDsc => self.metrics.thr_dsc,
            Axis::MrEce => self.metrics.mr_ece,
            Axis::Crps => self.metrics.crps,
            Axis::Vi(v) => self
                .vascular
                .iter()
                .find(|s| s.vessel == v)
                .map_or(f64::NAN, |s| s.score),
        }
    }

    /// Copy with fractions and volumes converted for display.
    pub fn in_units(&self, units: DisplayUnits) -> MetricReport {
        let mut r = self.clone();
        let pct = units.scale(Axis::Dsc);
        let vol = units.scale(Axis::Crps);
        r.metrics.dsc *= pct;
        r.metrics.thr_dsc *= pct;
        r.metrics.mr_ece *= pct;
        r.metrics.crps *= vol;
        r.ece_per_rater.iter_mut().for_each(|v| *v *= pct);
        r.expert_volumes_cm3.iter_mut().for_each(|v| *v *= vol);
        r.pred_volume_cm3 *= vol;
        r.mean_interrater_dsc *= pct;
        r
    }
}

/// Reference-side quantities shared by every submission of a case.
#[derive(Debug, Clone)]
pub struct ReferenceAnalysis {
    pub average: ProbMap,
    pub agreement: CaseAgreement,
    pub expert_volumes: Vec<f64>,
    pub vessels: Vec<VesselReference>,
}

impl ReferenceAnalysis {
    pub fn new(reference: &Reference, cfg: &EvalConfig) -> Result<Self> {
        let vascular = cfg.vascular();
        Ok(ReferenceAnalysis {
            average: average_annotation(&reference.rater_masks)?,
            agreement: CaseAgreement::compute(reference)?,
            expert_volumes: reference.rater_masks.iter().map(expert_volume).collect(),
            vessels: VesselId::ALL
                .iter()
                .map(|&v| VesselReference::new(reference, v, &vascular))
                .collect(),
        })
    }

    pub fn evaluate(&self, bundle: &CaseBundle, cfg: &EvalConfig) -> Result<MetricReport> {
        let reference = &bundle.reference;
        let sub = &bundle.submission;
        let calibration = mr_ece(
            &sub.pred_prob,
            &reference.rater_masks,
            cfg.ece_padding,
            cfg.ece_bins,
        )?;
        let volumes = VolumeStats::new(self.expert_volumes.clone(), prob_volume(&sub.pred_prob))?;
        let metrics = GlobalMetrics {
            dsc: dsc(&sub.pred_bin, &reference.staple_mask, DSC_EPS)?,
            thr_dsc: thr_dsc(&sub.pred_prob, &self.average, &cfg.thresholds)?,
            mr_ece: calibration.mr_ece,
            crps: crps(&volumes, cfg.crps_grid)?,
        };
        let masks = threshold_masks(&sub.pred_prob, &cfg.thresholds);
        let vascular_cfg = cfg.vascular();
        let vascular = self
            .vessels
            .iter()
            .map(|v| v.score(&masks, &vascular_cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricReport {
            case_id: reference.case_id.clone(),
            metrics,
            ece_per_rater: calibration.per_rater,
            ece_region_voxels: calibration.region_voxels,
            expert_volumes_cm3: volumes.expert_volumes,
            pred_volume_cm3: volumes.pred_volume,
            mean_interrater_dsc: self.agreement.mean_interrater(),
            vascular,
        })
    }
}

/// Every metric for one case bundle.
pub fn evaluate_case(bundle: &CaseBundle, cfg: &EvalConfig) -> Result<MetricReport> {
    cfg.validate()?;
    ReferenceAnalysis::new(&bundle.reference, cfg)?.evaluate(bundle, cfg)
}

/// A case (and team, when specific to one) that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseError {
    pub case_id: String,
    pub team: Option<String>,
    pub error: String,
}

/// Ranking artifacts for one set of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub cases: Vec<String>,
    pub leaderboard: Leaderboard,
    pub bootstrap: BootstrapResult,
    pub significance: SignificanceMatrix,
}

#[derive(Debug, Clone)]
pub struct CohortResult {
    pub rows: Vec<(String, MetricReport)>,
    pub errors: Vec<CaseError>,
    pub ranking: RankingReport,
    pub high_complexity: Option<RankingReport>,
    pub agreement: Option<AgreementMatrix>,
}

struct CaseOutcome {
    case_id: String,
    agreement: Option<CaseAgreement>,
    results: Vec<std::result::Result<MetricReport, String>>,
}

fn process_case(desc: &CaseDescriptor, cfg: &EvalConfig) -> CaseOutcome {
    let fail_all = |msg: String| CaseOutcome {
        case_id: desc.case_id.clone(),
        agreement: None,
        results: cfg.submissions.iter().map(|_| Err(msg.clone())).collect(),
    };
    let reference = match load_reference(desc, false) {
        Ok(r) => Arc::new(r),
        Err(e) => return fail_all(format!("reference: {e}")),
    };
    let analysis = match ReferenceAnalysis::new(&reference, cfg) {
        Ok(a) => a,
        Err(e) => return fail_all(format!("reference: {e}")),
    };
    let results = cfg
        .submissions
        .iter()
        .map(|team| {
            let files = prediction_files(&team.root, &desc.case_id);
            for p in [&files.binary, &files.prob] {
                if !p.is_file() {
                    return Err(format!("missing prediction {}", p.display()));
                }
            }
            load_submission(&files)
                .and_then(|s| CaseBundle::new(reference.clone(), s))
                .and_then(|b| analysis.evaluate(&b, cfg))
                .map_err(|e| e.to_string())
        })
        .collect();
    CaseOutcome {
        case_id: desc.case_id.clone(),
        agreement: Some(analysis.agreement),
        results,
    }
}

fn ranking_report(table: &MetricTable, cfg: &EvalConfig) -> Result<RankingReport> {
    Ok(RankingReport {
        cases: table.cases.clone(),
        leaderboard: build_leaderboard(table)?,
        bootstrap: bootstrap_ranks(table, cfg.bootstrap_iterations, cfg.seed)?,
        significance: SignificanceMatrix::compute(table)?,
    })
}

/// Evaluates every team on every case and writes all reports to
/// `cfg.output_dir`. Per-case failures are recorded and skipped; ranking
/// uses the cases every team completed.
pub fn evaluate_cohort(cfg: &EvalConfig) -> Result<CohortResult> {
    cfg.validate()?;
    if cfg.submissions.is_empty() {
        return Err(EvalError::InvalidParameter(
            "no submissions configured".into(),
        ));
    }
    let discovery = discover_cases(&cfg.dataset_root, None)?;
    let mut errors: Vec<CaseError> = discovery
        .incomplete
        .iter()
        .map(|c| CaseError {
            case_id: c.case_id.clone(),
            team: None,
            error: format!("incomplete reference, missing {}", c.missing.join(", ")),
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| EvalError::InvalidParameter(format!("thread pool: {e}")))?;
    info!(
        "evaluating {} cases for {} teams",
        discovery.complete.len(),
        cfg.submissions.len()
    );
    let outcomes: Vec<CaseOutcome> = pool.install(|| {
        discovery
            .complete
            .par_iter()
            .map(|d| process_case(d, cfg))
            .collect()
    });

    let mut rows = Vec::new();
    let mut agreements = Vec::new();
    for outcome in outcomes {
        if let Some(a) = outcome.agreement {
            agreements.push(a);
        }
        for (team, result) in cfg.submissions.iter().zip(outcome.results) {
            match result {
                Ok(report) => rows.push((team.name.clone(), report)),
                Err(error) => {
                    warn!("case {} team {}: {error}", outcome.case_id, team.name);
                    errors.push(CaseError {
                        case_id: outcome.case_id.clone(),
                        team: Some(team.name.clone()),
                        error,
                    });
                }
            }
        }
    }

    let (per_case, limits) = report::per_case_rows(&rows, &agreements);
    let teams: Vec<String> = cfg.submissions.iter().map(|s| s.name.clone()).collect();
    let table = table_from_rows(&per_case, &teams)?;
    let ranking = pool.install(|| ranking_report(&table, cfg))?;

    let complexity: Vec<CaseComplexity> = agreements
        .iter()
        .filter(|a| table.cases.contains(&a.case_id))
        .map(|a| CaseComplexity {
            case_id: a.case_id.clone(),
            mean_interrater_dsc: a.mean_interrater(),
        })
        .collect();
    let hard = high_complexity_filter(&complexity, cfg.complexity_threshold);
    let high_complexity = if hard.is_empty() {
        info!(
            "no case at or below complexity threshold {}",
            cfg.complexity_threshold
        );
        None
    } else {
        let sub = table.select_cases(&hard)?;
        Some(pool.install(|| ranking_report(&sub, cfg))?)
    };
    let agreement = if agreements.is_empty() {
        None
    } else {
        Some(AgreementMatrix::from_cases(&agreements)?)
    };

    let result = CohortResult {
        rows,
        errors,
        ranking,
        high_complexity,
        agreement,
    };
    report::write_outputs(&result, &per_case, &limits, &complexity, cfg)?;
    if cfg.plots {
        plots::write_plots(&result, cfg)?;
    }
    Ok(result)
}
