//! Tabular and JSON outputs of a cohort run, and reading them back.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CaseError, CohortResult, DisplayUnits, EvalConfig, MetricReport, RankingReport};
use crate::consensus::CaseAgreement;
use crate::error::{EvalError, Result};
use crate::ranking::{
    build_leaderboard, percentile, Axis, CaseComplexity, Leaderboard, MetricTable,
};
use crate::vascular::{Fallback, Plane, VesselId};

use super::{FAILURE_CALIBRATION_PERCENTILE, FAILURE_DSC_PERCENTILE};

/// One line of `per_case.csv`, in fractions and cm³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCaseRow {
    pub team: String,
    pub case_id: String,
    pub dsc: f64,
    pub thr_dsc: f64,
    pub mr_ece: f64,
    pub crps: f64,
    pub vi_porta: f64,
    pub vi_smv: f64,
    pub vi_aorta: f64,
    pub vi_celiac_trunk: f64,
    pub vi_sma: f64,
    pub mean_interrater_dsc: f64,
    pub fail_dsc: bool,
    pub fail_thr_dsc: bool,
    pub fail_mr_ece: bool,
    pub fail_crps: bool,
}

impl PerCaseRow {
    pub fn axis_value(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Dsc => self.dsc,
            Axis::ThrDsc => self.thr_dsc,
            Axis::MrEce => self.mr_ece,
            Axis::Crps => self.crps,
            Axis::Vi(VesselId::Porta) => self.vi_porta,
            Axis::Vi(VesselId::Smv) => self.vi_smv,
            Axis::Vi(VesselId::Aorta) => self.vi_aorta,
            Axis::Vi(VesselId::CeliacTrunk) => self.vi_celiac_trunk,
            Axis::Vi(VesselId::Sma) => self.vi_sma,
        }
    }
}

/// Cut-offs used for the `fail_*` columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureThresholds {
    /// Low percentile of pooled pairwise rater DSC.
    pub overlap_floor: Option<f64>,
    pub mr_ece_ceiling: Option<f64>,
    pub crps_ceiling: Option<f64>,
}

pub(super) fn per_case_rows(
    rows: &[(String, MetricReport)],
    agreements: &[CaseAgreement],
) -> (Vec<PerCaseRow>, FailureThresholds) {
    let rater_pairs: Vec<f64> = agreements
        .iter()
        .flat_map(|a| {
            let k = a.rater_count();
            (0..k).flat_map(move |i| (i + 1..k).map(move |j| a.dsc[i][j]))
        })
        .collect();
    let eces: Vec<f64> = rows.iter().map(|(_, r)| r.metrics.mr_ece).collect();
    let crpss: Vec<f64> = rows.iter().map(|(_, r)| r.metrics.crps).collect();
    let limits = FailureThresholds {
        overlap_floor: percentile(&rater_pairs, FAILURE_DSC_PERCENTILE),
        mr_ece_ceiling: percentile(&eces, FAILURE_CALIBRATION_PERCENTILE),
        crps_ceiling: percentile(&crpss, FAILURE_CALIBRATION_PERCENTILE),
    };
    let below = |v: f64, t: Option<f64>| t.is_some_and(|t| v < t);
    let above = |v: f64, t: Option<f64>| t.is_some_and(|t| v > t);
    let out = rows
        .iter()
        .map(|(team, r)| {
            let vi = |v: VesselId| r.axis_value(Axis::Vi(v));
            PerCaseRow {
                team: team.clone(),
                case_id: r.case_id.clone(),
                dsc: r.metrics.dsc,
                thr_dsc: r.metrics.thr_dsc,
                mr_ece: r.metrics.mr_ece,
                crps: r.metrics.crps,
                vi_porta: vi(VesselId::Porta),
                vi_smv: vi(VesselId::Smv),
                vi_aorta: vi(VesselId::Aorta),
                vi_celiac_trunk: vi(VesselId::CeliacTrunk),
                vi_sma: vi(VesselId::Sma),
                mean_interrater_dsc: r.mean_interrater_dsc,
                fail_dsc: below(r.metrics.dsc, limits.overlap_floor),
                fail_thr_dsc: below(r.metrics.thr_dsc, limits.overlap_floor),
                fail_mr_ece: above(r.metrics.mr_ece, limits.mr_ece_ceiling),
                fail_crps: above(r.metrics.crps, limits.crps_ceiling),
            }
        })
        .collect();
    (out, limits)
}

/// Metric table over the cases every team completed, sorted by case id.
pub fn table_from_rows(rows: &[PerCaseRow], teams: &[String]) -> Result<MetricTable> {
    let all_cases: BTreeSet<&str> = rows.iter().map(|r| r.case_id.as_str()).collect();
    let cases: Vec<String> = all_cases
        .into_iter()
        .filter(|c| {
            teams
                .iter()
                .all(|t| rows.iter().any(|r| r.case_id == *c && &r.team == t))
        })
        .map(str::to_string)
        .collect();
    if cases.is_empty() {
        return Err(EvalError::NoCompleteCases);
    }
    let mut table = MetricTable::new(teams.to_vec(), cases, Axis::ALL.to_vec());
    for r in rows {
        let (Some(t), Some(c)) = (
            teams.iter().position(|x| x == &r.team),
            table.cases.iter().position(|x| x == &r.case_id),
        ) else {
            continue;
        };
        for (a, &axis) in Axis::ALL.iter().enumerate() {
            table.set(t, c, a, r.axis_value(axis));
        }
    }
    Ok(table)
}

pub fn read_per_case(path: &Path) -> Result<Vec<PerCaseRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader
        .deserialize()
        .collect::<std::result::Result<Vec<PerCaseRow>, _>>()?)
}

/// Rebuilds the leaderboard from a `per_case.csv` alone. Teams are taken in
/// order of first appearance.
pub fn leaderboard_from_per_case(path: &Path) -> Result<Leaderboard> {
    let rows = read_per_case(path)?;
    let mut teams: Vec<String> = Vec::new();
    for r in &rows {
        if !teams.contains(&r.team) {
            teams.push(r.team.clone());
        }
    }
    build_leaderboard(&table_from_rows(&rows, &teams)?)
}

/// One line of `vascular.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VascularRow {
    pub team: String,
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

#[derive(Serialize)]
struct DisplayLeaderboard<'a> {
    units: DisplayUnits,
    #[serde(flatten)]
    leaderboard: &'a Leaderboard,
}

#[derive(Serialize)]
struct DisplayReport<'a> {
    team: &'a str,
    units: DisplayUnits,
    #[serde(flatten)]
    report: &'a MetricReport,
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| EvalError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| EvalError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

fn write_ranking(dir: &Path, ranking: &RankingReport, units: DisplayUnits) -> Result<()> {
    create_dir(dir)?;
    let shown = ranking
        .leaderboard
        .map_means(|axis, v| v * units.scale(axis));
    write_json(
        &dir.join("leaderboard.json"),
        &DisplayLeaderboard {
            units,
            leaderboard: &shown,
        },
    )?;
    ranking.bootstrap.write_csv(&dir.join("bootstrap.csv"))?;
    ranking
        .significance
        .write_csv(&dir.join("significance.csv"))
}

fn write_vascular_summary(path: &Path, leaderboard: &Leaderboard) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["team".to_string()];
    header.extend(VesselId::ALL.iter().map(|v| v.name().to_string()));
    w.write_record(&header)?;
    for s in &leaderboard.standings {
        let mut rec = vec![s.team.clone()];
        for v in VesselId::ALL {
            let mean = s
                .axes
                .iter()
                .find(|a| a.axis == Axis::Vi(v))
                .map_or(f64::NAN, |a| a.mean);
            rec.push(mean.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| EvalError::io(path, e))
}

pub(super) fn write_outputs(
    result: &CohortResult,
    per_case: &[PerCaseRow],
    limits: &FailureThresholds,
    complexity: &[CaseComplexity],
    cfg: &EvalConfig,
) -> Result<()> {
    let out = &cfg.output_dir;
    create_dir(out)?;
    write_rows(
        &out.join("per_case.csv"),
        per_case,
        &["team", "case_id", "dsc", "thr_dsc", "mr_ece", "crps"],
    )?;
    write_json(&out.join("failure_thresholds.json"), limits)?;
    write_rows::<CaseError>(
        &out.join("errors.csv"),
        &result.errors,
        &["case_id", "team", "error"],
    )?;

    let vascular: Vec<VascularRow> = result
        .rows
        .iter()
        .flat_map(|(team, r)| {
            r.vascular.iter().flat_map(move |s| {
                s.records(&r.case_id)
                    .into_iter()
                    .map(move |rec| VascularRow {
                        team: team.clone(),
                        case_id: rec.case_id,
                        vessel: rec.vessel,
                        plane: rec.plane,
                        w1: rec.w1,
                        gt_mean: rec.gt_mean,
                        gt_std: rec.gt_std,
                        pred_mean: rec.pred_mean,
                        pred_std: rec.pred_std,
                        fallback: rec.fallback,
                    })
            })
        })
        .collect();
    write_rows(
        &out.join("vascular.csv"),
        &vascular,
        &["team", "case_id", "vessel", "plane", "w1"],
    )?;
    write_vascular_summary(
        &out.join("vascular_summary.csv"),
        &result.ranking.leaderboard,
    )?;

    for (team, report) in &result.rows {
        let dir = out.join("cases").join(team);
        create_dir(&dir)?;
        let shown = report.in_units(cfg.units);
        write_json(
            &dir.join(format!("{}.json", report.case_id)),
            &DisplayReport {
                team,
                units: cfg.units,
                report: &shown,
            },
        )?;
    }

    write_ranking(out, &result.ranking, cfg.units)?;
    if let Some(agreement) = &result.agreement {
        agreement.write_csv(&out.join("agreement_matrix.csv"))?;
        write_json(
            &out.join("agreement_summary.json"),
            &agreement.pooled_interrater,
        )?;
    }

    let hc_dir = out.join("high_complexity");
    create_dir(&hc_dir)?;
    let hard: Vec<&CaseComplexity> = complexity
        .iter()
        .filter(|c| c.mean_interrater_dsc <= cfg.complexity_threshold)
        .collect();
    write_rows(
        &hc_dir.join("cases.csv"),
        &hard,
        &["case_id", "mean_interrater_dsc"],
    )?;
    if let Some(hc) = &result.high_complexity {
        write_ranking(&hc_dir, hc, cfg.units)?;
    }
    write_json(&out.join("config.json"), cfg)
}
