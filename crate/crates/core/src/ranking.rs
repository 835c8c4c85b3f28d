//! Team leaderboards: per-axis ranking, bootstrap stability, paired
//! significance tests and complexity-based case selection.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{EvalError, Result};
use crate::metrics::mean_and_population_std;
use crate::vascular::VesselId;

pub const DEFAULT_BOOTSTRAP_ITERATIONS: usize = 500;
pub const DEFAULT_COMPLEXITY_THRESHOLD: f64 = 0.30;
/// Nonzero differences needed before a signed-rank test is attempted.
pub const WILCOXON_MIN_N: usize = 5;
/// Largest sample size evaluated with the exact null distribution.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Dsc,
    ThrDsc,
    MrEce,
    Crps,
    Vi(VesselId),
}

impl Axis {
    pub const ALL: [Axis; 9] = [
        Axis::Dsc,
        Axis::ThrDsc,
        Axis::MrEce,
        Axis::Crps,
        Axis::Vi(VesselId::Porta),
        Axis::Vi(VesselId::Smv),
        Axis::Vi(VesselId::Aorta),
        Axis::Vi(VesselId::CeliacTrunk),
        Axis::Vi(VesselId::Sma),
    ];

    pub fn direction(self) -> Direction {
        match self {
            Axis::Dsc | Axis::ThrDsc => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Dsc => "dsc",
            Axis::ThrDsc => "thr_dsc",
            Axis::MrEce => "mr_ece",
            Axis::Crps => "crps",
            Axis::Vi(VesselId::Porta) => "vi_porta",
            Axis::Vi(VesselId::Smv) => "vi_smv",
            Axis::Vi(VesselId::Aorta) => "vi_aorta",
            Axis::Vi(VesselId::CeliacTrunk) => "vi_celiac_trunk",
            Axis::Vi(VesselId::Sma) => "vi_sma",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| EvalError::InvalidParameter(format!("unknown axis {s:?}")))
    }
}

impl Serialize for Axis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Axis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ranks with 1 = best; tied values share the average of their positions.
pub fn rank_axis(values: &[f64], direction: Direction) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |i: usize| match direction {
        Direction::HigherBetter => -values[i],
        Direction::LowerBetter => values[i],
    };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Per-case metric values, `teams × cases × axes`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub teams: Vec<String>,
    pub cases: Vec<String>,
    pub axes: Vec<Axis>,
    values: Vec<f64>,
}

impl MetricTable {
    /// A table with every cell missing.
    pub fn new(teams: Vec<String>, cases: Vec<String>, axes: Vec<Axis>) -> Self {
        let n = teams.len() * cases.len() * axes.len();
        MetricTable {
            teams,
            cases,
            axes,
            values: vec![f64::NAN; n],
        }
    }

    fn offset(&self, team: usize, case: usize, axis: usize) -> usize {
        (team * self.cases.len() + case) * self.axes.len() + axis
    }

    pub fn axis_index(&self, axis: Axis) -> Option<usize> {
        self.axes.iter().position(|&a| a == axis)
    }

    pub fn set(&mut self, team: usize, case: usize, axis: usize, value: f64) {
        let o = self.offset(team, case, axis);
        self.values[o] = value;
    }

    pub fn get(&self, team: usize, case: usize, axis: usize) -> f64 {
        self.values[self.offset(team, case, axis)]
    }

    /// Values of one team on one axis, in case order.
    pub fn series(&self, team: usize, axis: usize) -> Vec<f64> {
        (0..self.cases.len())
            .map(|c| self.get(team, c, axis))
            .collect()
    }

    /// Fails on the first missing (NaN) cell.
    pub fn validate(&self) -> Result<()> {
        if self.teams.is_empty() || self.axes.is_empty() {
            return Err(EvalError::InvalidParameter("empty metric table".into()));
        }
        if self.cases.is_empty() {
            return Err(EvalError::NoCompleteCases);
        }
        for t in 0..self.teams.len() {
            for c in 0..self.cases.len() {
                for a in 0..self.axes.len() {
                    if !self.get(t, c, a).is_finite() {
                        return Err(EvalError::MissingCell {
                            team: self.teams[t].clone(),
                            axis: format!("{} (case {})", self.axes[a], self.cases[c]),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Restricts the table to the given cases, in the given order.
    pub fn select_cases(&self, cases: &[String]) -> Result<MetricTable> {
        let idx: Vec<usize> = cases
            .iter()
            .map(|c| {
                self.cases
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| EvalError::InvalidParameter(format!("unknown case {c}")))
            })
            .collect::<Result<_>>()?;
        let mut out = MetricTable::new(self.teams.clone(), cases.to_vec(), self.axes.clone());
        for t in 0..self.teams.len() {
            for (nc, &c) in idx.iter().enumerate() {
                for a in 0..self.axes.len() {
                    out.set(t, nc, a, self.get(t, c, a));
                }
            }
        }
        Ok(out)
    }

    /// Mean over the case multiset `picks` for every team and axis,
    /// as `[axis][team]`.
    fn means_over(&self, picks: &[usize]) -> Vec<Vec<f64>> {
        let n = picks.len() as f64;
        (0..self.axes.len())
            .map(|a| {
                (0..self.teams.len())
                    .map(|t| picks.iter().map(|&c| self.get(t, c, a)).sum::<f64>() / n)
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisStanding {
    pub axis: Axis,
    pub mean: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamStanding {
    pub team: String,
    pub axes: Vec<AxisStanding>,
    pub mean_rank: f64,
    pub rank_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub case_count: usize,
    /// Sorted by mean rank, then team name.
    pub standings: Vec<TeamStanding>,
}

impl Leaderboard {
    pub fn team(&self, name: &str) -> Option<&TeamStanding> {
        self.standings.iter().find(|s| s.team == name)
    }

    /// Copy with axis means passed through `f`; ranks are untouched.
    pub fn map_means(&self, f: impl Fn(Axis, f64) -> f64) -> Leaderboard {
        let mut out = self.clone();
        for s in &mut out.standings {
            for a in &mut s.axes {
                a.mean = f(a.axis, a.mean);
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| EvalError::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Leaderboard from team means given as `[team][axis]`.
pub fn leaderboard_from_means(
    teams: &[String],
    axes: &[Axis],
    means: &[Vec<f64>],
    case_count: usize,
) -> Leaderboard {
    let ranks: Vec<Vec<f64>> = axes
        .iter()
        .enumerate()
        .map(|(a, axis)| {
            let column: Vec<f64> = means.iter().map(|m| m[a]).collect();
            rank_axis(&column, axis.direction())
        })
        .collect();
    let mut standings: Vec<TeamStanding> = teams
        .iter()
        .enumerate()
        .map(|(t, team)| {
            let team_ranks: Vec<f64> = ranks.iter().map(|r| r[t]).collect();
            let (mean_rank, rank_std) = mean_and_population_std(&team_ranks);
            TeamStanding {
                team: team.clone(),
                axes: axes
                    .iter()
                    .enumerate()
                    .map(|(a, &axis)| AxisStanding {
                        axis,
                        mean: means[t][a],
                        rank: ranks[a][t],
                    })
                    .collect(),
                mean_rank,
                rank_std,
            }
        })
        .collect();
    standings.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then_with(|| a.team.cmp(&b.team))
    });
    Leaderboard {
        case_count,
        standings,
    }
}

pub fn build_leaderboard(table: &MetricTable) -> Result<Leaderboard> {
    table.validate()?;
    let all: Vec<usize> = (0..table.cases.len()).collect();
    let by_axis = table.means_over(&all);
    let means: Vec<Vec<f64>> = (0..table.teams.len())
        .map(|t| by_axis.iter().map(|col| col[t]).collect())
        .collect();
    Ok(leaderboard_from_means(
        &table.teams,
        &table.axes,
        &means,
        table.cases.len(),
    ))
}

/// Rank frequencies over bootstrap resamples. Ranks live on a half-integer
/// lattice because of tie averaging; slot `k` holds rank `(k + 2) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub teams: Vec<String>,
    pub axes: Vec<Axis>,
    pub iterations: usize,
    pub seed: u64,
    /// `[axis][team][slot]`
    pub frequencies: Vec<Vec<Vec<f64>>>,
}

fn rank_slot(rank: f64) -> usize {
    (rank * 2.0).round() as usize - 2
}

fn slot_rank(slot: usize) -> f64 {
    (slot + 2) as f64 / 2.0
}

impl BootstrapResult {
    pub fn frequency(&self, axis: usize, team: usize, rank: f64) -> f64 {
        let slot = rank_slot(rank);
        self.frequencies[axis][team]
            .get(slot)
            .copied()
            .unwrap_or(0.0)
    }

    /// `(rank, frequency)` pairs with nonzero frequency.
    pub fn distribution(&self, axis: usize, team: usize) -> Vec<(f64, f64)> {
        self.frequencies[axis][team]
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0.0)
            .map(|(k, &f)| (slot_rank(k), f))
            .collect()
    }

    /// Long format `axis,team,rank,frequency`, every rank from 1 to n and
    /// half ranks only when observed.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["axis", "team", "rank", "frequency"])?;
        for (a, axis) in self.axes.iter().enumerate() {
            for (t, team) in self.teams.iter().enumerate() {
                for (k, &f) in self.frequencies[a][t].iter().enumerate() {
                    let integral = k % 2 == 0;
                    if integral || f > 0.0 {
                        w.write_record([
                            axis.name(),
                            team,
                            &slot_rank(k).to_string(),
                            &f.to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush().map_err(|e| EvalError::io(path, e))?;
        Ok(())
    }
}

/// Case-level bootstrap of per-axis ranks. Every iteration draws its own
/// RNG stream from `seed`, so the result is independent of scheduling.
pub fn bootstrap_ranks(
    table: &MetricTable,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    table.validate()?;
    let n_cases = table.cases.len();
    let (n_axes, n_teams) = (table.axes.len(), table.teams.len());
    let slots = 2 * n_teams - 1;
    let counts = (0..iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let picks: Vec<usize> = (0..n_cases).map(|_| rng.gen_range(0..n_cases)).collect();
            let means = table.means_over(&picks);
            let mut local = vec![0u64; n_axes * n_teams * slots];
            for (a, col) in means.iter().enumerate() {
                for (t, r) in rank_axis(col, table.axes[a].direction())
                    .into_iter()
                    .enumerate()
                {
                    local[(a * n_teams + t) * slots + rank_slot(r)] += 1;
                }
            }
            local
        })
        .reduce(
            || vec![0u64; n_axes * n_teams * slots],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let denom = iterations.max(1) as f64;
    let frequencies = (0..n_axes)
        .map(|a| {
            (0..n_teams)
                .map(|t| {
                    let base = (a * n_teams + t) * slots;
                    counts[base..base + slots]
                        .iter()
                        .map(|&c| c as f64 / denom)
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(BootstrapResult {
        teams: table.teams.clone(),
        axes: table.axes.clone(),
        iterations,
        seed,
        frequencies,
    })
}

/// Two-sided paired Wilcoxon signed-rank p-value. Zero differences are
/// dropped; `None` when fewer than five remain.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n < WILCOXON_MIN_N {
        return Ok(None);
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = rank_axis(&abs, Direction::LowerBetter);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let p = if n <= WILCOXON_EXACT_MAX_N {
        exact_signed_rank_p(&ranks, w_plus)
    } else {
        normal_signed_rank_p(&ranks, w_plus)
    };
    Ok(Some(p.clamp(f64::MIN_POSITIVE, 1.0)))
}

fn exact_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    // doubled ranks are integers even with averaged ties
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let w = (w_plus * 2.0).round() as usize;
    let lower: f64 = counts[..=w].iter().sum::<f64>() / all;
    let upper: f64 = counts[w..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_signed_rank_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Pairwise p-values per axis; `None` marks untestable pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMatrix {
    pub teams: Vec<String>,
    pub axes: Vec<Axis>,
    /// `[axis][team_a][team_b]`, diagonal 1.
    pub p_values: Vec<Vec<Vec<Option<f64>>>>,
}

impl SignificanceMatrix {
    pub fn compute(table: &MetricTable) -> Result<Self> {
        table.validate()?;
        let n = table.teams.len();
        let mut p_values = Vec::with_capacity(table.axes.len());
        for a in 0..table.axes.len() {
            let series: Vec<Vec<f64>> = (0..n).map(|t| table.series(t, a)).collect();
            let mut m = vec![vec![None; n]; n];
            for i in 0..n {
                m[i][i] = Some(1.0);
                for j in i + 1..n {
                    let p = wilcoxon_signed_rank(&series[i], &series[j])?;
                    m[i][j] = p;
                    m[j][i] = p;
                }
            }
            p_values.push(m);
        }
        Ok(SignificanceMatrix {
            teams: table.teams.clone(),
            axes: table.axes.clone(),
            p_values,
        })
    }

    /// `axis,team_a,team_b,p_value` for every ordered off-diagonal pair;
    /// `NA` when the test was not possible.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["axis", "team_a", "team_b", "p_value"])?;
        for (a, axis) in self.axes.iter().enumerate() {
            for (i, ta) in self.teams.iter().enumerate() {
                for (j, tb) in self.teams.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let p =
                        self.p_values[a][i][j].map_or_else(|| "NA".to_string(), |p| p.to_string());
                    w.write_record([axis.name(), ta, tb, &p])?;
                }
            }
        }
        w.flush().map_err(|e| EvalError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseComplexity {
    pub case_id: String,
    pub mean_interrater_dsc: f64,
}

/// Cases whose mean pairwise rater DSC is at most `threshold`.
pub fn high_complexity_filter(cases: &[CaseComplexity], threshold: f64) -> Vec<String> {
    cases
        .iter()
        .filter(|c| c.mean_interrater_dsc <= threshold)
        .map(|c| c.case_id.clone())
        .collect()
}

/// Percentile `q ∈ [0, 100]` with linear interpolation between order
/// statistics. `None` for an empty slice.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (q.clamp(0.0, 100.0) / 100.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}
