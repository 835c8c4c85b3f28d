//! Synthetic multi-rater cases with known geometry.
//!
//! A case is a set of straight vessel tubes and an ellipsoidal tumor. The
//! tumor is carved away from every tube so that it only touches a vessel
//! through explicitly designed wraps: annular sectors of given arc hugging
//! the tube over a slice range. Raters differ by a per-rater shift of the
//! ellipsoid and by sector-wise boundary displacement of up to a few voxels;
//! the wraps are shared, so every rater sees the designed contact arcs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consensus::{staple, STAPLE_MAX_ITER, STAPLE_TOL};
use crate::error::{EvalError, Result};
use crate::grid::{BinaryMask, Geometry, Grid, LabelMap, ProbMap};
use crate::io::{
    write_reference, write_submission, CaseBundle, Reference, Submission, RATER_COUNT,
};
use crate::metrics::{dsc, expert_volume, DSC_EPS};
use crate::vascular::{Plane, VesselId};

/// Gap in voxels kept between the carved tumor and a tube wall.
const CARVE_MARGIN: f64 = 2.0;
pub const MAX_JITTER: usize = 2;

/// Annular tumor sector around a tube over slices `[slices[0], slices[1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wrap {
    pub arc_deg: f64,
    #[serde(default)]
    pub start_deg: f64,
    pub slices: [usize; 2],
    #[serde(default = "default_thickness")]
    pub thickness: f64,
}

fn default_thickness() -> f64 {
    3.0
}

/// Straight tube along array `axis`; `center` and `radius` in voxels,
/// `center` given in the two remaining axes in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesselTube {
    pub label: u8,
    pub axis: usize,
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub wraps: Vec<Wrap>,
}

impl VesselTube {
    /// Plane in which the tube's cross-section is a disk.
    pub fn plane(&self) -> Plane {
        Plane::ALL
            .into_iter()
            .find(|p| p.axis() == self.axis)
            .unwrap_or(Plane::Axial)
    }

    fn in_plane(&self) -> (usize, usize) {
        match self.axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    /// Distance in voxels from the tube axis and polar angle in degrees.
    fn polar(&self, c: [usize; 3]) -> (f64, f64) {
        let (ua, va) = self.in_plane();
        let du = c[ua] as f64 - self.center[0];
        let dv = c[va] as f64 - self.center[1];
        (du.hypot(dv), dv.atan2(du).to_degrees())
    }

    /// Largest designed arc, the contact angle the tube should report.
    pub fn designed_arc(&self) -> f64 {
        self.wraps.iter().map(|w| w.arc_deg).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TumorBlob {
    /// Voxel coordinates.
    pub center: [f64; 3],
    /// Semi-axes in voxels.
    pub radii: [f64; 3],
}

/// Inter-rater variation: each rater's ellipsoid is shifted by `spread`
/// voxels in a random in-plane direction and its boundary moved by a random
/// `-amplitude..=amplitude` voxels on each of `sectors` azimuthal sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterJitter {
    #[serde(default)]
    pub amplitude: usize,
    #[serde(default = "default_sectors")]
    pub sectors: usize,
    #[serde(default)]
    pub spread: f64,
}

fn default_sectors() -> usize {
    8
}

impl Default for RaterJitter {
    fn default() -> Self {
        RaterJitter {
            amplitude: 0,
            sectors: default_sectors(),
            spread: 0.0,
        }
    }
}

/// How the synthetic submission is derived from the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionKind {
    /// Rater average as probability, majority vote as binary.
    Average,
    /// The consensus mask as both probability and binary.
    Perfect,
    /// No foreground at all.
    Empty,
    /// Rater average smoothed with a Gaussian of `sigma` voxels.
    Blurred { sigma: f64 },
    /// Rater average shifted by whole voxels.
    Shifted { offset: [i64; 3] },
    /// Rater average plus a certain full ring around every tube over
    /// `slices`.
    FullWrap {
        slices: [usize; 2],
        #[serde(default = "default_thickness")]
        thickness: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub case_id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    #[serde(default)]
    pub vessels: Vec<VesselTube>,
    pub tumor: TumorBlob,
    #[serde(default)]
    pub jitter: RaterJitter,
    #[serde(default = "default_prediction")]
    pub prediction: PredictionKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_prediction() -> PredictionKind {
    PredictionKind::Average
}

fn geometry_error(msg: impl Into<String>) -> EvalError {
    EvalError::PhantomGeometry(msg.into())
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let geometry = Geometry::new(self.dims, self.spacing)?;
        if geometry.is_empty() {
            return Err(geometry_error("empty grid"));
        }
        if self.jitter.amplitude > MAX_JITTER {
            return Err(geometry_error(format!(
                "jitter amplitude {} above {MAX_JITTER}",
                self.jitter.amplitude
            )));
        }
        if self.jitter.sectors == 0 {
            return Err(geometry_error("jitter needs at least one sector"));
        }
        for a in 0..3 {
            let (c, r) = (self.tumor.center[a], self.tumor.radii[a]);
            if r <= 0.0 || c - r < 0.0 || c + r > (self.dims[a] - 1) as f64 {
                return Err(geometry_error(format!("tumor does not fit along axis {a}")));
            }
        }
        let mut seen = Vec::new();
        for v in &self.vessels {
            if VesselId::from_label(v.label).is_none() || seen.contains(&v.label) {
                return Err(geometry_error(format!(
                    "bad or repeated vessel label {}",
                    v.label
                )));
            }
            seen.push(v.label);
            if v.axis > 2 || v.radius <= 0.0 {
                return Err(geometry_error(format!(
                    "vessel {}: bad axis or radius",
                    v.label
                )));
            }
            let (ua, va) = v.in_plane();
            let reach = v.radius + v.wraps.iter().map(|w| w.thickness).fold(0.0, f64::max);
            for (k, axis) in [ua, va].into_iter().enumerate() {
                let c = v.center[k];
                if c - reach < 0.0 || c + reach > (self.dims[axis] - 1) as f64 {
                    return Err(geometry_error(format!("vessel {} does not fit", v.label)));
                }
            }
            for w in &v.wraps {
                if !(0.0..=360.0).contains(&w.arc_deg) || w.thickness < 1.0 {
                    return Err(geometry_error(format!("vessel {}: bad wrap", v.label)));
                }
                if w.slices[0] >= w.slices[1] || w.slices[1] > self.dims[v.axis] {
                    return Err(geometry_error(format!(
                        "vessel {}: wrap slices out of range",
                        v.label
                    )));
                }
            }
        }
        if let PredictionKind::FullWrap { slices, .. } = &self.prediction {
            if self
                .vessels
                .iter()
                .any(|v| slices[0] >= slices[1] || slices[1] > self.dims[v.axis])
            {
                return Err(geometry_error("full-wrap slices out of range"));
            }
        }
        Ok(())
    }
}

/// Exact quantities of a generated case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomOracle {
    pub case_id: String,
    pub voxel_volume_cm3: f64,
    pub rater_voxels: Vec<usize>,
    pub rater_volumes_cm3: Vec<f64>,
    /// `(label, designed maximum arc)` per tube.
    pub designed_arcs: Vec<(u8, f64)>,
    pub pairwise_dsc: Vec<Vec<f64>>,
    pub mean_interrater_dsc: f64,
}

#[derive(Debug, Clone)]
pub struct PhantomCase {
    pub reference: Reference,
    pub image: Grid<f32>,
    pub submission: Submission,
    pub oracle: PhantomOracle,
}

impl PhantomCase {
    pub fn bundle(&self) -> Result<CaseBundle> {
        CaseBundle::new(Arc::new(self.reference.clone()), self.submission.clone())
    }
}

fn coords_iter(g: &Geometry) -> impl Iterator<Item = [usize; 3]> + '_ {
    (0..g.len()).map(|i| g.coords(i))
}

fn rater_mask(spec: &PhantomSpec, geometry: &Geometry, rater: usize) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(rater as u64 + 1);
    let j = &spec.jitter;
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let center = [
        spec.tumor.center[0] + j.spread * theta.cos(),
        spec.tumor.center[1] + j.spread * theta.sin(),
        spec.tumor.center[2],
    ];
    let amp = j.amplitude as i64;
    let offsets: Vec<f64> = (0..j.sectors)
        .map(|_| rng.gen_range(-amp..=amp) as f64)
        .collect();
    let data = coords_iter(geometry)
        .map(|c| {
            let d: Vec<f64> = (0..3).map(|a| c[a] as f64 - center[a]).collect();
            let az = d[1].atan2(d[0]).to_degrees().rem_euclid(360.0);
            let sector = ((az / 360.0 * j.sectors as f64) as usize).min(j.sectors - 1);
            let delta = offsets[sector];
            let q: f64 = (0..3)
                .map(|a| {
                    let r = (spec.tumor.radii[a] + delta).max(0.5);
                    (d[a] / r).powi(2)
                })
                .sum();
            q <= 1.0 && !near_any_tube(spec, c) || in_any_wrap(spec, c)
        })
        .collect();
    Grid::from_vec(geometry.clone(), data).expect("lattice size")
}

fn near_any_tube(spec: &PhantomSpec, c: [usize; 3]) -> bool {
    spec.vessels
        .iter()
        .any(|v| v.polar(c).0 <= v.radius + CARVE_MARGIN)
}

fn in_ring(
    v: &VesselTube,
    c: [usize; 3],
    slices: [usize; 2],
    thickness: f64,
    arc: f64,
    start: f64,
) -> bool {
    let s = c[v.axis];
    if s < slices[0] || s >= slices[1] {
        return false;
    }
    let (d, angle) = v.polar(c);
    if d <= v.radius || d > v.radius + thickness {
        return false;
    }
    arc >= 360.0 || (angle - start).rem_euclid(360.0) < arc
}

fn in_any_wrap(spec: &PhantomSpec, c: [usize; 3]) -> bool {
    spec.vessels.iter().any(|v| {
        v.wraps.iter().any(|w| {
            w.arc_deg > 0.0 && in_ring(v, c, w.slices, w.thickness, w.arc_deg, w.start_deg)
        })
    })
}

fn vessel_map(spec: &PhantomSpec, geometry: &Geometry) -> LabelMap {
    let data = coords_iter(geometry)
        .map(|c| {
            spec.vessels
                .iter()
                .find(|v| v.polar(c).0 <= v.radius)
                .map_or(0, |v| v.label)
        })
        .collect();
    Grid::from_vec(geometry.clone(), data).expect("lattice size")
}

fn average(masks: &[BinaryMask]) -> Grid<f32> {
    let n = masks.len() as f32;
    let data = (0..masks[0].data().len())
        .map(|i| masks.iter().filter(|m| m.data()[i]).count() as f32 / n)
        .collect();
    Grid::from_vec(masks[0].geometry().clone(), data).expect("lattice size")
}

fn gaussian_blur(grid: &Grid<f32>, sigma: f64) -> Grid<f32> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let g = grid.geometry().clone();
    let dims = g.dims;
    let mut cur: Vec<f64> = grid.data().iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        let mut next = vec![0.0; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let c = g.coords(i);
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let pos =
                    (c[axis] as i64 + k as i64 - radius).clamp(0, dims[axis] as i64 - 1) as usize;
                let mut cc = c;
                cc[axis] = pos;
                acc += w * cur[g.index(cc[0], cc[1], cc[2])];
            }
            *out = acc / norm;
        }
        cur = next;
    }
    Grid::from_vec(
        g,
        cur.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect(),
    )
    .expect("lattice size")
}

fn shifted(grid: &Grid<f32>, offset: [i64; 3]) -> Grid<f32> {
    let g = grid.geometry().clone();
    let mut out = Grid::filled(g.clone(), 0.0f32);
    for i in 0..g.len() {
        let c = g.coords(i);
        let src: Vec<i64> = (0..3).map(|a| c[a] as i64 - offset[a]).collect();
        if (0..3).all(|a| src[a] >= 0 && src[a] < g.dims[a] as i64) {
            let v = *grid.get(src[0] as usize, src[1] as usize, src[2] as usize);
            out.set(c[0], c[1], c[2], v);
        }
    }
    out
}

fn build_submission(
    spec: &PhantomSpec,
    raters: &[BinaryMask],
    consensus: &BinaryMask,
) -> Result<Submission> {
    let geometry = consensus.geometry().clone();
    let prob = match &spec.prediction {
        PredictionKind::Average => average(raters),
        PredictionKind::Perfect => consensus.map(|&b| if b { 1.0 } else { 0.0 }),
        PredictionKind::Empty => Grid::filled(geometry.clone(), 0.0),
        PredictionKind::Blurred { sigma } => gaussian_blur(&average(raters), *sigma),
        PredictionKind::Shifted { offset } => shifted(&average(raters), *offset),
        PredictionKind::FullWrap { slices, thickness } => {
            let mut p = average(raters);
            for i in 0..geometry.len() {
                let c = geometry.coords(i);
                if spec
                    .vessels
                    .iter()
                    .any(|v| in_ring(v, c, *slices, *thickness, 360.0, 0.0))
                {
                    p.data_mut()[i] = 1.0;
                }
            }
            p
        }
    };
    let pred_bin = match spec.prediction {
        PredictionKind::Perfect => consensus.clone(),
        _ => prob.map(|&p| p >= 0.5),
    };
    Ok(Submission {
        pred_bin,
        pred_prob: ProbMap::new(prob)?,
    })
}

fn synthetic_image(vessels: &LabelMap, raters: &[BinaryMask]) -> Grid<f32> {
    let avg = average(raters);
    let data = vessels
        .data()
        .iter()
        .zip(avg.data())
        .map(|(&l, &a)| if l != 0 { 200.0 } else { 40.0 + 60.0 * a })
        .collect();
    Grid::from_vec(vessels.geometry().clone(), data).expect("lattice size")
}

/// Rasterizes one case. Deterministic in `spec`.
pub fn generate_case(spec: &PhantomSpec) -> Result<PhantomCase> {
    spec.validate()?;
    let geometry = Geometry::new(spec.dims, spec.spacing)?;
    let raters: Vec<BinaryMask> = (0..RATER_COUNT)
        .map(|k| rater_mask(spec, &geometry, k))
        .collect();
    let vessels = vessel_map(spec, &geometry);
    let consensus = match staple(&raters, STAPLE_MAX_ITER, STAPLE_TOL) {
        Ok(r) => r.consensus_bin,
        Err(EvalError::NoForeground) => Grid::filled(geometry.clone(), false),
        Err(e) => return Err(e),
    };
    let submission = build_submission(spec, &raters, &consensus)?;
    let image = synthetic_image(&vessels, &raters);

    let mut pairwise = vec![vec![1.0; RATER_COUNT]; RATER_COUNT];
    let mut pair_sum = 0.0;
    for i in 0..RATER_COUNT {
        for j in i + 1..RATER_COUNT {
            let d = dsc(&raters[i], &raters[j], DSC_EPS)?;
            pairwise[i][j] = d;
            pairwise[j][i] = d;
            pair_sum += d;
        }
    }
    let pairs = (RATER_COUNT * (RATER_COUNT - 1) / 2) as f64;
    let oracle = PhantomOracle {
        case_id: spec.case_id.clone(),
        voxel_volume_cm3: geometry.voxel_volume(),
        rater_voxels: raters.iter().map(BinaryMask::count).collect(),
        rater_volumes_cm3: raters.iter().map(expert_volume).collect(),
        designed_arcs: spec
            .vessels
            .iter()
            .map(|v| (v.label, v.designed_arc()))
            .collect(),
        pairwise_dsc: pairwise,
        mean_interrater_dsc: pair_sum / pairs,
    };
    let mut reference = Reference::new(spec.case_id.clone(), raters, vessels, consensus)?;
    reference.image = Some(image.map(|&v| v as f64));
    Ok(PhantomCase {
        reference,
        image,
        submission,
        oracle,
    })
}

/// A team whose submission replaces every case's own prediction kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub name: String,
    pub prediction: PredictionKind,
}

/// Several cases and, optionally, several synthetic teams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub cases: Vec<PhantomSpec>,
    #[serde(default)]
    pub teams: Vec<TeamSpec>,
}

/// Name of the team used when a cohort declares none.
pub const DEFAULT_TEAM: &str = "phantom";

impl CohortSpec {
    /// Parses either a cohort or a single case description.
    pub fn from_json(text: &str) -> Result<Self> {
        if let Ok(cohort) = serde_json::from_str::<CohortSpec>(text) {
            return Ok(cohort);
        }
        let case: PhantomSpec = serde_json::from_str(text)?;
        Ok(CohortSpec {
            cases: vec![case],
            teams: Vec::new(),
        })
    }

    /// A varied cohort of `n_cases` with six teams of differing quality.
    /// Every third case has widely shifted raters and low agreement.
    pub fn demo(n_cases: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cases = (0..n_cases)
            .map(|i| {
                let low_agreement = i % 3 == 2;
                let arc = [0.0, 90.0, 180.0, 270.0][rng.gen_range(0..4)];
                let start = rng.gen_range(0.0..360.0f64).round();
                PhantomSpec {
                    case_id: format!("case_{i:03}"),
                    dims: [48, 48, 24],
                    spacing: [0.8, 0.8, 2.5],
                    vessels: vec![
                        VesselTube {
                            label: VesselId::Sma.label(),
                            axis: 2,
                            center: [16.0, 24.0],
                            radius: 4.0,
                            wraps: vec![Wrap {
                                arc_deg: arc,
                                start_deg: start,
                                slices: [9, 15],
                                thickness: 3.0,
                            }],
                        },
                        VesselTube {
                            label: VesselId::Aorta.label(),
                            axis: 2,
                            center: [38.0, 38.0],
                            radius: 5.0,
                            wraps: Vec::new(),
                        },
                    ],
                    tumor: TumorBlob {
                        center: [26.0, 24.0, 12.0],
                        radii: [7.0, 6.0, 4.0],
                    },
                    jitter: RaterJitter {
                        amplitude: 1 + (i % 2),
                        sectors: 8,
                        spread: if low_agreement { 9.0 } else { 1.0 },
                    },
                    prediction: PredictionKind::Average,
                    seed: seed.wrapping_add(i as u64),
                }
            })
            .collect();
        let teams = vec![
            TeamSpec {
                name: "oracle".into(),
                prediction: PredictionKind::Perfect,
            },
            TeamSpec {
                name: "average".into(),
                prediction: PredictionKind::Average,
            },
            TeamSpec {
                name: "smooth".into(),
                prediction: PredictionKind::Blurred { sigma: 1.0 },
            },
            TeamSpec {
                name: "blurry".into(),
                prediction: PredictionKind::Blurred { sigma: 2.5 },
            },
            TeamSpec {
                name: "shifted".into(),
                prediction: PredictionKind::Shifted { offset: [2, 1, 0] },
            },
            TeamSpec {
                name: "encaser".into(),
                prediction: PredictionKind::FullWrap {
                    slices: [10, 14],
                    thickness: 3.0,
                },
            },
        ];
        CohortSpec { cases, teams }
    }

    /// Team names with their prediction override, `None` meaning each
    /// case's own prediction.
    fn team_list(&self) -> Vec<(String, Option<PredictionKind>)> {
        if self.teams.is_empty() {
            vec![(DEFAULT_TEAM.to_string(), None)]
        } else {
            self.teams
                .iter()
                .map(|t| (t.name.clone(), Some(t.prediction.clone())))
                .collect()
        }
    }
}

/// Paths written by [`write_cohort`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortLayout {
    pub dataset: PathBuf,
    /// `(team, submission directory)`.
    pub submissions: Vec<(String, PathBuf)>,
    pub oracles: PathBuf,
}

/// Writes `out/dataset/<case>/`, `out/submissions/<team>/` and
/// `out/oracles.json`.
pub fn write_cohort(spec: &CohortSpec, out: &Path) -> Result<CohortLayout> {
    let dataset = out.join("dataset");
    let teams = spec.team_list();
    let submissions: Vec<(String, PathBuf)> = teams
        .iter()
        .map(|(name, _)| (name.clone(), out.join("submissions").join(name)))
        .collect();
    for (_, dir) in &submissions {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    }
    let mut oracles = Vec::with_capacity(spec.cases.len());
    for case in &spec.cases {
        let generated = generate_case(case)?;
        write_reference(&generated.reference, &generated.image, &dataset)?;
        for ((_, kind), (_, dir)) in teams.iter().zip(&submissions) {
            let submission = match kind {
                None => generated.submission.clone(),
                Some(kind) => {
                    let mut variant = case.clone();
                    variant.prediction = kind.clone();
                    variant.validate()?;
                    build_submission(
                        &variant,
                        &generated.reference.rater_masks,
                        &generated.reference.staple_mask,
                    )?
                }
            };
            write_submission(&case.case_id, &submission, dir)?;
        }
        oracles.push(generated.oracle);
    }
    let oracle_path = out.join("oracles.json");
    std::fs::write(&oracle_path, serde_json::to_string_pretty(&oracles)?)
        .map_err(|e| EvalError::io(&oracle_path, e))?;
    Ok(CohortLayout {
        dataset,
        submissions,
        oracles: oracle_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::mean_interrater_dsc;
    use crate::vascular::max_contact_angle;

    fn base(arc: f64) -> PhantomSpec {
        PhantomSpec {
            case_id: "p".into(),
            dims: [40, 40, 8],
            spacing: [1.0, 1.0, 2.0],
            vessels: vec![VesselTube {
                label: 5,
                axis: 2,
                center: [14.0, 20.0],
                radius: 10.0,
                wraps: vec![Wrap {
                    arc_deg: arc,
                    start_deg: 20.0,
                    slices: [2, 6],
                    thickness: 3.0,
                }],
            }],
            tumor: TumorBlob {
                center: [30.0, 20.0, 4.0],
                radii: [5.0, 5.0, 3.0],
            },
            jitter: RaterJitter::default(),
            prediction: PredictionKind::Average,
            seed: 7,
        }
    }

    #[test]
    fn zero_jitter_identical_raters() {
        let case = generate_case(&base(90.0)).unwrap();
        let m = &case.reference.rater_masks;
        assert!(m.iter().all(|r| r == &m[0]));
        assert!((mean_interrater_dsc(m).unwrap() - 1.0).abs() < 1e-6);
        assert!((case.oracle.mean_interrater_dsc - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_arc_no_contact() {
        let case = generate_case(&base(0.0)).unwrap();
        let vessel = case.reference.vessel_map.extract(5);
        for r in &case.reference.rater_masks {
            for p in Plane::ALL {
                assert_eq!(max_contact_angle(r, &vessel, p).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn designed_arc_measured() {
        let case = generate_case(&base(90.0)).unwrap();
        let vessel = case.reference.vessel_map.extract(5);
        let a = max_contact_angle(&case.reference.rater_masks[0], &vessel, Plane::Axial).unwrap();
        assert!((a - 90.0).abs() <= 5.0, "{a}");
    }

    #[test]
    fn deterministic_and_volumes_exact() {
        let mut spec = base(180.0);
        spec.jitter = RaterJitter {
            amplitude: 2,
            sectors: 6,
            spread: 2.0,
        };
        let a = generate_case(&spec).unwrap();
        let b = generate_case(&spec).unwrap();
        assert_eq!(a.reference.rater_masks, b.reference.rater_masks);
        assert_eq!(a.oracle, b.oracle);
        for (m, v) in a
            .reference
            .rater_masks
            .iter()
            .zip(&a.oracle.rater_volumes_cm3)
        {
            assert_eq!(expert_volume(m), *v);
        }
    }

    #[test]
    fn non_fitting_rejected() {
        let mut spec = base(90.0);
        spec.tumor.center = [1.0, 20.0, 4.0];
        assert!(matches!(
            generate_case(&spec),
            Err(EvalError::PhantomGeometry(_))
        ));
        let mut spec = base(90.0);
        spec.vessels[0].center = [5.0, 20.0];
        assert!(generate_case(&spec).is_err());
        let mut spec = base(400.0);
        spec.vessels[0].wraps[0].arc_deg = 400.0;
        assert!(generate_case(&spec).is_err());
    }

    #[test]
    fn single_spec_json_accepted() {
        let json = serde_json::to_string(&base(90.0)).unwrap();
        let cohort = CohortSpec::from_json(&json).unwrap();
        assert_eq!(cohort.cases.len(), 1);
        assert!(cohort.teams.is_empty());
    }
}
