//! Helpers shared by the integration suites. Oracles here are written
//! independently of the library code they check.
#![allow(dead_code)]

use std::f64::consts::PI;

use mrseg_eval::grid::{BinaryMask, Geometry, Grid};
use mrseg_eval::ranking::{Axis, MetricTable};
use mrseg_eval::vascular::{SliceMask, VesselId};

pub fn geometry(dims: [usize; 3]) -> Geometry {
    Geometry::new(dims, [1.0; 3]).unwrap()
}

pub fn mask_from(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> bool) -> BinaryMask {
    let g = geometry(dims);
    let mut m = BinaryMask::filled(g, false);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if f(x, y, z) {
                    m.set(x, y, z, true);
                }
            }
        }
    }
    m
}

pub fn line(bits: &[u8]) -> BinaryMask {
    let g = geometry([bits.len(), 1, 1]);
    Grid::from_vec(g, bits.iter().map(|&b| b == 1).collect()).unwrap()
}

// ---------------------------------------------------------------- CRPS

fn erf(x: f64) -> f64 {
    // Composite Simpson on the integrand of erf.
    let n = 4000;
    let h = x / n as f64;
    let f = |t: f64| (-t * t).exp();
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        let t = i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
    }
    s * h / 3.0 * 2.0 / PI.sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Closed-form CRPS of a point forecast `y` against N(mu, sigma²).
pub fn gaussian_crps(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt())
}

/// Five expert volumes with the given population mean and std.
pub fn volumes_with(mu: f64, sigma: f64) -> Vec<f64> {
    // Offsets with mean 0 and population std 1.
    let raw = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let s = (raw.iter().map(|v: &f64| v * v).sum::<f64>() / 5.0).sqrt();
    raw.iter().map(|v| mu + sigma * v / s).collect()
}

// -------------------------------------------------------------- STAPLE

pub struct BruteStaple {
    pub posterior: Vec<f64>,
    pub sens: Vec<f64>,
    pub spec: Vec<f64>,
}

/// Per-voxel EM over the union bounding box padded by one voxel, with
/// plain products instead of pattern tables.
pub fn brute_staple(masks: &[BinaryMask], iterations: usize) -> BruteStaple {
    let k = masks.len();
    let g = masks[0].geometry().clone();
    let dims = g.dims;
    let (mut lo, mut hi) = ([usize::MAX; 3], [0usize; 3]);
    for m in masks {
        for i in 0..g.len() {
            if m.data()[i] {
                let c = g.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
    }
    for a in 0..3 {
        lo[a] = lo[a].saturating_sub(1);
        hi[a] = (hi[a] + 1).min(dims[a] - 1);
    }
    let inside = |c: [usize; 3]| (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a]);
    let region: Vec<usize> = (0..g.len()).filter(|&i| inside(g.coords(i))).collect();
    let labelled: usize = region
        .iter()
        .map(|&i| masks.iter().filter(|m| m.data()[i]).count())
        .sum();
    let prior = (labelled as f64 / (region.len() * k) as f64).clamp(1e-6, 1.0 - 1e-6);

    let mut p = vec![0.99; k];
    let mut q = vec![0.99; k];
    let e_step = |p: &[f64], q: &[f64]| -> Vec<f64> {
        region
            .iter()
            .map(|&i| {
                let mut a = prior;
                let mut b = 1.0 - prior;
                for r in 0..k {
                    if masks[r].data()[i] {
                        a *= p[r];
                        b *= 1.0 - q[r];
                    } else {
                        a *= 1.0 - p[r];
                        b *= q[r];
                    }
                }
                a / (a + b)
            })
            .collect()
    };
    for _ in 0..iterations {
        let w = e_step(&p, &q);
        for r in 0..k {
            let (mut fg, mut tp, mut bg, mut tn) = (0.0, 0.0, 0.0, 0.0);
            for (j, &i) in region.iter().enumerate() {
                fg += w[j];
                bg += 1.0 - w[j];
                if masks[r].data()[i] {
                    tp += w[j];
                } else {
                    tn += 1.0 - w[j];
                }
            }
            p[r] = (tp / fg).clamp(1e-12, 1.0 - 1e-12);
            q[r] = (tn / bg).clamp(1e-12, 1.0 - 1e-12);
        }
    }
    let w = e_step(&p, &q);
    let mut posterior = vec![0.0; g.len()];
    for (j, &i) in region.iter().enumerate() {
        posterior[i] = w[j];
    }
    BruteStaple {
        posterior,
        sens: p,
        spec: q,
    }
}

// ------------------------------------------------------------ geometry

/// Disk of `radius` pixels around `center` on a `size × size` slice.
pub fn disk(size: usize, center: [f64; 2], radius: f64) -> SliceMask {
    let mut m = SliceMask::empty(size, size);
    for v in 0..size {
        for u in 0..size {
            if (u as f64 - center[0]).hypot(v as f64 - center[1]) <= radius {
                m.set(u, v, true);
            }
        }
    }
    m
}

/// Ring sector `radius < d <= radius + thickness` whose polar angle lies in
/// `[start, start + arc)` degrees.
pub fn arc_sector(
    size: usize,
    center: [f64; 2],
    radius: f64,
    thickness: f64,
    start: f64,
    arc: f64,
) -> SliceMask {
    let mut m = SliceMask::empty(size, size);
    if arc <= 0.0 {
        return m;
    }
    for v in 0..size {
        for u in 0..size {
            let (du, dv) = (u as f64 - center[0], v as f64 - center[1]);
            let d = du.hypot(dv);
            if d <= radius || d > radius + thickness {
                continue;
            }
            let theta = dv.atan2(du).to_degrees();
            let rel = (theta - start).rem_euclid(360.0);
            if arc >= 360.0 || rel < arc {
                m.set(u, v, true);
            }
        }
    }
    m
}

// ------------------------------------------------------------- published leaderboards

pub const PUBLISHED_TEAMS: [&str; 6] = ["Twin", "Corp", "Brei", "MIC", "ROI", "Ord"];

/// Global axes: (axis, values per team, published ranks).
pub fn global_ranks() -> Vec<(Axis, [f64; 6], [f64; 6])> {
    vec![
        (
            Axis::Dsc,
            [55.76, 58.94, 71.04, 66.21, 59.28, 54.05],
            [5.0, 4.0, 1.0, 2.0, 3.0, 6.0],
        ),
        (
            Axis::ThrDsc,
            [56.93, 58.01, 64.01, 59.57, 55.32, 48.73],
            [4.0, 3.0, 1.0, 2.0, 5.0, 6.0],
        ),
        (
            Axis::MrEce,
            [29.6, 30.5, 25.7, 32.2, 34.5, 40.3],
            [2.0, 3.0, 1.0, 4.0, 5.0, 6.0],
        ),
        (
            Axis::Crps,
            [5.924, 10.792, 7.320, 7.256, 5.352, 8.592],
            [2.0, 6.0, 4.0, 3.0, 1.0, 5.0],
        ),
    ]
}

/// Vascular axes, same team order as [`global_ranks`].
pub fn vascular_ranks() -> Vec<(Axis, [f64; 6], [f64; 6])> {
    vec![
        (
            Axis::Vi(VesselId::Porta),
            [29.03, 29.09, 35.94, 33.53, 33.16, 41.81],
            [1.0, 2.0, 5.0, 4.0, 3.0, 6.0],
        ),
        (
            Axis::Vi(VesselId::Aorta),
            [6.08, 7.13, 9.12, 10.76, 7.91, 13.51],
            [1.0, 2.0, 4.0, 5.0, 3.0, 6.0],
        ),
        (
            Axis::Vi(VesselId::Sma),
            [28.69, 28.08, 29.34, 28.50, 41.91, 33.66],
            [3.0, 1.0, 4.0, 2.0, 6.0, 5.0],
        ),
        (
            Axis::Vi(VesselId::Smv),
            [34.03, 40.06, 43.34, 35.25, 45.25, 44.16],
            [1.0, 3.0, 4.0, 2.0, 6.0, 5.0],
        ),
        (
            Axis::Vi(VesselId::CeliacTrunk),
            [14.48, 14.80, 22.38, 22.48, 22.80, 19.53],
            [1.0, 2.0, 4.0, 5.0, 6.0, 3.0],
        ),
    ]
}

/// High-complexity cohort: per team, values on DSC, Thr-DSC, ECE, CRPS,
/// aorta, porta, SMA, SMV, celiac trunk; then the published mean rank and std.
pub fn high_complexity_ranks() -> Vec<(&'static str, [f64; 9], f64, f64)> {
    vec![
        (
            "Ord",
            [
                52.16, 57.95, 34.20, 5049.19, 7.01, 44.46, 18.30, 34.16, 5.40,
            ],
            2.67,
            0.82,
        ),
        (
            "MIC",
            [23.49, 19.91, 34.46, 6742.35, 0.17, 11.11, 2.86, 13.88, 0.00],
            2.83,
            1.94,
        ),
        (
            "Twin",
            [
                61.22, 61.21, 32.97, 5273.19, 14.05, 48.79, 47.57, 61.03, 33.31,
            ],
            3.22,
            1.69,
        ),
        (
            "Brei",
            [28.27, 39.79, 36.70, 11857.67, 1.68, 6.93, 6.27, 34.19, 0.00],
            3.28,
            1.69,
        ),
        (
            "ROI",
            [
                60.98, 65.43, 37.79, 5580.40, 14.09, 44.71, 47.80, 63.10, 33.75,
            ],
            4.11,
            1.59,
        ),
        (
            "Corp",
            [
                54.32, 54.74, 43.22, 7369.21, 11.79, 44.66, 49.77, 69.29, 36.31,
            ],
            4.89,
            1.10,
        ),
    ]
}

pub const HIGH_COMPLEXITY_AXES: [Axis; 9] = [
    Axis::Dsc,
    Axis::ThrDsc,
    Axis::MrEce,
    Axis::Crps,
    Axis::Vi(VesselId::Aorta),
    Axis::Vi(VesselId::Porta),
    Axis::Vi(VesselId::Sma),
    Axis::Vi(VesselId::Smv),
    Axis::Vi(VesselId::CeliacTrunk),
];

/// Single-case table holding the published global and vascular team means.
pub fn published_metric_table() -> MetricTable {
    let mut axes: Vec<(Axis, [f64; 6], [f64; 6])> = global_ranks();
    axes.extend(vascular_ranks());
    let teams = PUBLISHED_TEAMS.iter().map(|s| s.to_string()).collect();
    let mut t = MetricTable::new(
        teams,
        vec!["means".into()],
        axes.iter().map(|a| a.0).collect(),
    );
    for (a, (_, values, _)) in axes.iter().enumerate() {
        for (team, &v) in values.iter().enumerate() {
            t.set(team, 0, a, v);
        }
    }
    t
}

pub fn high_complexity_metric_table() -> MetricTable {
    let rows = high_complexity_ranks();
    let teams = rows.iter().map(|r| r.0.to_string()).collect();
    let mut t = MetricTable::new(teams, vec!["means".into()], HIGH_COMPLEXITY_AXES.to_vec());
    for (team, row) in rows.iter().enumerate() {
        for (a, &v) in row.1.iter().enumerate() {
            t.set(team, 0, a, v);
        }
    }
    t
}

/// Two-sided exact signed-rank p by enumerating every sign assignment of
/// `ranks` (distinct absolute differences).
pub fn enumerate_signed_rank_p(ranks: &[f64], observed_w_plus: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let centre = total / 2.0;
    let dev = (observed_w_plus - centre).abs();
    let mut hits = 0u64;
    for signs in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| signs >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if (w - centre).abs() >= dev - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
