mod common;

use common::{gaussian_crps, line, mask_from, volumes_with};
use mrseg_eval::consensus::{average_annotation, mean_interrater_dsc};
use mrseg_eval::grid::{Geometry, Grid, ProbMap};
use mrseg_eval::metrics::{
    crps, dsc, expert_volume, mr_ece, prob_volume, thr_dsc, ThresholdSet, VolumeStats, DSC_EPS,
};

fn blob(x: usize, y: usize, z: usize) -> bool {
    (2..6).contains(&x) && (2..6).contains(&y) && (1..3).contains(&z)
}

fn prob_inside(dims: [usize; 3], inside: f32, outside: f32) -> ProbMap {
    let g = Geometry::new(dims, [1.0; 3]).unwrap();
    let mut grid = Grid::filled(g, outside);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if blob(x, y, z) {
                    grid.set(x, y, z, inside);
                }
            }
        }
    }
    ProbMap::new(grid).unwrap()
}

#[test]
fn crps_matches_closed_form_gaussian() {
    let (mu, sigma) = (50.0, 10.0);
    for v in [30.0, 50.0, 70.0] {
        let stats = VolumeStats::new(volumes_with(mu, sigma), v).unwrap();
        assert!((stats.sigma_v - sigma).abs() < 1e-9);
        let exact = gaussian_crps(mu, sigma, v);
        let coarse = crps(&stats, 100).unwrap();
        let fine = crps(&stats, 10_000).unwrap();
        assert!(
            (coarse - exact).abs() / exact <= 0.05,
            "v={v} L=100 {coarse} vs {exact}"
        );
        assert!(
            (fine - exact).abs() / exact <= 0.005,
            "v={v} L=10000 {fine} vs {exact}"
        );
    }
}

#[test]
fn crps_at_the_median_is_0_2337_sigma() {
    let stats = VolumeStats::new(volumes_with(20.0, 1.0), 20.0).unwrap();
    let c = crps(&stats, 100).unwrap();
    assert!((c - 0.2337).abs() / 0.2337 <= 0.03, "{c}");
}

#[test]
fn crps_far_below_the_grid_is_a_direct_sum() {
    let (mu, sigma) = (40.0, 5.0);
    let stats = VolumeStats::new(volumes_with(mu, sigma), 0.0).unwrap();
    let l = 100;
    let lo = mu - 2.326_347_874_040_841 * sigma;
    let hi = mu + 2.326_347_874_040_841 * sigma;
    let dx = (hi - lo) / (l - 1) as f64;
    let oracle: f64 = (0..l)
        .map(|i| {
            let z = (lo + i as f64 * dx - mu) / sigma;
            (common::std_normal_cdf(z) - 1.0).powi(2)
        })
        .sum::<f64>()
        * dx;
    let c = crps(&stats, l).unwrap();
    assert!(
        (c - oracle).abs() < 1e-6 * oracle.max(1.0),
        "{c} vs {oracle}"
    );
}

#[test]
fn crps_degenerate_experts_and_perfect_guess() {
    let stats = VolumeStats::new(vec![12.0; 5], 12.0).unwrap();
    assert!(crps(&stats, 100).unwrap() < 1e-4);
}

#[test]
fn crps_convergence_over_z() {
    let (mu, sigma) = (50.0, 10.0);
    for z in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
        let stats = VolumeStats::new(volumes_with(mu, sigma), mu + z * sigma).unwrap();
        let a = crps(&stats, 100).unwrap();
        let b = crps(&stats, 100_000).unwrap();
        assert!((a - b).abs() / b < 0.05, "z={z}: {a} vs {b}");
    }
}

#[test]
fn thr_dsc_three_of_five_at_half_is_five_sixths() {
    let dims = [8, 8, 4];
    let raters: Vec<_> = (0..5)
        .map(|k| mask_from(dims, |x, y, z| k < 3 && blob(x, y, z)))
        .collect();
    let avg = average_annotation(&raters).unwrap();
    let prob = prob_inside(dims, 0.5, 0.0);
    let v = thr_dsc(&prob, &avg, &ThresholdSet::default()).unwrap();
    assert_eq!(v, 5.0 / 6.0);
}

#[test]
fn thr_dsc_both_empty_counts_as_one() {
    let dims = [6, 6, 3];
    let zero = prob_inside(dims, 0.0, 0.0);
    assert_eq!(
        thr_dsc(&zero, &zero, &ThresholdSet::default()).unwrap(),
        1.0
    );
    let full = prob_inside(dims, 1.0, 0.0);
    assert_eq!(
        thr_dsc(&full, &full, &ThresholdSet::default()).unwrap(),
        1.0
    );
}

#[test]
fn dsc_hand_counts() {
    let dims = [10, 10, 2];
    let a = mask_from(dims, |x, y, z| z == 0 && x < 10 && y < 10);
    let n = a.count() as f64;
    assert!((dsc(&a, &a, DSC_EPS).unwrap() - 2.0 * n / (2.0 * n + DSC_EPS)).abs() < 1e-15);
    let b = mask_from(dims, |_, _, z| z == 1);
    assert_eq!(dsc(&a, &b, DSC_EPS).unwrap(), 0.0);

    // pred 8 voxels, ref 12, overlap 6.
    let pred = line(&[1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0]);
    let refm = line(&[0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]);
    assert!((dsc(&pred, &refm, DSC_EPS).unwrap() - 12.0 / (20.0 + DSC_EPS)).abs() < 1e-15);
}

#[test]
fn mr_ece_single_bin_cases() {
    let dims = [10, 1, 1];
    // Rater covering 4 of 10 voxels; padding spans the whole line.
    let raters: Vec<_> = (0..5)
        .map(|_| line(&[0, 0, 0, 1, 1, 1, 1, 0, 0, 0]))
        .collect();
    let g = Geometry::new(dims, [1.0; 3]).unwrap();
    let ones = ProbMap::new(Grid::filled(g.clone(), 1.0f32)).unwrap();
    let r = mr_ece(&ones, &raters, 5, 50).unwrap();
    assert_eq!(r.region_voxels, 10);
    assert!((r.mr_ece - 0.6).abs() < 1e-9, "{}", r.mr_ece);

    let half = ProbMap::new(Grid::filled(g, 0.5f32 + 1e-6)).unwrap();
    let raters: Vec<_> = (0..5)
        .map(|_| line(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0]))
        .collect();
    let r = mr_ece(&half, &raters, 5, 50).unwrap();
    assert!(r.mr_ece < 1e-5, "{}", r.mr_ece);

    let exact = ProbMap::from_mask(&raters[0]);
    assert_eq!(mr_ece(&exact, &raters, 5, 50).unwrap().mr_ece, 0.0);
}

#[test]
fn mr_ece_without_annotations_is_an_error() {
    let empty: Vec<_> = (0..5).map(|_| line(&[0, 0, 0])).collect();
    let p = ProbMap::from_mask(&empty[0]);
    assert!(mr_ece(&p, &empty, 5, 50).is_err());
}

#[test]
fn volumes_in_cm3() {
    let g = Geometry::new([10, 10, 10], [1.0; 3]).unwrap();
    let m = Grid::filled(g.clone(), true);
    assert!((expert_volume(&m) - 1.0).abs() < 1e-12);
    let half = ProbMap::new(Grid::filled(g, 0.5f32)).unwrap();
    assert!((prob_volume(&half) - 0.5).abs() < 1e-12);

    let g = Geometry::new([10, 10, 5], [0.5, 0.5, 2.0]).unwrap();
    let mut m = Grid::filled(g, false);
    m.data_mut()[..500].iter_mut().for_each(|v| *v = true);
    assert!((expert_volume(&m) - 0.25).abs() < 1e-12);
    assert!((prob_volume(&ProbMap::from_mask(&m)) - expert_volume(&m)).abs() < 1e-12);

    let g = Geometry::new([2, 2, 2], [0.7, 0.7, 3.0]).unwrap();
    assert!((g.voxel_volume_mm3() - 1.47).abs() < 1e-12);
}

#[test]
fn interrater_dsc_on_a_three_voxel_line() {
    let raters: Vec<_> = [[1, 1, 1], [1, 1, 0], [0, 1, 1], [1, 1, 0], [0, 1, 1]]
        .iter()
        .map(|b| line(b))
        .collect();
    // Hand enumeration of the ten pairs: the 111 rater scores 0.8 against
    // each of the four 2-voxel raters; 110/110 and 011/011 score 1; the four
    // 110/011 pairs score 0.5.
    let expected = (4.0 * 0.8 + 2.0 * 1.0 + 4.0 * 0.5) / 10.0;
    assert!((mean_interrater_dsc(&raters).unwrap() - expected).abs() < 1e-5);
}
