mod common;

use common::{brute_staple, line, mask_from};
use mrseg_eval::consensus::{average_annotation, pairwise_agreement, staple, CaseAgreement};
use mrseg_eval::grid::BinaryMask;
use mrseg_eval::io::Reference;

fn assert_matches_brute(masks: &[BinaryMask], iterations: usize) {
    let got = staple(masks, iterations, 0.0).unwrap();
    assert_eq!(got.iterations, iterations);
    let want = brute_staple(masks, iterations);
    for (a, b) in got.posterior.data().iter().zip(&want.posterior) {
        assert!((a - b).abs() < 1e-9, "posterior {a} vs {b}");
    }
    for r in 0..masks.len() {
        assert!((got.sensitivities[r] - want.sens[r]).abs() < 1e-9);
        assert!((got.specificities[r] - want.spec[r]).abs() < 1e-9);
    }
}

#[test]
fn four_agreeing_and_one_empty_gives_the_majority() {
    let full = line(&[0, 1, 1, 1, 0]);
    let empty = line(&[0, 0, 0, 0, 0]);
    let masks = vec![
        full.clone(),
        full.clone(),
        empty,
        full.clone(),
        full.clone(),
    ];
    assert_matches_brute(&masks, 10);
    let got = staple(&masks, 10, 0.0).unwrap();
    assert_eq!(got.consensus_bin, full);
}

#[test]
fn three_to_two_boundary_voxel() {
    let core = |x: usize, y: usize, z: usize| {
        (2..6).contains(&x) && (2..6).contains(&y) && (1..3).contains(&z)
    };
    let dims = [8, 8, 4];
    let masks: Vec<_> = (0..5)
        .map(|k| {
            mask_from(dims, |x, y, z| {
                core(x, y, z) || (k < 3 && (x, y, z) == (6, 3, 1))
            })
        })
        .collect();
    assert_matches_brute(&masks, 50);
    let got = staple(&masks, 100, 1e-10).unwrap();
    let p = *got.posterior.get(6, 3, 1);
    assert!(p >= 0.5, "{p}");
    assert!(*got.consensus_bin.get(6, 3, 1));

    // At the fixed point the voxel's posterior is 1 - O(1e-37), which rounds
    // to 1.0 in f64; its log-odds from the fitted parameters stay finite.
    let mut log_odds = (got.prior / (1.0 - got.prior)).ln();
    for r in 0..5 {
        let (se, sp) = (got.sensitivities[r], got.specificities[r]);
        log_odds += if r < 3 {
            (se / (1.0 - sp)).ln()
        } else {
            ((1.0 - se) / sp).ln()
        };
    }
    assert!(log_odds.is_finite() && log_odds > 0.0, "{log_odds}");

    let early = staple(&masks, 1, 0.0).unwrap();
    let p = *early.posterior.get(6, 3, 1);
    assert!(p > 0.5 && p < 1.0, "{p}");
}

#[test]
fn brute_force_agrees_on_mixed_raters() {
    let dims = [7, 6, 3];
    let masks: Vec<_> = (0..5)
        .map(|k| {
            mask_from(dims, move |x, y, z| {
                let r2 = (x as f64 - 3.0).powi(2) + (y as f64 - 3.0).powi(2);
                z == 1 && r2 <= (1.0 + k as f64 * 0.6).powi(2)
            })
        })
        .collect();
    assert_matches_brute(&masks, 25);
}

#[test]
fn unanimous_raters_reproduce_the_mask() {
    let dims = [6, 6, 3];
    let m = mask_from(dims, |x, y, z| x > 1 && y < 4 && z == 1);
    let masks = vec![m.clone(); 5];
    let got = staple(&masks, 100, 1e-6).unwrap();
    assert_eq!(got.consensus_bin, m);
    assert!(got
        .sensitivities
        .iter()
        .chain(&got.specificities)
        .all(|&v| v >= 1.0 - 1e-6));
}

#[test]
fn empty_raters_have_nothing_to_fuse() {
    let empty = vec![line(&[0, 0, 0]); 5];
    assert!(staple(&empty, 10, 1e-6).is_err());
}

#[test]
fn average_annotation_fractions() {
    let masks: Vec<_> = [[1, 1, 0], [1, 0, 0], [1, 1, 0], [1, 0, 0], [1, 0, 0]]
        .iter()
        .map(|b| line(b))
        .collect();
    let avg = average_annotation(&masks).unwrap();
    assert_eq!(avg.data(), &[1.0, 0.4, 0.0]);
}

#[test]
fn agreement_matrix_symmetry_and_diagonal() {
    let refs: Vec<Reference> = (0..2)
        .map(|c| {
            let raters: Vec<_> = (0..5)
                .map(|k| line(&[1, 1, u8::from(k % 2 == c), 0, u8::from(k == 4)]))
                .collect();
            let vessels = raters[0].map(|_| 0u8);
            Reference::new(format!("c{c}"), raters.clone(), vessels, raters[0].clone()).unwrap()
        })
        .collect();
    let case = CaseAgreement::compute(&refs[0]).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert_eq!(case.dsc[i][j], case.dsc[j][i]);
        }
    }
    let m = pairwise_agreement(&refs).unwrap();
    assert_eq!(m.case_count, 2);
    for i in 0..6 {
        assert_eq!(m.cells[i][i].mean, 1.0);
        assert_eq!(m.cells[i][i].std, 0.0);
        for j in 0..6 {
            assert_eq!(m.cells[i][j], m.cells[j][i]);
        }
    }
    let pooled: Vec<f64> = [&case, &CaseAgreement::compute(&refs[1]).unwrap()]
        .iter()
        .flat_map(|c| (0..5).flat_map(move |i| (i + 1..5).map(move |j| c.dsc[i][j])))
        .collect();
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / pooled.len() as f64;
    assert!((m.pooled_interrater.mean - mean).abs() < 1e-12);
    assert!((m.pooled_interrater.std - var.sqrt()).abs() < 1e-12);
}
