use drofolio::factor_model::{
    assemble_return_cov, bai_ng_criterion, cross_validate_threshold, default_threshold_grid, estimate_factors,
    estimate_factors_with, select_num_factors, threshold_residual_cov, GramSide, ResidualMoments, ShrinkageRule,
};
use drofolio::simulation::{simulate_panel, DgpParams};
use drofolio::ReturnPanel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_panel(p: usize, t: usize, seed: u64) -> ReturnPanel {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    ReturnPanel::from_matrix(DMatrix::from_fn(p, t, |_, _| {
        let z: f64 = StandardNormal.sample(&mut g);
        0.01 * z
    }))
    .unwrap()
}

fn factor_panel(p: usize, t: usize, seed: u64) -> ReturnPanel {
    simulate_panel(&DgpParams::fixture(p), t, seed).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalization_and_reconstruction(p in 3usize..25, t in 6usize..40, k in 1usize..3, seed in any::<u64>()) {
        prop_assume!(k < p.min(t));
        let panel = gaussian_panel(p, t, seed);
        let fit = estimate_factors(&panel, k).unwrap();
        let tf = t as f64;
        let ff = &fit.factors * fit.factors.transpose() / tf;
        prop_assert!((ff - DMatrix::identity(k, k)).amax() < 1e-8);
        prop_assert!((&fit.second_moment - DMatrix::identity(k, k)).amax() < 1e-8);
        let recon = &fit.loadings * &fit.factors + &fit.residuals;
        prop_assert!((recon - panel.returns()).amax() < 1e-14);
        for w in fit.eigenvalues.as_slice().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn threshold_entries_obey_the_rule(p in 2usize..15, t in 5usize..40, c in 0.0f64..3.0, seed in any::<u64>(), hard in any::<bool>()) {
        let panel = gaussian_panel(p, t, seed);
        let rule = if hard { ShrinkageRule::Hard } else { ShrinkageRule::Soft };
        let res = panel.returns();
        let m = ResidualMoments::new(res).unwrap();
        let sp = threshold_residual_cov(res, c, rule).unwrap();
        for i in 0..p {
            prop_assert_eq!(sp.matrix[(i, i)], m.sample_cov[(i, i)]);
            for j in 0..p {
                prop_assert_eq!(sp.matrix[(i, j)], sp.matrix[(j, i)]);
                if i == j {
                    continue;
                }
                let s = m.sample_cov[(i, j)];
                let tau = c * m.sqrt_theta[(i, j)] * m.omega;
                let e = sp.matrix[(i, j)];
                prop_assert!((e - s).abs() <= tau + 1e-15);
                if s.abs() <= tau {
                    prop_assert_eq!(e, 0.0);
                }
            }
        }
    }

    #[test]
    fn threshold_monotone_in_constant(p in 3usize..15, t in 5usize..40, seed in any::<u64>(), c1 in 0.0f64..3.0, dc in 0.0f64..3.0) {
        let panel = gaussian_panel(p, t, seed);
        let a = threshold_residual_cov(panel.returns(), c1, ShrinkageRule::Soft).unwrap();
        let b = threshold_residual_cov(panel.returns(), c1 + dc, ShrinkageRule::Soft).unwrap();
        prop_assert!(a.zero_fraction <= b.zero_fraction);
    }

    #[test]
    fn factor_count_ignores_asset_order(seed in any::<u64>()) {
        let panel = factor_panel(20, 60, seed);
        let r = panel.returns();
        let perm: Vec<usize> = (0..20).rev().collect();
        let shuffled = ReturnPanel::from_matrix(DMatrix::from_fn(20, 60, |i, j| r[(perm[i], j)])).unwrap();
        prop_assert_eq!(select_num_factors(&panel, 6).unwrap(), select_num_factors(&shuffled, 6).unwrap());
    }
}

#[test]
fn zero_constant_keeps_sample_covariance() {
    let panel = gaussian_panel(8, 30, 1);
    let m = ResidualMoments::new(panel.returns()).unwrap();
    let sp = threshold_residual_cov(panel.returns(), 0.0, ShrinkageRule::Soft).unwrap();
    assert_eq!(sp.matrix, m.sample_cov);
}

#[test]
fn large_constant_gives_diagonal() {
    let panel = gaussian_panel(8, 30, 2);
    let cv = cross_validate_threshold(panel.returns(), 3, &default_threshold_grid(), ShrinkageRule::Soft, 3).unwrap();
    let sp = threshold_residual_cov(panel.returns(), cv.c_upper + 1.0, ShrinkageRule::Soft).unwrap();
    assert_eq!(sp.zero_fraction, 1.0);
    assert!(cv.c_lower <= cv.c && cv.c <= cv.c_upper);
}

#[test]
fn time_and_asset_sides_agree() {
    let panel = factor_panel(12, 30, 4);
    let a = estimate_factors_with(&panel, 2, GramSide::Time).unwrap();
    let b = estimate_factors_with(&panel, 2, GramSide::Asset).unwrap();
    assert!((a.factors - b.factors).amax() < 1e-8);
    assert!((a.loadings - b.loadings).amax() < 1e-10);
}

#[test]
fn factor_model_recovers_two_factors() {
    let panel = factor_panel(60, 300, 5);
    assert_eq!(select_num_factors(&panel, 8).unwrap(), 2);
    let crit = bai_ng_criterion(&panel, 8).unwrap();
    assert_eq!(crit.len(), 9);
}

#[test]
fn assembled_covariance_matches_its_parts() {
    let panel = factor_panel(25, 120, 6);
    let fit = estimate_factors(&panel, 2).unwrap();
    let sp = threshold_residual_cov(&fit.residuals, 0.5, ShrinkageRule::Soft).unwrap();
    let cov = assemble_return_cov(&fit, &sp).unwrap();
    assert_eq!(cov.sigma_r, cov.sigma_r.transpose());
    let direct = &cov.loadings * &cov.factor_cov * cov.loadings.transpose() + &sp.matrix;
    assert!((direct - &cov.sigma_r).amax() < 1e-10);
    let mean = &fit.loadings * &fit.factor_mean;
    assert!((mean - &cov.mean).amax() < 1e-15);
    assert!(cov.sigma_r.clone().cholesky().is_some());
}
