use std::sync::Arc;

use lowrank_df::density::DensityProvider;
use lowrank_df::df::{df_bridge, df_for_penalty, df_reduced_rank, df_spectral, sure_risk};
use lowrank_df::oracle::{fd_divergence, mean_statistic_mc, true_df_mc, McConfig, SpectralEstimator};
use lowrank_df::penalty::PenaltySpec;
use lowrank_df::rng::{normal_matrix, stream, Domain};
use lowrank_df::spectral::{apply_spectral, divergence, spectrum, svd, Mat, Prox, GROUP_TOL};
use lowrank_df::Error;
use proptest::prelude::*;

fn gaussian(seed: u64, m: usize, n: usize) -> Mat {
    normal_matrix(&mut stream(seed, Domain::Test, 0), m, n)
}

fn applicable_spec(idx: usize, theta: f64) -> PenaltySpec {
    match idx {
        0 => PenaltySpec::nuclear(theta),
        1 => PenaltySpec::scad(theta, 3.7),
        2 => PenaltySpec::mcplus(theta, 2.0),
        _ => PenaltySpec::log(theta, 0.5),
    }
    .unwrap()
}

/// Reduced rank df written out from its closed form.
fn reduced_rank_formula(sigma: &[f64], m: usize, n: usize, k: usize) -> f64 {
    let mut cross = 0.0;
    for i in 0..k {
        for j in k..n {
            cross += sigma[j] * sigma[j] / (sigma[i] * sigma[i] - sigma[j] * sigma[j]);
        }
    }
    ((m + n - k) * k) as f64 + 2.0 * cross
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn agreement_chain(seed in any::<u64>(), m in 3usize..9, n in 2usize..6, fam in 0usize..4, theta in 0.1f64..1.5) {
        prop_assume!(n <= m);
        let y = gaussian(seed, m, n);
        let d = svd(&y).unwrap();
        let spec = applicable_spec(fam, theta);
        prop_assume!(d.sigma().iter().all(|s| spec.kinks().iter().all(|k| (s - k).abs() > 1e-3)));
        let est = df_spectral(&d, &spec).unwrap();
        let div = divergence(&d, &Prox(spec), GROUP_TOL).unwrap();
        let fd = fd_divergence(&SpectralEstimator(spec), &y, 1e-6).unwrap();
        prop_assert!((est.value - div).abs() <= 1e-10 * div.abs().max(1.0));
        prop_assert!((est.value - fd).abs() <= 1e-4 * est.value.abs().max(1.0), "{} vs {}", est.value, fd);
        prop_assert_eq!(est.value, est.components.total());
    }

    #[test]
    fn reduced_rank_closed_form_and_bound(seed in any::<u64>(), m in 2usize..10, n in 2usize..8, k in 0usize..8) {
        prop_assume!(n <= m && k <= n);
        let d = svd(&gaussian(seed, m, n)).unwrap();
        let est = df_reduced_rank(&d, k).unwrap();
        prop_assert_eq!(est.value, est.components.total());
        prop_assert!(est.value >= ((m + n - k) * k) as f64 - 1e-9);
        let want = if k == n { (m * n) as f64 } else { reduced_rank_formula(d.sigma(), m, n, k) };
        prop_assert!((est.value - want).abs() <= 1e-10 * want.max(1.0));
        if k == n {
            prop_assert_eq!(est.value, (m * n) as f64);
        }
        if k == 0 {
            prop_assert_eq!(est.value, 0.0);
        }
    }

    #[test]
    fn bridge_df_without_density_is_local_divergence(seed in any::<u64>(), theta in 0.05f64..0.8, q in 0.05f64..0.95) {
        let y = gaussian(seed, 6, 4);
        let d = svd(&y).unwrap();
        let spec = PenaltySpec::bridge(theta, q).unwrap();
        let loc = spec.discontinuity().unwrap().location;
        prop_assume!(d.sigma().iter().all(|s| (s - loc).abs() > 1e-2));
        let dens = DensityProvider::uniform_fn(4, Arc::new(|x: f64| (-x * x).exp()));
        let est = df_bridge(&d, theta, q, &dens).unwrap();
        let fd = fd_divergence(&SpectralEstimator(spec), &y, 1e-6).unwrap();
        let local = est.without_density().value;
        prop_assert!((local - fd).abs() <= 1e-4 * local.abs().max(1.0), "{} vs {}", local, fd);
        let jump = spec.discontinuity().unwrap().jump;
        prop_assert!((est.value - local - 4.0 * jump * (-loc * loc).exp()).abs() <= 1e-10 * est.value.abs().max(1.0));
    }

    #[test]
    fn sure_identity(seed in any::<u64>(), tau in 0.1f64..3.0, theta in 0.0f64..2.0) {
        let y = gaussian(seed, 5, 4) * 2.0;
        let d = svd(&y).unwrap();
        let spec = PenaltySpec::nuclear(theta).unwrap();
        prop_assume!(d.sigma().iter().all(|s| (s - theta).abs() > 1e-6));
        let fit = apply_spectral(&d, &Prox(spec)).unwrap();
        let df = df_spectral(&d, &spec).unwrap().value;
        let want = -tau * tau * 20.0 + (&fit - &y).norm_squared() + 2.0 * tau * tau * df;
        prop_assert!((sure_risk(&y, &fit, df, tau).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn nuclear_theta_zero_is_mn() {
    for seed in 0..50 {
        let (m, n) = (3 + seed as usize % 6, 2 + seed as usize % 4);
        let (m, n) = (m.max(n), n.min(m));
        let d = svd(&gaussian(seed, m, n)).unwrap();
        let v = df_spectral(&d, &PenaltySpec::nuclear(0.0).unwrap()).unwrap().value;
        assert_eq!(v, (m * n) as f64);
    }
}

#[test]
fn preconditions_are_errors() {
    let tied = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0]));
    let spec = PenaltySpec::nuclear(0.5).unwrap();
    assert!(matches!(df_spectral(&svd(&tied).unwrap(), &spec), Err(Error::RepeatedOrZero(_))));
    let y = gaussian(1, 4, 3);
    let d = svd(&y).unwrap();
    let bridge = PenaltySpec::bridge(0.5, 0.5).unwrap();
    assert!(matches!(df_for_penalty::<_, DensityProvider>(&d, &bridge, None), Err(Error::MissingDensity)));
    assert!(matches!(df_spectral(&d, &bridge), Err(Error::NotApplicable(_))));
    let steep_log = PenaltySpec::log(10.0, 5.0).unwrap();
    assert!(matches!(df_spectral(&d, &steep_log), Err(Error::NotApplicable(_))));
}

#[test]
fn unbiased_at_desk_scale() {
    let mstar = Mat::from_fn(10, 8, |i, j| if i == j && i < 3 { 4.0 - i as f64 } else { 0.0 });
    let tau = 1.0;
    let specs = [
        PenaltySpec::nuclear(1.0).unwrap(),
        PenaltySpec::scad(1.0, 3.7).unwrap(),
        PenaltySpec::mcplus(1.5, 2.0).unwrap(),
        PenaltySpec::log(1.0, 0.5).unwrap(),
    ];
    for spec in specs {
        let truth = true_df_mc(&SpectralEstimator(spec), &mstar, tau, &McConfig::new(10_000, 21)).unwrap();
        let est = mean_statistic_mc(|y| Ok(df_spectral(&spectrum(y)?, &spec)?.value), &mstar, tau, &McConfig::new(10_000, 22))
            .unwrap();
        let gap = (truth.estimate - est.estimate).abs();
        assert!(gap <= 3.0 * (truth.std_error + est.std_error), "{spec}: truth {truth:?}, estimate {est:?}");
    }
}
