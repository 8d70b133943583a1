use approx::assert_abs_diff_eq;
use covden::estimators::{
    assemble_hybrid, estimate, estimate_alca, estimate_lp, estimate_two_step, lp_shrink, Denoisers,
};
use covden::evaluation::{frobenius_loss, mv_loss, run_monte_carlo};
use covden::models::{ModelSpec, SampleGenerator};
use covden::rng::{gaussian_matrix, stream_rng};
use covden::{CovarianceMatrix, EstimatorId, Provenance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn random_cov(p: usize, k: usize, seed: u64) -> CovarianceMatrix {
    let a = gaussian_matrix(p, k, &mut stream_rng(seed, 2));
    CovarianceMatrix::new(&a * a.transpose() / k as f64, Provenance::Sample).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_keeps_eigenvectors_and_is_psd(p in 2usize..30, n in 2usize..60, seed in any::<u64>()) {
        let s = random_cov(p, n, seed);
        let lp = estimate_lp(&s, n).unwrap();
        let scale = s.values().amax();
        prop_assert!(lp.spectral().unwrap().eigenvalues.min() >= -1e-10 * scale);
        // Commutes with the sample matrix: same eigenvectors.
        let comm = lp.values() * s.values() - s.values() * lp.values();
        prop_assert!(comm.amax() <= 1e-8 * scale * scale);
    }

    #[test]
    fn alca_preserves_variances(p in 2usize..25, seed in any::<u64>()) {
        let s = random_cov(p, 2 * p, seed);
        let f = estimate_alca(&s).unwrap();
        for i in 0..p {
            prop_assert!((f.values()[(i, i)] - s.values()[(i, i)]).abs() <= 1e-12 * s.values()[(i, i)]);
        }
        prop_assert!(f.spectral().unwrap().eigenvalues.min() >= -1e-10 * s.values().amax());
    }

    #[test]
    fn frobenius_is_symmetric(p in 1usize..15, seed in any::<u64>()) {
        let a = random_cov(p, p + 2, seed);
        let b = random_cov(p, p + 2, seed ^ 1);
        prop_assert_eq!(frobenius_loss(&a, &b).unwrap(), frobenius_loss(&b, &a).unwrap());
    }
}

#[test]
fn mv_loss_is_not_symmetric() {
    let a = random_cov(5, 12, 1);
    let b = random_cov(5, 12, 2);
    let ab = mv_loss(&a, &b).unwrap();
    let ba = mv_loss(&b, &a).unwrap();
    assert!((ab - ba).abs() > 1e-6, "{ab} vs {ba}");
}

#[test]
fn lp_small_ratio_limit() {
    let eigs = [4.0, 2.0, 1.0];
    let xi = lp_shrink(&eigs, 1_000_000_000).unwrap();
    for (x, l) in xi.iter().zip(eigs) {
        assert_abs_diff_eq!(*x, l, epsilon = 1e-6);
    }
}

#[test]
fn hybrid_with_identity_vectors_is_diagonal() {
    let h = assemble_hybrid(&DMatrix::identity(3, 3), &[3.0, 2.0, 1.0]).unwrap();
    assert_eq!(
        h.values(),
        &DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]))
    );
    assert!(assemble_hybrid(&DMatrix::identity(3, 3), &[3.0, -2.0, 1.0]).is_err());
    assert!(assemble_hybrid(&DMatrix::identity(2, 2), &[3.0, 2.0, 1.0]).is_err());
}

#[test]
fn two_step_is_alca_of_first_step() {
    let s = random_cov(12, 30, 5);
    let two = estimate_two_step(&s, 30, EstimatorId::Lp, Denoisers::default()).unwrap();
    let manual = estimate_alca(&estimate_lp(&s, 30).unwrap()).unwrap();
    assert_eq!(two.values(), manual.values());
    assert_eq!(two.provenance().to_string(), "estimator:2s-lp");
}

#[test]
fn learned_estimators_need_networks() {
    let s = random_cov(6, 12, 3);
    for id in [
        EstimatorId::Cnn,
        EstimatorId::Hybrid,
        EstimatorId::TwoStepCnn,
        EstimatorId::TwoStepHybrid,
    ] {
        assert!(estimate(id, &s, 12, Denoisers::default()).is_err(), "{id}");
    }
}

#[test]
fn estimator_names_round_trip() {
    for id in EstimatorId::ALL {
        assert_eq!(id.name().parse::<EstimatorId>().unwrap(), id);
    }
    assert!("ridge".parse::<EstimatorId>().is_err());
    assert_eq!(
        EstimatorId::parse_list("naive, 2s-lp").unwrap(),
        vec![EstimatorId::Naive, EstimatorId::TwoStepLp]
    );
}

#[test]
fn monte_carlo_is_bitwise_reproducible() {
    let model = ModelSpec::block(vec![3, 5, 7], 0.3);
    let ids = [
        EstimatorId::Naive,
        EstimatorId::Lp,
        EstimatorId::Alca,
        EstimatorId::TwoStepLp,
    ];
    let a = run_monte_carlo(&model, 30, 25, &ids, 17, None).unwrap();
    let b = run_monte_carlo(&model, 30, 25, &ids, 17, None).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.rows.len(), 4);
    let c = run_monte_carlo(&model, 30, 25, &ids, 18, None).unwrap();
    assert_ne!(a.rows[0].mean_f, c.rows[0].mean_f);
}

#[test]
fn monte_carlo_report_formats() {
    let model = ModelSpec::nested(8, 0.2);
    let r = run_monte_carlo(
        &model,
        20,
        3,
        &[EstimatorId::Naive, EstimatorId::Lp],
        1,
        None,
    )
    .unwrap();
    let csv = r.to_csv().unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "estimator,mean_f,se_f,mean_mv,se_mv,failures"
    );
    assert!(lines.next().unwrap().starts_with("naive,"));
    assert!(lines.next().unwrap().starts_with("lp,"));
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["model"]["kind"], "nested");
    assert_eq!(json["seed"], 1);
    assert!(r.to_table().contains("lp"));
}

#[test]
fn naive_mean_matches_manual_average() {
    let model = ModelSpec::block(vec![2, 3], 0.4);
    let sigma = model.build().unwrap();
    let g = SampleGenerator::new(&sigma).unwrap();
    let r = run_monte_carlo(&model, 8, 4, &[EstimatorId::Naive], 2, None).unwrap();
    let manual: f64 = (0..4)
        .map(|i| frobenius_loss(&g.draw(8, 2, i).unwrap().sample, &sigma).unwrap())
        .sum::<f64>()
        / 4.0;
    assert_abs_diff_eq!(r.rows[0].mean_f, manual, epsilon = 1e-15);
}
