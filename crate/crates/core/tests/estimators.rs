//! Statistical invariants of the repeated estimators, checked end to end
//! through the input model.

use qdoe::copula::GaussianCopula;
use qdoe::designs::Scheme;
use qdoe::distributions::DistributionSpec;
use qdoe::estimators::{self, QuantizerMode, ReplicateSettings};
use qdoe::inputs::{BlockLaw, InputBlock, InputModel, Role, SamplingSettings};
use qdoe::models::ModelSpec;
use qdoe::quantizer::LloydSettings;

fn normal_block(name: &str) -> InputBlock {
    InputBlock {
        names: vec![name.into()],
        law: BlockLaw::Copula {
            marginals: vec![DistributionSpec::Normal { mu: 0.0, sigma: 1.0 }],
            copula: GaussianCopula::identity(1),
        },
    }
}

fn sampling(pool_size: usize) -> SamplingSettings {
    SamplingSettings { pool_size, lloyd: LloydSettings { max_iter: 100, rel_tol: 1e-6, restarts: 1 } }
}

fn settings(scheme: Scheme, n: usize, repetitions: usize, seed: u64, mode: QuantizerMode) -> ReplicateSettings {
    ReplicateSettings { scheme, n, repetitions, base_seed: seed, sampling: sampling(2000), mode }
}

#[test]
fn shared_rq_variance_matches_within_cell_formula() {
    let inputs = InputModel::new(vec![normal_block("x")]).unwrap();
    let f = ModelSpec::Square.bind(inputs.columns()).unwrap();
    let s = settings(Scheme::Rq, 10, 5000, 41, QuantizerMode::Shared);
    let prepared = inputs.prepare(Scheme::Rq, 10, &s.sampling, &mut estimators::shared_rng(41)).unwrap();
    let fitted = prepared.fitted()[0];
    let predicted = estimators::rq_variance(&fitted.quantizer, &fitted.pool, &f).unwrap();

    let rep = estimators::replicate(&inputs, &f, &s).unwrap();
    let ratio = rep.summary.variance / predicted;
    assert!((ratio - 1.0).abs() < 0.2, "empirical {} vs formula {predicted}", rep.summary.variance);

    // the shared-quantizer mean is the pool mean of f
    let pool_mean: f64 =
        fitted.pool.points().rows().map(|r| r[0] * r[0]).sum::<f64>() / fitted.pool.len() as f64;
    assert!((rep.summary.mean - pool_mean).abs() < 4.0 * rep.summary.std_error);
}

#[test]
fn lhs_does_not_lose_to_mc_on_an_additive_function() {
    let block = InputBlock {
        names: vec!["x1".into(), "x2".into()],
        law: BlockLaw::Independent {
            marginals: vec![
                DistributionSpec::Uniform { a: 0.0, b: 1.0 },
                DistributionSpec::Normal { mu: 0.0, sigma: 2.0 },
            ],
        },
    };
    let inputs = InputModel::new(vec![block]).unwrap();
    let f = ModelSpec::Additive { coefficients: vec![1.0, -0.5] }.bind(inputs.columns()).unwrap();
    let mc = estimators::replicate(&inputs, &f, &settings(Scheme::Mc, 20, 2000, 5, QuantizerMode::Refit)).unwrap();
    let lhs = estimators::replicate(&inputs, &f, &settings(Scheme::Lhs, 20, 2000, 5, QuantizerMode::Refit)).unwrap();
    // additive in independent inputs: LHS removes almost all of the variance
    assert!(lhs.summary.variance < 0.1 * mc.summary.variance, "{} vs {}", lhs.summary.variance, mc.summary.variance);
    assert!((lhs.summary.mean - 0.5).abs() < 4.0 * lhs.summary.std_error.max(1e-6));
}

#[test]
fn q2lhs_is_consistent_as_n_grows() {
    // x y^2 + y^2 with independent standard normals has mean E[y^2] = 1
    let inputs = InputModel::new(vec![normal_block("x"), normal_block("y")]).unwrap();
    let f = ModelSpec::Xy2py2.bind(inputs.columns()).unwrap();
    let truth = 1.0;
    let mut errors = Vec::new();
    for n in [5, 40] {
        let r = estimators::replicate(&inputs, &f, &settings(Scheme::Q2lhs, n, 400, 9, QuantizerMode::Refit)).unwrap();
        errors.push((r.summary.mean - truth).abs() + 2.0 * r.summary.std_error);
        assert!(r.summary.min.is_finite() && r.summary.max.is_finite());
    }
    assert!(errors[1] < errors[0], "{errors:?}");
    assert!(errors[1] < 0.1, "{errors:?}");
}

#[test]
fn replication_is_reproducible_and_seeded_per_repetition() {
    let inputs = InputModel::with_roles([(normal_block("x"), Role::Rq), (normal_block("y"), Role::Lhs)]).unwrap();
    let f = ModelSpec::X2y.bind(inputs.columns()).unwrap();
    let s = settings(Scheme::Qlhs, 8, 6, 100, QuantizerMode::Refit);
    let a = estimators::replicate(&inputs, &f, &s).unwrap();
    let b = estimators::replicate(&inputs, &f, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seeds, (100..106).collect::<Vec<u64>>());
    // a sub-range of seeds reproduces the matching repetitions
    let part =
        estimators::replicate_with_seeds(&inputs, &f, Scheme::Qlhs, 8, &s.sampling, &a.seeds[2..4], None).unwrap();
    assert_eq!(part.estimates, a.estimates[2..4]);
}
