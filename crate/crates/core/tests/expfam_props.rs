mod common;

use heuristic_dynamics::expfam::{
    bayes_estimate, infer_neighbor_stat, log_likelihood, posterior_update, time_zero_action, ConjugatePrior,
    SampleBatch, ScaleFactors, SignalModel,
};
use proptest::prelude::*;

fn model_strategy() -> impl Strategy<Value = SignalModel> {
    prop_oneof![
        (0.05f64..20.0, 1usize..12).prop_map(|(p, n)| SignalModel::gaussian(p, n).unwrap()),
        (0.05f64..20.0, 1usize..12).prop_map(|(e, n)| SignalModel::poisson(e, n).unwrap()),
    ]
}

fn prior_strategy() -> impl Strategy<Value = ConjugatePrior> {
    prop_oneof![
        Just(ConjugatePrior::NonInformative),
        (0.01f64..10.0, 0.01f64..10.0).prop_map(|(a, b)| ConjugatePrior::scalar(a, b).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn neighbor_statistic_round_trips(
        model in model_strategy(),
        prior in prior_strategy(),
        seed in any::<u64>(),
    ) {
        let mut rng = common::rng(seed);
        let theta = 0.5 + (seed % 7) as f64;
        let batch = common::draw(&mut rng, std::slice::from_ref(&model), theta).remove(0);
        let action = time_zero_action(&model, &prior, &batch).unwrap();
        let recovered = infer_neighbor_stat(&action, &model, &prior).unwrap();
        let truth = batch.stat_sum()[0];
        prop_assert!((recovered[0] - truth).abs() <= 1e-12 * truth.abs().max(1.0));
    }

    #[test]
    fn time_zero_action_is_posterior_bayes_estimate(
        (model, values) in model_strategy().prop_flat_map(|m| {
            let n = m.n_samples();
            (Just(m), prop::collection::vec(0u32..30, n))
        }),
        prior in prior_strategy(),
    ) {
        let batch = SampleBatch::new(values.iter().map(|v| *v as f64).collect()).unwrap();
        let post = posterior_update(&prior, &model, &batch).unwrap();
        let est = bayes_estimate(&post, &model).unwrap();
        let act = time_zero_action(&model, &prior, &batch).unwrap();
        prop_assert!((est[0] - act[0]).abs() <= 1e-12 * act[0].abs().max(1.0));
    }

    #[test]
    fn log_likelihood_differences_match_exponent(
        precision in 0.1f64..10.0,
        s in prop::collection::vec(-5.0f64..5.0, 1..6),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let model = SignalModel::gaussian(precision, s.len()).unwrap();
        let batch = SampleBatch::new(s.clone()).unwrap();
        let diff = log_likelihood(&model, &batch, a).unwrap() - log_likelihood(&model, &batch, b).unwrap();
        // exponent sigma * theta * sum(s) - n * delta * theta^2 / 2
        let sum: f64 = s.iter().sum();
        let n = s.len() as f64;
        let expected = precision * (a - b) * sum - 0.5 * n * precision * (a * a - b * b);
        prop_assert!((diff - expected).abs() <= 1e-9 * expected.abs().max(1.0));
    }
}

#[test]
fn posterior_mean_concentrates_on_truth() {
    let mut rng = common::rng(17);
    for (model, theta, target) in [
        (SignalModel::gaussian(0.5, 4000).unwrap(), -1.25, -1.25),
        (SignalModel::poisson(1.5, 4000).unwrap(), 2.0, 3.0),
    ] {
        let batch = common::draw(&mut rng, std::slice::from_ref(&model), theta).remove(0);
        let post = posterior_update(&ConjugatePrior::scalar(1.0, 1.0).unwrap(), &model, &batch).unwrap();
        let est = bayes_estimate(&post, &model).unwrap()[0];
        assert!((est - target).abs() < 0.05, "{est} vs {target}");
    }
}
