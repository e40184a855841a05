mod common;

use common::*;
use heuristic_dynamics::belief_dynamics::{
    bayesian_aggregate, inverse, oplus, ominus, run_beliefs, scale, time_zero_belief, update_step,
    weighted_mle_set, Belief, BeliefProfile, BeliefRunOptions, StateSpace, TIE_TOL,
};
use heuristic_dynamics::expfam::{SampleBatch, SignalModel};
use heuristic_dynamics::spectral::centrality;
use proptest::prelude::*;
use rand::Rng;

fn belief(m: usize) -> impl Strategy<Value = Belief> {
    prop::collection::vec(-4.0f64..4.0, m).prop_map(|w| Belief::from_log_unnormalized(w).unwrap())
}

fn triple() -> impl Strategy<Value = (Belief, Belief, Belief)> {
    (2usize..=8).prop_flat_map(|m| (belief(m), belief(m), belief(m)))
}

proptest! {
    #[test]
    fn group_axioms((a, b, c) in triple()) {
        let u = Belief::uniform(a.len()).unwrap();
        let left = oplus(&oplus(&a, &b).unwrap(), &c).unwrap();
        let right = oplus(&a, &oplus(&b, &c).unwrap()).unwrap();
        prop_assert!(belief_diff(&left, &right) <= 1e-13);
        prop_assert!(belief_diff(&oplus(&a, &b).unwrap(), &oplus(&b, &a).unwrap()) <= 1e-14);
        prop_assert!(belief_diff(&oplus(&a, &u).unwrap(), &a) <= 1e-13);
        prop_assert!(belief_diff(&oplus(&a, &inverse(&a).unwrap()).unwrap(), &u) <= 1e-13);
        prop_assert!(belief_diff(&ominus(&a, &b).unwrap(), &oplus(&a, &inverse(&b).unwrap()).unwrap()) <= 1e-13);
    }

    #[test]
    fn power_laws((a, b, _) in triple(), r in -3.0f64..3.0, s in -3.0f64..3.0) {
        let lhs = scale(r, &oplus(&a, &b).unwrap()).unwrap();
        let rhs = oplus(&scale(r, &a).unwrap(), &scale(r, &b).unwrap()).unwrap();
        prop_assert!(belief_diff(&lhs, &rhs) <= 1e-13);
        let sum = oplus(&scale(r, &a).unwrap(), &scale(s, &a).unwrap()).unwrap();
        prop_assert!(belief_diff(&scale(r + s, &a).unwrap(), &sum) <= 1e-13);
        prop_assert!(belief_diff(&scale(r * s, &a).unwrap(), &scale(r, &scale(s, &a).unwrap()).unwrap()) <= 1e-13);
    }

    #[test]
    fn prior_update_is_uniform_update_of_corrected_beliefs(seed in any::<u64>()) {
        // with priors: mu_i' = (uniform-prior update of mu ⊖ nu)_i ⊕ nu_i
        let mut rng = rng(seed);
        let n = rng.random_range(1..=5);
        let m = rng.random_range(2..=4);
        let g = random_digraph(&mut rng, n, 0.5);
        let priors: Vec<Belief> = (0..n).map(|_| random_belief(&mut rng, m, 2.0)).collect();
        let mu = BeliefProfile::new((0..n).map(|_| random_belief(&mut rng, m, 2.0)).collect()).unwrap();
        let with_priors = update_step(&mu, &g, &priors).unwrap();
        let corrected = BeliefProfile::new(
            mu.beliefs.iter().zip(&priors).map(|(a, v)| ominus(a, v).unwrap()).collect(),
        ).unwrap();
        let uniform = vec![Belief::uniform(m).unwrap(); n];
        let plain = update_step(&corrected, &g, &uniform).unwrap();
        for ((p, v), w) in plain.beliefs.iter().zip(&priors).zip(&with_priors.beliefs) {
            let rebuilt = oplus(p, v).unwrap();
            prop_assert!(belief_diff(&rebuilt, w) <= 1e-12);
        }
    }
}

#[test]
fn aggregate_matches_brute_force_product() {
    let mut rng = rng(61);
    let space = StateSpace::new(vec![-0.5, 0.25, 1.0]).unwrap();
    let models: Vec<SignalModel> = (0..4).map(|_| random_gaussian(&mut rng)).collect();
    let batches = draw(&mut rng, &models, 0.25);
    let agg = bayesian_aggregate(&models, &batches, &space).unwrap();
    let scores = oracle_scores(&models, &batches, &[1.0; 4], space.states());
    let weights: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
    let total: f64 = weights.iter().sum();
    for (got, w) in agg.masses().iter().zip(&weights) {
        assert!((got - w / total).abs() < 1e-12);
    }
}

#[test]
fn weighted_mle_matches_exhaustive_scan() {
    let mut rng = rng(62);
    for _ in 0..50 {
        let n = rng.random_range(1..=4);
        let space = StateSpace::new(vec![0.5, 1.0, 2.0, 3.5]).unwrap();
        let models: Vec<SignalModel> = (0..n).map(|_| random_poisson(&mut rng)).collect();
        let batches = draw(&mut rng, &models, 2.0);
        let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let scores = oracle_scores(&models, &batches, &w, space.states());
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle: Vec<usize> = (0..4).filter(|&s| scores[s] >= best - 1e-9 * best.abs().max(1.0)).collect();
        assert_eq!(weighted_mle_set(&models, &batches, &w, &space, TIE_TOL).unwrap(), oracle);
    }
}

#[test]
fn priors_do_not_change_the_limit_support() {
    let mut rng = rng(63);
    let mut checked = 0;
    while checked < 20 {
        let n = rng.random_range(2..=5);
        let m = rng.random_range(2..=4);
        let g = random_strong_digraph(&mut rng, n, 0.3);
        let states: Vec<f64> = (0..m).map(|k| k as f64 * 0.7).collect();
        let space = StateSpace::new(states.clone()).unwrap();
        let models: Vec<SignalModel> = (0..n).map(|_| SignalModel::gaussian(rng.random_range(0.2..1.0), 2).unwrap()).collect();
        let truth = states[rng.random_range(0..m)];
        let batches = draw(&mut rng, &models, truth);
        let cent = centrality(&g).unwrap();
        let scores = oracle_scores(&models, &batches, cent.as_slice(), &states);
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (support, tie_free) = argmax_with_margin(&scores, 1e-6 * best.abs().max(1.0));
        if !tie_free {
            continue;
        }
        checked += 1;
        let opts = BeliefRunOptions { horizon: 500, ..BeliefRunOptions::default() };
        for random_priors in [false, true] {
            let priors: Vec<Belief> = (0..n)
                .map(|_| if random_priors { random_belief(&mut rng, m, 2.0) } else { Belief::uniform(m).unwrap() })
                .collect();
            let p0 = start(&models, &batches, &priors, &space);
            let run = run_beliefs(&p0, &g, &priors, opts).unwrap();
            assert!(run.profile.min_mass_on(&[support]) > 1.0 - 1e-6);
        }
    }
}

fn start(models: &[SignalModel], batches: &[SampleBatch], priors: &[Belief], space: &StateSpace) -> BeliefProfile {
    BeliefProfile::new(
        models
            .iter()
            .zip(batches)
            .zip(priors)
            .map(|((m, b), p)| time_zero_belief(m, b, p, space).unwrap())
            .collect(),
    )
    .unwrap()
}
