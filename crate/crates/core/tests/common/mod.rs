#![allow(dead_code)]

use heuristic_dynamics::belief_dynamics::Belief;
use heuristic_dynamics::expfam::{sample_signals, ConjugatePrior, SampleBatch, SignalModel};
use heuristic_dynamics::DiGraph;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Random digraph on `n` agents, each off-diagonal edge present with probability `p`.
pub fn random_digraph(rng: &mut impl Rng, n: usize, p: f64) -> DiGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                edges.push((j, i));
            }
        }
    }
    DiGraph::from_edges(n, edges).unwrap()
}

/// A random Hamiltonian cycle plus extra edges with probability `p`.
pub fn random_strong_digraph(rng: &mut impl Rng, n: usize, p: f64) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|k| (order[k], order[(k + 1) % n])).collect();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(p) {
                edges.push((j, i));
            }
        }
    }
    let g = DiGraph::from_edges(n, edges).unwrap();
    assert!(g.is_strongly_connected());
    g
}

pub fn random_gaussian(rng: &mut impl Rng) -> SignalModel {
    SignalModel::gaussian(rng.random_range(0.2..5.0), rng.random_range(1..=5)).unwrap()
}

pub fn random_poisson(rng: &mut impl Rng) -> SignalModel {
    SignalModel::poisson(rng.random_range(0.2..3.0), rng.random_range(1..=5)).unwrap()
}

pub fn random_prior(rng: &mut impl Rng, informative: bool) -> ConjugatePrior {
    if informative {
        ConjugatePrior::scalar(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0)).unwrap()
    } else {
        ConjugatePrior::NonInformative
    }
}

pub fn draw(rng: &mut impl Rng, models: &[SignalModel], theta: f64) -> Vec<SampleBatch> {
    models.iter().map(|m| sample_signals(m, theta, rng).unwrap()).collect()
}

/// Interior belief with log-weights uniform on `[-spread, spread]`.
pub fn random_belief(rng: &mut impl Rng, m: usize, spread: f64) -> Belief {
    Belief::from_log_unnormalized((0..m).map(|_| rng.random_range(-spread..spread)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn belief_diff(a: &Belief, b: &Belief) -> f64 {
    max_abs_diff(&a.masses(), &b.masses())
}

/// Dense oracle for the Perron root and left/right eigenvectors of a
/// non-negative irreducible matrix: the eigenvalue of largest real part from
/// the Schur form, eigenvectors from the SVD null space of `M - rho I`.
pub fn dense_perron(m: &DMatrix<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let n = m.nrows();
    let rho = m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let null_vector = |mat: DMatrix<f64>| {
        let svd = (mat - DMatrix::identity(n, n) * rho).svd(false, true);
        let v_t = svd.v_t.unwrap();
        let k = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let v: DVector<f64> = v_t.row(k).transpose();
        if v.sum() < 0.0 {
            -v
        } else {
            v
        }
    };
    let right = null_vector(m.clone());
    let left = null_vector(m.transpose());
    (rho, left, right)
}

/// Weighted log-likelihood scores computed from closed-form densities,
/// independent of the library's likelihood code.
pub fn oracle_scores(models: &[SignalModel], batches: &[SampleBatch], weights: &[f64], states: &[f64]) -> Vec<f64> {
    use heuristic_dynamics::expfam::{Family, ScaleFactors};
    states
        .iter()
        .map(|&theta| {
            models
                .iter()
                .zip(batches)
                .zip(weights)
                .map(|((m, b), w)| {
                    let ll: f64 = b
                        .values()
                        .iter()
                        .map(|&s| match m.family() {
                            Family::GaussianKnownPrecision => {
                                let p = m.sigma();
                                0.5 * (p / (2.0 * std::f64::consts::PI)).ln() - 0.5 * p * (s - theta).powi(2)
                            }
                            Family::PoissonExposure => {
                                let rate = m.delta() * theta;
                                let log_fact: f64 = (1..=s as u64).map(|k| (k as f64).ln()).sum();
                                s * rate.ln() - rate - log_fact
                            }
                        })
                        .sum();
                    w * ll
                })
                .sum()
        })
        .collect()
}

/// Indices of the best score and whether the runner-up trails by at least `margin`.
pub fn argmax_with_margin(scores: &[f64], margin: f64) -> (usize, bool) {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*b].partial_cmp(&scores[*a]).unwrap());
    let gap = scores[idx[0]] - scores[idx[1]];
    (idx[0], gap >= margin)
}
