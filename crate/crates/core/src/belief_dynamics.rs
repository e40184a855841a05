//! Beliefs over a finite state space and their log-linear heuristic updates.
//!
//! Interior beliefs form an abelian group under pointwise
//! multiply-and-normalize (`⊕`), with the uniform belief as identity and the
//! normalized reciprocal as inverse. Real powers (`⊙`) make it a vector
//! space. Everything is stored as log-masses and renormalized with
//! logsumexp, since the repeated products below overflow linear
//! probabilities within a few dozen rounds.
//!
//! The heuristic update replays the time-one Bayesian pooling rule:
//!
//! ```text
//! μ_i(t) = ⊕_{j ∈ N_i} μ_j(t-1)  ⊖  ⊕_{j ∈ N_i \ {i}} ν_j
//! ```
//!
//! where `ν_j` is agent `j`'s prior. Stacking agents, `t` steps collapse to
//!
//! ```text
//! μ_t = (I+A)^t ⊙ μ_0  ⊖  (Σ_{τ=0}^{t-1} (I+A)^τ A) ⊙ ν
//! ```
//!
//! and beliefs concentrate on the maximizers of the centrality-weighted
//! log-likelihood, not on the pooled-data maximum likelihood set.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{log_likelihood, SampleBatch, SignalModel};
use crate::network::DiGraph;
use crate::spectral::Centrality;

/// Relative tolerance for membership in an argmax set.
pub const TIE_TOL: f64 = 1e-9;

/// Allowed deviation of `logsumexp(log_mass)` from zero.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A belief run has settled once no agent's belief moves by more than this
/// in total variation.
pub const SETTLED_TV: f64 = 1e-12;

/// A belief run has concentrated once every agent puts less than this on
/// states outside its argmax set.
pub const CONCENTRATED_MASS: f64 = 1e-12;

pub const DEFAULT_BELIEF_HORIZON: usize = 1_000;

/// States count as co-maximal when their mass is within this factor of the top.
const ARGMAX_BAND: f64 = 1e-9;

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Ordered, labelled states `θ_1, ..., θ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StateSpace {
    states: Vec<f64>,
}

impl StateSpace {
    pub fn new(states: Vec<f64>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::invalid("states", "need at least two states"));
        }
        if let Some(bad) = states.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid("states", format!("state {bad} is not finite")));
        }
        for (i, a) in states.iter().enumerate() {
            if states[..i].contains(a) {
                return Err(Error::invalid("states", format!("duplicate state {a}")));
            }
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn index_of(&self, theta: f64) -> Option<usize> {
        self.states.iter().position(|s| *s == theta)
    }
}

impl TryFrom<Vec<f64>> for StateSpace {
    type Error = Error;

    fn try_from(states: Vec<f64>) -> Result<Self> {
        Self::new(states)
    }
}

impl From<StateSpace> for Vec<f64> {
    fn from(space: StateSpace) -> Self {
        space.states
    }
}

/// A normalized belief stored as log-masses. Zero masses (`-inf`) are
/// representable, but the algebra and the updates reject them.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    log_mass: Vec<f64>,
}

impl Belief {
    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("belief", "needs at least one state"));
        }
        Ok(Self {
            log_mass: vec![-(m as f64).ln(); m],
        })
    }

    /// Normalizes non-negative weights.
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::invalid("belief", format!("mass {bad} is not a finite non-negative number")));
        }
        Self::from_log_unnormalized(probs.iter().map(|p| p.ln()).collect())
    }

    /// Normalizes arbitrary log-weights; `-inf` entries become zero mass.
    pub fn from_log_unnormalized(mut log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::invalid("belief", "needs at least one state"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Numerical("log-weights contain NaN or +inf".into()));
        }
        let z = logsumexp(&log_weights);
        if z == f64::NEG_INFINITY {
            return Err(Error::DegenerateEvidence);
        }
        for w in &mut log_weights {
            *w -= z;
        }
        Ok(Self {
            log_mass: log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.log_mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_mass.is_empty()
    }

    pub fn log_mass(&self) -> &[f64] {
        &self.log_mass
    }

    pub fn masses(&self) -> Vec<f64> {
        self.log_mass.iter().map(|l| l.exp()).collect()
    }

    /// Every state has positive mass.
    pub fn is_interior(&self) -> bool {
        self.log_mass.iter().all(|l| l.is_finite())
    }

    pub fn is_normalized(&self) -> bool {
        logsumexp(&self.log_mass).abs() <= NORMALIZATION_TOL
    }

    /// Total mass on the given state indices.
    pub fn mass_on(&self, states: &[usize]) -> f64 {
        states.iter().map(|&s| self.log_mass[s].exp()).sum()
    }

    /// States whose mass is within a factor `1 - 1e-9` of the largest.
    pub fn argmax_set(&self) -> Vec<usize> {
        let max = self.log_mass.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = max + (1.0 - ARGMAX_BAND).ln();
        (0..self.len()).filter(|&s| self.log_mass[s] >= floor).collect()
    }

    fn check_interior(&self) -> Result<()> {
        if !self.is_interior() {
            return Err(Error::Domain("belief has zero mass on some state".into()));
        }
        Ok(())
    }
}

fn check_pair(a: &Belief, b: &Belief) -> Result<()> {
    check_len("belief length", a.len(), b.len())?;
    a.check_interior()?;
    b.check_interior()
}

/// `a ⊕ b`: pointwise product, renormalized.
pub fn oplus(a: &Belief, b: &Belief) -> Result<Belief> {
    check_pair(a, b)?;
    Belief::from_log_unnormalized(a.log_mass.iter().zip(&b.log_mass).map(|(x, y)| x + y).collect())
}

/// Normalized reciprocal, so that `a ⊕ inverse(a)` is uniform.
pub fn inverse(a: &Belief) -> Result<Belief> {
    a.check_interior()?;
    Belief::from_log_unnormalized(a.log_mass.iter().map(|x| -x).collect())
}

/// `a ⊖ b = a ⊕ inverse(b)`.
pub fn ominus(a: &Belief, b: &Belief) -> Result<Belief> {
    check_pair(a, b)?;
    Belief::from_log_unnormalized(a.log_mass.iter().zip(&b.log_mass).map(|(x, y)| x - y).collect())
}

/// `r ⊙ a`: pointwise power `a^r`, renormalized. Any real `r` is allowed.
pub fn scale(r: f64, a: &Belief) -> Result<Belief> {
    if !r.is_finite() {
        return Err(Error::Domain(format!("exponent {r} is not finite")));
    }
    a.check_interior()?;
    Belief::from_log_unnormalized(a.log_mass.iter().map(|x| r * x).collect())
}

/// `n × m` table of log-likelihoods `log ℓ_i(s_i | θ)`.
pub fn log_likelihood_table(
    models: &[SignalModel],
    batches: &[SampleBatch],
    space: &StateSpace,
) -> Result<Vec<Vec<f64>>> {
    check_len("sample batches", models.len(), batches.len())?;
    models
        .iter()
        .zip(batches)
        .map(|(model, batch)| {
            space
                .states
                .iter()
                .map(|&theta| log_likelihood(model, batch, theta))
                .collect()
        })
        .collect()
}

/// Agent's initial Bayesian opinion: prior times likelihood over the state space.
pub fn time_zero_belief(
    model: &SignalModel,
    batch: &SampleBatch,
    prior: &Belief,
    space: &StateSpace,
) -> Result<Belief> {
    check_len("prior belief", space.len(), prior.len())?;
    prior.check_interior()?;
    let mut log_w = Vec::with_capacity(space.len());
    for (&theta, lp) in space.states.iter().zip(&prior.log_mass) {
        log_w.push(lp + log_likelihood(model, batch, theta)?);
    }
    Belief::from_log_unnormalized(log_w)
}

/// Uniform-prior posterior given every agent's raw signals.
pub fn bayesian_aggregate(
    models: &[SignalModel],
    batches: &[SampleBatch],
    space: &StateSpace,
) -> Result<Belief> {
    let table = log_likelihood_table(models, batches, space)?;
    let summed = (0..space.len()).map(|s| table.iter().map(|row| row[s]).sum()).collect();
    Belief::from_log_unnormalized(summed)
}

/// Beliefs of all agents at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefProfile {
    pub beliefs: Vec<Belief>,
    pub t: usize,
}

impl BeliefProfile {
    pub fn new(beliefs: Vec<Belief>) -> Result<Self> {
        let Some(first) = beliefs.first() else {
            return Err(Error::invalid("beliefs", "profile needs at least one agent"));
        };
        let m = first.len();
        for b in &beliefs {
            check_len("belief length", m, b.len())?;
        }
        Ok(Self { beliefs, t: 0 })
    }

    pub fn n(&self) -> usize {
        self.beliefs.len()
    }

    pub fn m(&self) -> usize {
        self.beliefs[0].len()
    }

    pub fn is_interior(&self) -> bool {
        self.beliefs.iter().all(Belief::is_interior)
    }

    /// Smallest mass any agent puts on `states`.
    pub fn min_mass_on(&self, states: &[usize]) -> f64 {
        self.beliefs
            .iter()
            .map(|b| b.mass_on(states))
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_update_inputs(profile: &BeliefProfile, graph: &DiGraph, priors: &[Belief]) -> Result<()> {
    check_len("belief profile", graph.n(), profile.n())?;
    check_len("prior beliefs", graph.n(), priors.len())?;
    let m = profile.m();
    for b in profile.beliefs.iter().chain(priors) {
        check_len("belief length", m, b.len())?;
        b.check_interior()?;
    }
    Ok(())
}

/// One synchronous round of the heuristic belief update.
pub fn update_step(profile: &BeliefProfile, graph: &DiGraph, priors: &[Belief]) -> Result<BeliefProfile> {
    check_update_inputs(profile, graph, priors)?;
    let m = profile.m();
    let beliefs = (0..graph.n())
        .map(|i| {
            let mut log_w = vec![0.0; m];
            for &j in graph.nbrs(i) {
                let mu = &profile.beliefs[j].log_mass;
                let nu = &priors[j].log_mass;
                for s in 0..m {
                    log_w[s] += mu[s];
                    if j != i {
                        log_w[s] -= nu[s];
                    }
                }
            }
            Belief::from_log_unnormalized(log_w)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeliefProfile {
        beliefs,
        t: profile.t + 1,
    })
}

/// Stacks log-masses into an `n × m` matrix, each row shifted by its mean.
/// Per-agent constant shifts cancel in the final normalization.
fn centered_log_matrix(beliefs: &[Belief]) -> DMatrix<f64> {
    let m = beliefs[0].len();
    DMatrix::from_fn(beliefs.len(), m, |i, s| {
        let row = &beliefs[i].log_mass;
        row[s] - row.iter().sum::<f64>() / m as f64
    })
}

/// The `t`-step beliefs computed directly from powers of `I + A`.
pub fn vectorized_update(
    profile0: &BeliefProfile,
    graph: &DiGraph,
    priors: &[Belief],
    t: usize,
) -> Result<BeliefProfile> {
    check_update_inputs(profile0, graph, priors)?;
    if t == 0 {
        return Ok(profile0.clone());
    }
    let n = graph.n();
    let step = graph.neighborhood_matrix();
    let a = graph.adjacency();
    let mut power = DMatrix::identity(n, n);
    let mut prior_weight = DMatrix::zeros(n, n);
    for _ in 0..t {
        prior_weight += &power * &a;
        power = &power * &step;
    }
    let log_mu = centered_log_matrix(&profile0.beliefs);
    let log_nu = centered_log_matrix(priors);
    let log_w = power * log_mu - prior_weight * log_nu;
    let beliefs = log_w
        .row_iter()
        .map(|row| Belief::from_log_unnormalized(row.iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeliefProfile {
        beliefs,
        t: profile0.t + t,
    })
}

/// Indices maximizing `Σ_i w_i · table[i][θ]`, up to a relative tie tolerance.
///
/// A state is kept when its score is within `tie_tol · max(1, |best|)` of
/// the best score.
pub fn weighted_argmax(table: &[Vec<f64>], weights: &[f64], tie_tol: f64) -> Result<Vec<usize>> {
    check_len("weights", table.len(), weights.len())?;
    let Some(m) = table.first().map(Vec::len) else {
        return Err(Error::invalid("table", "needs at least one agent"));
    };
    if tie_tol.is_nan() || tie_tol < 0.0 {
        return Err(Error::invalid("tie_tol", format!("must be >= 0, got {tie_tol}")));
    }
    let mut scores = vec![0.0; m];
    for (row, w) in table.iter().zip(weights) {
        check_len("log-likelihood row", m, row.len())?;
        for (s, l) in scores.iter_mut().zip(row) {
            *s += w * l;
        }
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numerical("weighted log-likelihood is NaN".into()));
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::DegenerateEvidence);
    }
    let slack = tie_tol * best.abs().max(1.0);
    Ok((0..m).filter(|&s| scores[s] >= best - slack).collect())
}

/// Maximizers of the weighted log-likelihood `Σ_i α_i log ℓ_i(s_i | θ)`.
/// With centrality weights this is the support of the limit belief.
pub fn weighted_mle_set(
    models: &[SignalModel],
    batches: &[SampleBatch],
    weights: &[f64],
    space: &StateSpace,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("weights", "must be non-negative and sum to 1"));
    }
    weighted_argmax(&log_likelihood_table(models, batches, space)?, weights, tie_tol)
}

/// Centrality-weighted maximizers (the limit support).
pub fn central_mle_set(
    models: &[SignalModel],
    batches: &[SampleBatch],
    centrality: &Centrality,
    space: &StateSpace,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    weighted_mle_set(models, batches, centrality.as_slice(), space, tie_tol)
}

/// Maximum likelihood set of the pooled signals (uniform weights).
pub fn pooled_mle_set(
    models: &[SignalModel],
    batches: &[SampleBatch],
    space: &StateSpace,
    tie_tol: f64,
) -> Result<Vec<usize>> {
    let n = models.len();
    weighted_mle_set(models, batches, &vec![1.0 / n as f64; n], space, tie_tol)
}

/// A limit of beliefs, possibly on the simplex boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitBelief {
    pub support: Vec<usize>,
    pub masses: Vec<f64>,
}

impl LimitBelief {
    pub fn mass_on(&self, states: &[usize]) -> f64 {
        states.iter().map(|&s| self.masses[s]).sum()
    }
}

/// Uniform mass on `support`, zero elsewhere.
pub fn asymptotic_prediction(support: &[usize], space: &StateSpace) -> Result<LimitBelief> {
    let mut support = support.to_vec();
    support.sort_unstable();
    support.dedup();
    if support.is_empty() {
        return Err(Error::invalid("support", "limit support must be non-empty"));
    }
    if let Some(&bad) = support.iter().find(|&&s| s >= space.len()) {
        return Err(Error::invalid("support", format!("state index {bad} out of range")));
    }
    let mut masses = vec![0.0; space.len()];
    let share = 1.0 / support.len() as f64;
    for &s in &support {
        masses[s] = share;
    }
    Ok(LimitBelief { support, masses })
}

/// Total-variation distance `½ Σ |p - q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `φ_i(t) = log μ_i(t)(hat) - log μ_i(t)(check)` for every agent, indexed `[agent][t]`.
pub fn log_ratio_trajectory(history: &[BeliefProfile], hat: usize, check: usize) -> Result<Vec<Vec<f64>>> {
    let Some(first) = history.first() else {
        return Ok(Vec::new());
    };
    let n = first.n();
    for profile in history {
        check_len("belief profile", n, profile.n())?;
        for b in &profile.beliefs {
            if hat >= b.len() || check >= b.len() {
                return Err(Error::invalid("state pair", format!("({hat}, {check}) out of range")));
            }
            b.check_interior()?;
        }
    }
    Ok((0..n)
        .map(|i| {
            history
                .iter()
                .map(|p| p.beliefs[i].log_mass[hat] - p.beliefs[i].log_mass[check])
                .collect()
        })
        .collect())
}

/// Limit of `φ_i(t) / (1 + ρ(A))^t`: `r_i · Σ_j α_j λ_j`, where `λ_j` is
/// agent `j`'s log-likelihood ratio of `hat` over `check`.
pub fn asymptotic_log_ratio(
    centrality: &Centrality,
    models: &[SignalModel],
    batches: &[SampleBatch],
    space: &StateSpace,
    hat: usize,
    check: usize,
) -> Result<Vec<f64>> {
    check_len("signal models", centrality.as_slice().len(), models.len())?;
    if hat >= space.len() || check >= space.len() {
        return Err(Error::invalid("state pair", format!("({hat}, {check}) out of range")));
    }
    let table = log_likelihood_table(models, batches, space)?;
    let lambda: f64 = table
        .iter()
        .zip(centrality.as_slice())
        .map(|(row, a)| a * (row[hat] - row[check]))
        .sum();
    Ok(centrality.right().iter().map(|r| r * lambda).collect())
}

#[derive(Debug, Clone, Copy)]
pub struct BeliefRunOptions {
    pub horizon: usize,
    pub settled_tv: f64,
    pub concentrated_mass: f64,
}

impl Default for BeliefRunOptions {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_BELIEF_HORIZON,
            settled_tv: SETTLED_TV,
            concentrated_mass: CONCENTRATED_MASS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefStop {
    /// No belief moved by more than the settled threshold.
    Settled,
    /// All agents agree on an argmax set holding all but a negligible mass.
    Concentrated,
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefRun {
    pub profile: BeliefProfile,
    pub stop: BeliefStop,
}

fn concentrated(profile: &BeliefProfile, tol: f64) -> bool {
    let support = profile.beliefs[0].argmax_set();
    profile.beliefs.iter().all(|b| {
        let own = b.argmax_set();
        own == support && 1.0 - b.mass_on(&own) < tol
    })
}

pub fn run_beliefs(
    profile0: &BeliefProfile,
    graph: &DiGraph,
    priors: &[Belief],
    opts: BeliefRunOptions,
) -> Result<BeliefRun> {
    run_beliefs_with(profile0, graph, priors, opts, |_| {})
}

/// Iterates [`update_step`] until beliefs settle, concentrate, or the
/// horizon is reached. `observe` sees every profile, starting with `profile0`.
pub fn run_beliefs_with<F>(
    profile0: &BeliefProfile,
    graph: &DiGraph,
    priors: &[Belief],
    opts: BeliefRunOptions,
    mut observe: F,
) -> Result<BeliefRun>
where
    F: FnMut(&BeliefProfile),
{
    let mut profile = profile0.clone();
    observe(&profile);
    let mut steps = 0;
    let stop = loop {
        if concentrated(&profile, opts.concentrated_mass) {
            break BeliefStop::Concentrated;
        }
        if steps >= opts.horizon {
            break BeliefStop::Horizon;
        }
        let next = update_step(&profile, graph, priors)?;
        if !next.is_interior() {
            return Err(Error::Numerical(format!(
                "belief mass underflowed to zero at t = {}",
                next.t
            )));
        }
        let moved = profile
            .beliefs
            .iter()
            .zip(&next.beliefs)
            .map(|(a, b)| total_variation(&a.masses(), &b.masses()))
            .fold(0.0, f64::max);
        profile = next;
        steps += 1;
        observe(&profile);
        if moved < opts.settled_tv {
            break BeliefStop::Settled;
        }
    };
    Ok(BeliefRun { profile, stop })
}
