//! Affine action dynamics induced by exponential-family Bayesian heuristics.
//!
//! Each agent replays its time-one Bayesian update forever:
//!
//! ```text
//! a_i(t+1) = Σ_{j ∈ N_i} T_ij a_j(t) + ε_i
//! T_ij = δ_i σ_j (n_j + β_j/δ_j) / (σ_i (β_i + Σ_{p ∈ N_i} n_p δ_p))
//! ε_i  = -δ_i / (σ_i (β_i + Σ_{p ∈ N_i} n_p δ_p)) · Σ_{j ∈ N_i \ {i}} α_j
//! ```
//!
//! Non-informative priors give `ε = 0` (linear updates). If in addition
//! `δ_i Σ σ_j n_j = σ_i Σ δ_j n_j` over every neighbourhood, rows of `T` sum
//! to one and the dynamics is a DeGroot consensus process.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{
    bayes_estimate, posterior_update, ConjugatePrior, PosteriorParams, SampleBatch, ScaleFactors,
    SignalModel,
};
use crate::network::DiGraph;
use crate::spectral::{perron_pair, stationary_distribution};

/// Width of the band around `rho(T) = 1` classified as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

/// Relative tolerance of the balance and efficiency predicates.
pub const BALANCE_TOL: f64 = 1e-12;

pub const DEFAULT_CONSENSUS_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Steps between two progress checkpoints in [`run_to_consensus_with`].
pub const PROGRESS_WINDOW: usize = 1_000;

fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
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

/// Social influence matrix `T` (n×n) and neighbourhood biases `ε` (n×k).
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceSystem {
    t: DMatrix<f64>,
    epsilon: DMatrix<f64>,
}

impl InfluenceSystem {
    pub fn new(t: DMatrix<f64>, epsilon: DMatrix<f64>) -> Result<Self> {
        if !t.is_square() {
            return Err(Error::invalid("T", "influence matrix must be square"));
        }
        check_len("bias rows", t.nrows(), epsilon.nrows())?;
        if t.iter().chain(epsilon.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("T", "entries must be finite"));
        }
        Ok(Self { t, epsilon })
    }

    /// Linear system with zero bias and action dimension `k`.
    pub fn linear(t: DMatrix<f64>, k: usize) -> Result<Self> {
        let n = t.nrows();
        Self::new(t, DMatrix::zeros(n, k))
    }

    pub fn influence(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn bias(&self) -> &DMatrix<f64> {
        &self.epsilon
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn dim(&self) -> usize {
        self.epsilon.ncols()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.t.row_iter().map(|r| r.sum()).collect()
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.t.iter().all(|v| *v >= 0.0) && self.row_sums().iter().all(|s| (s - 1.0).abs() <= tol)
    }

    pub fn is_unbiased(&self) -> bool {
        self.epsilon.iter().all(|v| *v == 0.0)
    }
}

/// Builds `(T, ε)` from the network, signal models and priors.
pub fn influence_coefficients(
    graph: &DiGraph,
    models: &[SignalModel],
    priors: &[ConjugatePrior],
) -> Result<InfluenceSystem> {
    let n = graph.n();
    check_len("signal models", n, models.len())?;
    check_len("priors", n, priors.len())?;
    let k = models[0].dim();
    for (model, prior) in models.iter().zip(priors) {
        check_len("statistic dimension", k, model.dim())?;
        prior.check_compatible(model)?;
    }
    let params: Vec<(Vec<f64>, f64)> = priors.iter().map(|p| p.params(k)).collect();

    let mut t = DMatrix::zeros(n, n);
    let mut epsilon = DMatrix::zeros(n, k);
    for i in 0..n {
        let nbrs = graph.nbrs(i);
        let (_, beta_i) = &params[i];
        let pooled: f64 = nbrs.iter().map(|&p| models[p].information_weight()).sum();
        let scale = models[i].delta() / (models[i].sigma() * (beta_i + pooled));
        for &j in nbrs {
            let (_, beta_j) = &params[j];
            let mj = &models[j];
            t[(i, j)] = scale * mj.sigma() * (mj.n_samples() as f64 + beta_j / mj.delta());
            if j != i {
                for (c, a) in params[j].0.iter().enumerate() {
                    epsilon[(i, c)] -= scale * a;
                }
            }
        }
    }
    InfluenceSystem::new(t, epsilon)
}

/// Stacked actions, one row per agent, at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile {
    pub actions: DMatrix<f64>,
    pub t: usize,
}

impl ActionProfile {
    pub fn new(actions: DMatrix<f64>) -> Result<Self> {
        if actions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("actions", "entries must be finite"));
        }
        Ok(Self { actions, t: 0 })
    }

    /// Scalar actions (`k = 1`), one per agent.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    /// Builds the profile from per-agent action vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        for row in rows {
            check_len("action dimension", k, row.len())?;
        }
        Self::new(DMatrix::from_fn(n, k, |i, c| rows[i][c]))
    }

    /// Largest per-component gap `max_i a_i - min_i a_i`.
    pub fn spread(&self) -> f64 {
        self.actions
            .column_iter()
            .map(|col| col.max() - col.min())
            .fold(0.0, f64::max)
    }

    /// Per-component mean over agents.
    pub fn mean(&self) -> Vec<f64> {
        self.actions.column_iter().map(|c| c.mean()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.actions.iter().all(|v| v.is_finite())
    }
}

/// One synchronous update `a' = T a + ε`.
pub fn step_affine(profile: &ActionProfile, sys: &InfluenceSystem) -> Result<ActionProfile> {
    check_len("profile rows", sys.n(), profile.actions.nrows())?;
    check_len("profile columns", sys.dim(), profile.actions.ncols())?;
    Ok(ActionProfile {
        actions: &sys.t * &profile.actions + &sys.epsilon,
        t: profile.t + 1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DynamicsClass {
    /// `rho(T) < 1`: converges to `(I - T)^{-1} ε` from any start.
    Stable { equilibrium: DMatrix<f64> },
    /// `rho(T) = 1`: `T^t -> r lᵀ` (normalized so `lᵀ r = 1`).
    Marginal { projector: DMatrix<f64> },
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub rho: f64,
    pub class: DynamicsClass,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match self.class {
            DynamicsClass::Stable { .. } => "stable",
            DynamicsClass::Marginal { .. } => "marginal",
            DynamicsClass::Unstable => "unstable",
        }
    }
}

/// Classifies the dynamics by the Perron root of `T`.
pub fn classify_dynamics(sys: &InfluenceSystem) -> Result<Classification> {
    let pair = perron_pair(&sys.t)?;
    let rho = pair.rho;
    let class = if rho < 1.0 - MARGINAL_BAND {
        let n = sys.n();
        let lu = (DMatrix::identity(n, n) - &sys.t).lu();
        let equilibrium = lu.solve(&sys.epsilon).ok_or_else(|| {
            Error::Numerical("I - T is singular despite rho(T) < 1".into())
        })?;
        DynamicsClass::Stable { equilibrium }
    } else if rho <= 1.0 + MARGINAL_BAND {
        DynamicsClass::Marginal {
            projector: pair.projector(),
        }
    } else {
        DynamicsClass::Unstable
    };
    Ok(Classification { rho, class })
}

/// Assumption of locally balanced likelihoods:
/// `δ_i Σ_{j∈N_i} σ_j n_j = σ_i Σ_{j∈N_i} δ_j n_j` for every agent.
pub fn check_local_balance<S: ScaleFactors>(graph: &DiGraph, models: &[S]) -> Result<bool> {
    check_len("signal models", graph.n(), models.len())?;
    Ok((0..graph.n()).all(|i| {
        let (sn, dn) = graph.nbrs(i).iter().fold((0.0, 0.0), |(sn, dn), &j| {
            let m = &models[j];
            let nj = m.n_samples() as f64;
            (sn + m.sigma() * nj, dn + m.delta() * nj)
        });
        rel_eq(models[i].delta() * sn, models[i].sigma() * dn, BALANCE_TOL)
    }))
}

/// Globally balanced likelihoods: `δ_i / σ_i` is the same for every agent.
pub fn check_global_balance<S: ScaleFactors>(models: &[S]) -> bool {
    let Some(first) = models.first() else {
        return true;
    };
    let c = first.delta() / first.sigma();
    models.iter().all(|m| rel_eq(m.delta() / m.sigma(), c, BALANCE_TOL))
}

/// Options for [`run_to_consensus_with`].
#[derive(Debug, Clone, Copy)]
pub struct ConsensusOptions {
    /// Converged once the spread falls below this.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_CONSENSUS_TOL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// Outcome of iterating the affine dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRun {
    pub profile: ActionProfile,
    pub converged: bool,
    /// Spread of the final profile.
    pub spread: f64,
    /// Largest absolute change over the final step (zero if no step was taken).
    pub drift: f64,
    /// Why the run stopped.
    pub stop: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Consensus,
    Horizon,
    /// The spread failed to shrink over a whole progress window.
    Stalled,
    /// Actions left the representable range.
    Diverged,
}

pub fn run_to_consensus(
    profile0: &ActionProfile,
    sys: &InfluenceSystem,
    tol: f64,
    max_t: usize,
) -> Result<ConsensusRun> {
    run_to_consensus_with(profile0, sys, ConsensusOptions { tol, max_steps: max_t }, |_| {})
}

/// Iterates [`step_affine`] until the spread drops below `opts.tol`, the
/// horizon is reached, or progress stalls. `observe` sees every profile,
/// starting with `profile0`.
pub fn run_to_consensus_with<F>(
    profile0: &ActionProfile,
    sys: &InfluenceSystem,
    opts: ConsensusOptions,
    mut observe: F,
) -> Result<ConsensusRun>
where
    F: FnMut(&ActionProfile),
{
    let mut profile = profile0.clone();
    let mut drift = 0.0;
    let mut checkpoint = f64::INFINITY;
    let mut steps = 0usize;
    observe(&profile);
    let stop = loop {
        let spread = profile.spread();
        if spread < opts.tol {
            break StopReason::Consensus;
        }
        if steps >= opts.max_steps {
            break StopReason::Horizon;
        }
        if steps > 0 && steps.is_multiple_of(PROGRESS_WINDOW) {
            if spread >= checkpoint {
                break StopReason::Stalled;
            }
            checkpoint = spread;
        }
        let next = step_affine(&profile, sys)?;
        if !next.is_finite() {
            break StopReason::Diverged;
        }
        drift = (&next.actions - &profile.actions).amax();
        profile = next;
        steps += 1;
        observe(&profile);
    };
    Ok(ConsensusRun {
        spread: profile.spread(),
        converged: stop == StopReason::Consensus,
        profile,
        drift,
        stop,
    })
}

/// Predicted consensus `sᵀ a_0`, with `s` the stationary law of `T`.
pub fn consensus_prediction(sys: &InfluenceSystem, profile0: &ActionProfile) -> Result<Vec<f64>> {
    check_len("profile rows", sys.n(), profile0.actions.nrows())?;
    let s: DVector<f64> = stationary_distribution(&sys.t)?;
    Ok((s.transpose() * &profile0.actions).iter().copied().collect())
}

/// Per-agent Bayes action given every agent's raw data (one row per agent).
pub fn global_mvue(
    models: &[SignalModel],
    priors: &[ConjugatePrior],
    batches: &[SampleBatch],
) -> Result<DMatrix<f64>> {
    let n = models.len();
    check_len("priors", n, priors.len())?;
    check_len("sample batches", n, batches.len())?;
    let all: Vec<usize> = (0..n).collect();
    let rows = (0..n)
        .map(|i| pooled_bayes_action(i, &all, models, priors, batches))
        .collect::<Result<Vec<_>>>()?;
    let k = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(n, k, |i, c| rows[i][c]))
}

/// Agent `i`'s Bayes action after pooling the raw statistics of `sources`.
fn pooled_bayes_action(
    i: usize,
    sources: &[usize],
    models: &[SignalModel],
    priors: &[ConjugatePrior],
    batches: &[SampleBatch],
) -> Result<Vec<f64>> {
    let own = posterior_update(&priors[i], &models[i], &batches[i])?;
    let mut pooled = PosteriorParams {
        alpha: priors[i].params(models[i].dim()).0,
        beta: own.beta - models[i].information_weight(),
    };
    for &j in sources {
        let mj = &models[j];
        check_len("sample batch", mj.n_samples(), batches[j].len())?;
        check_len("statistic dimension", pooled.alpha.len(), mj.dim())?;
        for (a, s) in pooled.alpha.iter_mut().zip(batches[j].stat_sum()) {
            *a += mj.sigma() * s;
        }
        pooled.beta += mj.information_weight();
    }
    bayes_estimate(&pooled, &models[i])
}

/// The genuine time-one Bayesian action of every agent: its posterior mean
/// after pooling the raw statistics of its whole neighbourhood.
pub fn time_one_bayes_actions(
    graph: &DiGraph,
    models: &[SignalModel],
    priors: &[ConjugatePrior],
    batches: &[SampleBatch],
) -> Result<DMatrix<f64>> {
    let n = graph.n();
    check_len("signal models", n, models.len())?;
    check_len("priors", n, priors.len())?;
    check_len("sample batches", n, batches.len())?;
    let rows = (0..n)
        .map(|i| pooled_bayes_action(i, graph.nbrs(i), models, priors, batches))
        .collect::<Result<Vec<_>>>()?;
    let k = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(n, k, |i, c| rows[i][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InefficiencyReason {
    NotStronglyConnected,
    /// `δ_i / σ_i` is not constant across agents.
    GlobalBalance,
    /// Some in- or out-neighbourhood weight sum `Σ n_p δ_p` differs from agent 0's in-sum.
    WeightSums {
        agent: usize,
        in_sum: f64,
        out_sum: f64,
        reference: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum EfficiencyVerdict {
    Efficient,
    Inefficient(InefficiencyReason),
}

impl EfficiencyVerdict {
    pub fn is_efficient(&self) -> bool {
        matches!(self, EfficiencyVerdict::Efficient)
    }
}

/// Whether non-informative agents reach consensus on the global MVUE:
/// globally balanced likelihoods and equal `Σ n_p δ_p` over every in- and
/// out-neighbourhood.
pub fn efficiency_check<S: ScaleFactors>(
    graph: &DiGraph,
    models: &[S],
) -> Result<EfficiencyVerdict> {
    check_len("signal models", graph.n(), models.len())?;
    if !graph.is_strongly_connected() {
        return Ok(EfficiencyVerdict::Inefficient(
            InefficiencyReason::NotStronglyConnected,
        ));
    }
    if !check_global_balance(models) {
        return Ok(EfficiencyVerdict::Inefficient(InefficiencyReason::GlobalBalance));
    }
    let weight = |set: &[usize]| set.iter().map(|&p| models[p].information_weight()).sum::<f64>();
    let reference = weight(graph.nbrs(0));
    for agent in 0..graph.n() {
        let in_sum = weight(graph.in_neighborhood(agent)?);
        let out_sum = weight(graph.out_neighborhood(agent)?);
        if !rel_eq(in_sum, reference, BALANCE_TOL) || !rel_eq(out_sum, reference, BALANCE_TOL) {
            return Ok(EfficiencyVerdict::Inefficient(InefficiencyReason::WeightSums {
                agent,
                in_sum,
                out_sum,
                reference,
            }));
        }
    }
    Ok(EfficiencyVerdict::Efficient)
}
