//! Scenario files, the seeded simulation driver, and report emission.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "poisson_cycle3",
//!   "mode": "action",
//!   "graph": { "kind": "cycle", "n": 3 },
//!   "agents": [ { "family": "poisson", "exposure": 1.0, "n_samples": 4, "count": 3 } ],
//!   "theta": 2.5,
//!   "seed": 7
//! }
//! ```
//!
//! Graph kinds are `cycle`, `complete`, `path` (all take `n`), `star`
//! (`leaves`), `regular` (`n`, `degree`), `edges` (`n` and `[source, observer]`
//! pairs) and `edge_list` (a `path` relative to the scenario file, optional
//! `n`). Agents are `gaussian` (with `precision`) or `poisson` (with
//! `exposure`); `count` repeats an entry. An agent without `prior` uses the
//! non-informative prior. Belief mode additionally needs `states` and
//! accepts a per-agent `belief_prior` over them.
//!
//! Agent `i` draws its signals from its own ChaCha20 stream `i` under the
//! scenario seed, so adding agents never changes the draws of existing ones.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::action_dynamics::{
    check_global_balance, check_local_balance, classify_dynamics, consensus_prediction,
    efficiency_check, global_mvue, influence_coefficients, run_to_consensus_with, ActionProfile,
    ConsensusOptions, DynamicsClass, EfficiencyVerdict, InfluenceSystem, DEFAULT_CONSENSUS_TOL,
};
use crate::belief_dynamics::{
    asymptotic_prediction, bayesian_aggregate, central_mle_set, pooled_mle_set, run_beliefs_with,
    time_zero_belief, total_variation, Belief, BeliefProfile, BeliefRunOptions, StateSpace,
    TIE_TOL,
};
use crate::error::{Error, Result};
use crate::expfam::{
    sample_signals, time_zero_action, ConjugatePrior, Family, SampleBatch, SignalModel,
};
use crate::network::DiGraph;
use crate::spectral::centrality;

pub const DEFAULT_ACTION_HORIZON: usize = 10_000;
pub const DEFAULT_BELIEF_HORIZON: usize = 1_000;

/// Row-sum tolerance for treating `T` as row-stochastic in diagnostics.
const STOCHASTIC_REPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Action,
    Belief,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Action => "action",
            Mode::Belief => "belief",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Cycle { n: usize },
    Complete { n: usize },
    Path { n: usize },
    Star { leaves: usize },
    Regular { n: usize, degree: usize },
    /// `[source, observer]` pairs.
    Edges { n: usize, edges: Vec<[usize; 2]> },
    EdgeList {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Gaussian,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub alpha: f64,
    pub beta: f64,
}

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub family: FamilyTag,
    /// Gaussian signal precision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    /// Poisson exposure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exposure: Option<f64>,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    /// Prior over the scenario states (belief mode only); uniform if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_prior: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub drop_log_factorial: bool,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Action runs stop once the spread of actions is below this.
    #[serde(default = "default_consensus_tol")]
    pub consensus: f64,
    /// Relative tie tolerance for argmax state sets.
    #[serde(default = "default_tie_tol")]
    pub tie: f64,
}

fn default_consensus_tol() -> f64 {
    DEFAULT_CONSENSUS_TOL
}

fn default_tie_tol() -> f64 {
    TIE_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            consensus: DEFAULT_CONSENSUS_TOL,
            tie: TIE_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub graph: GraphSpec,
    pub agents: Vec<AgentSpec>,
    /// Ground-truth state the signals are drawn under.
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<f64>>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Directory that relative edge-list paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// Everything a run needs, built and validated from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Setup {
    pub graph: DiGraph,
    pub models: Vec<SignalModel>,
    pub priors: Vec<ConjugatePrior>,
    /// Belief mode only.
    pub space: Option<StateSpace>,
    /// Belief mode only.
    pub belief_priors: Option<Vec<Belief>>,
}

fn positive(field: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::scenario(field, format!("must be finite and > 0, got {v}")))
    }
}

fn in_field(field: String) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::InvalidParameter { field: inner, reason } => {
            Error::scenario(format!("{field}.{inner}"), reason)
        }
        Error::Scenario { .. } | Error::Io(_) | Error::Parse { .. } => e,
        other => Error::scenario(field, other.to_string()),
    }
}

impl Scenario {
    /// Parses a scenario from JSON text read from `origin`; relative
    /// edge-list paths resolve against the directory of `origin`.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = if path == "." {
                inner.to_string()
            } else {
                format!("at `{path}`: {inner}")
            };
            Error::Parse {
                path: origin.to_path_buf(),
                message,
            }
        })?;
        scenario.base_dir = origin.parent().map(Path::to_path_buf);
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Numerical(e.to_string()))
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.mode {
            Mode::Action => DEFAULT_ACTION_HORIZON,
            Mode::Belief => DEFAULT_BELIEF_HORIZON,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.iter().map(|a| a.count).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.build().map(|_| ())
    }

    fn build_graph(&self) -> Result<DiGraph> {
        let graph = match &self.graph {
            GraphSpec::Cycle { n } => DiGraph::cycle(*n),
            GraphSpec::Complete { n } => DiGraph::complete(*n),
            GraphSpec::Path { n } => DiGraph::path(*n),
            GraphSpec::Star { leaves } => DiGraph::star(*leaves),
            GraphSpec::Regular { n, degree } => DiGraph::regular(*n, *degree),
            GraphSpec::Edges { n, edges } => DiGraph::from_edges(*n, edges.iter().map(|[j, i]| (*j, *i))),
            GraphSpec::EdgeList { path, n } => {
                let full = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let text = fs::read_to_string(&full).map_err(|e| Error::Parse {
                    path: full.clone(),
                    message: e.to_string(),
                })?;
                DiGraph::parse_edge_list(&text, *n).map_err(|e| Error::Parse {
                    path: full,
                    message: e.to_string(),
                })
            }
        };
        graph.map_err(in_field("graph".into()))
    }

    fn build_agent(&self, k: usize, spec: &AgentSpec) -> Result<(SignalModel, ConjugatePrior)> {
        let field = |name: &str| format!("agents[{k}].{name}");
        if spec.count == 0 {
            return Err(Error::scenario(field("count"), "must be at least 1"));
        }
        if spec.n_samples == 0 {
            return Err(Error::scenario(field("n_samples"), "must be at least 1"));
        }
        let model = match spec.family {
            FamilyTag::Gaussian => {
                if spec.exposure.is_some() {
                    return Err(Error::scenario(field("exposure"), "only applies to poisson agents"));
                }
                if spec.drop_log_factorial {
                    return Err(Error::scenario(
                        field("drop_log_factorial"),
                        "only applies to poisson agents",
                    ));
                }
                let precision = spec
                    .precision
                    .ok_or_else(|| Error::scenario(field("precision"), "required for gaussian agents"))?;
                SignalModel::gaussian(positive(&field("precision"), precision)?, spec.n_samples)
            }
            FamilyTag::Poisson => {
                if spec.precision.is_some() {
                    return Err(Error::scenario(field("precision"), "only applies to gaussian agents"));
                }
                let exposure = spec
                    .exposure
                    .ok_or_else(|| Error::scenario(field("exposure"), "required for poisson agents"))?;
                let model = SignalModel::poisson(positive(&field("exposure"), exposure)?, spec.n_samples)?;
                Ok(if spec.drop_log_factorial {
                    model.without_log_factorial()
                } else {
                    model
                })
            }
        }
        .map_err(in_field(format!("agents[{k}]")))?;
        let prior = match spec.prior {
            None => ConjugatePrior::NonInformative,
            Some(p) => {
                let prior = ConjugatePrior::scalar(p.alpha, p.beta).map_err(in_field(field("prior")))?;
                prior.check_compatible(&model).map_err(in_field(field("prior")))?;
                prior
            }
        };
        Ok((model, prior))
    }

    pub fn build(&self) -> Result<Setup> {
        let graph = self.build_graph()?;
        if self.agents.is_empty() {
            return Err(Error::scenario("agents", "at least one agent is required"));
        }
        let mut models = Vec::new();
        let mut priors = Vec::new();
        for (k, spec) in self.agents.iter().enumerate() {
            let (model, prior) = self.build_agent(k, spec)?;
            for _ in 0..spec.count {
                models.push(model.clone());
                priors.push(prior.clone());
            }
        }
        if models.len() != graph.n() {
            return Err(Error::scenario(
                "agents",
                format!("{} agents listed but the graph has {}", models.len(), graph.n()),
            ));
        }
        if !self.theta.is_finite() {
            return Err(Error::scenario("theta", "must be finite"));
        }
        let poisson = models.iter().any(|m| m.family() == Family::PoissonExposure);
        if poisson && self.theta <= 0.0 {
            return Err(Error::scenario("theta", "poisson signals need a positive state"));
        }
        for (name, tol) in [("tolerances.consensus", self.tolerances.consensus), ("tolerances.tie", self.tolerances.tie)] {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::scenario(name, format!("must be finite and >= 0, got {tol}")));
            }
        }

        let (space, belief_priors) = match self.mode {
            Mode::Action => {
                if self.states.is_some() {
                    return Err(Error::scenario("states", "only applies to belief mode"));
                }
                if let Some(k) = self.agents.iter().position(|a| a.belief_prior.is_some()) {
                    return Err(Error::scenario(
                        format!("agents[{k}].belief_prior"),
                        "only applies to belief mode",
                    ));
                }
                (None, None)
            }
            Mode::Belief => {
                let states = self
                    .states
                    .clone()
                    .ok_or_else(|| Error::scenario("states", "required in belief mode"))?;
                let space = StateSpace::new(states).map_err(in_field("states".into()))?;
                if poisson {
                    if let Some(bad) = space.states().iter().find(|s| **s <= 0.0) {
                        return Err(Error::scenario("states", format!("poisson agents need positive states, got {bad}")));
                    }
                }
                if !graph.is_strongly_connected() {
                    return Err(Error::scenario("graph", "belief mode needs a strongly connected network"));
                }
                let mut belief_priors = Vec::new();
                for (k, spec) in self.agents.iter().enumerate() {
                    let prior = match &spec.belief_prior {
                        None => Belief::uniform(space.len())?,
                        Some(p) => {
                            let field = format!("agents[{k}].belief_prior");
                            if p.len() != space.len() {
                                return Err(Error::scenario(
                                    field,
                                    format!("expected {} masses, got {}", space.len(), p.len()),
                                ));
                            }
                            let b = Belief::from_probs(p).map_err(in_field(field.clone()))?;
                            if !b.is_interior() {
                                return Err(Error::scenario(field, "every state needs positive mass"));
                            }
                            b
                        }
                    };
                    belief_priors.extend(std::iter::repeat_n(prior, spec.count));
                }
                (Some(space), Some(belief_priors))
            }
        };
        Ok(Setup {
            graph,
            models,
            priors,
            space,
            belief_priors,
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            Error::Parse {
                path: path.to_path_buf(),
                message: "file not found".into(),
            }
        } else {
            Error::Io(e)
        }
    })?;
    Scenario::from_json(&text, path)
}

/// The random stream agent `agent` draws its signals from.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

/// One seeded signal batch per agent, drawn under `theta`.
pub fn draw_signals(models: &[SignalModel], theta: f64, seed: u64) -> Result<Vec<SampleBatch>> {
    models
        .iter()
        .enumerate()
        .map(|(i, m)| sample_signals(m, theta, &mut agent_rng(seed, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NotApplicable {
    NotApplicable,
}

/// A diagnostic that is either computed or marked `"not_applicable"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diag<T> {
    Value(T),
    Absent(NotApplicable),
}

impl<T> Diag<T> {
    pub fn na() -> Self {
        Diag::Absent(NotApplicable::NotApplicable)
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Diag::Value(v) => Some(v),
            Diag::Absent(_) => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, Diag::Value(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsLabel {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub name: Option<String>,
    pub mode: Mode,
    pub seed: u64,
    pub n_agents: usize,
    pub theta: f64,
    /// Raw signals of every agent.
    pub signals: Vec<Vec<f64>>,
    pub steps: Diag<usize>,
    pub stop_reason: Diag<String>,

    pub spectral_radius: Diag<f64>,
    pub dynamics: Diag<DynamicsLabel>,
    pub influence_row_sums: Diag<Vec<f64>>,
    pub local_balance: Diag<bool>,
    pub global_balance: Diag<bool>,
    pub efficiency: Diag<EfficiencyVerdict>,
    /// `None` when `T` is not row-stochastic or the dynamics is biased.
    pub predicted_consensus: Diag<Option<Vec<f64>>>,
    /// Common action at the end of the run, `None` if consensus was not reached.
    pub realized_consensus: Diag<Option<Vec<f64>>>,
    /// Per-agent posterior mean given every agent's signals.
    pub global_mvue: Diag<Vec<Vec<f64>>>,
    /// Largest gap between the final actions and the global MVUE.
    pub mvue_gap: Diag<f64>,

    pub centrality: Diag<Vec<f64>>,
    pub adjacency_radius: Diag<f64>,
    /// States maximizing the centrality-weighted log-likelihood.
    pub limit_support: Diag<Vec<f64>>,
    /// States maximizing the pooled log-likelihood.
    pub pooled_mle_set: Diag<Vec<f64>>,
    /// Uniform-prior posterior given every agent's signals.
    pub bayesian_aggregate: Diag<Vec<f64>>,
    pub limit_belief: Diag<Vec<f64>>,
    /// Total variation between the limit belief and the Bayesian aggregate.
    pub polarization_gap: Diag<f64>,
    /// Smallest final mass any agent puts on the limit support.
    pub final_mass_on_support: Diag<f64>,
}

impl Diagnostics {
    fn blank(scenario: &Scenario, n_agents: usize, signals: &[SampleBatch]) -> Self {
        Self {
            name: scenario.name.clone(),
            mode: scenario.mode,
            seed: scenario.seed,
            n_agents,
            theta: scenario.theta,
            signals: signals.iter().map(|b| b.values().to_vec()).collect(),
            steps: Diag::na(),
            stop_reason: Diag::na(),
            spectral_radius: Diag::na(),
            dynamics: Diag::na(),
            influence_row_sums: Diag::na(),
            local_balance: Diag::na(),
            global_balance: Diag::na(),
            efficiency: Diag::na(),
            predicted_consensus: Diag::na(),
            realized_consensus: Diag::na(),
            global_mvue: Diag::na(),
            mvue_gap: Diag::na(),
            centrality: Diag::na(),
            adjacency_radius: Diag::na(),
            limit_support: Diag::na(),
            pooled_mle_set: Diag::na(),
            bayesian_aggregate: Diag::na(),
            limit_belief: Diag::na(),
            polarization_gap: Diag::na(),
            final_mass_on_support: Diag::na(),
        }
    }

    /// Names of the diagnostics that must be applicable in `mode`.
    pub fn required_for(mode: Mode) -> &'static [&'static str] {
        match mode {
            Mode::Action => &[
                "spectral_radius",
                "dynamics",
                "influence_row_sums",
                "local_balance",
                "global_balance",
                "efficiency",
                "predicted_consensus",
                "global_mvue",
            ],
            Mode::Belief => &[
                "centrality",
                "adjacency_radius",
                "limit_support",
                "pooled_mle_set",
                "bayesian_aggregate",
                "limit_belief",
                "polarization_gap",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub agent: usize,
    /// Action component, or state index in belief mode.
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectory: Vec<TrajectoryRecord>,
    pub diagnostics: Diagnostics,
}

struct ActionStatics {
    sys: InfluenceSystem,
    profile0: ActionProfile,
    mvue: Vec<Vec<f64>>,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn action_statics(setup: &Setup, batches: &[SampleBatch], diag: &mut Diagnostics) -> Result<ActionStatics> {
    let Setup {
        graph, models, priors, ..
    } = setup;
    let rows = models
        .iter()
        .zip(priors)
        .zip(batches)
        .map(|((m, p), b)| time_zero_action(m, p, b))
        .collect::<Result<Vec<_>>>()?;
    let profile0 = ActionProfile::from_rows(&rows)?;
    let sys = influence_coefficients(graph, models, priors)?;
    let class = classify_dynamics(&sys)?;
    let mvue = rows_of(&global_mvue(models, priors, batches)?);

    diag.spectral_radius = Diag::Value(class.rho);
    diag.dynamics = Diag::Value(match class.class {
        DynamicsClass::Stable { .. } => DynamicsLabel::Stable,
        DynamicsClass::Marginal { .. } => DynamicsLabel::Marginal,
        DynamicsClass::Unstable => DynamicsLabel::Unstable,
    });
    diag.influence_row_sums = Diag::Value(sys.row_sums());
    diag.local_balance = Diag::Value(check_local_balance(graph, models)?);
    diag.global_balance = Diag::Value(check_global_balance(models));
    diag.efficiency = Diag::Value(efficiency_check(graph, models)?);
    diag.predicted_consensus = Diag::Value(
        if sys.is_unbiased() && sys.is_row_stochastic(STOCHASTIC_REPORT_TOL) {
            Some(consensus_prediction(&sys, &profile0)?)
        } else {
            None
        },
    );
    diag.global_mvue = Diag::Value(mvue.clone());
    Ok(ActionStatics { sys, profile0, mvue })
}

struct BeliefStatics {
    profile0: BeliefProfile,
    support: Vec<usize>,
}

fn belief_statics(
    scenario: &Scenario,
    setup: &Setup,
    batches: &[SampleBatch],
    diag: &mut Diagnostics,
) -> Result<BeliefStatics> {
    let space = setup.space.as_ref().expect("belief setup has a state space");
    let belief_priors = setup.belief_priors.as_ref().expect("belief setup has priors");
    let beliefs = setup
        .models
        .iter()
        .zip(batches)
        .zip(belief_priors)
        .map(|((m, b), p)| time_zero_belief(m, b, p, space))
        .collect::<Result<Vec<_>>>()?;
    let profile0 = BeliefProfile::new(beliefs)?;
    let cent = centrality(&setup.graph)?;
    let tie = scenario.tolerances.tie;
    let support = central_mle_set(&setup.models, batches, &cent, space, tie)?;
    let pooled = pooled_mle_set(&setup.models, batches, space, tie)?;
    let aggregate = bayesian_aggregate(&setup.models, batches, space)?.masses();
    let limit = asymptotic_prediction(&support, space)?;
    let labels = |set: &[usize]| set.iter().map(|&s| space.states()[s]).collect::<Vec<_>>();

    diag.centrality = Diag::Value(cent.as_slice().to_vec());
    diag.adjacency_radius = Diag::Value(cent.adjacency_radius());
    diag.limit_support = Diag::Value(labels(&support));
    diag.pooled_mle_set = Diag::Value(labels(&pooled));
    diag.polarization_gap = Diag::Value(total_variation(&limit.masses, &aggregate));
    diag.bayesian_aggregate = Diag::Value(aggregate);
    diag.limit_belief = Diag::Value(limit.masses);
    Ok(BeliefStatics { profile0, support })
}

fn prepare(scenario: &Scenario) -> Result<(Setup, Vec<SampleBatch>, Diagnostics)> {
    let setup = scenario.build()?;
    let batches = draw_signals(&setup.models, scenario.theta, scenario.seed)?;
    let diag = Diagnostics::blank(scenario, setup.graph.n(), &batches);
    Ok((setup, batches, diag))
}

/// Computes every verdict and prediction without iterating the dynamics.
pub fn diagnose(scenario: &Scenario) -> Result<Diagnostics> {
    let (setup, batches, mut diag) = prepare(scenario)?;
    match scenario.mode {
        Mode::Action => {
            action_statics(&setup, &batches, &mut diag)?;
        }
        Mode::Belief => {
            belief_statics(scenario, &setup, &batches, &mut diag)?;
        }
    }
    Ok(diag)
}

/// Samples signals, iterates the dynamics to the horizon or convergence,
/// and collects the trajectory and diagnostics.
pub fn run(scenario: &Scenario) -> Result<RunReport> {
    let (setup, batches, mut diag) = prepare(scenario)?;
    let mut trajectory = Vec::new();
    match scenario.mode {
        Mode::Action => {
            let statics = action_statics(&setup, &batches, &mut diag)?;
            let opts = ConsensusOptions {
                tol: scenario.tolerances.consensus,
                max_steps: scenario.horizon(),
            };
            let outcome = run_to_consensus_with(&statics.profile0, &statics.sys, opts, |p| {
                for (agent, row) in p.actions.row_iter().enumerate() {
                    for (component, &value) in row.iter().enumerate() {
                        trajectory.push(TrajectoryRecord {
                            t: p.t,
                            agent,
                            component,
                            value,
                        });
                    }
                }
            })?;
            log::debug!("action run stopped after {} steps: {:?}", outcome.profile.t, outcome.stop);
            let finals = rows_of(&outcome.profile.actions);
            diag.steps = Diag::Value(outcome.profile.t);
            diag.stop_reason = Diag::Value(format!("{:?}", outcome.stop).to_lowercase());
            diag.realized_consensus = Diag::Value(outcome.converged.then(|| outcome.profile.mean()));
            diag.mvue_gap = Diag::Value(
                finals
                    .iter()
                    .zip(&statics.mvue)
                    .flat_map(|(a, m)| a.iter().zip(m).map(|(x, y)| (x - y).abs()))
                    .fold(0.0, f64::max),
            );
        }
        Mode::Belief => {
            let statics = belief_statics(scenario, &setup, &batches, &mut diag)?;
            let priors = setup.belief_priors.as_ref().expect("belief setup has priors");
            let opts = BeliefRunOptions {
                horizon: scenario.horizon(),
                ..BeliefRunOptions::default()
            };
            let outcome = run_beliefs_with(&statics.profile0, &setup.graph, priors, opts, |p| {
                for (agent, b) in p.beliefs.iter().enumerate() {
                    for (component, value) in b.masses().into_iter().enumerate() {
                        trajectory.push(TrajectoryRecord {
                            t: p.t,
                            agent,
                            component,
                            value,
                        });
                    }
                }
            })?;
            log::debug!("belief run stopped after {} steps: {:?}", outcome.profile.t, outcome.stop);
            diag.steps = Diag::Value(outcome.profile.t);
            diag.stop_reason = Diag::Value(format!("{:?}", outcome.stop).to_lowercase());
            diag.final_mass_on_support = Diag::Value(outcome.profile.min_mass_on(&statics.support));
        }
    }
    Ok(RunReport { trajectory, diagnostics: diag })
}

/// Writes floats with 17 significant digits, enough to round-trip any `f64`.
struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Pretty-printing variant of [`ExactFloats`].
struct PrettyExactFloats<'a>(serde_json::ser::PrettyFormatter<'a>);

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> io::Result<()> {
            self.0.$name(writer $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for PrettyExactFloats<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        ExactFloats.write_f64(writer, value)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

fn to_json<T: Serialize>(value: &T, pretty: bool) -> Result<String> {
    let mut out = Vec::new();
    let result = if pretty {
        let mut ser = serde_json::Serializer::with_formatter(
            &mut out,
            PrettyExactFloats(serde_json::ser::PrettyFormatter::new()),
        );
        value.serialize(&mut ser)
    } else {
        let mut ser = serde_json::Serializer::with_formatter(&mut out, ExactFloats);
        value.serialize(&mut ser)
    };
    result.map_err(|e| Error::Io(io::Error::other(e)))?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Long-format `t,agent,component,value` CSV.
pub fn trajectory_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(io::Error::other(e));
    w.write_record(["t", "agent", "component", "value"]).map_err(csv_err)?;
    for r in &report.trajectory {
        w.write_record([
            r.t.to_string(),
            r.agent.to_string(),
            r.component.to_string(),
            format_f64(r.value),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn diagnostics_json(diag: &Diagnostics) -> Result<String> {
    to_json(diag, true)
}

/// The whole report as one JSON document.
pub fn report_json(report: &RunReport) -> Result<String> {
    to_json(report, false)
}

pub fn parse_report_json(text: &str) -> Result<RunReport> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: PathBuf::from("<report>"),
        message: e.to_string(),
    })
}

/// Writes the report into `dir` and returns the files written:
/// `trajectory.csv` plus `diagnostics.json`, or a single `report.json`.
pub fn emit(report: &RunReport, format: Format, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let files = match format {
        Format::Csv => vec![
            (dir.join("trajectory.csv"), trajectory_csv(report)?),
            (dir.join("diagnostics.json"), diagnostics_json(&report.diagnostics)?),
        ],
        Format::Json => vec![(dir.join("report.json"), report_json(report)?)],
    };
    for (path, text) in &files {
        fs::write(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
