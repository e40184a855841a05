//! Exponential-family signal models and their conjugate priors.
//!
//! Agent `i` observes `n_i` i.i.d. samples whose likelihood is scaled by two
//! positive factors, `sigma` (multiplies the sufficient statistic in the
//! exponent) and `delta` (multiplies the log-partition term). With a
//! conjugate prior `(alpha, beta)` the posterior after the batch is
//! `(alpha + sigma * sum(xi(s)), beta + n * delta)` and the Bayes estimate of
//! the mean sufficient statistic is `alpha * delta / (sigma * beta)`.
//!
//! Two families are built in:
//!
//! | family | samples | `sigma` | `delta` | mean of `xi(s)` |
//! |--------|---------|---------|---------|-----------------|
//! | [`Family::GaussianKnownPrecision`] | `N(theta, 1/sigma)` | precision | = `sigma` | `theta` |
//! | [`Family::PoissonExposure`] | `Poisson(delta * theta)` | 1 | exposure | `delta * theta` |
//!
//! For both, the sufficient statistic is the identity, `xi(s) = s`, and the
//! statistic dimension is `k = 1`. Action and parameter vectors are still
//! carried as slices so that callers never assume a scalar.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian samples with mean `theta` and known precision `sigma == delta`.
    GaussianKnownPrecision,
    /// Poisson counts with mean `delta * theta`, `sigma == 1`.
    PoissonExposure,
}

/// One agent's likelihood structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    family: Family,
    sigma: f64,
    delta: f64,
    n_samples: usize,
    dim: usize,
    drop_log_factorial: bool,
}

impl SignalModel {
    /// Validating constructor; see the family table in the module docs for
    /// the allowed `(sigma, delta)` combinations.
    pub fn new(family: Family, sigma: f64, delta: f64, n_samples: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid("delta", format!("must be finite and > 0, got {delta}")));
        }
        if n_samples == 0 {
            return Err(Error::invalid("n_samples", "must be at least 1"));
        }
        match family {
            Family::GaussianKnownPrecision if sigma != delta => {
                return Err(Error::invalid(
                    "delta",
                    format!("gaussian model requires sigma == delta, got {sigma} and {delta}"),
                ));
            }
            Family::PoissonExposure if sigma != 1.0 => {
                return Err(Error::invalid(
                    "sigma",
                    format!("poisson model requires sigma == 1, got {sigma}"),
                ));
            }
            _ => {}
        }
        Ok(Self {
            family,
            sigma,
            delta,
            n_samples,
            dim: 1,
            drop_log_factorial: false,
        })
    }

    /// Gaussian signals with the given precision.
    pub fn gaussian(precision: f64, n_samples: usize) -> Result<Self> {
        Self::new(Family::GaussianKnownPrecision, precision, precision, n_samples)
    }

    /// Poisson counts with the given exposure.
    pub fn poisson(exposure: f64, n_samples: usize) -> Result<Self> {
        Self::new(Family::PoissonExposure, 1.0, exposure, n_samples)
    }

    /// Drop the `ln(s!)` term from Poisson log-likelihoods. Likelihood
    /// ratios across states are unchanged. No effect on Gaussian models.
    pub fn without_log_factorial(mut self) -> Self {
        self.drop_log_factorial = true;
        self
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Sufficient-statistic dimension `k`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean of the sufficient statistic when the state is `theta`.
    pub fn mean_statistic(&self, theta: f64) -> f64 {
        match self.family {
            Family::GaussianKnownPrecision => theta,
            Family::PoissonExposure => self.delta * theta,
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("state {theta} is not finite")));
        }
        if self.family == Family::PoissonExposure && theta <= 0.0 {
            return Err(Error::Domain(format!(
                "poisson rate parameter must be positive, got {theta}"
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &SampleBatch) -> Result<()> {
        if batch.len() != self.n_samples {
            return Err(Error::DimensionMismatch {
                what: "sample batch",
                expected: self.n_samples,
                actual: batch.len(),
            });
        }
        Ok(())
    }
}

/// The three scalars the action dynamics read from a likelihood: `sigma`,
/// `delta` and the sample count `n`.
pub trait ScaleFactors {
    fn sigma(&self) -> f64;
    fn delta(&self) -> f64;
    fn n_samples(&self) -> usize;

    /// `n * delta`, the weight this agent's data carries in pooled posteriors.
    fn information_weight(&self) -> f64 {
        self.n_samples() as f64 * self.delta()
    }
}

/// Bare scale factors, for balance and efficiency analysis of likelihood
/// structures outside the built-in families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub sigma: f64,
    pub delta: f64,
    pub n_samples: usize,
}

impl ScaleFactors for Scaling {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn n_samples(&self) -> usize {
        self.n_samples
    }
}

impl ScaleFactors for SignalModel {
    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn n_samples(&self) -> usize {
        self.n_samples
    }
}

/// A conjugate prior `(alpha, beta)` or the improper `alpha, beta -> 0` limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugatePrior {
    Informative { alpha: Vec<f64>, beta: f64 },
    NonInformative,
}

impl ConjugatePrior {
    pub fn informative(alpha: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be finite and > 0, got {beta}")));
        }
        if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("alpha", "must be a non-empty vector of finite values"));
        }
        Ok(ConjugatePrior::Informative { alpha, beta })
    }

    /// Scalar shorthand for `k = 1`.
    pub fn scalar(alpha: f64, beta: f64) -> Result<Self> {
        Self::informative(vec![alpha], beta)
    }

    pub fn is_informative(&self) -> bool {
        matches!(self, ConjugatePrior::Informative { .. })
    }

    /// `(alpha, beta)` with the non-informative prior mapped to zeros.
    pub fn params(&self, dim: usize) -> (Vec<f64>, f64) {
        match self {
            ConjugatePrior::Informative { alpha, beta } => (alpha.clone(), *beta),
            ConjugatePrior::NonInformative => (vec![0.0; dim], 0.0),
        }
    }

    /// Checks that this prior is a valid conjugate prior for `model`.
    pub fn check_compatible(&self, model: &SignalModel) -> Result<()> {
        if let ConjugatePrior::Informative { alpha, beta } = self {
            if alpha.len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    what: "prior alpha",
                    expected: model.dim(),
                    actual: alpha.len(),
                });
            }
            if !(beta.is_finite() && *beta > 0.0) {
                return Err(Error::invalid("beta", format!("must be > 0, got {beta}")));
            }
            if model.family() == Family::PoissonExposure && alpha.iter().any(|a| *a <= 0.0) {
                return Err(Error::invalid(
                    "alpha",
                    "gamma prior shape must be positive for poisson models",
                ));
            }
        }
        Ok(())
    }
}

/// Posterior parameters in the conjugate family.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

/// The raw samples one agent observed, plus their summed sufficient statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    values: Vec<f64>,
    stat_sum: Vec<f64>,
}

impl SampleBatch {
    /// Builds a batch from raw samples, with `xi(s) = s`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("samples", "batch must contain at least one sample"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", "samples must be finite"));
        }
        let stat_sum = vec![values.iter().sum()];
        Ok(Self { values, stat_sum })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stat_sum(&self) -> &[f64] {
        &self.stat_sum
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `model.n_samples()` signals under state `theta`.
pub fn sample_signals<R: Rng + ?Sized>(
    model: &SignalModel,
    theta: f64,
    rng: &mut R,
) -> Result<SampleBatch> {
    model.check_theta(theta)?;
    let values: Vec<f64> = match model.family {
        Family::GaussianKnownPrecision => {
            let normal = Normal::new(theta, model.sigma.recip().sqrt())
                .map_err(|e| Error::Domain(e.to_string()))?;
            (0..model.n_samples).map(|_| normal.sample(rng)).collect()
        }
        Family::PoissonExposure => {
            let poisson =
                Poisson::new(model.delta * theta).map_err(|e| Error::Domain(e.to_string()))?;
            (0..model.n_samples).map(|_| poisson.sample(rng)).collect()
        }
    };
    SampleBatch::new(values)
}

/// Conjugate update `(alpha + sigma * stat_sum, beta + n * delta)`.
pub fn posterior_update(
    prior: &ConjugatePrior,
    model: &SignalModel,
    batch: &SampleBatch,
) -> Result<PosteriorParams> {
    model.check_batch(batch)?;
    prior.check_compatible(model)?;
    let (alpha, beta) = prior.params(model.dim());
    let alpha = alpha
        .iter()
        .zip(batch.stat_sum())
        .map(|(a, s)| a + model.sigma * s)
        .collect();
    Ok(PosteriorParams {
        alpha,
        beta: beta + model.information_weight(),
    })
}

/// Bayes estimate of the mean sufficient statistic, `alpha * delta / (sigma * beta)`.
pub fn bayes_estimate(params: &PosteriorParams, model: &SignalModel) -> Result<Vec<f64>> {
    if params.beta.is_nan() || params.beta <= 0.0 {
        return Err(Error::DegeneratePrior(params.beta));
    }
    let scale = model.delta / (model.sigma * params.beta);
    Ok(params.alpha.iter().map(|a| a * scale).collect())
}

/// Optimal time-zero action `(stat_sum + alpha / sigma) / (n + beta / delta)`.
pub fn time_zero_action(
    model: &SignalModel,
    prior: &ConjugatePrior,
    batch: &SampleBatch,
) -> Result<Vec<f64>> {
    model.check_batch(batch)?;
    prior.check_compatible(model)?;
    let (alpha, beta) = prior.params(model.dim());
    let denom = model.n_samples as f64 + beta / model.delta;
    Ok(batch
        .stat_sum()
        .iter()
        .zip(&alpha)
        .map(|(s, a)| (s + a / model.sigma) / denom)
        .collect())
}

/// Recovers a neighbour's summed statistic from its time-zero action.
pub fn infer_neighbor_stat(
    action: &[f64],
    model: &SignalModel,
    prior: &ConjugatePrior,
) -> Result<Vec<f64>> {
    if action.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "action",
            expected: model.dim(),
            actual: action.len(),
        });
    }
    prior.check_compatible(model)?;
    let (alpha, beta) = prior.params(model.dim());
    let scale = model.n_samples as f64 + beta / model.delta;
    Ok(action
        .iter()
        .zip(&alpha)
        .map(|(a, al)| scale * a - al / model.sigma)
        .collect())
}

/// Log-likelihood of the whole batch under state `theta`.
///
/// Gaussian densities are fully normalized. Poisson pmfs keep `ln(s!)`
/// unless the model was built with [`SignalModel::without_log_factorial`].
pub fn log_likelihood(model: &SignalModel, batch: &SampleBatch, theta: f64) -> Result<f64> {
    model.check_batch(batch)?;
    model.check_theta(theta)?;
    match model.family {
        Family::GaussianKnownPrecision => {
            let precision = model.sigma;
            let norm = 0.5 * (precision.ln() - LN_2PI);
            Ok(batch
                .values()
                .iter()
                .map(|s| norm - 0.5 * precision * (s - theta).powi(2))
                .sum())
        }
        Family::PoissonExposure => {
            let rate = model.delta * theta;
            let log_rate = rate.ln();
            let mut total = 0.0;
            for &s in batch.values() {
                if s < 0.0 || s.fract() != 0.0 {
                    return Err(Error::Domain(format!(
                        "poisson samples must be non-negative integers, got {s}"
                    )));
                }
                total += s * log_rate - rate;
                if !model.drop_log_factorial {
                    total -= libm::lgamma(s + 1.0);
                }
            }
            Ok(total)
        }
    }
}
