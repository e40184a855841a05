//! Perron–Frobenius eigenpairs by power iteration.
//!
//! Only the dominant eigenpair of a primitive non-negative matrix is ever
//! needed, so there is no general eigensolver here. Iteration stops when two
//! successive ℓ₂-normalized iterates differ by less than [`TOLERANCE`] in the
//! max norm, or fails after [`MAX_ITERATIONS`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::DiGraph;

pub const TOLERANCE: f64 = 1e-13;
pub const MAX_ITERATIONS: usize = 100_000;

/// Row sums of a stochastic matrix must be within this of one.
pub const STOCHASTIC_TOL: f64 = 1e-10;

/// Dominant eigenvalue with ℓ₂-normalized, strictly positive left and right
/// eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub rho: f64,
    pub left: DVector<f64>,
    pub right: DVector<f64>,
}

impl PerronPair {
    /// Left vector rescaled so that `left' · right = 1`.
    pub fn biorthonormal_left(&self) -> DVector<f64> {
        &self.left / self.left.dot(&self.right)
    }

    /// The rank-one limit `r lᵀ / (lᵀ r)` of `(M / rho)^t`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.right * self.biorthonormal_left().transpose()
    }
}

/// Normalized left Perron vector of `I + A`; entries are positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Centrality {
    weights: DVector<f64>,
    /// Spectral radius of the off-diagonal adjacency `A`.
    adjacency_radius: f64,
    /// Right Perron vector of `I + A`, scaled so that `weights · right = 1`.
    right: DVector<f64>,
}

impl Centrality {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice()
    }

    /// `rho(A)`; the dominant eigenvalue of `I + A` is one more.
    pub fn adjacency_radius(&self) -> f64 {
        self.adjacency_radius
    }

    /// Right eigenvector paired with the weights, so `(I+A)^t / (1+rho)^t -> right * weightsᵀ`.
    pub fn right(&self) -> &DVector<f64> {
        &self.right
    }
}

fn check_nonnegative_square(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::Domain(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(bad) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!(
            "perron iteration needs finite non-negative entries, found {bad}"
        )));
    }
    Ok(())
}

/// Power iteration for the dominant eigenvector of `m`.
fn dominant_vector(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let mut y = m * &x;
        let norm = y.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical(format!(
                "power iterate collapsed (norm {norm}); matrix is not primitive"
            )));
        }
        y /= norm;
        change = (&y - &x).amax();
        x = y;
        if change < TOLERANCE {
            return Ok(x);
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        last_change: change,
    })
}

/// Dominant eigenvalue and eigenvectors of a primitive non-negative matrix.
pub fn perron_pair(m: &DMatrix<f64>) -> Result<PerronPair> {
    check_nonnegative_square(m)?;
    let right = dominant_vector(m)?;
    let left = dominant_vector(&m.transpose())?;
    let rho = right.dot(&(m * &right)) / right.norm_squared();
    Ok(PerronPair { rho, left, right })
}

/// Eigenvector centrality of a strongly connected network.
pub fn centrality(g: &DiGraph) -> Result<Centrality> {
    if !g.is_strongly_connected() {
        return Err(Error::Precondition(
            "centrality requires a strongly connected network".into(),
        ));
    }
    let pair = perron_pair(&g.neighborhood_matrix())?;
    let weights = &pair.left / pair.left.sum();
    let right = &pair.right / weights.dot(&pair.right);
    Ok(Centrality {
        weights,
        adjacency_radius: pair.rho - 1.0,
        right,
    })
}

/// Checks non-negativity and unit row sums.
pub fn check_row_stochastic(t: &DMatrix<f64>) -> Result<()> {
    check_nonnegative_square(t)?;
    for (i, row) in t.row_iter().enumerate() {
        let sum = row.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::Domain(format!("row {i} sums to {sum}, not 1")));
        }
    }
    Ok(())
}

/// Stationary law `s` of a primitive row-stochastic matrix: `sᵀ T = sᵀ`, `Σ s = 1`.
pub fn stationary_distribution(t: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_row_stochastic(t)?;
    let left = dominant_vector(&t.transpose())?;
    Ok(&left / left.sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pair() {
        let pair = perron_pair(&DMatrix::identity(3, 3)).unwrap();
        assert!((pair.rho - 1.0).abs() < 1e-14);
        let expected = 1.0 / 3f64.sqrt();
        for v in pair.left.iter().chain(pair.right.iter()) {
            assert!((v - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn directed_cycle_pair() {
        let g = DiGraph::cycle(3).unwrap();
        let pair = perron_pair(&g.neighborhood_matrix()).unwrap();
        assert!((pair.rho - 2.0).abs() < 1e-12);
        let c = centrality(&g).unwrap();
        for a in c.as_slice() {
            assert!((a - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((c.adjacency_radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_entries() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 0.5, 1.0]);
        assert!(matches!(perron_pair(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn nilpotent_matrix_fails_numerically() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(perron_pair(&m).unwrap_err().is_numerical());
    }

    #[test]
    fn pair_of_mutual_observers_is_even() {
        let g = DiGraph::complete(2).unwrap();
        let c = centrality(&g).unwrap();
        assert!((c.as_slice()[0] - 0.5).abs() < 1e-14);
        assert!((c.as_slice()[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn centrality_requires_strong_connectivity() {
        let g = DiGraph::from_edges(2, [(0, 1)]).unwrap();
        assert!(matches!(centrality(&g), Err(Error::Precondition(_))));
    }

    #[test]
    fn complete_graph_averaging_is_uniform() {
        let g = DiGraph::complete(3).unwrap();
        let t = g.neighborhood_matrix() / 3.0;
        let s = stationary_distribution(&t).unwrap();
        for v in s.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.6]);
        assert!(matches!(stationary_distribution(&t), Err(Error::Domain(_))));
    }
}
