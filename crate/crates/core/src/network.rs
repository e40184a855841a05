//! Directed social networks with mandatory self-loops.
//!
//! An edge `(j, i)` means agent `i` observes agent `j`. Every agent observes
//! itself, so the neighbourhood `N_i` always contains `i`. Self-loops are
//! inserted at construction.
//!
//! Two matrices are exposed: [`DiGraph::adjacency`] is the off-diagonal link
//! matrix `A` (`A[i][j] = 1` iff `i != j` and `i` observes `j`) and
//! [`DiGraph::neighborhood_matrix`] is `I + A`, the indicator of `j ∈ N_i`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    /// `observes[i]` is the sorted neighbourhood `N_i`, including `i`.
    observes: Vec<Vec<usize>>,
    /// `observed_by[j]` is the sorted out-neighbourhood of `j`, including `j`.
    observed_by: Vec<Vec<usize>>,
}

impl fmt::Debug for DiGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiGraph")
            .field("n", &self.n)
            .field("neighborhoods", &self.observes)
            .finish()
    }
}

impl DiGraph {
    /// Builds a graph from `(source, observer)` pairs. Duplicates are merged
    /// and self-loops are added for every agent.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::invalid("n", "a network needs at least one agent"));
        }
        let mut sets: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
        for (j, i) in edges {
            for agent in [j, i] {
                if agent >= n {
                    return Err(Error::AgentOutOfRange { agent, n });
                }
            }
            sets[i].insert(j);
        }
        let observes: Vec<Vec<usize>> = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut observed_by = vec![Vec::new(); n];
        for (i, nbrs) in observes.iter().enumerate() {
            for &j in nbrs {
                observed_by[j].push(i);
            }
        }
        Ok(Self {
            n,
            observes,
            observed_by,
        })
    }

    /// Each undirected pair `{a, b}` becomes the two directed edges.
    pub fn undirected<I>(n: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let edges: Vec<_> = pairs.into_iter().flat_map(|(a, b)| [(a, b), (b, a)]).collect();
        Self::from_edges(n, edges)
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`, so agent `i` observes `i - 1`.
    pub fn cycle(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::from_edges(n, (0..n).flat_map(|i| (0..n).map(move |j| (j, i))))
    }

    /// Hub `0` linked both ways to `leaves` leaf agents.
    pub fn star(leaves: usize) -> Result<Self> {
        Self::undirected(leaves + 1, (1..=leaves).map(|leaf| (0, leaf)))
    }

    /// Undirected path `0 - 1 - ... - n-1`.
    pub fn path(n: usize) -> Result<Self> {
        Self::undirected(n, (1..n).map(|i| (i - 1, i)))
    }

    /// Balanced regular digraph: agent `i` observes `i-1, ..., i-(d-1)` (mod n),
    /// so every in- and out-neighbourhood has `d` members counting the self-loop.
    pub fn regular(n: usize, d: usize) -> Result<Self> {
        if d == 0 || d > n {
            return Err(Error::invalid("d", format!("degree must lie in 1..={n}, got {d}")));
        }
        Self::from_edges(
            n,
            (0..n).flat_map(|i| (1..d).map(move |off| ((i + n - off) % n, i))),
        )
    }

    /// Parses an edge list: one `j i` pair per line (agent `i` observes `j`),
    /// 0-indexed. Blank lines and `#` comments are skipped. The agent count is
    /// `n` when given, otherwise one more than the largest id seen.
    pub fn parse_edge_list(text: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ids: Vec<&str> = line.split_whitespace().collect();
            if ids.len() != 2 {
                return Err(Error::invalid(
                    format!("edge list line {}", lineno + 1),
                    format!("expected `j i`, got {raw:?}"),
                ));
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|e| {
                    Error::invalid(format!("edge list line {}", lineno + 1), e.to_string())
                })
            };
            edges.push((parse(ids[0])?, parse(ids[1])?));
        }
        let inferred = edges.iter().map(|&(j, i)| j.max(i) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(inferred);
        Self::from_edges(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check(&self, agent: usize) -> Result<()> {
        if agent >= self.n {
            return Err(Error::AgentOutOfRange { agent, n: self.n });
        }
        Ok(())
    }

    /// `N_i`: the agents `i` observes, itself included, in increasing order.
    pub fn in_neighborhood(&self, i: usize) -> Result<&[usize]> {
        self.check(i)?;
        Ok(&self.observes[i])
    }

    /// `N_j^out`: the agents observing `j`, itself included, in increasing order.
    pub fn out_neighborhood(&self, j: usize) -> Result<&[usize]> {
        self.check(j)?;
        Ok(&self.observed_by[j])
    }

    /// Unchecked neighbourhood access for internal loops.
    pub(crate) fn nbrs(&self, i: usize) -> &[usize] {
        &self.observes[i]
    }

    /// True iff `i` observes `j` (always true for `i == j`).
    pub fn observes(&self, i: usize, j: usize) -> bool {
        i < self.n && self.observes[i].binary_search(&j).is_ok()
    }

    /// All edges `(j, i)` including self-loops, ordered by observer then source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.observes
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().map(move |&j| (j, i)))
            .collect()
    }

    /// Off-diagonal link matrix `A`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            if i != j && self.observes(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Neighbourhood indicator `I + A`.
    pub fn neighborhood_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if self.observes(i, j) { 1.0 } else { 0.0 })
    }

    pub fn is_strongly_connected(&self) -> bool {
        let reach = |adj: &Vec<Vec<usize>>| {
            let mut seen = vec![false; self.n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(&self.observes) && reach(&self.observed_by)
    }

    /// `Some(d)` when every in- and out-neighbourhood has exactly `d` members.
    pub fn is_balanced_regular(&self) -> Option<usize> {
        let d = self.observes[0].len();
        let regular = self
            .observes
            .iter()
            .chain(&self.observed_by)
            .all(|nbrs| nbrs.len() == d);
        regular.then_some(d)
    }

    /// True if every link is reciprocated.
    pub fn is_undirected(&self) -> bool {
        self.observes == self.observed_by
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent_has_self_loop_only() {
        let g = DiGraph::from_edges(1, []).unwrap();
        assert_eq!(g.in_neighborhood(0).unwrap(), &[0]);
        assert_eq!(g.out_neighborhood(0).unwrap(), &[0]);
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn cycle_neighborhoods() {
        let g = DiGraph::cycle(3).unwrap();
        assert_eq!(g.in_neighborhood(1).unwrap(), &[0, 1]);
        assert_eq!(g.out_neighborhood(0).unwrap(), &[0, 1]);
        assert!(g.is_strongly_connected());
        assert_eq!(g.is_balanced_regular(), Some(2));
    }

    #[test]
    fn complete_neighborhoods() {
        let g = DiGraph::complete(3).unwrap();
        for i in 0..3 {
            assert_eq!(g.in_neighborhood(i).unwrap(), &[0, 1, 2]);
        }
        assert_eq!(DiGraph::complete(4).unwrap().is_balanced_regular(), Some(4));
    }

    #[test]
    fn undirected_edge_is_symmetric() {
        let g = DiGraph::undirected(2, [(0, 1)]).unwrap();
        assert_eq!(g.out_neighborhood(0).unwrap(), g.in_neighborhood(0).unwrap());
        assert!(g.is_undirected());
    }

    #[test]
    fn one_way_link_is_not_strongly_connected() {
        let g = DiGraph::from_edges(2, [(0, 1)]).unwrap();
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn star_connectivity_and_degree() {
        let g = DiGraph::star(4).unwrap();
        assert!(g.is_strongly_connected());
        assert_eq!(g.is_balanced_regular(), None);
        assert_eq!(g.in_neighborhood(0).unwrap().len(), 5);
        assert_eq!(g.in_neighborhood(3).unwrap(), &[0, 3]);
    }

    #[test]
    fn regular_generator_is_balanced() {
        for (n, d) in [(5, 1), (5, 2), (6, 3), (4, 4), (7, 5)] {
            let g = DiGraph::regular(n, d).unwrap();
            assert_eq!(g.is_balanced_regular(), Some(d), "n={n} d={d}");
        }
        assert!(DiGraph::regular(3, 4).is_err());
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let g = DiGraph::cycle(3).unwrap();
        assert!(matches!(g.in_neighborhood(3), Err(Error::AgentOutOfRange { agent: 3, n: 3 })));
        assert!(matches!(g.out_neighborhood(9), Err(Error::AgentOutOfRange { .. })));
        assert!(DiGraph::from_edges(2, [(0, 2)]).is_err());
    }

    #[test]
    fn adjacency_excludes_and_neighborhood_matrix_includes_diagonal() {
        let g = DiGraph::cycle(3).unwrap();
        let a = g.adjacency();
        let ia = g.neighborhood_matrix();
        assert_eq!(a.trace(), 0.0);
        assert_eq!(ia.trace(), 3.0);
        assert_eq!(a[(1, 0)], 1.0);
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(&ia - DMatrix::identity(3, 3), a);
    }

    #[test]
    fn parses_edge_list_text() {
        let text = "# triangle\n0 1\n1 2\n\n2 0  # closing edge\n";
        let g = DiGraph::parse_edge_list(text, None).unwrap();
        assert_eq!(g, DiGraph::cycle(3).unwrap());
        assert!(DiGraph::parse_edge_list("0 1 2\n", None).is_err());
        assert!(DiGraph::parse_edge_list("0 x\n", None).is_err());
        let padded = DiGraph::parse_edge_list("0 1\n", Some(4)).unwrap();
        assert_eq!(padded.n(), 4);
    }
}
