use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::uniform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphKind {
    Complete,
    ErdosRenyi { p_edge: f64 },
}

/// Fixed contact network without self-loops. The complete graph is kept
/// implicit so neighbour sums reduce to totals minus self.
#[derive(Debug, Clone, PartialEq)]
pub enum ContactGraph {
    Complete { n: usize },
    Adjacency(Vec<Vec<u32>>),
}

impl ContactGraph {
    pub fn build<R: Rng + ?Sized>(kind: GraphKind, n: usize, rng: &mut R) -> Result<Self> {
        match kind {
            GraphKind::Complete => Ok(ContactGraph::Complete { n }),
            GraphKind::ErdosRenyi { p_edge } => {
                if !(0.0..=1.0).contains(&p_edge) {
                    return Err(invalid("p_edge", "edge probability outside [0, 1]"));
                }
                let mut adj = vec![Vec::new(); n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        if uniform(rng) < p_edge {
                            adj[i].push(j as u32);
                            adj[j].push(i as u32);
                        }
                    }
                }
                Ok(ContactGraph::Adjacency(adj))
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ContactGraph::Complete { n } => *n,
            ContactGraph::Adjacency(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn degree(&self, i: usize) -> usize {
        match self {
            ContactGraph::Complete { n } => n - 1,
            ContactGraph::Adjacency(a) => a[i].len(),
        }
    }

    pub fn mean_degree(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.degree(i)).sum::<usize>() as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_split;

    #[test]
    fn er_graph_is_simple_and_symmetric() {
        let g = ContactGraph::build(GraphKind::ErdosRenyi { p_edge: 0.05 }, 300, &mut seed_split(1, 2)).unwrap();
        let ContactGraph::Adjacency(adj) = &g else { panic!() };
        for (i, nb) in adj.iter().enumerate() {
            assert!(!nb.contains(&(i as u32)));
            for &j in nb {
                assert!(adj[j as usize].contains(&(i as u32)));
            }
        }
        // Mean degree ≈ p (n − 1) = 14.95.
        assert!((g.mean_degree() - 14.95).abs() < 1.0);
    }

    #[test]
    fn complete_graph_degree() {
        let g = ContactGraph::build(GraphKind::Complete, 10, &mut seed_split(0, 0)).unwrap();
        assert_eq!(g.degree(3), 9);
        assert!(ContactGraph::build(GraphKind::ErdosRenyi { p_edge: 1.5 }, 3, &mut seed_split(0, 0)).is_err());
    }
}
