//! PageRank fixed point for the unnormalized rank equation
//! p_i = (1 - d) + d * sum_{j != i} (L_ij / C_j) p_j.
//!
//! Ranks use the unnormalized convention without the (1 - d)/N scaling, so
//! they do not sum to 1; a page with no inbound links has rank 1 - d.
//! Dangling pages (no outbound links) simply cast no votes.

use crate::parallel::map_indexed;
use crate::{Error, Result};

/// Directed link graph; `L[i][j] = 1` iff page j links to page i.
#[derive(Debug, Clone)]
pub struct LinkGraph {
    n_pages: usize,
    /// For each source page, the sorted deduplicated list of targets.
    out_links: Vec<Vec<usize>>,
}

impl LinkGraph {
    pub fn new(n_pages: usize) -> Result<Self> {
        if n_pages == 0 {
            return Err(Error::Config("graph needs at least one page".into()));
        }
        Ok(LinkGraph {
            n_pages,
            out_links: vec![Vec::new(); n_pages],
        })
    }

    /// Add a link `from -> to`. Self-links are rejected; duplicates collapse.
    pub fn add_link(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= self.n_pages || to >= self.n_pages {
            return Err(Error::Config(format!(
                "link {from} -> {to} outside 0..{}",
                self.n_pages
            )));
        }
        if from == to {
            return Err(Error::Domain(format!(
                "self-link on page {from} is not allowed"
            )));
        }
        match self.out_links[from].binary_search(&to) {
            Ok(_) => {}
            Err(pos) => self.out_links[from].insert(pos, to),
        }
        Ok(())
    }

    pub fn from_edges(n_pages: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = LinkGraph::new(n_pages)?;
        for &(from, to) in edges {
            g.add_link(from, to)?;
        }
        Ok(g)
    }

    pub fn n_pages(&self) -> usize {
        self.n_pages
    }

    /// Outgoing degree C_j.
    pub fn out_degree(&self, page: usize) -> usize {
        self.out_links[page].len()
    }

    /// Inbound contributions to each page as (source, 1/C_source) pairs.
    fn in_links(&self) -> Vec<Vec<(usize, f64)>> {
        let mut incoming = vec![Vec::new(); self.n_pages];
        for (src, targets) in self.out_links.iter().enumerate() {
            if targets.is_empty() {
                continue; // dangling page votes for no one
            }
            let share = 1.0 / targets.len() as f64;
            for &dst in targets {
                incoming[dst].push((src, share));
            }
        }
        incoming
    }
}

/// Iterate the rank equation from the all-ones vector until the residual
/// max_i |p_i - rhs_i| drops below `tol`.
pub fn solve(graph: &LinkGraph, d: f64, tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&d) || d == 0.0 {
        return Err(Error::Config(format!(
            "damping must satisfy 0 < d < 1, got {d}"
        )));
    }
    if tol <= 0.0 {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let incoming = graph.in_links();
    let mut ranks = vec![1.0; graph.n_pages];
    for _ in 0..max_iters {
        let next = map_indexed(graph.n_pages, |i| {
            let votes: f64 = incoming[i].iter().map(|&(j, share)| share * ranks[j]).sum();
            (1.0 - d) + d * votes
        });
        let residual = next
            .iter()
            .zip(&ranks)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ranks = next;
        if residual < tol {
            return Ok(ranks);
        }
    }
    // one more evaluation for the reported residual
    let residual = {
        let next = map_indexed(graph.n_pages, |i| {
            let votes: f64 = incoming[i].iter().map(|&(j, share)| share * ranks[j]).sum();
            (1.0 - d) + d * votes
        });
        next.iter()
            .zip(&ranks)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    };
    Err(Error::NoConvergence {
        iters: max_iters,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense direct solve of (I - d M) p = (1 - d) 1 with M the vote matrix.
    fn linear_solve_oracle(graph: &LinkGraph, d: f64) -> Vec<f64> {
        let n = graph.n_pages();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let degree = graph.out_degree(j);
            if degree == 0 {
                continue;
            }
            for &i in &graph.out_links[j] {
                m[(i, j)] = 1.0 / degree as f64;
            }
        }
        let a = DMatrix::<f64>::identity(n, n) - m * d;
        let b = DVector::from_element(n, 1.0 - d);
        let p = a.lu().solve(&b).unwrap();
        p.iter().copied().collect()
    }

    #[test]
    fn two_page_cycle_is_symmetric_fixed_point() {
        let g = LinkGraph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let p = solve(&g, 0.85, 1e-12, 10_000).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-10 && (p[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn page_without_inbound_links() {
        let g = LinkGraph::from_edges(3, &[(0, 1), (1, 2), (2, 1)]).unwrap();
        let p = solve(&g, 0.85, 1e-12, 10_000).unwrap();
        assert!((p[0] - 0.15).abs() < 1e-10);
    }

    #[test]
    fn three_node_chain_known_ranks() {
        // 0 -> 1 -> 2
        let g = LinkGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let p = solve(&g, 0.85, 1e-13, 10_000).unwrap();
        assert!((p[0] - 0.15).abs() < 1e-10);
        assert!((p[1] - 0.2775).abs() < 1e-10);
        assert!((p[2] - 0.385875).abs() < 1e-10);
        let oracle = linear_solve_oracle(&g, 0.85);
        for i in 0..3 {
            assert!((p[i] - oracle[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn iteration_agrees_with_linear_solve_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let n = rng.gen_range(2..60);
            let mut g = LinkGraph::new(n).unwrap();
            for from in 0..n {
                for to in 0..n {
                    if from != to && rng.gen::<f64>() < 0.15 {
                        g.add_link(from, to).unwrap();
                    }
                }
            }
            let p = solve(&g, 0.85, 1e-14, 100_000).unwrap();
            let oracle = linear_solve_oracle(&g, 0.85);
            for i in 0..n {
                assert!(
                    (p[i] - oracle[i]).abs() < 1e-10,
                    "page {i}: {} vs {}",
                    p[i],
                    oracle[i]
                );
            }
        }
    }

    #[test]
    fn added_inlink_never_decreases_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let n = rng.gen_range(3..20);
            let mut edges = Vec::new();
            for from in 0..n {
                for to in 0..n {
                    if from != to && rng.gen::<f64>() < 0.2 {
                        edges.push((from, to));
                    }
                }
            }
            let g = LinkGraph::from_edges(n, &edges).unwrap();
            // pick a fresh edge into some page from a previously dangling or
            // arbitrary source not already linking there
            let target = rng.gen_range(0..n);
            let source = (target + 1 + rng.gen_range(0..n - 1)) % n;
            if source == target || g.out_links[source].contains(&target) {
                continue;
            }
            // adding a vote from a page with no other outbound links makes
            // the comparison clean: no existing votes get diluted
            if g.out_degree(source) != 0 {
                continue;
            }
            let before = linear_solve_oracle(&g, 0.85);
            let mut g2 = g.clone();
            g2.add_link(source, target).unwrap();
            let after = linear_solve_oracle(&g2, 0.85);
            assert!(after[target] >= before[target] - 1e-12);
            // and the iterative solver still matches the oracle
            let p = solve(&g2, 0.85, 1e-14, 100_000).unwrap();
            for i in 0..n {
                assert!((p[i] - after[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dangling_pages_cast_no_votes() {
        // 0 -> 1, page 1 dangles; rank of 0 stays at 1 - d
        let g = LinkGraph::from_edges(2, &[(0, 1)]).unwrap();
        let p = solve(&g, 0.85, 1e-12, 1000).unwrap();
        assert!((p[0] - 0.15).abs() < 1e-10);
        assert!((p[1] - (0.15 + 0.85 * 0.15)).abs() < 1e-10);
    }

    #[test]
    fn validation_errors() {
        let mut g = LinkGraph::new(3).unwrap();
        assert!(g.add_link(1, 1).is_err());
        assert!(g.add_link(0, 5).is_err());
        let g = LinkGraph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(solve(&g, 1.0, 1e-9, 100).is_err());
        assert!(solve(&g, 0.0, 1e-9, 100).is_err());
    }
}
