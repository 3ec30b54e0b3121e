//! Graph-optimised memory for core agents.
//!
//! Memories are nodes of a sparse signed graph ([`MemoryGraph`]); retrieval
//! scores every node by balancing query relevance, agreement with strongly
//! connected neighbours, and a magnitude penalty, then keeps the top `R`.

mod dump;
mod memory;
mod solver;
mod sparse;

use serde::{Deserialize, Serialize};

pub use dump::{parse_memory_line, parse_reals, read_memory_dump, read_query};
pub use memory::{cosine, MemoryGraph, MemoryNode};
pub use solver::{
    anchor_scale, corrected_laplacian, corrected_objective, first_order_residual,
    initial_relevance, propagate_retrieval, solve_closed_form, solve_first_order_sparse,
    system_matrix, CorrectedLaplacian, Lambdas, Propagation, DENSE_SOLVE_LIMIT, FIRST_ORDER_TOL,
};
pub use sparse::CsrMatrix;

use crate::config::RetrievalConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Propagation,
    ClosedFormFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    /// Final score per node, in insertion order.
    pub scores: Vec<f64>,
    /// Node ids of the top-R scores, best first; ties go to the lower id.
    pub selected: Vec<u64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub solver: SolverKind,
}

impl RetrievalResult {
    fn empty() -> Self {
        RetrievalResult {
            scores: Vec::new(),
            selected: Vec::new(),
            iterations_used: 0,
            converged: true,
            solver: SolverKind::Propagation,
        }
    }
}

/// Relevance, corrected Laplacian, propagation (direct-solve fallback on
/// divergence), then top-R selection.
pub fn retrieve(
    graph: &MemoryGraph,
    query: &[f64],
    config: &RetrievalConfig,
) -> Result<RetrievalResult> {
    if graph.is_empty() {
        return Ok(RetrievalResult::empty());
    }
    let f0 = initial_relevance(graph, query, config.tau)?;
    let lap = corrected_laplacian(graph, config.nu, config.degree_epsilon)?;
    let prop = propagate_retrieval(&lap.matrix, &f0, config)?;

    let (scores, solver) = if prop.diverged {
        let lambdas = Lambdas::from(config);
        let limit = config.dense_fallback_limit.min(DENSE_SOLVE_LIMIT);
        let f = if graph.len() <= limit {
            solve_closed_form(&lap.matrix, &f0, lambdas)?
        } else {
            solve_first_order_sparse(&lap.matrix, &f0, lambdas)?
        };
        (f, SolverKind::ClosedFormFallback)
    } else {
        (prop.scores, SolverKind::Propagation)
    };

    let selected = top_r(graph, &scores, config.top_r);
    Ok(RetrievalResult {
        scores,
        selected,
        iterations_used: prop.iterations,
        converged: prop.converged,
        solver,
    })
}

fn top_r(graph: &MemoryGraph, scores: &[f64], r: usize) -> Vec<u64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(graph.node(a).node_id.cmp(&graph.node(b).node_id))
    });
    order.truncate(r.min(scores.len()));
    order.into_iter().map(|i| graph.node(i).node_id).collect()
}
