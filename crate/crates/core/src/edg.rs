//! Entropy-driven grouping: agents whose neighbourhoods hold the most diverse
//! opinions become core agents for the next step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OpinionState, SocialGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Ascending agent ids of the core set.
    pub core_ids: Vec<usize>,
    /// Ascending agent ids of everyone else.
    pub ordinary_ids: Vec<usize>,
    pub entropy: Vec<f64>,
}

impl Partition {
    pub fn is_core(&self, agent: usize) -> bool {
        self.core_ids.binary_search(&agent).is_ok()
    }
}

/// Equal-width bin of `value` over `[-1, 1]`; the last bin is closed on the right.
pub fn opinion_bin(value: f64, bins: usize) -> usize {
    let scaled = ((value.clamp(-1.0, 1.0) + 1.0) / 2.0 * bins as f64).floor();
    (scaled as usize).min(bins - 1)
}

/// Shannon entropy in bits of the binned multiset `opinions`.
pub fn binned_entropy(opinions: impl IntoIterator<Item = f64>, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    let mut total = 0usize;
    for o in opinions {
        counts[opinion_bin(o, bins)] += 1;
        total += 1;
    }
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // A single occupied bin yields -0.0.
    h.max(0.0)
}

/// Entropy of each agent's neighbourhood over the last `min(window, t)`
/// committed columns, pooled into one multiset per agent.
pub fn neighborhood_entropy(
    state: &OpinionState,
    graph: &SocialGraph,
    bins: usize,
    window: usize,
) -> Result<Vec<f64>> {
    let t = state.step();
    if t == 0 {
        return Err(Error::Precondition(
            "entropy needs at least one committed step".into(),
        ));
    }
    if bins < 2 {
        return Err(Error::Precondition(
            "entropy needs at least two bins".into(),
        ));
    }
    if window == 0 {
        return Err(Error::Precondition("entropy window must be >= 1".into()));
    }
    if graph.n_agents() != state.n_agents() {
        return Err(Error::Dimension {
            expected: graph.n_agents(),
            actual: state.n_agents(),
        });
    }
    let history = state.history();
    let first = t - window.min(t);
    Ok((0..graph.n_agents())
        .into_par_iter()
        .map(|i| {
            let nbrs = graph.neighbors(i);
            binned_entropy(
                nbrs.iter()
                    .flat_map(|&j| (first..t).map(move |s| history[[j, s]])),
                bins,
            )
        })
        .collect())
}

/// Indices of the `k` largest entropies; ties go to the lower agent id.
pub fn partition_agents(entropy: &[f64], k: usize) -> Result<Partition> {
    let n = entropy.len();
    if k > n {
        return Err(Error::Precondition(format!(
            "K = {k} exceeds population {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entropy[b].total_cmp(&entropy[a]).then(a.cmp(&b)));
    let mut core_ids = order[..k].to_vec();
    core_ids.sort_unstable();
    let mut is_core = vec![false; n];
    for &c in &core_ids {
        is_core[c] = true;
    }
    let ordinary_ids = (0..n).filter(|&i| !is_core[i]).collect();
    Ok(Partition {
        core_ids,
        ordinary_ids,
        entropy: entropy.to_vec(),
    })
}

/// Degree-based grouping used for ablations: top-`k` follower counts.
pub fn partition_by_degree(graph: &SocialGraph, k: usize) -> Result<Partition> {
    let deg: Vec<f64> = graph.in_degrees().into_iter().map(|d| d as f64).collect();
    let mut p = partition_agents(&deg, k)?;
    p.entropy = vec![0.0; graph.n_agents()];
    Ok(p)
}
