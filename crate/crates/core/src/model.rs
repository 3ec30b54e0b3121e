//! Shared value types: opinions, agents, the social graph and the evolving
//! opinion state.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A stance in `[-1, 1]`. Construction always clamps; NaN maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Opinion(f64);

impl Opinion {
    pub const NEUTRAL: Opinion = Opinion(0.0);

    pub fn new(value: f64) -> Self {
        Opinion(clamp_opinion(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for Opinion {
    fn from(value: f64) -> Self {
        Opinion::new(value)
    }
}

impl From<Opinion> for f64 {
    fn from(o: Opinion) -> Self {
        o.0
    }
}

pub fn clamp_opinion(value: f64) -> f64 {
    if value.is_nan() {
        0.0
    } else {
        value.clamp(-1.0, 1.0)
    }
}

/// Author id used for injected news.
pub const NEWS_AUTHOR: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: usize,
    pub description: String,
    pub follower_count: u64,
    pub following_count: u64,
    pub profile_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub author_id: i64,
    pub content: String,
    /// Unit length, or all zeros for empty content.
    pub content_embedding: Vec<f64>,
    pub keyword_embedding: Vec<f64>,
    pub opinion: Opinion,
    pub step: usize,
}

/// True when `v` has unit Euclidean norm (to 1e-9) or is exactly zero.
pub fn is_unit_or_zero(v: &[f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    norm == 0.0 || (norm - 1.0).abs() <= 1e-9
}

/// Directed follow network plus the symmetric weighted interaction graph.
///
/// Interaction neighbours are stored in CSR form, sorted by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct SocialGraph {
    n_agents: usize,
    follow_edges: Vec<(usize, usize)>,
    interaction_edges: Vec<(usize, usize, f64)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    max_degree: usize,
}

impl SocialGraph {
    /// `follow_edges` are `(follower, followee)` pairs; `interaction_edges`
    /// are undirected and must not repeat a pair or contain self-loops.
    pub fn new(
        n_agents: usize,
        follow_edges: Vec<(usize, usize)>,
        interaction_edges: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::Graph("graph must have at least one agent".into()));
        }
        for &(a, b) in &follow_edges {
            if a >= n_agents || b >= n_agents {
                return Err(Error::Graph(format!("follow edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-follow on agent {a}")));
            }
        }
        let mut canon = Vec::with_capacity(interaction_edges.len());
        for &(a, b, w) in &interaction_edges {
            if a >= n_agents || b >= n_agents {
                return Err(Error::Graph(format!(
                    "interaction edge ({a}, {b}) out of range"
                )));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on agent {a}")));
            }
            if !w.is_finite() {
                return Err(Error::Graph(format!("non-finite weight on ({a}, {b})")));
            }
            canon.push((a.min(b), a.max(b), w));
        }
        canon.sort_by_key(|x| (x.0, x.1));
        if let Some(pair) = canon
            .windows(2)
            .find(|p| (p[0].0, p[0].1) == (p[1].0, p[1].1))
        {
            return Err(Error::Graph(format!(
                "interaction pair ({}, {}) listed twice",
                pair[0].0, pair[0].1
            )));
        }

        let mut degree = vec![0usize; n_agents];
        for &(a, b, _) in &canon {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n_agents + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0usize; offsets[n_agents]];
        let mut weights = vec![0.0; offsets[n_agents]];
        for &(a, b, w) in &canon {
            neighbors[fill[a]] = b;
            weights[fill[a]] = w;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            weights[fill[b]] = w;
            fill[b] += 1;
        }
        for i in 0..n_agents {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            let mut row: Vec<(usize, f64)> = neighbors[lo..hi]
                .iter()
                .copied()
                .zip(weights[lo..hi].iter().copied())
                .collect();
            row.sort_by_key(|&(j, _)| j);
            for (k, (j, w)) in row.into_iter().enumerate() {
                neighbors[lo + k] = j;
                weights[lo + k] = w;
            }
        }
        let max_degree = degree.iter().copied().max().unwrap_or(0);

        Ok(SocialGraph {
            n_agents,
            follow_edges,
            interaction_edges: canon,
            offsets,
            neighbors,
            weights,
            max_degree,
        })
    }

    /// Builds the interaction graph by symmetrising follow edges with weight 1.
    pub fn from_follow_edges(
        n_agents: usize,
        mut follow_edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        follow_edges.sort_unstable();
        follow_edges.dedup();
        let mut pairs: Vec<(usize, usize)> = follow_edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let interaction = pairs.into_iter().map(|(a, b)| (a, b, 1.0)).collect();
        SocialGraph::new(n_agents, follow_edges, interaction)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn follow_edges(&self) -> &[(usize, usize)] {
        &self.follow_edges
    }

    /// Canonical `(i, j, w)` triples with `i < j`, sorted.
    pub fn interaction_edges(&self) -> &[(usize, usize, f64)] {
        &self.interaction_edges
    }

    pub fn neighbors(&self, agent: usize) -> &[usize] {
        &self.neighbors[self.offsets[agent]..self.offsets[agent + 1]]
    }

    pub fn neighbor_weights(&self, agent: usize) -> &[f64] {
        &self.weights[self.offsets[agent]..self.offsets[agent + 1]]
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.offsets[agent + 1] - self.offsets[agent]
    }

    /// Maximum interaction-neighbour count `M`.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Follower counts derived from the follow edges.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_agents];
        for &(_, followee) in &self.follow_edges {
            deg[followee] += 1;
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_agents];
        for &(follower, _) in &self.follow_edges {
            deg[follower] += 1;
        }
        deg
    }

    /// Relabels agent `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let follows = self
            .follow_edges
            .iter()
            .map(|&(a, b)| (perm[a], perm[b]))
            .collect();
        let inter = self
            .interaction_edges
            .iter()
            .map(|&(a, b, w)| (perm[a], perm[b], w))
            .collect();
        SocialGraph::new(self.n_agents, follows, inter)
    }
}

/// Opinion history (`N x t`, one column per committed step) plus inboxes.
#[derive(Debug, Clone)]
pub struct OpinionState {
    history: Array2<f64>,
    pub inbox: Vec<Vec<Arc<Message>>>,
}

impl OpinionState {
    /// Starts a state with a single committed column.
    pub fn new(initial: &[f64]) -> Self {
        let n = initial.len();
        let mut history = Array2::zeros((n, 1));
        for (i, &v) in initial.iter().enumerate() {
            history[[i, 0]] = clamp_opinion(v);
        }
        OpinionState {
            history,
            inbox: vec![Vec::new(); n],
        }
    }

    /// Wraps an existing history; entries are clamped.
    pub fn from_history(mut history: Array2<f64>) -> Self {
        history.mapv_inplace(clamp_opinion);
        let n = history.nrows();
        OpinionState {
            history,
            inbox: vec![Vec::new(); n],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.history.nrows()
    }

    /// Number of committed columns.
    pub fn step(&self) -> usize {
        self.history.ncols()
    }

    pub fn history(&self) -> &Array2<f64> {
        &self.history
    }

    pub fn into_history(self) -> Array2<f64> {
        self.history
    }

    pub fn column(&self, t: usize) -> ArrayView1<'_, f64> {
        self.history.column(t)
    }

    pub fn last_column(&self) -> ArrayView1<'_, f64> {
        self.history.column(self.step() - 1)
    }

    pub fn push_column(&mut self, column: &[f64]) -> Result<()> {
        if column.len() != self.n_agents() {
            return Err(Error::Dimension {
                expected: self.n_agents(),
                actual: column.len(),
            });
        }
        let clamped: Vec<f64> = column.iter().map(|&v| clamp_opinion(v)).collect();
        self.history
            .push_column(ArrayView1::from(&clamped))
            .map_err(|e| Error::Precondition(e.to_string()))
    }

    pub fn column_mean(&self, t: usize) -> f64 {
        self.history.column(t).mean().unwrap_or(0.0)
    }

    pub fn mean_trend(&self) -> Vec<f64> {
        self.history
            .mean_axis(Axis(0))
            .map(|m| m.to_vec())
            .unwrap_or_default()
    }
}
