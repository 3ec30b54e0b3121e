use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::Opinion;

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryNode {
    pub node_id: u64,
    pub content: String,
    pub content_embedding: Vec<f64>,
    pub keyword_embedding: Vec<f64>,
    pub opinion: Opinion,
    pub step_created: usize,
}

/// Append-only signed memory graph.
///
/// Each inserted node links to its `knn` most similar earlier nodes (by
/// content cosine) among those that still accept incoming links, so every
/// row holds at most `knn` outgoing plus `knn` incoming entries. Edges are
/// never rewired once created.
#[derive(Debug, Clone)]
pub struct MemoryGraph {
    nodes: Vec<MemoryNode>,
    norms: Vec<f64>,
    index: HashMap<u64, usize>,
    /// Symmetric adjacency rows, sorted by column.
    adjacency: Vec<Vec<(usize, f64)>>,
    incoming: Vec<usize>,
    knn: usize,
    dim: Option<usize>,
}

impl MemoryGraph {
    pub fn new(knn: usize) -> Self {
        MemoryGraph {
            nodes: Vec::new(),
            norms: Vec::new(),
            index: HashMap::new(),
            adjacency: Vec::new(),
            incoming: Vec::new(),
            knn,
            dim: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn knn(&self) -> usize {
        self.knn
    }

    pub fn nodes(&self) -> &[MemoryNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &MemoryNode {
        &self.nodes[index]
    }

    pub fn index_of(&self, node_id: u64) -> Option<usize> {
        self.index.get(&node_id).copied()
    }

    pub fn embedding_dim(&self) -> Option<usize> {
        self.dim
    }

    /// Neighbours of node `index` as `(index, weight)`, sorted by index.
    pub fn neighbors(&self, index: usize) -> &[(usize, f64)] {
        &self.adjacency[index]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|p| self.adjacency[i][p].1)
            .unwrap_or(0.0)
    }

    /// Row sums `d_ii = sum_j w_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect()
    }

    pub fn insert(&mut self, node: MemoryNode) -> Result<()> {
        if self.index.contains_key(&node.node_id) {
            return Err(Error::DuplicateId(node.node_id));
        }
        let dim = node.content_embedding.len();
        match self.dim {
            Some(d) if d != dim || node.keyword_embedding.len() != d => {
                return Err(Error::Dimension {
                    expected: d,
                    actual: if d != dim {
                        dim
                    } else {
                        node.keyword_embedding.len()
                    },
                });
            }
            None if node.keyword_embedding.len() != dim => {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: node.keyword_embedding.len(),
                });
            }
            _ => {}
        }
        self.dim = Some(dim);

        let new = self.nodes.len();
        let norm = l2_norm(&node.content_embedding);
        let mut candidates: Vec<(usize, f64)> = (0..new)
            .filter(|&j| self.incoming[j] < self.knn)
            .map(|j| {
                let denom = norm * self.norms[j];
                let cos = if denom > 0.0 {
                    dot(&node.content_embedding, &self.nodes[j].content_embedding) / denom
                } else {
                    0.0
                };
                (j, cos)
            })
            .collect();
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        candidates.truncate(self.knn);

        let o_new = node.opinion.value();
        let mut row = Vec::with_capacity(candidates.len());
        for (j, cos) in candidates {
            // Weight: product of the two stances and their content cosine.
            let w = o_new * self.nodes[j].opinion.value() * cos;
            self.incoming[j] += 1;
            if w == 0.0 {
                continue;
            }
            row.push((j, w));
            self.adjacency[j].push((new, w));
        }
        row.sort_by_key(|&(j, _)| j);

        self.index.insert(node.node_id, new);
        self.nodes.push(node);
        self.norms.push(norm);
        self.adjacency.push(row);
        self.incoming.push(0);
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = l2_norm(a) * l2_norm(b);
    if denom > 0.0 {
        dot(a, b) / denom
    } else {
        0.0
    }
}
