#![allow(dead_code)]

pub mod gmp;
pub mod mock;

use std::collections::HashMap;

use hybridsim_core::gom::{Lambdas, MemoryGraph, MemoryNode};
use hybridsim_core::model::{Opinion, OpinionState, SocialGraph};
use hybridsim_core::rng::SimRng;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

/// Memory graph of `n` random memories inserted with `knn = k`. With
/// `signed = false` every opinion and embedding entry is positive, so all
/// edge weights are non-negative.
pub fn random_memory_graph(
    rng: &mut SimRng,
    n: usize,
    k: usize,
    dim: usize,
    signed: bool,
) -> MemoryGraph {
    let mut g = MemoryGraph::new(k);
    for id in 0..n {
        let (lo, olo) = if signed { (-1.0, -1.0) } else { (0.01, 0.05) };
        let emb: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..1.0)).collect();
        let kw: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..1.0)).collect();
        g.insert(MemoryNode {
            node_id: id as u64,
            content: format!("m{id}"),
            content_embedding: emb,
            keyword_embedding: kw,
            opinion: Opinion::new(rng.random_range(olo..1.0)),
            step_created: 0,
        })
        .unwrap();
    }
    g
}

pub fn random_vec(rng: &mut SimRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Dense `L'` straight from the definition, using the graph's weights.
pub fn dense_corrected_laplacian(g: &MemoryGraph, nu: f64, eps: f64) -> DMatrix<f64> {
    let n = g.len();
    let w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { g.weight(i, j) });
    let d: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let a: Vec<f64> = (0..n).map(|i| w.row(i).abs().sum()).collect();
    let s: Vec<f64> = d.iter().map(|&x| 1.0 / x.max(eps).sqrt()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = -w[(i, j)] * s[i] * s[j];
        if i == j {
            v += 1.0 + nu * (a[i] - d[i]) * s[i] * s[i];
        }
        v
    })
}

/// Erdős–Rényi style undirected interaction graph, every agent with at
/// least one neighbour.
pub fn random_social_graph(rng: &mut SimRng, n: usize, p: f64) -> SocialGraph {
    let mut follows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < p {
                follows.push((i, j));
            }
        }
        let j = (i + 1) % n;
        follows.push((i, j));
    }
    follows.sort_unstable();
    follows.dedup();
    SocialGraph::from_follow_edges(n, follows).unwrap()
}

pub fn half_lambdas() -> Lambdas {
    Lambdas {
        l1: 0.5,
        l2: 0.5,
        l3: 0.5,
    }
}

/// `f* = V diag(1/lambda) V^T (l1 f0)` from the eigendecomposition.
pub fn eigen_solution(a: nalgebra::DMatrix<f64>, f0: &[f64], l1: f64) -> Vec<f64> {
    let eig = SymmetricEigen::new(a);
    let b = DVector::from_iterator(f0.len(), f0.iter().map(|v| l1 * v));
    let coeff = eig.eigenvectors.transpose() * b;
    let scaled = DVector::from_iterator(
        coeff.len(),
        coeff.iter().zip(eig.eigenvalues.iter()).map(|(c, l)| c / l),
    );
    (eig.eigenvectors * scaled).iter().copied().collect()
}

fn dist(p: (f64, f64), q: (f64, f64)) -> f64 {
    (p.0 - q.0).hypot(p.1 - q.1)
}

/// Textbook memoised recursion for the coupling distance.
pub fn recursive_frechet(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    fn c(
        i: usize,
        j: usize,
        a: &[(f64, f64)],
        b: &[(f64, f64)],
        memo: &mut HashMap<(usize, usize), f64>,
    ) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let d = dist(a[i], b[j]);
        let v = match (i, j) {
            (0, 0) => d,
            (0, _) => c(0, j - 1, a, b, memo).max(d),
            (_, 0) => c(i - 1, 0, a, b, memo).max(d),
            _ => c(i - 1, j, a, b, memo)
                .min(c(i - 1, j - 1, a, b, memo))
                .min(c(i, j - 1, a, b, memo))
                .max(d),
        };
        memo.insert((i, j), v);
        v
    }
    c(a.len() - 1, b.len() - 1, a, b, &mut HashMap::new())
}

/// Hub 0 linked to every leaf; leaves hold `leaf_values`, the hub 0.0.
pub fn star(leaf_values: &[f64]) -> (SocialGraph, OpinionState) {
    let n = leaf_values.len() + 1;
    let g = SocialGraph::from_follow_edges(n, (1..n).map(|i| (i, 0)).collect()).unwrap();
    let mut col = vec![0.0];
    col.extend_from_slice(leaf_values);
    (g, OpinionState::new(&col))
}
