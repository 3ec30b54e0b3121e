//! Opinion-history features.
//!
//! Neighbour aggregates are reduced in a canonical order (neighbour history
//! rows sorted lexicographically), so the result depends only on the
//! neighbour multiset and not on agent numbering.

use std::cmp::Ordering;

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::SocialGraph;

/// Width of the individual block `[mean, std, max, min, last]`.
pub const INDIVIDUAL_DIM: usize = 5;
/// Width of the neighbourhood block `[mean, std, sim, ech]`.
pub const NEIGHBOR_DIM: usize = 4;
pub const DYNAMIC_DIM: usize = INDIVIDUAL_DIM + NEIGHBOR_DIM;

/// Zero-padded neighbour histories.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTensor {
    /// `N × M × t`; padded slots are zero.
    pub values: Array3<f64>,
    /// `N × M`, 1.0 for real neighbours.
    pub mask: Array2<f64>,
}

impl NeighborTensor {
    /// Copy with `extra` additional padded slots per agent.
    pub fn padded(&self, extra: usize) -> NeighborTensor {
        let (n, m, t) = self.values.dim();
        let mut values = Array3::zeros((n, m + extra, t));
        let mut mask = Array2::zeros((n, m + extra));
        values
            .slice_mut(ndarray::s![.., ..m, ..])
            .assign(&self.values);
        mask.slice_mut(ndarray::s![.., ..m]).assign(&self.mask);
        NeighborTensor { values, mask }
    }
}

fn require_steps(s: &ArrayView2<'_, f64>) -> Result<()> {
    if s.ncols() == 0 {
        return Err(Error::Precondition("opinion history has no steps".into()));
    }
    Ok(())
}

/// Gathers each agent's interaction neighbours in ascending id order.
pub fn build_neighbor_tensor(
    s: ArrayView2<'_, f64>,
    graph: &SocialGraph,
) -> Result<NeighborTensor> {
    require_steps(&s)?;
    let (n, t) = s.dim();
    if n != graph.n_agents() {
        return Err(Error::Dimension {
            expected: graph.n_agents(),
            actual: n,
        });
    }
    let m = graph.max_degree();
    let mut values = Array3::zeros((n, m, t));
    let mut mask = Array2::zeros((n, m));
    for i in 0..n {
        for (slot, &j) in graph.neighbors(i).iter().enumerate() {
            values.slice_mut(ndarray::s![i, slot, ..]).assign(&s.row(j));
            mask[[i, slot]] = 1.0;
        }
    }
    Ok(NeighborTensor { values, mask })
}

/// Row-wise `[mean, population std, max, min, last]`.
pub fn individual_features(s: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    require_steps(&s)?;
    let mut out = Array2::zeros((s.nrows(), INDIVIDUAL_DIM));
    for (row, mut o) in s.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let t = row.len() as f64;
        let mean = row.sum() / t;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        o[0] = mean;
        o[1] = var.sqrt();
        o[2] = max;
        o[3] = min;
        o[4] = row[row.len() - 1];
    }
    Ok(out)
}

fn lex_cmp(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

/// Pearson correlation; 0 when either series is constant.
fn pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let constant = |v: &ArrayView1<'_, f64>| v.iter().all(|x| *x == v[0]);
    if a.is_empty() || constant(&a) || constant(&b) {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

/// `[μ̂, σ̂, sim, ech]` for one agent given its neighbours' histories.
fn neighbor_row(
    own: ArrayView1<'_, f64>,
    mut nbrs: Vec<ArrayView1<'_, f64>>,
) -> [f64; NEIGHBOR_DIM] {
    if nbrs.is_empty() {
        return [0.0; NEIGHBOR_DIM];
    }
    nbrs.sort_by(lex_cmp);
    let count = (nbrs.len() * own.len()) as f64;
    let mut total = 0.0;
    for r in &nbrs {
        total += r.sum();
    }
    let mean = total / count;
    let mut sq = 0.0;
    for r in &nbrs {
        sq += r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let std = (sq / count).sqrt();
    let mut sim = 0.0;
    for r in &nbrs {
        sim += pearson(own, *r);
    }
    sim /= nbrs.len() as f64;
    [mean, std, sim, sim / (1.0 + std)]
}

/// Neighbourhood aggregates from the padded tensor; slots with mask 0 are ignored.
pub fn neighbor_features(s: ArrayView2<'_, f64>, nbr: &NeighborTensor) -> Result<Array2<f64>> {
    require_steps(&s)?;
    let (n, m, t) = nbr.values.dim();
    if n != s.nrows() || t != s.ncols() || nbr.mask.dim() != (n, m) {
        return Err(Error::Shape {
            name: "neighbor tensor".into(),
            expected: vec![s.nrows(), m, s.ncols()],
            actual: vec![n, m, t],
        });
    }
    let mut out = Array2::zeros((n, NEIGHBOR_DIM));
    for i in 0..n {
        let rows: Vec<_> = (0..m)
            .filter(|&slot| nbr.mask[[i, slot]] != 0.0)
            .map(|slot| nbr.values.slice(ndarray::s![i, slot, ..]))
            .collect();
        let row = neighbor_row(s.row(i), rows);
        out.row_mut(i).assign(&ArrayView1::from(&row));
    }
    Ok(out)
}

/// Same as [`neighbor_features`] but reads neighbours straight from the graph.
pub fn neighbor_features_graph(s: ArrayView2<'_, f64>, graph: &SocialGraph) -> Result<Array2<f64>> {
    require_steps(&s)?;
    if s.nrows() != graph.n_agents() {
        return Err(Error::Dimension {
            expected: graph.n_agents(),
            actual: s.nrows(),
        });
    }
    let mut out = Array2::zeros((s.nrows(), NEIGHBOR_DIM));
    for i in 0..s.nrows() {
        let rows: Vec<_> = graph.neighbors(i).iter().map(|&j| s.row(j)).collect();
        let row = neighbor_row(s.row(i), rows);
        out.row_mut(i).assign(&ArrayView1::from(&row));
    }
    Ok(out)
}

/// `φ_d = [φ_I ‖ φ_C]`, `N × 9`.
pub fn dynamic_features(s: ArrayView2<'_, f64>, graph: &SocialGraph) -> Result<Array2<f64>> {
    let ind = individual_features(s)?;
    let nb = neighbor_features_graph(s, graph)?;
    Ok(ndarray::concatenate(Axis(1), &[ind.view(), nb.view()]).expect("row counts agree"))
}
