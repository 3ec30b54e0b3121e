//! Convexified retrieval objective and its solvers.
//!
//! With relevance scores `f0` and corrected Laplacian `L'`, retrieval
//! minimises
//!
//! ```text
//! Q(f) = l1 |f - f0|^2 + l2 f' L' f + l3 f' f
//! ```
//!
//! whose minimiser solves `[(l1 + l3) I + l2 L'] f = l1 f0`. The propagation
//! solver iterates `f <- -mu L' f + (1 - mu) f0'` instead of factorising.

use nalgebra::{DMatrix, DVector};

use super::memory::{cosine, MemoryGraph};
use super::sparse::CsrMatrix;
use crate::config::RetrievalConfig;
use crate::error::{Error, Result};

/// Largest system accepted by [`solve_closed_form`].
pub const DENSE_SOLVE_LIMIT: usize = 2000;

/// Required accuracy of fallback solves, on the first-order residual.
pub const FIRST_ORDER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambdas {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl From<&RetrievalConfig> for Lambdas {
    fn from(c: &RetrievalConfig) -> Self {
        Lambdas {
            l1: c.lambda1,
            l2: c.lambda2,
            l3: c.lambda3,
        }
    }
}

/// `(f0)_i = (cos(q, m_i) + H_tau(cos(q, k_i))) / 2`.
pub fn initial_relevance(graph: &MemoryGraph, query: &[f64], tau: f64) -> Result<Vec<f64>> {
    if let Some(d) = graph.embedding_dim() {
        if d != query.len() {
            return Err(Error::Dimension {
                expected: d,
                actual: query.len(),
            });
        }
    }
    Ok(graph
        .nodes()
        .iter()
        .map(|n| {
            let content = cosine(query, &n.content_embedding);
            let keyword = if cosine(query, &n.keyword_embedding) >= tau {
                1.0
            } else {
                0.0
            };
            0.5 * (content + keyword)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct CorrectedLaplacian {
    pub matrix: CsrMatrix,
    /// Signed row sums `d_ii`.
    pub degree: Vec<f64>,
    /// Regularised degrees `max(d_ii, eps)` used in the normalisation.
    pub regularized_degree: Vec<f64>,
    /// Diagonal correction `nu (sum_j |w_ij| - d_ii)`.
    pub delta: Vec<f64>,
}

/// `L' = I - D^-1/2 W D^-1/2 + D^-1/2 Delta D^-1/2` with `D` regularised
/// to `max(d_ii, eps)`.
pub fn corrected_laplacian(
    graph: &MemoryGraph,
    nu: f64,
    degree_epsilon: f64,
) -> Result<CorrectedLaplacian> {
    if graph.is_empty() {
        return Err(Error::Precondition(
            "corrected Laplacian of an empty graph".into(),
        ));
    }
    let n = graph.len();
    let degree = graph.degrees();
    let abs_degree: Vec<f64> = (0..n)
        .map(|i| graph.neighbors(i).iter().map(|&(_, w)| w.abs()).sum())
        .collect();
    let delta: Vec<f64> = (0..n).map(|i| nu * (abs_degree[i] - degree[i])).collect();
    let regularized_degree: Vec<f64> = degree.iter().map(|&d| d.max(degree_epsilon)).collect();
    let inv_sqrt: Vec<f64> = regularized_degree.iter().map(|&d| 1.0 / d.sqrt()).collect();

    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(usize, f64)> = graph
                .neighbors(i)
                .iter()
                .map(|&(j, w)| (j, -w * (inv_sqrt[i] * inv_sqrt[j])))
                .collect();
            row.push((i, 1.0 + delta[i] * (inv_sqrt[i] * inv_sqrt[i])));
            row
        })
        .collect();
    Ok(CorrectedLaplacian {
        matrix: CsrMatrix::from_rows(rows),
        degree,
        regularized_degree,
        delta,
    })
}

/// Dense system matrix `(l1 + l3) I + l2 L'`.
pub fn system_matrix(laplacian: &CsrMatrix, lambdas: Lambdas) -> DMatrix<f64> {
    let mut a = laplacian.to_dense() * lambdas.l2;
    for i in 0..a.nrows() {
        a[(i, i)] += lambdas.l1 + lambdas.l3;
    }
    a
}

/// `|[(l1 + l3) I + l2 L'] f - l1 f0|_inf`.
pub fn first_order_residual(laplacian: &CsrMatrix, f0: &[f64], f: &[f64], lambdas: Lambdas) -> f64 {
    let lf = laplacian.mul_vec(f);
    lf.iter()
        .zip(f)
        .zip(f0)
        .map(|((&lf, &f), &f0)| {
            ((lambdas.l1 + lambdas.l3) * f + lambdas.l2 * lf - lambdas.l1 * f0).abs()
        })
        .fold(0.0, f64::max)
}

/// Objective value `Q(f)` for the corrected Laplacian.
pub fn corrected_objective(laplacian: &CsrMatrix, f0: &[f64], f: &[f64], lambdas: Lambdas) -> f64 {
    let lf = laplacian.mul_vec(f);
    let anchor: f64 = f.iter().zip(f0).map(|(a, b)| (a - b) * (a - b)).sum();
    let smooth: f64 = f.iter().zip(&lf).map(|(a, b)| a * b).sum();
    let mass: f64 = f.iter().map(|a| a * a).sum();
    lambdas.l1 * anchor + lambdas.l2 * smooth + lambdas.l3 * mass
}

/// Direct solve of the first-order condition by LU with one round of
/// iterative refinement. Limited to [`DENSE_SOLVE_LIMIT`] nodes.
pub fn solve_closed_form(laplacian: &CsrMatrix, f0: &[f64], lambdas: Lambdas) -> Result<Vec<f64>> {
    let n = laplacian.n();
    if f0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: f0.len(),
        });
    }
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::Solver(format!(
            "dense solve limited to {DENSE_SOLVE_LIMIT} nodes, got {n}"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = system_matrix(laplacian, lambdas);
    let rhs = DVector::from_iterator(n, f0.iter().map(|&v| lambdas.l1 * v));
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular retrieval system".into()))?;
    for _ in 0..2 {
        let r = &rhs - &a * &x;
        if r.amax() <= FIRST_ORDER_TOL * 1e-2 {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    Ok(x.iter().copied().collect())
}

/// Jacobi-preconditioned conjugate gradients on the same first-order
/// system, for graphs too large to factorise.
pub fn solve_first_order_sparse(
    laplacian: &CsrMatrix,
    f0: &[f64],
    lambdas: Lambdas,
) -> Result<Vec<f64>> {
    let n = laplacian.n();
    let shift = lambdas.l1 + lambdas.l3;
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian.mul_vec_into(x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = shift * xi + lambdas.l2 * *o;
        }
    };
    let diag: Vec<f64> = laplacian
        .diagonal()
        .iter()
        .map(|&d| shift + lambdas.l2 * d)
        .collect();
    let b: Vec<f64> = f0.iter().map(|&v| lambdas.l1 * v).collect();
    let mut x: Vec<f64> = b.iter().zip(&diag).map(|(b, d)| b / d).collect();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let max_iter = 10 * n + 100;
    for _ in 0..max_iter {
        if r.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= FIRST_ORDER_TOL * 1e-2 {
            break;
        }
        apply(&p, &mut ax);
        let pap: f64 = p.iter().zip(&ax).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = first_order_residual(laplacian, f0, &x, lambdas);
    if residual > FIRST_ORDER_TOL {
        return Err(Error::Solver(format!(
            "conjugate gradients stalled at residual {residual:e}"
        )));
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Residual grew for three consecutive iterations (or became non-finite).
    pub diverged: bool,
}

/// Coefficient `l1 / (2 l1 + l3 - 1)` mapping `f0` to the propagation anchor.
pub fn anchor_scale(lambdas: Lambdas) -> Result<f64> {
    let denom = 2.0 * lambdas.l1 + lambdas.l3 - 1.0;
    if denom == 0.0 {
        return Err(Error::Config(
            "2*lambda1 + lambda3 - 1 = 0 leaves the anchor undefined".into(),
        ));
    }
    Ok(lambdas.l1 / denom)
}

pub fn propagate_retrieval(
    laplacian: &CsrMatrix,
    f0: &[f64],
    config: &RetrievalConfig,
) -> Result<Propagation> {
    let lambdas = Lambdas::from(config);
    if (lambdas.l1 + lambdas.l2 - 1.0).abs() > 1e-12 {
        return Err(Error::Config(
            "propagation requires lambda1 + lambda2 = 1".into(),
        ));
    }
    let n = laplacian.n();
    if f0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: f0.len(),
        });
    }
    let mu = config.mu();
    let scale = anchor_scale(lambdas)?;
    let anchor: Vec<f64> = f0.iter().map(|&v| scale * v).collect();

    let mut f = anchor.clone();
    let mut lf = vec![0.0; n];
    let mut prev_residual = f64::INFINITY;
    let mut growth = 0;
    for k in 0..config.max_iters {
        laplacian.mul_vec_into(&f, &mut lf);
        let mut residual = 0.0f64;
        for i in 0..n {
            let next = -mu * lf[i] + (1.0 - mu) * anchor[i];
            residual = residual.max((next - f[i]).abs());
            f[i] = next;
        }
        if !residual.is_finite() {
            return Ok(Propagation {
                scores: f,
                iterations: k + 1,
                converged: false,
                diverged: true,
            });
        }
        if residual <= config.residual_tol {
            return Ok(Propagation {
                scores: f,
                iterations: k + 1,
                converged: true,
                diverged: false,
            });
        }
        growth = if residual > prev_residual {
            growth + 1
        } else {
            0
        };
        prev_residual = residual;
        if growth >= 3 {
            return Ok(Propagation {
                scores: f,
                iterations: k + 1,
                converged: false,
                diverged: true,
            });
        }
    }
    Ok(Propagation {
        scores: f,
        iterations: config.max_iters,
        converged: false,
        diverged: false,
    })
}
