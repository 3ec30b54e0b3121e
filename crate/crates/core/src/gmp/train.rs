//! Loss, teacher-forced training and training-data preparation.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::features::dynamic_features;
use super::network::{backward, forward, project_static, static_backward};
use super::params::GmpParams;
use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::model::{clamp_opinion, SocialGraph};

fn check_same_shape(pred: &ArrayView2<'_, f64>, truth: &ArrayView2<'_, f64>) -> Result<()> {
    if pred.dim() != truth.dim() || pred.is_empty() {
        return Err(Error::Shape {
            name: "trajectories".into(),
            expected: vec![truth.nrows(), truth.ncols()],
            actual: vec![pred.nrows(), pred.ncols()],
        });
    }
    Ok(())
}

/// `α·L_local + β·L_global` over `n × T` trajectories, where
/// `L_local = (1/T) Σ_t (1/n) ‖ô_t − o_t‖²` and
/// `L_global = (1/T) Σ_t (mean ô_t − mean o_t)²`.
pub fn gmp_loss(
    pred: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    check_same_shape(&pred, &truth)?;
    let (n, t) = pred.dim();
    let (mut local, mut global) = (0.0, 0.0);
    for c in 0..t {
        let (p, o) = (pred.column(c), truth.column(c));
        let mut sq = 0.0;
        let mut diff = 0.0;
        for (a, b) in p.iter().zip(o.iter()) {
            sq += (a - b) * (a - b);
            diff += a - b;
        }
        local += sq / n as f64;
        let g = diff / n as f64;
        global += g * g;
    }
    Ok((alpha * local + beta * global) / t as f64)
}

/// Derivative of [`gmp_loss`] with respect to `pred`.
pub fn gmp_loss_grad(
    pred: ArrayView2<'_, f64>,
    truth: ArrayView2<'_, f64>,
    alpha: f64,
    beta: f64,
) -> Result<Array2<f64>> {
    check_same_shape(&pred, &truth)?;
    let (n, t) = pred.dim();
    let (nf, tf) = (n as f64, t as f64);
    let mut grad = Array2::zeros((n, t));
    for c in 0..t {
        let mean_diff = (pred.column(c).sum() - truth.column(c).sum()) / nf;
        for i in 0..n {
            grad[[i, c]] = alpha * 2.0 * (pred[[i, c]] - truth[[i, c]]) / (nf * tf)
                + beta * 2.0 * mean_diff / (nf * tf);
        }
    }
    Ok(grad)
}

/// Fixed inputs of a teacher-forced training run.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    /// Ground-truth trajectories, `n × T` with `T ≥ 2`.
    pub truth: Array2<f64>,
    /// Profile embeddings, `n × d_b`.
    pub profiles: Array2<f64>,
    pub graph: SocialGraph,
    /// Dynamic features of `truth[:, ..t]` for `t = 1..T`.
    dynamic: Vec<Array2<f64>>,
}

impl TrainingSet {
    pub fn new(truth: Array2<f64>, profiles: Array2<f64>, graph: SocialGraph) -> Result<Self> {
        if truth.ncols() < 2 {
            return Err(Error::Precondition(
                "training needs at least two steps".into(),
            ));
        }
        if truth.nrows() != profiles.nrows() || truth.nrows() != graph.n_agents() {
            return Err(Error::Dimension {
                expected: truth.nrows(),
                actual: profiles.nrows().min(graph.n_agents()),
            });
        }
        let dynamic = (1..truth.ncols())
            .map(|t| dynamic_features(truth.slice(s![.., ..t]), &graph))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet {
            truth,
            profiles,
            graph,
            dynamic,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.truth.nrows()
    }
}

/// Teacher-forced loss: every step `t ≥ 1` is predicted from the true
/// history `truth[:, ..t]`. Returns the loss and its parameter gradient.
pub fn loss_and_gradient(
    params: &GmpParams,
    data: &TrainingSet,
    alpha: f64,
    beta: f64,
) -> Result<(f64, GmpParams)> {
    let statics = project_static(data.profiles.view(), params)?;
    let steps = data.dynamic.len();
    let n = data.n_agents();
    let mut caches = Vec::with_capacity(steps);
    let mut pred = Array2::zeros((n, steps));
    for (c, phi_d) in data.dynamic.iter().enumerate() {
        let cache = forward(phi_d.view(), statics.output.view(), &data.graph, params)?;
        pred.column_mut(c).assign(cache.output());
        caches.push(cache);
    }
    let target = data.truth.slice(s![.., 1..]);
    let loss = gmp_loss(pred.view(), target, alpha, beta)?;
    let d_pred = gmp_loss_grad(pred.view(), target, alpha, beta)?;
    let mut grad = params.zeros_like();
    let mut d_static = Array2::zeros(statics.output.dim());
    for (c, cache) in caches.iter().enumerate() {
        backward(params, cache, d_pred.column(c), &mut grad, &mut d_static);
    }
    static_backward(params, &statics, d_static.view(), &mut grad);
    Ok((loss, grad))
}

/// Teacher-forced loss only.
pub fn teacher_forced_loss(
    params: &GmpParams,
    data: &TrainingSet,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let statics = project_static(data.profiles.view(), params)?;
    let mut pred = Array2::zeros((data.n_agents(), data.dynamic.len()));
    for (c, phi_d) in data.dynamic.iter().enumerate() {
        let cache = forward(phi_d.view(), statics.output.view(), &data.graph, params)?;
        pred.column_mut(c).assign(cache.output());
    }
    gmp_loss(pred.view(), data.truth.slice(s![.., 1..]), alpha, beta)
}

/// Plain gradient descent for `config.epochs` full-batch steps. Returns the
/// loss measured before each update.
pub fn train(
    params: &mut GmpParams,
    data: &TrainingSet,
    config: &TrainingConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (loss, grad) = loss_and_gradient(params, data, config.alpha, config.beta)?;
        if !loss.is_finite() {
            return Err(Error::Solver("training loss is not finite".into()));
        }
        losses.push(loss);
        params.apply_gradient(&grad, config.learning_rate);
    }
    Ok(losses)
}

/// Per-agent observations `(step, value)` turned into a dense `n × t_max`
/// matrix. Missing entries are half linear interpolation of the agent's own
/// points (constant beyond the first and last) and half a clamped draw from
/// `Normal(mean_t, std_t)` over the agents observed at `t`; when nobody is
/// observed at `t` the statistics pool every observation. Repeated
/// observations of one step are averaged.
pub fn interpolate_trajectories<R: Rng + ?Sized>(
    observations: &[Vec<(usize, f64)>],
    t_max: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let n = observations.len();
    let mut observed: Vec<Vec<Option<f64>>> = Vec::with_capacity(n);
    for (agent, obs) in observations.iter().enumerate() {
        if obs.is_empty() {
            return Err(Error::Precondition(format!(
                "agent {agent} has no observations"
            )));
        }
        let mut sum = vec![0.0; t_max];
        let mut count = vec![0usize; t_max];
        for &(t, v) in obs {
            if t >= t_max {
                return Err(Error::Precondition(format!(
                    "observation step {t} outside 0..{t_max}"
                )));
            }
            sum[t] += clamp_opinion(v);
            count[t] += 1;
        }
        observed.push(
            (0..t_max)
                .map(|t| (count[t] > 0).then(|| sum[t] / count[t] as f64))
                .collect(),
        );
    }

    let stats = |values: &[f64]| {
        let m = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
        (m, var.sqrt())
    };
    let pooled: Vec<f64> = observed.iter().flatten().flatten().copied().collect();
    let pooled_stats = stats(&pooled);
    let per_step: Vec<(f64, f64)> = (0..t_max)
        .map(|t| {
            let at: Vec<f64> = observed.iter().filter_map(|row| row[t]).collect();
            if at.is_empty() {
                pooled_stats
            } else {
                stats(&at)
            }
        })
        .collect();

    let mut out = Array2::zeros((n, t_max));
    for (i, row) in observed.iter().enumerate() {
        let points: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter_map(|(t, v)| v.map(|v| (t, v)))
            .collect();
        for t in 0..t_max {
            out[[i, t]] = match row[t] {
                Some(v) => v,
                None => {
                    let linear = linear_at(&points, t);
                    let (m, sd) = per_step[t];
                    let draw = Normal::new(m, sd)
                        .map_err(|e| Error::Solver(e.to_string()))?
                        .sample(rng);
                    0.5 * linear + 0.5 * clamp_opinion(draw)
                }
            };
        }
    }
    Ok(out)
}

fn linear_at(points: &[(usize, f64)], t: usize) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let k = points.partition_point(|p| p.0 < t);
    let (t0, v0) = points[k - 1];
    let (t1, v1) = points[k];
    v0 + (v1 - v0) * (t - t0) as f64 / (t1 - t0) as f64
}

/// k-means assignment and centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

pub const KMEANS_MAX_ITERS: usize = 50;

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means with k-means++ seeding and at most 50 Lloyd iterations. Empty
/// clusters keep their previous centroid; distance ties go to the lower
/// cluster index.
pub fn cluster_users<R: Rng + ?Sized>(
    points: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
) -> Result<Clustering> {
    let n = points.nrows();
    if k == 0 || n < k {
        return Err(Error::Precondition(format!(
            "cannot form {k} clusters from {n} users"
        )));
    }
    let mut chosen = vec![rng.random_range(0..n)];
    let mut best: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = best.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in best.iter().enumerate() {
                if *d > 0.0 {
                    if target < *d {
                        pick = i;
                        break;
                    }
                    target -= d;
                }
            }
            while best[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }

    let mut assignment = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        let mut total = 0.0;
        for (i, slot) in assignment.iter_mut().enumerate() {
            let (mut arg, mut dist) = (0, f64::INFINITY);
            for c in 0..k {
                let d = sq_dist(points.row(i), centroids.row(c));
                if d < dist {
                    arg = c;
                    dist = d;
                }
            }
            total += dist;
            if *slot != arg {
                *slot = arg;
                changed = true;
            }
        }
        inertia.push(total);
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            sums.row_mut(c).scaled_add(1.0, &points.row(i));
            counts[c] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / count as f64));
            }
        }
    }
    Ok(Clustering {
        assignment,
        centroids,
        inertia,
    })
}

/// Unions member observations per cluster.
pub fn merge_observations(
    assignment: &[usize],
    n_clusters: usize,
    observations: &[Vec<(usize, f64)>],
) -> Vec<Vec<(usize, f64)>> {
    let mut merged = vec![Vec::new(); n_clusters];
    for (user, &c) in assignment.iter().enumerate() {
        merged[c].extend_from_slice(&observations[user]);
    }
    for m in &mut merged {
        m.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    merged
}

/// Mean of each column, used as the aggregated trend of a trajectory matrix.
pub fn column_means(m: ArrayView2<'_, f64>) -> Array1<f64> {
    m.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(0))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn loss_hand_cases() {
        let truth = array![[0.1, 0.2], [0.3, -0.4]];
        assert_eq!(gmp_loss(truth.view(), truth.view(), 0.9, 0.1).unwrap(), 0.0);
        let pred = &truth + 0.2;
        let l = gmp_loss(pred.view(), truth.view(), 0.9, 0.1).unwrap();
        assert!((l - (0.9 * 0.04 + 0.1 * 0.04)).abs() < 1e-15);
        assert!(gmp_loss(pred.view(), truth.slice(s![.., ..1]), 0.9, 0.1).is_err());
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let truth = array![[0.1, 0.2, 0.0], [0.3, -0.4, 0.5]];
        let pred = array![[0.0, 0.5, -0.2], [0.1, -0.1, 0.9]];
        let g = gmp_loss_grad(pred.view(), truth.view(), 0.7, 0.3).unwrap();
        for i in 0..2 {
            for t in 0..3 {
                let (mut a, mut b) = (pred.clone(), pred.clone());
                a[[i, t]] += 1e-6;
                b[[i, t]] -= 1e-6;
                let num = (gmp_loss(a.view(), truth.view(), 0.7, 0.3).unwrap()
                    - gmp_loss(b.view(), truth.view(), 0.7, 0.3).unwrap())
                    / 2e-6;
                assert!((num - g[[i, t]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interpolation_hand_case() {
        let obs = vec![vec![(0, 0.0), (2, 1.0)], vec![(0, 0.5), (1, 0.5), (2, 0.5)]];
        let mut rng = seeded_rng(0);
        let m = interpolate_trajectories(&obs, 3, &mut rng).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(m.row(1).to_vec(), vec![0.5, 0.5, 0.5]);
        assert!(interpolate_trajectories(&[vec![]], 3, &mut rng).is_err());
    }

    #[test]
    fn interpolation_holds_edges_constant() {
        let obs = vec![vec![(1, 0.4)], vec![(0, 0.4), (1, 0.4), (2, 0.4), (3, 0.4)]];
        let m = interpolate_trajectories(&obs, 4, &mut seeded_rng(3)).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![0.4; 4]);
    }

    #[test]
    fn kmeans_identity_partition() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]];
        let c = cluster_users(pts.view(), 4, &mut seeded_rng(1)).unwrap();
        let mut seen = c.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(*c.inertia.last().unwrap(), 0.0);
        assert!(cluster_users(pts.view(), 5, &mut seeded_rng(1)).is_err());
    }

    #[test]
    fn merge_unions_members() {
        let obs = vec![vec![(0, 0.1)], vec![(1, 0.2)], vec![(0, 0.3)]];
        let merged = merge_observations(&[1, 0, 1], 2, &obs);
        assert_eq!(merged[0], vec![(1, 0.2)]);
        assert_eq!(merged[1], vec![(0, 0.1), (0, 0.3)]);
    }
}
