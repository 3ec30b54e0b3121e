#![allow(dead_code)]

use hybridsim_core::config::GmpConfig;
use hybridsim_core::gmp::{
    dynamic_features, forward, loss_and_gradient, project_static, teacher_forced_loss, GmpParams,
    NeighborTensor, TrainingSet,
};
use hybridsim_core::model::SocialGraph;
use hybridsim_core::rng::seeded_rng;
use hybridsim_core::rng::SimRng;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;

/// Default shapes except for a narrower profile embedding.
pub fn cfg(profile_dim: usize) -> GmpConfig {
    GmpConfig {
        profile_dim,
        ..GmpConfig::default()
    }
}

pub fn random_matrix(rng: &mut SimRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Random weighted interaction graph with every degree at most `max_deg`.
pub fn bounded_degree_graph(
    rng: &mut SimRng,
    n: usize,
    max_deg: usize,
    tries: usize,
) -> SocialGraph {
    let mut deg = vec![0usize; n];
    let mut pairs = Vec::new();
    for _ in 0..tries {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let (a, b) = (a.min(b), a.max(b));
        if a == b
            || deg[a] >= max_deg
            || deg[b] >= max_deg
            || pairs.iter().any(|&(x, y, _)| (x, y) == (a, b))
        {
            continue;
        }
        deg[a] += 1;
        deg[b] += 1;
        pairs.push((a, b, rng.random_range(0.2..1.5)));
    }
    let follows = pairs.iter().map(|&(a, b, _)| (a, b)).collect();
    SocialGraph::new(n, follows, pairs).unwrap()
}

pub fn loop_individual(s: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, t) = s.dim();
    let mut out = Array2::zeros((n, 5));
    for i in 0..n {
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        for k in 0..t {
            sum += s[[i, k]];
            max = max.max(s[[i, k]]);
            min = min.min(s[[i, k]]);
        }
        let mean = sum / t as f64;
        let mut var = 0.0;
        for k in 0..t {
            var += (s[[i, k]] - mean).powi(2);
        }
        out[[i, 0]] = mean;
        out[[i, 1]] = (var / t as f64).sqrt();
        out[[i, 2]] = max;
        out[[i, 3]] = min;
        out[[i, 4]] = s[[i, t - 1]];
    }
    out
}

/// Neighbours gathered in ascending id order, zero padded to the max degree.
pub fn loop_neighbor_tensor(s: ArrayView2<'_, f64>, graph: &SocialGraph) -> NeighborTensor {
    let (n, t) = s.dim();
    let mut lists = vec![Vec::new(); n];
    for &(a, b, _) in graph.interaction_edges() {
        lists[a].push(b);
        lists[b].push(a);
    }
    let m = lists.iter().map(Vec::len).max().unwrap_or(0);
    let mut values = Array3::zeros((n, m, t));
    let mut mask = Array2::zeros((n, m));
    for (i, list) in lists.iter_mut().enumerate() {
        list.sort_unstable();
        for (slot, &j) in list.iter().enumerate() {
            mask[[i, slot]] = 1.0;
            for k in 0..t {
                values[[i, slot, k]] = s[[j, k]];
            }
        }
    }
    NeighborTensor { values, mask }
}

/// Population Pearson; 0 when either series is constant.
pub fn loop_pearson(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    if a.iter().all(|x| *x == a[0]) || b.iter().all(|x| *x == b[0]) {
        return 0.0;
    }
    let t = a.len() as f64;
    let ma = a.sum() / t;
    let mb = b.sum() / t;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        cov += (a[k] - ma) * (b[k] - mb);
        va += (a[k] - ma).powi(2);
        vb += (b[k] - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

pub fn loop_neighbor_features(s: ArrayView2<'_, f64>, nbr: &NeighborTensor) -> Array2<f64> {
    let (n, m, t) = nbr.values.dim();
    let mut out = Array2::zeros((n, 4));
    for i in 0..n {
        let mut entries = Vec::new();
        let mut sims = Vec::new();
        for j in 0..m {
            if nbr.mask[[i, j]] == 1.0 {
                let row = nbr.values.slice(s![i, j, ..]);
                entries.extend(row.iter().copied());
                sims.push(loop_pearson(s.row(i), row));
            }
        }
        if sims.is_empty() {
            continue;
        }
        let mean = entries.iter().sum::<f64>() / entries.len() as f64;
        let var = entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / entries.len() as f64;
        let sd = var.sqrt();
        let sim = sims.iter().sum::<f64>() / sims.len() as f64;
        out[[i, 0]] = mean;
        out[[i, 1]] = sd;
        out[[i, 2]] = sim;
        out[[i, 3]] = sim / (1.0 + sd);
        let _ = t;
    }
    out
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Dense-matrix attention stack: adjacency with unit self-loops, per-head
/// softmax over all admissible sources.
pub fn dense_gat(x: &Array2<f64>, graph: &SocialGraph, params: &GmpParams) -> Array1<f64> {
    let n = x.nrows();
    let mut adj = Array2::<f64>::zeros((n, n));
    let mut present = Array2::<bool>::from_elem((n, n), false);
    for &(a, b, w) in graph.interaction_edges() {
        adj[[a, b]] = w;
        adj[[b, a]] = w;
        present[[a, b]] = true;
        present[[b, a]] = true;
    }
    for i in 0..n {
        adj[[i, i]] = 1.0;
        present[[i, i]] = true;
    }
    let depth = params.gat.len();
    let mut h = x.clone();
    for (l, layer) in params.gat.iter().enumerate() {
        let d = layer.head_dim;
        let wh = h.dot(&layer.w);
        let mut z = Array2::zeros((n, layer.heads * d));
        for hd in 0..layer.heads {
            let cols = s![.., hd * d..(hd + 1) * d];
            let block = wh.slice(cols);
            let e_gain: f64 = layer.a_edge.row(hd).dot(&layer.w_edge.row(hd));
            let dst = block.dot(&layer.a_dst.row(hd));
            let src = block.dot(&layer.a_src.row(hd));
            for i in 0..n {
                let logits: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| present[[i, j]])
                    .map(|j| {
                        (
                            j,
                            leaky(dst[i] + src[j] + adj[[i, j]] * e_gain, params.leaky_slope),
                        )
                    })
                    .collect();
                let max = logits.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = logits.iter().map(|p| (p.1 - max).exp()).sum();
                for &(j, e) in &logits {
                    let a = (e - max).exp() / denom;
                    for c in 0..d {
                        z[[i, hd * d + c]] += a * block[[j, c]];
                    }
                }
            }
        }
        z += &layer.bias;
        h = if l + 1 == depth {
            z.mapv(f64::tanh)
        } else {
            z.mapv(|v| v.max(0.0))
        };
    }
    h.column(0).to_owned()
}

/// Signs of every ReLU / LeakyReLU input over the teacher-forced loss.
pub fn kink_pattern(params: &GmpParams, data: &TrainingSet) -> Vec<bool> {
    let statics = project_static(data.profiles.view(), params).unwrap();
    let mut out: Vec<bool> = statics.pre.iter().map(|v| *v > 0.0).collect();
    for t in 1..data.truth.ncols() {
        let phi = dynamic_features(data.truth.slice(s![.., ..t]), &data.graph).unwrap();
        let cache = forward(phi.view(), statics.output.view(), &data.graph, params).unwrap();
        out.extend(cache.sign_pattern());
    }
    out
}

#[derive(Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    pub near_kink: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps
/// gradients at the finite-difference noise level (~1e-11) from dominating.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central differences with `h = 1e-5` on every parameter whose
/// `(tensor, flat index, tensor length)` passes `select`. Parameters whose perturbation flips any activation sign
/// are skipped as kink-adjacent.
pub fn gradient_check(
    params: &GmpParams,
    data: &TrainingSet,
    alpha: f64,
    beta: f64,
    mut select: impl FnMut(&str, usize, usize) -> bool,
) -> GradCheck {
    let h = 1e-5;
    let (_, grad) = loss_and_gradient(params, data, alpha, beta).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grad
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();
    let base_pattern = kink_pattern(params, data);
    let mut out = GradCheck::default();
    for (name, values) in &analytic {
        for (k, &a) in values.iter().enumerate() {
            if !select(name, k, values.len()) {
                continue;
            }
            let eval = |delta: f64| {
                let mut p = params.clone();
                for (n, mut t) in p.named_tensors_mut() {
                    if &n == name {
                        *t.iter_mut().nth(k).unwrap() += delta;
                    }
                }
                let pattern = kink_pattern(&p, data);
                (teacher_forced_loss(&p, data, alpha, beta).unwrap(), pattern)
            };
            let (lp, pp) = eval(h);
            let (lm, pm) = eval(-h);
            if pp != base_pattern || pm != base_pattern {
                out.near_kink += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            out.max_rel_err = out.max_rel_err.max(rel_err(a, numeric));
            out.checked += 1;
        }
    }
    out
}

/// Random parameters and an 8-agent, degree ≤ 3, 5-step training set.
pub fn instance(seed: u64, profile_dim: usize) -> (GmpParams, TrainingSet) {
    let mut rng = seeded_rng(seed);
    let params = GmpParams::init(&cfg(profile_dim), &mut rng);
    let graph = bounded_degree_graph(&mut rng, 8, 3, 30);
    let truth = random_matrix(&mut rng, 8, 5, -0.9, 0.9);
    let profiles = random_matrix(&mut rng, 8, profile_dim, -1.0, 1.0);
    (params, TrainingSet::new(truth, profiles, graph).unwrap())
}

/// Smooth logistic-looking trajectories for 20 agents over 8 steps.
pub fn synthetic_target(seed: u64) -> TrainingSet {
    let mut rng = seeded_rng(seed);
    let n = 20;
    let t = 8;
    let graph = bounded_degree_graph(&mut rng, n, 4, 60);
    let truth = Array2::from_shape_fn((n, t), |(i, k)| {
        let a = -0.5 + i as f64 / n as f64;
        (a + 0.1 * k as f64 * a.signum()).tanh()
    });
    let profiles = random_matrix(&mut rng, n, 16, -1.0, 1.0);
    TrainingSet::new(truth, profiles, graph).unwrap()
}
