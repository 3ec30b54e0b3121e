//! Forward and reverse passes through the projection MLPs and the attention
//! stack.
//!
//! Every per-row product is computed by the same scalar loop regardless of
//! the row's position, and each destination reduces over its neighbours in a
//! canonical order (edge weight, then projected source row). Relabelling the
//! agents therefore permutes the output bit for bit.

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use super::params::{GatLayer, GmpParams, Mlp};
use crate::error::{Error, Result};
use crate::model::SocialGraph;

/// `x · w`, row by row.
pub(crate) fn matmul_rows(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let cols = w.ncols();
    let mut out = Array2::zeros((x.nrows(), cols));
    if cols == 0 {
        return out;
    }
    let w = w.as_standard_layout();
    let ws = w.as_slice().expect("standard layout");
    out.as_slice_mut()
        .expect("fresh array")
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(i, orow)| {
            for (k, &a) in x.row(i).iter().enumerate() {
                if a != 0.0 {
                    for (o, &v) in orow.iter_mut().zip(&ws[k * cols..(k + 1) * cols]) {
                        *o += a * v;
                    }
                }
            }
        });
    out
}

/// `acc += xᵀ · dy`.
fn add_xt_dy(acc: &mut Array2<f64>, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) {
    for (xr, dr) in x.axis_iter(Axis(0)).zip(dy.axis_iter(Axis(0))) {
        for (k, &a) in xr.iter().enumerate() {
            if a != 0.0 {
                acc.row_mut(k).scaled_add(a, &dr);
            }
        }
    }
}

/// `dy · wᵀ`.
fn mul_wt(dy: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::zeros((dy.nrows(), w.nrows()));
    for (dr, mut orow) in dy.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        for (k, o) in orow.iter_mut().enumerate() {
            *o = dr.dot(&w.row(k));
        }
    }
    out
}

fn leaky(u: f64, slope: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        slope * u
    }
}

/// Activations of one projection MLP.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub input: Array2<f64>,
    /// First-layer pre-activation.
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub output: Array2<f64>,
}

pub fn mlp_forward(mlp: &Mlp, input: Array2<f64>) -> Result<MlpCache> {
    if input.ncols() != mlp.input_dim() {
        return Err(Error::Shape {
            name: "mlp input".into(),
            expected: vec![input.nrows(), mlp.input_dim()],
            actual: vec![input.nrows(), input.ncols()],
        });
    }
    let mut pre = matmul_rows(input.view(), mlp.w1.view());
    pre += &mlp.b1;
    let hidden = pre.mapv(|v| v.max(0.0));
    let mut output = matmul_rows(hidden.view(), mlp.w2.view());
    output += &mlp.b2;
    Ok(MlpCache {
        input,
        pre,
        hidden,
        output,
    })
}

fn mlp_backward(mlp: &Mlp, cache: &MlpCache, d_out: ArrayView2<'_, f64>, grad: &mut Mlp) {
    grad.b2 += &d_out.sum_axis(Axis(0));
    add_xt_dy(&mut grad.w2, cache.hidden.view(), d_out);
    let mut d_pre = mul_wt(d_out, mlp.w2.view());
    d_pre.zip_mut_with(&cache.pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0
        }
    });
    grad.b1 += &d_pre.sum_axis(Axis(0));
    add_xt_dy(&mut grad.w1, cache.input.view(), d_pre.view());
}

/// Activations of one attention layer. Edges are grouped by destination in
/// CSR form (`offsets`), self-loop included, in canonical reduction order.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub input: Array2<f64>,
    pub proj: Array2<f64>,
    pub s_dst: Array2<f64>,
    pub s_src: Array2<f64>,
    /// `a_edge · w_edge` per head.
    pub edge_gain: Array1<f64>,
    pub offsets: Vec<usize>,
    pub sources: Vec<usize>,
    pub weights: Vec<f64>,
    /// Attention logits before LeakyReLU, `E × heads`.
    pub pre: Array2<f64>,
    /// Normalised attention, `E × heads`.
    pub alpha: Array2<f64>,
    pub z: Array2<f64>,
    pub output: Array2<f64>,
}

impl LayerCache {
    /// Sources and attention rows (`deg+1 × heads`) of one destination.
    pub fn attention(&self, dst: usize) -> (&[usize], ArrayView2<'_, f64>) {
        let r = self.offsets[dst]..self.offsets[dst + 1];
        (&self.sources[r.clone()], self.alpha.slice(s![r, ..]))
    }
}

/// Per-destination slice of the attention pass.
struct DstBlock {
    sources: Vec<usize>,
    weights: Vec<f64>,
    pre: Vec<f64>,
    alpha: Vec<f64>,
    z: Vec<f64>,
}

fn lex_slice(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

#[allow(clippy::too_many_arguments)]
fn attend(
    i: usize,
    graph: &SocialGraph,
    proj: &[f64],
    s_dst: &[f64],
    s_src: &[f64],
    edge_gain: &[f64],
    heads: usize,
    d: usize,
    slope: f64,
) -> DstBlock {
    let width = heads * d;
    let row = |j: usize| &proj[j * width..(j + 1) * width];
    let mut entries: Vec<(usize, f64)> = graph
        .neighbors(i)
        .iter()
        .copied()
        .zip(graph.neighbor_weights(i).iter().copied())
        .collect();
    entries.push((i, 1.0));
    entries.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| lex_slice(row(a.0), row(b.0)))
    });
    let m = entries.len();
    let mut pre = vec![0.0; m * heads];
    let mut alpha = vec![0.0; m * heads];
    let mut z = vec![0.0; width];
    for h in 0..heads {
        let mut max = f64::NEG_INFINITY;
        for (k, &(j, w)) in entries.iter().enumerate() {
            let u = s_dst[i * heads + h] + s_src[j * heads + h] + w * edge_gain[h];
            pre[k * heads + h] = u;
            max = max.max(leaky(u, slope));
        }
        let mut denom = 0.0;
        for k in 0..m {
            let x = (leaky(pre[k * heads + h], slope) - max).exp();
            alpha[k * heads + h] = x;
            denom += x;
        }
        let zh = &mut z[h * d..(h + 1) * d];
        for (k, &(j, _)) in entries.iter().enumerate() {
            let a = alpha[k * heads + h] / denom;
            alpha[k * heads + h] = a;
            let src = &row(j)[h * d..(h + 1) * d];
            for (zc, &sc) in zh.iter_mut().zip(src) {
                *zc += a * sc;
            }
        }
    }
    DstBlock {
        sources: entries.iter().map(|e| e.0).collect(),
        weights: entries.iter().map(|e| e.1).collect(),
        pre,
        alpha,
        z,
    }
}

fn layer_forward(
    layer: &GatLayer,
    input: Array2<f64>,
    graph: &SocialGraph,
    slope: f64,
    last: bool,
) -> LayerCache {
    let n = input.nrows();
    let (heads, d) = (layer.heads, layer.head_dim);
    let width = heads * d;
    let proj = matmul_rows(input.view(), layer.w.view());
    let mut s_dst = Array2::zeros((n, heads));
    let mut s_src = Array2::zeros((n, heads));
    for i in 0..n {
        for h in 0..heads {
            let p = proj.slice(s![i, h * d..(h + 1) * d]);
            s_dst[[i, h]] = p.dot(&layer.a_dst.row(h));
            s_src[[i, h]] = p.dot(&layer.a_src.row(h));
        }
    }
    let edge_gain: Array1<f64> = (0..heads)
        .map(|h| layer.a_edge.row(h).dot(&layer.w_edge.row(h)))
        .collect();

    let blocks: Vec<DstBlock> = {
        let p = proj.as_slice().expect("standard layout");
        let sd = s_dst.as_slice().expect("standard layout");
        let ss = s_src.as_slice().expect("standard layout");
        let g = edge_gain.as_slice().expect("contiguous");
        (0..n)
            .into_par_iter()
            .map(|i| attend(i, graph, p, sd, ss, g, heads, d, slope))
            .collect()
    };

    let e: usize = blocks.iter().map(|b| b.sources.len()).sum();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut sources = Vec::with_capacity(e);
    let mut weights = Vec::with_capacity(e);
    let mut pre = Vec::with_capacity(e * heads);
    let mut alpha = Vec::with_capacity(e * heads);
    let mut z = Vec::with_capacity(n * width);
    offsets.push(0);
    for b in blocks {
        sources.extend(b.sources);
        weights.extend(b.weights);
        pre.extend(b.pre);
        alpha.extend(b.alpha);
        z.extend(b.z);
        offsets.push(sources.len());
    }
    let pre = Array2::from_shape_vec((e, heads), pre).expect("edge rows");
    let alpha = Array2::from_shape_vec((e, heads), alpha).expect("edge rows");
    let mut z = Array2::from_shape_vec((n, width), z).expect("agent rows");
    z += &layer.bias;
    let output = if last {
        z.mapv(f64::tanh)
    } else {
        z.mapv(|v| v.max(0.0))
    };
    LayerCache {
        input,
        proj,
        s_dst,
        s_src,
        edge_gain,
        offsets,
        sources,
        weights,
        pre,
        alpha,
        z,
        output,
    }
}

fn layer_backward(
    layer: &GatLayer,
    cache: &LayerCache,
    d_output: ArrayView2<'_, f64>,
    slope: f64,
    last: bool,
    grad: &mut GatLayer,
) -> Array2<f64> {
    let n = cache.input.nrows();
    let (heads, d) = (layer.heads, layer.head_dim);
    let mut dz = d_output.to_owned();
    if last {
        dz.zip_mut_with(&cache.output, |g, &o| *g *= 1.0 - o * o);
    } else {
        dz.zip_mut_with(&cache.z, |g, &z| {
            if z <= 0.0 {
                *g = 0.0
            }
        });
    }
    grad.bias += &dz.sum_axis(Axis(0));

    let mut d_proj = Array2::<f64>::zeros((n, heads * d));
    let mut d_sdst = Array2::<f64>::zeros((n, heads));
    let mut d_ssrc = Array2::<f64>::zeros((n, heads));
    let mut d_gain = Array1::<f64>::zeros(heads);
    let mut d_alpha = Vec::new();
    for i in 0..n {
        let range = cache.offsets[i]..cache.offsets[i + 1];
        for h in 0..heads {
            let cols = h * d..(h + 1) * d;
            let g = dz.slice(s![i, cols.clone()]).to_owned();
            d_alpha.clear();
            let mut weighted = 0.0;
            for k in range.clone() {
                let src = cache.sources[k];
                let da = g.dot(&cache.proj.slice(s![src, cols.clone()]));
                let a = cache.alpha[[k, h]];
                d_proj.slice_mut(s![src, cols.clone()]).scaled_add(a, &g);
                weighted += a * da;
                d_alpha.push(da);
            }
            for (k, da) in range.clone().zip(&d_alpha) {
                let de = cache.alpha[[k, h]] * (da - weighted);
                let du = if cache.pre[[k, h]] > 0.0 {
                    de
                } else {
                    slope * de
                };
                d_sdst[[i, h]] += du;
                d_ssrc[[cache.sources[k], h]] += du;
                d_gain[h] += du * cache.weights[k];
            }
        }
    }
    for i in 0..n {
        for h in 0..heads {
            let cols = h * d..(h + 1) * d;
            let p = cache.proj.slice(s![i, cols.clone()]);
            grad.a_dst.row_mut(h).scaled_add(d_sdst[[i, h]], &p);
            grad.a_src.row_mut(h).scaled_add(d_ssrc[[i, h]], &p);
            let mut dp = d_proj.slice_mut(s![i, cols]);
            dp.scaled_add(d_sdst[[i, h]], &layer.a_dst.row(h));
            dp.scaled_add(d_ssrc[[i, h]], &layer.a_src.row(h));
        }
    }
    for h in 0..heads {
        grad.a_edge
            .row_mut(h)
            .scaled_add(d_gain[h], &layer.w_edge.row(h));
        grad.w_edge
            .row_mut(h)
            .scaled_add(d_gain[h], &layer.a_edge.row(h));
    }
    add_xt_dy(&mut grad.w, cache.input.view(), d_proj.view());
    mul_wt(d_proj.view(), layer.w.view())
}

/// Output and per-layer activations of the attention stack.
#[derive(Debug, Clone)]
pub struct GatForward {
    /// Next opinion per agent, in `(-1, 1)`.
    pub output: Array1<f64>,
    pub layers: Vec<LayerCache>,
}

/// Runs the attention stack on projected features `x` over the interaction
/// graph with self-loops of weight 1.
pub fn gat_forward(x: Array2<f64>, graph: &SocialGraph, params: &GmpParams) -> Result<GatForward> {
    if x.nrows() != graph.n_agents() {
        return Err(Error::Dimension {
            expected: graph.n_agents(),
            actual: x.nrows(),
        });
    }
    if x.ncols() != params.gat[0].input_dim() {
        return Err(Error::Shape {
            name: "attention input".into(),
            expected: vec![x.nrows(), params.gat[0].input_dim()],
            actual: vec![x.nrows(), x.ncols()],
        });
    }
    let depth = params.gat.len();
    let mut layers: Vec<LayerCache> = Vec::with_capacity(depth);
    let mut h = x;
    for (l, layer) in params.gat.iter().enumerate() {
        let cache = layer_forward(layer, h, graph, params.leaky_slope, l + 1 == depth);
        h = cache.output.clone();
        layers.push(cache);
    }
    let output = h.column(0).to_owned();
    Ok(GatForward { output, layers })
}

/// `X = [X_d ‖ X_s]` from dynamic and static features.
pub fn project_features(
    phi_d: ArrayView2<'_, f64>,
    phi_s: ArrayView2<'_, f64>,
    params: &GmpParams,
) -> Result<Array2<f64>> {
    if phi_d.nrows() != phi_s.nrows() {
        return Err(Error::Dimension {
            expected: phi_d.nrows(),
            actual: phi_s.nrows(),
        });
    }
    let d = mlp_forward(&params.dyn_mlp, phi_d.to_owned())?;
    let st = mlp_forward(&params.static_mlp, phi_s.to_owned())?;
    Ok(
        ndarray::concatenate(Axis(1), &[d.output.view(), st.output.view()])
            .expect("row counts agree"),
    )
}

/// Full forward pass for one step.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub dynamic: MlpCache,
    pub gat: GatForward,
}

impl ForwardCache {
    pub fn output(&self) -> &Array1<f64> {
        &self.gat.output
    }

    /// Sign of every ReLU / LeakyReLU input, for detecting kinks.
    pub fn sign_pattern(&self) -> Vec<bool> {
        let mut out: Vec<bool> = self.dynamic.pre.iter().map(|v| *v > 0.0).collect();
        let depth = self.gat.layers.len();
        for (l, layer) in self.gat.layers.iter().enumerate() {
            out.extend(layer.pre.iter().map(|v| *v > 0.0));
            if l + 1 < depth {
                out.extend(layer.z.iter().map(|v| *v > 0.0));
            }
        }
        out
    }
}

/// Static projection `X_s`, reusable while the static MLP is unchanged.
pub fn project_static(phi_s: ArrayView2<'_, f64>, params: &GmpParams) -> Result<MlpCache> {
    mlp_forward(&params.static_mlp, phi_s.to_owned())
}

/// One step from dynamic features and the static projection `xs`.
pub fn forward(
    phi_d: ArrayView2<'_, f64>,
    xs: ArrayView2<'_, f64>,
    graph: &SocialGraph,
    params: &GmpParams,
) -> Result<ForwardCache> {
    if phi_d.nrows() != xs.nrows() {
        return Err(Error::Dimension {
            expected: xs.nrows(),
            actual: phi_d.nrows(),
        });
    }
    let dynamic = mlp_forward(&params.dyn_mlp, phi_d.to_owned())?;
    let x = ndarray::concatenate(Axis(1), &[dynamic.output.view(), xs]).expect("row counts agree");
    let gat = gat_forward(x, graph, params)?;
    Ok(ForwardCache { dynamic, gat })
}

/// Accumulates into `grad` the gradient of a loss whose derivative with
/// respect to the step output is `d_out`. The gradient reaching the static
/// projection is added to `d_static` so it can be pushed through the static
/// MLP once per batch with [`static_backward`].
pub fn backward(
    params: &GmpParams,
    cache: &ForwardCache,
    d_out: ArrayView1<'_, f64>,
    grad: &mut GmpParams,
    d_static: &mut Array2<f64>,
) {
    let depth = params.gat.len();
    let mut d = d_out.to_owned().insert_axis(Axis(1));
    for l in (0..depth).rev() {
        d = layer_backward(
            &params.gat[l],
            &cache.gat.layers[l],
            d.view(),
            params.leaky_slope,
            l + 1 == depth,
            &mut grad.gat[l],
        );
    }
    let width = params.dyn_mlp.output_dim();
    mlp_backward(
        &params.dyn_mlp,
        &cache.dynamic,
        d.slice(s![.., ..width]),
        &mut grad.dyn_mlp,
    );
    *d_static += &d.slice(s![.., width..]);
}

pub fn static_backward(
    params: &GmpParams,
    statics: &MlpCache,
    d_static: ArrayView2<'_, f64>,
    grad: &mut GmpParams,
) {
    mlp_backward(&params.static_mlp, statics, d_static, &mut grad.static_mlp);
}

/// Gradient of `Σ_i d_out[i]·o_i` for one forward pass, then a plain
/// gradient-descent update. Returns the gradient.
pub fn backward_and_step(
    params: &mut GmpParams,
    cache: &ForwardCache,
    statics: &MlpCache,
    d_out: ArrayView1<'_, f64>,
    learning_rate: f64,
) -> GmpParams {
    let mut grad = params.zeros_like();
    let mut d_static = Array2::zeros(statics.output.dim());
    backward(params, cache, d_out, &mut grad, &mut d_static);
    static_backward(params, statics, d_static.view(), &mut grad);
    params.apply_gradient(&grad, learning_rate);
    grad
}
