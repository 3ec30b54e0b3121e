//! Learnable weights of the projection MLPs and the attention stack.

use ndarray::{Array1, Array2, ArrayD, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::features::DYNAMIC_DIM;
use crate::config::GmpConfig;
use crate::error::{Error, Result};

/// Two dense layers with a ReLU in between: `(ReLU(x·w1 + b1))·w2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    /// `in × hidden`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `hidden × out`.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Mlp {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }
}

/// One multi-head attention layer. Head `h` owns columns
/// `h·head_dim .. (h+1)·head_dim` of `w` and `bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: usize,
    pub head_dim: usize,
    /// `in × heads·head_dim`.
    pub w: Array2<f64>,
    /// Attention weights on the destination projection, `heads × head_dim`.
    pub a_dst: Array2<f64>,
    /// Attention weights on the source projection, `heads × head_dim`.
    pub a_src: Array2<f64>,
    /// Edge-weight embedding (1 → head_dim per head), `heads × head_dim`.
    pub w_edge: Array2<f64>,
    /// Attention weights on the edge embedding, `heads × head_dim`.
    pub a_edge: Array2<f64>,
    pub bias: Array1<f64>,
}

impl GatLayer {
    fn zeros(input: usize, heads: usize, head_dim: usize) -> Self {
        GatLayer {
            heads,
            head_dim,
            w: Array2::zeros((input, heads * head_dim)),
            a_dst: Array2::zeros((heads, head_dim)),
            a_src: Array2::zeros((heads, head_dim)),
            w_edge: Array2::zeros((heads, head_dim)),
            a_edge: Array2::zeros((heads, head_dim)),
            bias: Array1::zeros(heads * head_dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmpParams {
    pub dyn_mlp: Mlp,
    pub static_mlp: Mlp,
    /// Hidden layers use ReLU; the last one has a single scalar head and tanh.
    pub gat: Vec<GatLayer>,
    pub leaky_slope: f64,
}

impl GmpParams {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &GmpConfig) -> Self {
        let width = config.mlp_width;
        let mut gat = Vec::with_capacity(config.depth);
        let mut input = 2 * width;
        for _ in 1..config.depth {
            gat.push(GatLayer::zeros(input, config.heads, config.head_dim));
            input = config.heads * config.head_dim;
        }
        gat.push(GatLayer::zeros(input, 1, 1));
        GmpParams {
            dyn_mlp: Mlp::zeros(DYNAMIC_DIM, width, width),
            static_mlp: Mlp::zeros(config.profile_dim, width, width),
            gat,
            leaky_slope: config.leaky_slope,
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(config: &GmpConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(config);
        for (name, mut t) in p.named_tensors_mut() {
            if name.ends_with(".b1") || name.ends_with(".b2") || name.ends_with(".bias") {
                continue;
            }
            let shape = t.shape().to_vec();
            let (fan_in, fan_out) = if name.ends_with(".w_edge") {
                (1, shape[1])
            } else if name.contains(".a_") {
                (shape[1], 1)
            } else {
                (shape[0], shape[1])
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            t.iter_mut()
                .for_each(|v| *v = rng.random_range(-bound..=bound));
        }
        p
    }

    pub fn depth(&self) -> usize {
        self.gat.len()
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (prefix, m) in [("dyn", &self.dyn_mlp), ("static", &self.static_mlp)] {
            out.push((format!("{prefix}.w1"), m.w1.view().into_dyn()));
            out.push((format!("{prefix}.b1"), m.b1.view().into_dyn()));
            out.push((format!("{prefix}.w2"), m.w2.view().into_dyn()));
            out.push((format!("{prefix}.b2"), m.b2.view().into_dyn()));
        }
        for (l, g) in self.gat.iter().enumerate() {
            out.push((format!("gat{l}.w"), g.w.view().into_dyn()));
            out.push((format!("gat{l}.a_dst"), g.a_dst.view().into_dyn()));
            out.push((format!("gat{l}.a_src"), g.a_src.view().into_dyn()));
            out.push((format!("gat{l}.w_edge"), g.w_edge.view().into_dyn()));
            out.push((format!("gat{l}.a_edge"), g.a_edge.view().into_dyn()));
            out.push((format!("gat{l}.bias"), g.bias.view().into_dyn()));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        for (prefix, m) in [("dyn", &mut self.dyn_mlp), ("static", &mut self.static_mlp)] {
            out.push((format!("{prefix}.w1"), m.w1.view_mut().into_dyn()));
            out.push((format!("{prefix}.b1"), m.b1.view_mut().into_dyn()));
            out.push((format!("{prefix}.w2"), m.w2.view_mut().into_dyn()));
            out.push((format!("{prefix}.b2"), m.b2.view_mut().into_dyn()));
        }
        for (l, g) in self.gat.iter_mut().enumerate() {
            out.push((format!("gat{l}.w"), g.w.view_mut().into_dyn()));
            out.push((format!("gat{l}.a_dst"), g.a_dst.view_mut().into_dyn()));
            out.push((format!("gat{l}.a_src"), g.a_src.view_mut().into_dyn()));
            out.push((format!("gat{l}.w_edge"), g.w_edge.view_mut().into_dyn()));
            out.push((format!("gat{l}.a_edge"), g.a_edge.view_mut().into_dyn()));
            out.push((format!("gat{l}.bias"), g.bias.view_mut().into_dyn()));
        }
        out
    }

    /// Rebuilds parameters for `config` from named tensors, checking every shape.
    pub fn from_named(config: &GmpConfig, tensors: Vec<(String, ArrayD<f64>)>) -> Result<Self> {
        let mut p = Self::zeros(config);
        let mut slots = p.named_tensors_mut();
        if tensors.len() != slots.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (name, data) in tensors {
            let (_, slot) = slots
                .iter_mut()
                .find(|(n, _)| *n == name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name:?}")))?;
            if slot.shape() != data.shape() {
                return Err(Error::Shape {
                    name,
                    expected: slot.shape().to_vec(),
                    actual: data.shape().to_vec(),
                });
            }
            slot.assign(&data);
        }
        drop(slots);
        Ok(p)
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self ← self − lr · grad`.
    pub fn apply_gradient(&mut self, grad: &GmpParams, learning_rate: f64) {
        let grads = grad.named_tensors();
        for ((_, mut t), (_, g)) in self.named_tensors_mut().into_iter().zip(grads) {
            t.scaled_add(-learning_rate, &g);
        }
    }

    /// Zero tensors shaped like `self`.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.named_tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> f64 {
        self.named_tensors()
            .iter()
            .flat_map(|(_, t)| t.iter().map(|v| v.abs()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }
}
