//! Inference: one-step updates and recursive rollouts.

use ndarray::{s, Array1, Array2, ArrayView2};

use super::features::dynamic_features;
use super::network::{forward, project_static};
use super::params::GmpParams;
use crate::error::{Error, Result};
use crate::model::{clamp_opinion, SocialGraph};

/// Parameters plus the cached static projection of a fixed population.
#[derive(Debug, Clone)]
pub struct GmpRuntime {
    params: GmpParams,
    xs: Array2<f64>,
}

impl GmpRuntime {
    pub fn new(params: GmpParams, profiles: ArrayView2<'_, f64>) -> Result<Self> {
        let xs = project_static(profiles, &params)?.output;
        Ok(GmpRuntime { params, xs })
    }

    pub fn params(&self) -> &GmpParams {
        &self.params
    }

    pub fn n_agents(&self) -> usize {
        self.xs.nrows()
    }

    /// Predicted next opinion of every agent given the full history.
    pub fn step(&self, history: ArrayView2<'_, f64>, graph: &SocialGraph) -> Result<Array1<f64>> {
        if history.nrows() != self.xs.nrows() {
            return Err(Error::Dimension {
                expected: self.xs.nrows(),
                actual: history.nrows(),
            });
        }
        let phi_d = dynamic_features(history, graph)?;
        Ok(forward(phi_d.view(), self.xs.view(), graph, &self.params)?
            .gat
            .output)
    }

    /// Appends `steps` predicted columns to `s_init`. `overrides[k]` lists
    /// `(agent, opinion)` pairs that replace the prediction at the k-th new
    /// step before it is appended.
    pub fn rollout(
        &self,
        s_init: ArrayView2<'_, f64>,
        graph: &SocialGraph,
        steps: usize,
        overrides: &[Vec<(usize, f64)>],
    ) -> Result<Array2<f64>> {
        let (n, t0) = s_init.dim();
        if t0 == 0 {
            return Err(Error::Precondition(
                "rollout needs an initial history".into(),
            ));
        }
        let mut history = Array2::zeros((n, t0 + steps));
        history.slice_mut(s![.., ..t0]).assign(&s_init);
        for k in 0..steps {
            let t = t0 + k;
            let mut next = self.step(history.slice(s![.., ..t]), graph)?;
            if let Some(list) = overrides.get(k) {
                for &(agent, value) in list {
                    if agent >= n {
                        return Err(Error::Dimension {
                            expected: n,
                            actual: agent,
                        });
                    }
                    next[agent] = clamp_opinion(value);
                }
            }
            history.column_mut(t).assign(&next);
        }
        Ok(history)
    }
}

/// [`GmpRuntime::rollout`] without keeping the runtime.
pub fn rollout(
    params: &GmpParams,
    s_init: ArrayView2<'_, f64>,
    profiles: ArrayView2<'_, f64>,
    graph: &SocialGraph,
    steps: usize,
    overrides: &[Vec<(usize, f64)>],
) -> Result<Array2<f64>> {
    GmpRuntime::new(params.clone(), profiles)?.rollout(s_init, graph, steps, overrides)
}
