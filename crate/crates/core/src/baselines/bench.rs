//! Wall-clock comparison of the sequential agent loop and one batched GMP step.

use std::time::Instant;

use ndarray::Array2;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{abm_update, AbmConfig, AbmModel};
use crate::config::GmpConfig;
use crate::engine::generate_network;
use crate::error::{Error, Result};
use crate::gmp::{GmpParams, GmpRuntime};
use crate::model::clamp_opinion;
use crate::providers::stub_embed;
use crate::rng::{derive_rng, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n_agents: usize,
    pub steps: usize,
    pub trials: usize,
    /// Best-of-trials time for one sequential sweep over all agents.
    pub abm_seconds_per_step: f64,
    pub abm_seconds_per_agent_step: f64,
    /// Best-of-trials time for one batched GMP step (features + forward).
    pub gmp_seconds_per_step: Option<f64>,
    /// `abm_seconds_per_step / gmp_seconds_per_step`.
    pub gmp_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model: AbmModel,
    pub rows: Vec<BenchRow>,
    /// Slope of log(time per step) against log(n).
    pub scaling_exponent: f64,
    /// Predicted `time(2n) / time(n)`, i.e. `2^scaling_exponent`.
    pub doubling_ratio: f64,
    /// Fitted sequential time for 1,000,000 agents over 30 steps.
    pub extrapolated_seconds_1m_agents_30_steps: f64,
}

/// Least-squares fit of `ln y = a + b ln x`; returns `(a, b)`.
fn loglog_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    (my - b * mx, b)
}

/// Times `steps` sequential sweeps per trial at every size, and optionally
/// one GMP step on the same graph and history. Sizes below 11 agents are
/// rejected because the network generator needs its seed clique.
pub fn bench_sequential(
    model: AbmModel,
    sizes: &[usize],
    steps: usize,
    trials: usize,
    with_gmp: bool,
    seed: u64,
) -> Result<BenchReport> {
    if sizes.is_empty() || steps == 0 || trials == 0 {
        return Err(Error::Precondition(
            "bench needs sizes, steps and trials".into(),
        ));
    }
    let config = AbmConfig::new(model);
    let gmp_config = GmpConfig::default();
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let graph = generate_network(n, &mut derive_rng(seed, stream::NETWORK))?;
        let normal = Normal::new(0.0, 0.3).expect("valid normal");
        let mut init_rng = derive_rng(seed, stream::INITIAL_OPINIONS);
        let initial: Vec<f64> = (0..n)
            .map(|_| clamp_opinion(normal.sample(&mut init_rng)))
            .collect();

        let mut best = f64::INFINITY;
        let mut history = Array2::zeros((n, steps + 1));
        for _ in 0..trials {
            let mut rng = derive_rng(seed, stream::BASELINE);
            let mut column = initial.clone();
            history
                .column_mut(0)
                .assign(&ndarray::ArrayView1::from(&column));
            let start = Instant::now();
            for t in 0..steps {
                column = abm_update(&config, &column, &graph, &mut rng);
                history
                    .column_mut(t + 1)
                    .assign(&ndarray::ArrayView1::from(&column));
            }
            best = best.min(start.elapsed().as_secs_f64() / steps as f64);
        }

        let gmp_seconds = if with_gmp {
            let params = GmpParams::init(&gmp_config, &mut derive_rng(seed, stream::GMP_INIT));
            let mut profiles = Array2::zeros((n, gmp_config.profile_dim));
            for i in 0..n {
                let e = stub_embed(&format!("user {i}"), gmp_config.profile_dim);
                profiles.row_mut(i).assign(&ndarray::ArrayView1::from(&e));
            }
            let runtime = GmpRuntime::new(params, profiles.view())?;
            drop(profiles);
            let mut g_best = f64::INFINITY;
            for _ in 0..trials {
                let start = Instant::now();
                let out = runtime.step(history.view(), &graph)?;
                g_best = g_best.min(start.elapsed().as_secs_f64());
                std::hint::black_box(out);
            }
            Some(g_best)
        } else {
            None
        };

        rows.push(BenchRow {
            n_agents: n,
            steps,
            trials,
            abm_seconds_per_step: best,
            abm_seconds_per_agent_step: best / n as f64,
            gmp_seconds_per_step: gmp_seconds,
            gmp_speedup: gmp_seconds.map(|g| best / g),
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.n_agents as f64).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| r.abm_seconds_per_step.max(1e-12))
        .collect();
    let (a, b) = if rows.len() >= 2 {
        loglog_fit(&xs, &ys)
    } else {
        (ys[0].ln() - xs[0].ln(), 1.0)
    };
    Ok(BenchReport {
        model,
        scaling_exponent: b,
        doubling_ratio: 2f64.powf(b),
        extrapolated_seconds_1m_agents_30_steps: (a + b * 1e6f64.ln()).exp() * 30.0,
        rows,
    })
}
