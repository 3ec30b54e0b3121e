use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use hybridsim_core::baselines::{bench_sequential, AbmModel};
use hybridsim_core::config::{ProviderKind, RetrievalConfig, SimConfig};
use hybridsim_core::engine::{
    build_training_set, initial_params, keyword_index, load_dataset, read_curve, run_simulation,
    write_curve,
};
use hybridsim_core::gmp::{save_checkpoint, teacher_forced_loss, train, GmpParams};
use hybridsim_core::gom::{read_memory_dump, read_query, retrieve};
use hybridsim_core::metrics::all_metrics;
use hybridsim_core::providers::{ProviderBundle, StubEmbedder};
use hybridsim_core::rng::{derive_rng, stream};

#[derive(Parser)]
#[command(
    name = "hybridsim",
    version,
    about = "Hybrid opinion-dynamics simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Providers {
    Stub,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write trend.txt and report.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Ground-truth curve, one real per line.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long, value_enum)]
        providers: Option<Providers>,
        /// Replace remote failures with stub output.
        #[arg(long)]
        fallback_stub: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a memory dump against a query embedding.
    Retrieve {
        #[arg(long)]
        memory: PathBuf,
        #[arg(long)]
        query: PathBuf,
        #[arg(long, default_value_t = 10)]
        knn: usize,
        #[arg(long)]
        top_r: Option<usize>,
        /// Propagation factor; sets lambda2 and lambda3 accordingly.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the batched update model to a dataset and write a checkpoint.
    TrainGmp {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional config for model shape and training defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of time windows the dataset is bucketed into.
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare two curves.
    EvalMetrics {
        simulated: PathBuf,
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the sequential baselines (and optionally one batched step).
    Bench {
        #[arg(long, default_value = "hk")]
        model: AbmModel,
        /// Comma-separated population sizes.
        #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        #[arg(long)]
        gmp: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "bench_report.json")]
        out: PathBuf,
    },
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn simulate(
    config: &Path,
    truth: Option<&Path>,
    providers: Option<Providers>,
    fallback_stub: bool,
    out: &Path,
) -> Result<()> {
    let mut cfg = SimConfig::load(config)?;
    match providers {
        Some(Providers::Stub) => cfg.providers.kind = ProviderKind::Stub,
        Some(Providers::Remote) => cfg.providers.kind = ProviderKind::Remote,
        None => {}
    }
    cfg.providers.fallback_stub |= fallback_stub;
    let dataset = cfg
        .dataset
        .as_deref()
        .map(|p| load_dataset(p, cfg.t_max))
        .transpose()?;
    let truth = truth.map(read_curve).transpose()?;
    let index = Arc::new(keyword_index(dataset.as_ref()));
    let bundle = ProviderBundle::from_config(
        &cfg.providers,
        &cfg.topic,
        index,
        cfg.gmp.embed_dim,
        cfg.gmp.profile_dim,
    )?;
    let params = initial_params(&cfg)?;
    let report = run_simulation(&cfg, bundle, Some(params), dataset.as_ref(), truth.as_ref())?;
    report.validate()?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_curve(&out.join("trend.txt"), &report.trend.values)?;
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    println!("wrote {} steps to {}", report.trend.len(), out.display());
    if let Some(m) = &report.metrics {
        println!("{}", serde_json::to_string(m)?);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn retrieve_cmd(
    memory: &Path,
    query: &Path,
    knn: usize,
    top_r: Option<usize>,
    mu: Option<f64>,
    nu: Option<f64>,
    tau: Option<f64>,
    max_iters: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = RetrievalConfig {
        knn,
        ..RetrievalConfig::default()
    };
    if let Some(mu) = mu {
        cfg = cfg.with_mu(mu);
    }
    if let Some(r) = top_r {
        cfg.top_r = r;
    }
    if let Some(nu) = nu {
        cfg.nu = nu;
    }
    if let Some(tau) = tau {
        cfg.tau = tau;
    }
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    cfg.validate()?;
    let graph = read_memory_dump(memory, cfg.knn)?;
    let q = read_query(query)?;
    let result = retrieve(&graph, &q, &cfg)?;
    let ids: Vec<u64> = graph.nodes().iter().map(|n| n.node_id).collect();
    let doc = serde_json::json!({
        "selected": result.selected,
        "scores": ids.iter().zip(&result.scores).map(|(id, s)| serde_json::json!({"id": id, "score": s})).collect::<Vec<_>>(),
        "solver": result.solver,
        "iterations": result.iterations_used,
        "converged": result.converged,
    });
    write_or_print(out, &serde_json::to_string_pretty(&doc)?)
}

#[allow(clippy::too_many_arguments)]
fn train_gmp(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    windows: Option<usize>,
    epochs: Option<usize>,
    lr: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    clusters: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    let t = &mut cfg.training;
    if let Some(v) = epochs {
        t.epochs = v;
    }
    if let Some(v) = lr {
        t.learning_rate = v;
    }
    if let Some(v) = alpha {
        t.alpha = v;
    }
    if let Some(v) = beta {
        t.beta = v;
    }
    if let Some(v) = clusters {
        t.n_virtual_agents = v;
    }
    if let Some(v) = seed {
        t.seed = v;
    }
    t.validate()?;
    let data = load_dataset(dataset, windows.unwrap_or(cfg.t_max))?;
    let embedder = StubEmbedder::new(cfg.gmp.embed_dim, cfg.gmp.profile_dim);
    let set = build_training_set(&data, &cfg.training, &cfg.gmp, &embedder)?;
    let mut params = GmpParams::init(
        &cfg.gmp,
        &mut derive_rng(cfg.training.seed, stream::GMP_INIT),
    );
    params.leaky_slope = cfg.gmp.leaky_slope;
    let initial = teacher_forced_loss(&params, &set, cfg.training.alpha, cfg.training.beta)?;
    let losses = train(&mut params, &set, &cfg.training)?;
    save_checkpoint(&params, out)?;
    let summary = serde_json::json!({
        "virtual_agents": set.n_agents(),
        "windows": set.truth.ncols(),
        "epochs": cfg.training.epochs,
        "initial_loss": initial,
        "final_loss": losses.last().copied().unwrap_or(initial),
        "checkpoint": out,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn eval_metrics(simulated: &Path, truth: &Path, out: Option<&Path>) -> Result<()> {
    let sim = read_curve(simulated)?;
    let truth = read_curve(truth)?;
    let m = all_metrics(&sim, &truth)?;
    write_or_print(out, &serde_json::to_string_pretty(&m)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            truth,
            providers,
            fallback_stub,
            out,
        } => simulate(&config, truth.as_deref(), providers, fallback_stub, &out),
        Command::Retrieve {
            memory,
            query,
            knn,
            top_r,
            mu,
            nu,
            tau,
            max_iters,
            out,
        } => retrieve_cmd(
            &memory,
            &query,
            knn,
            top_r,
            mu,
            nu,
            tau,
            max_iters,
            out.as_deref(),
        ),
        Command::TrainGmp {
            dataset,
            out,
            config,
            windows,
            epochs,
            lr,
            alpha,
            beta,
            clusters,
            seed,
        } => train_gmp(
            &dataset,
            &out,
            config.as_deref(),
            windows,
            epochs,
            lr,
            alpha,
            beta,
            clusters,
            seed,
        ),
        Command::EvalMetrics {
            simulated,
            truth,
            out,
        } => eval_metrics(&simulated, &truth, out.as_deref()),
        Command::Bench {
            model,
            agents,
            steps,
            trials,
            gmp,
            seed,
            out,
        } => {
            if agents.is_empty() {
                bail!("--agents needs at least one size");
            }
            let report = bench_sequential(model, &agents, steps, trials, gmp, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
            println!("{text}");
            Ok(())
        }
    }
}
