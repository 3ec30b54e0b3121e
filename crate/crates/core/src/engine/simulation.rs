//! Step-synchronous simulation: grouping, core-agent text pipeline, batched
//! update of everyone else, and the aggregated trend.

use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::centrality::{core_centrality_report, CentralityTable, SAMPLED_STEPS};
use super::dataset::Dataset;
use super::network::{degree_stats, generate_network, DegreeStats};
use crate::config::{Grouping, RetrievalConfig, SimConfig};
use crate::edg::{neighborhood_entropy, partition_agents, partition_by_degree, Partition};
use crate::error::{Error, Result};
use crate::gmp::{load_checkpoint, GmpParams, GmpRuntime};
use crate::gom::{retrieve, MemoryGraph, MemoryNode, SolverKind};
use crate::metrics::{all_metrics, TrendCurve, TrendMetrics};
use crate::model::{
    clamp_opinion, AgentProfile, Message, Opinion, OpinionState, SocialGraph, NEWS_AUTHOR,
};
use crate::providers::stub::band_post;
use crate::providers::{GenerationRequest, KeywordIndex, ProviderBundle, RecalledMemory};
use crate::rng::{agent_step_rng, derive_rng, stream};

/// Result of one core agent's observe–recall–act cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreOutcome {
    pub agent: usize,
    pub text: String,
    /// Scorer output, recorded as the agent's opinion.
    pub opinion: f64,
    /// Retrieved memory ids, best first.
    pub retrieved: Vec<u64>,
    /// `None` when retrieval was skipped for lack of a query.
    pub solver: Option<SolverKind>,
}

/// Step-level context shared by all core agents.
#[derive(Debug, Clone, Copy)]
pub struct CoreContext<'a> {
    pub step: usize,
    pub seed: u64,
    pub topic: &'a str,
    pub news: &'a [String],
    pub retrieval: &'a RetrievalConfig,
}

fn normalized_mean(vectors: impl Iterator<Item = Vec<f64>>, dim: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; dim];
    let mut count = 0usize;
    for v in vectors {
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += x;
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0).then(|| sum.into_iter().map(|x| x / norm).collect())
}

/// Stores the inbox as memories, retrieves with the normalised mean inbox
/// embedding as query, generates a post and scores it.
pub fn core_agent_step(
    agent: usize,
    profile: &AgentProfile,
    inbox: &[Arc<Message>],
    memory: &mut MemoryGraph,
    providers: &ProviderBundle,
    ctx: &CoreContext<'_>,
) -> Result<CoreOutcome> {
    for msg in inbox {
        memory.insert(MemoryNode {
            node_id: memory.len() as u64,
            content: msg.content.clone(),
            content_embedding: msg.content_embedding.clone(),
            keyword_embedding: msg.keyword_embedding.clone(),
            opinion: msg.opinion,
            step_created: msg.step,
        })?;
    }
    let dim = providers.embedder.dim();
    let query = normalized_mean(inbox.iter().map(|m| m.content_embedding.clone()), dim);
    let (recalled, retrieved, solver) = match query {
        Some(q) if !memory.is_empty() => {
            let result = retrieve(memory, &q, ctx.retrieval)?;
            let recalled: Vec<RecalledMemory> = result
                .selected
                .iter()
                .map(|id| {
                    let node = memory.node(memory.index_of(*id).expect("selected ids exist"));
                    RecalledMemory {
                        content: node.content.clone(),
                        opinion: node.opinion.value(),
                    }
                })
                .collect();
            (recalled, result.selected, Some(result.solver))
        }
        _ => (Vec::new(), Vec::new(), None),
    };
    let request = GenerationRequest {
        persona: &profile.description,
        topic: ctx.topic,
        news: ctx.news,
        memories: &recalled,
        inbox,
    };
    let mut rng = agent_step_rng(ctx.seed, agent, ctx.step);
    let generated = providers.generator.generate(&request, &mut rng)?;
    let opinion = clamp_opinion(providers.scorer.score(&generated.text)?);
    Ok(CoreOutcome {
        agent,
        text: generated.text,
        opinion,
        retrieved,
        solver,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub step: usize,
    pub core_ids: Vec<usize>,
    pub mean_core_entropy: f64,
    pub mean_entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalStats {
    pub calls: usize,
    pub propagation: usize,
    pub fallback: usize,
}

/// Everything a run produces. Serialised as the JSON report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_agents: usize,
    pub t_max: usize,
    pub top_k_core: usize,
    pub seed: u64,
    /// Population-mean opinion per step.
    pub trend: TrendCurve,
    pub truth: Option<TrendCurve>,
    pub metrics: Option<TrendMetrics>,
    pub partitions: Vec<PartitionSummary>,
    pub centrality: CentralityTable,
    pub in_degree: DegreeStats,
    pub retrieval: RetrievalStats,
}

impl SimulationReport {
    /// Structural checks on the report.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.trend.len() != self.t_max {
            return bad(format!(
                "trend has {} entries, expected {}",
                self.trend.len(),
                self.t_max
            ));
        }
        if self.trend.values.iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return bad("trend value outside [-1, 1]".into());
        }
        if self.partitions.len() != self.t_max.saturating_sub(1) {
            return bad("one partition per executed step expected".into());
        }
        if self
            .partitions
            .iter()
            .any(|p| p.core_ids.len() != self.top_k_core)
        {
            return bad("core set size differs from K".into());
        }
        for row in &self.centrality.rows {
            if row.at_least_p80 + row.p60_to_p80 + row.p40_to_p60 + row.below_p40 != self.top_k_core
            {
                return bad(format!(
                    "centrality bands at step {} do not sum to K",
                    row.step
                ));
            }
            if !SAMPLED_STEPS.contains(&row.step) {
                return bad(format!("unexpected sampled step {}", row.step));
            }
        }
        if let (Some(truth), Some(_)) = (&self.truth, &self.metrics) {
            if truth.len() != self.t_max {
                return bad("truth length differs from t_max".into());
            }
        }
        Ok(())
    }
}

/// Checkpoint parameters when configured, otherwise a seeded initialisation.
pub fn initial_params(config: &SimConfig) -> Result<GmpParams> {
    let mut p = match &config.gmp.checkpoint {
        Some(path) => load_checkpoint(&config.gmp, path)?,
        None => GmpParams::init(&config.gmp, &mut derive_rng(config.seed, stream::GMP_INIT)),
    };
    p.leaky_slope = config.gmp.leaky_slope;
    Ok(p)
}

fn leaning(opinion: f64) -> &'static str {
    if opinion > 0.1 {
        "supportive"
    } else if opinion < -0.1 {
        "skeptical"
    } else {
        "curious"
    }
}

pub struct Simulation {
    config: SimConfig,
    graph: SocialGraph,
    providers: ProviderBundle,
    runtime: GmpRuntime,
    profiles: Vec<AgentProfile>,
    memories: Vec<MemoryGraph>,
    state: OpinionState,
    /// Latest post of every agent, delivered to neighbours next step.
    posts: Vec<Arc<Message>>,
    partitions: Vec<(usize, Partition)>,
    last_core: Vec<CoreOutcome>,
    retrieval_stats: RetrievalStats,
}

impl Simulation {
    /// Generates the network and the population. With a dataset, initial
    /// opinions are drawn from its first window and profiles are assigned
    /// from its users in turn; otherwise opinions are `Normal(0, 0.3)`.
    pub fn new(
        config: SimConfig,
        providers: ProviderBundle,
        params: GmpParams,
        dataset: Option<&Dataset>,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n_agents;
        let graph = generate_network(n, &mut derive_rng(config.seed, stream::NETWORK))?;
        let mut rng = derive_rng(config.seed, stream::INITIAL_OPINIONS);
        let initial: Vec<f64> = match dataset {
            Some(d) => {
                let pool = d.initial_opinions();
                (0..n)
                    .map(|_| pool[rng.random_range(0..pool.len())])
                    .collect()
            }
            None => {
                let normal = Normal::new(0.0, 0.3).expect("valid normal");
                (0..n)
                    .map(|_| clamp_opinion(normal.sample(&mut rng)))
                    .collect()
            }
        };
        let in_deg = graph.in_degrees();
        let out_deg = graph.out_degrees();
        let users = dataset.map(|d| d.users()).unwrap_or_default();
        let profiles = (0..n)
            .map(|i| {
                let (description, followers, following) = if users.is_empty() {
                    (
                        format!(
                            "A {} reader following {}.",
                            leaning(initial[i]),
                            config.topic
                        ),
                        in_deg[i] as u64,
                        out_deg[i] as u64,
                    )
                } else {
                    let u = &users[i % users.len()];
                    (u.description.clone(), u.follower_count, u.following_count)
                };
                AgentProfile {
                    agent_id: i,
                    profile_embedding: providers.embedder.embed_profile(&description),
                    description,
                    follower_count: followers,
                    following_count: following,
                }
            })
            .collect();
        Self::with_population(config, providers, params, graph, initial, profiles)
    }

    /// Uses a caller-supplied graph, initial column and profiles.
    pub fn with_population(
        config: SimConfig,
        providers: ProviderBundle,
        params: GmpParams,
        graph: SocialGraph,
        initial: Vec<f64>,
        profiles: Vec<AgentProfile>,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n_agents;
        if graph.n_agents() != n || initial.len() != n || profiles.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: graph.n_agents().min(initial.len()).min(profiles.len()),
            });
        }
        if providers.embedder.profile_dim() != config.gmp.profile_dim {
            return Err(Error::Dimension {
                expected: config.gmp.profile_dim,
                actual: providers.embedder.profile_dim(),
            });
        }
        let mut profile_matrix = Array2::zeros((n, config.gmp.profile_dim));
        for (i, p) in profiles.iter().enumerate() {
            if p.profile_embedding.len() != config.gmp.profile_dim {
                return Err(Error::Dimension {
                    expected: config.gmp.profile_dim,
                    actual: p.profile_embedding.len(),
                });
            }
            profile_matrix
                .row_mut(i)
                .assign(&ArrayView1::from(&p.profile_embedding));
        }
        let runtime = GmpRuntime::new(params, profile_matrix.view())?;
        let state = OpinionState::new(&initial);
        let mut sim = Simulation {
            memories: (0..n)
                .map(|_| MemoryGraph::new(config.retrieval.knn))
                .collect(),
            posts: Vec::new(),
            partitions: Vec::new(),
            last_core: Vec::new(),
            retrieval_stats: RetrievalStats::default(),
            config,
            graph,
            providers,
            runtime,
            profiles,
            state,
        };
        let column: Vec<f64> = sim.state.last_column().to_vec();
        sim.posts = (0..n).map(|i| sim.numeric_post(i, column[i], 0)).collect();
        Ok(sim)
    }

    fn make_message(
        &self,
        author: i64,
        content: String,
        opinion: f64,
        step: usize,
    ) -> Arc<Message> {
        Arc::new(Message {
            author_id: author,
            content_embedding: self.providers.embedder.embed(&content),
            keyword_embedding: self.providers.keyworder.keyword_embedding(&content),
            content,
            opinion: Opinion::new(opinion),
            step,
        })
    }

    fn numeric_post(&self, agent: usize, opinion: f64, step: usize) -> Arc<Message> {
        self.make_message(
            agent as i64,
            band_post(opinion, &self.config.topic),
            opinion,
            step,
        )
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn state(&self) -> &OpinionState {
        &self.state
    }

    pub fn profiles(&self) -> &[AgentProfile] {
        &self.profiles
    }

    pub fn memories(&self) -> &[MemoryGraph] {
        &self.memories
    }

    pub fn partitions(&self) -> &[(usize, Partition)] {
        &self.partitions
    }

    /// Core outcomes of the most recent step, in ascending agent order.
    pub fn last_core_outcomes(&self) -> &[CoreOutcome] {
        &self.last_core
    }

    /// Produces and commits the next column.
    pub fn step(&mut self) -> Result<()> {
        let t = self.state.step();
        let n = self.config.n_agents;
        let partition = match self.config.grouping {
            Grouping::Entropy => {
                let e = neighborhood_entropy(
                    &self.state,
                    &self.graph,
                    self.config.entropy_bins,
                    self.config.entropy_window,
                )?;
                partition_agents(&e, self.config.top_k_core)?
            }
            Grouping::Degree => partition_by_degree(&self.graph, self.config.top_k_core)?,
        };

        let news_texts: Vec<String> = self
            .config
            .news_schedule
            .iter()
            .filter(|item| item.step == t)
            .map(|item| item.text.clone())
            .collect();
        let mut news_msgs = Vec::with_capacity(news_texts.len());
        for text in &news_texts {
            let opinion = self.providers.scorer.score(text)?;
            news_msgs.push(self.make_message(NEWS_AUTHOR, text.clone(), opinion, t));
        }
        for i in 0..n {
            let inbox = &mut self.state.inbox[i];
            inbox.clear();
            inbox.extend(
                self.graph
                    .neighbors(i)
                    .iter()
                    .map(|&j| self.posts[j].clone()),
            );
            inbox.extend(news_msgs.iter().cloned());
        }

        let ctx = CoreContext {
            step: t,
            seed: self.config.seed,
            topic: &self.config.topic,
            news: &news_texts,
            retrieval: &self.config.retrieval,
        };
        let mut taken: Vec<(usize, MemoryGraph)> = partition
            .core_ids
            .iter()
            .map(|&a| {
                (
                    a,
                    std::mem::replace(&mut self.memories[a], MemoryGraph::new(0)),
                )
            })
            .collect();
        let providers = &self.providers;
        let profiles = &self.profiles;
        let inboxes = &self.state.inbox;
        let outcomes: Vec<Result<CoreOutcome>> = taken
            .par_iter_mut()
            .map(|(a, mem)| core_agent_step(*a, &profiles[*a], &inboxes[*a], mem, providers, &ctx))
            .collect();
        for (a, mem) in taken {
            self.memories[a] = mem;
        }
        let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

        let mut next = self
            .runtime
            .step(self.state.history().view(), &self.graph)?
            .to_vec();
        for o in &outcomes {
            next[o.agent] = o.opinion;
            if let Some(s) = o.solver {
                self.retrieval_stats.calls += 1;
                match s {
                    SolverKind::Propagation => self.retrieval_stats.propagation += 1,
                    SolverKind::ClosedFormFallback => self.retrieval_stats.fallback += 1,
                }
            }
        }
        let mut posts: Vec<Arc<Message>> = Vec::with_capacity(n);
        let mut core_iter = outcomes.iter().peekable();
        for (i, &value) in next.iter().enumerate() {
            match core_iter.peek() {
                Some(o) if o.agent == i => {
                    posts.push(self.make_message(i as i64, o.text.clone(), o.opinion, t));
                    core_iter.next();
                }
                _ => posts.push(self.numeric_post(i, value, t)),
            }
        }
        self.posts = posts;
        self.state.push_column(&next)?;
        self.partitions.push((t, partition));
        self.last_core = outcomes;
        Ok(())
    }

    /// Runs until the history has `t_max` columns and assembles the report.
    pub fn run(mut self, truth: Option<&TrendCurve>) -> Result<SimulationReport> {
        while self.state.step() < self.config.t_max {
            self.step()?;
        }
        Ok(self.report(truth))
    }

    pub fn report(&self, truth: Option<&TrendCurve>) -> SimulationReport {
        let trend = TrendCurve::new(self.state.mean_trend());
        let metrics = truth.and_then(|t| all_metrics(&trend, t).ok());
        let partitions = self
            .partitions
            .iter()
            .map(|(step, p)| {
                let core_e: f64 = p.core_ids.iter().map(|&a| p.entropy[a]).sum();
                PartitionSummary {
                    step: *step,
                    core_ids: p.core_ids.clone(),
                    mean_core_entropy: core_e / p.core_ids.len().max(1) as f64,
                    mean_entropy: p.entropy.iter().sum::<f64>() / p.entropy.len().max(1) as f64,
                }
            })
            .collect();
        SimulationReport {
            n_agents: self.config.n_agents,
            t_max: self.config.t_max,
            top_k_core: self.config.top_k_core,
            seed: self.config.seed,
            trend,
            truth: truth.cloned(),
            metrics,
            partitions,
            centrality: core_centrality_report(&self.partitions, &self.graph),
            in_degree: degree_stats(&self.graph.in_degrees()),
            retrieval: self.retrieval_stats.clone(),
        }
    }
}

/// Builds providers-independent pieces from `config` and runs to `t_max`.
/// The truth curve defaults to the dataset's when lengths agree.
pub fn run_simulation(
    config: &SimConfig,
    providers: ProviderBundle,
    params: Option<GmpParams>,
    dataset: Option<&Dataset>,
    truth: Option<&TrendCurve>,
) -> Result<SimulationReport> {
    let params = match params {
        Some(p) => p,
        None => initial_params(config)?,
    };
    let dataset_truth = dataset
        .filter(|d| d.t_max() == config.t_max)
        .map(|d| TrendCurve::new(d.truth.clone()));
    let truth = truth.cloned().or(dataset_truth);
    Simulation::new(config.clone(), providers, params, dataset)?.run(truth.as_ref())
}

/// Keyword rarity table from a dataset's posts, or empty.
pub fn keyword_index(dataset: Option<&Dataset>) -> KeywordIndex {
    match dataset {
        Some(d) => KeywordIndex::from_texts(d.records.iter().map(|r| r.tweet_content.as_str())),
        None => KeywordIndex::default(),
    }
}

/// One real per line.
pub fn write_curve(path: &Path, values: &[f64]) -> Result<()> {
    let mut text = String::new();
    for v in values {
        text.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One real per line; blank lines and `#` comments are skipped.
pub fn read_curve(path: &Path) -> Result<TrendCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("expected a real number, got {line:?}"),
        })?;
        values.push(v);
    }
    Ok(TrendCurve::new(values))
}
