//! Configuration documents. Every struct deserialises from TOML with
//! defaults for omitted keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    /// Top-K neighbourhood entropy, recomputed every step.
    #[default]
    Entropy,
    /// Static top-K follower count (ablation).
    Degree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub step: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_agents: usize,
    pub t_max: usize,
    pub top_k_core: usize,
    pub entropy_bins: usize,
    pub entropy_window: usize,
    pub grouping: Grouping,
    pub seed: u64,
    /// Topic phrase used in stance templates and scorer prompts.
    pub topic: String,
    /// Optional dataset of records; initial opinions and profiles come from it.
    pub dataset: Option<PathBuf>,
    pub news_schedule: Vec<NewsItem>,
    pub retrieval: RetrievalConfig,
    pub gmp: GmpConfig,
    pub training: TrainingConfig,
    pub providers: ProviderConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_agents: 1000,
            t_max: 30,
            top_k_core: 100,
            entropy_bins: 10,
            entropy_window: 1,
            grouping: Grouping::Entropy,
            seed: 0,
            topic: "the event".into(),
            dataset: None,
            news_schedule: Vec::new(),
            retrieval: RetrievalConfig::default(),
            gmp: GmpConfig::default(),
            training: TrainingConfig::default(),
            providers: ProviderConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative paths inside the document resolve against its directory.
        let base = path.parent().unwrap_or(Path::new("."));
        let paths = [
            cfg.dataset.as_mut(),
            cfg.gmp.checkpoint.as_mut(),
            cfg.providers.remote.template_dir.as_mut(),
        ];
        for p in paths.into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("n_agents must be positive".into()));
        }
        if self.t_max == 0 {
            return Err(Error::Config("t_max must be positive".into()));
        }
        if self.top_k_core == 0 || self.top_k_core > self.n_agents {
            return Err(Error::Config(format!(
                "top_k_core must satisfy 0 < K <= n_agents, got K = {}",
                self.top_k_core
            )));
        }
        if self.entropy_bins < 2 {
            return Err(Error::Config("entropy_bins must be >= 2".into()));
        }
        if self.entropy_window == 0 {
            return Err(Error::Config("entropy_window must be >= 1".into()));
        }
        self.retrieval.validate()?;
        self.gmp.validate()?;
        self.training.validate()?;
        Ok(())
    }
}

/// Memory-retrieval hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Correction strength, `>= 1`.
    pub nu: f64,
    /// Keyword match threshold.
    pub tau: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub top_r: usize,
    pub degree_epsilon: f64,
    /// Neighbours linked per inserted memory.
    pub knn: usize,
    /// Largest graph solved densely when propagation diverges; larger graphs
    /// use preconditioned conjugate gradients on the same linear system.
    pub dense_fallback_limit: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            lambda1: 0.5,
            lambda2: 0.5,
            lambda3: 0.5,
            nu: 1.0,
            tau: 0.9,
            max_iters: 20,
            residual_tol: 1e-8,
            top_r: 5,
            degree_epsilon: 1e-6,
            knn: 10,
            dense_fallback_limit: 256,
        }
    }
}

impl RetrievalConfig {
    /// Propagation step size `lambda2 / (1 - lambda2 + lambda3)`.
    pub fn mu(&self) -> f64 {
        self.lambda2 / (1.0 - self.lambda2 + self.lambda3)
    }

    /// Sets `mu` by moving `lambda2` (and `lambda1 = 1 - lambda2`) with
    /// `lambda3` held fixed.
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.lambda2 = mu * (1.0 + self.lambda3) / (1.0 + mu);
        self.lambda1 = 1.0 - self.lambda2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if (self.lambda1 + self.lambda2 - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "propagation requires lambda1 + lambda2 = 1, got {}",
                self.lambda1 + self.lambda2
            )));
        }
        if !(self.nu >= 1.0) {
            return Err(Error::Config(format!("nu must be >= 1, got {}", self.nu)));
        }
        if !(self.degree_epsilon > 0.0) {
            return Err(Error::Config("degree_epsilon must be positive".into()));
        }
        if self.top_r == 0 {
            return Err(Error::Config("top_r must be positive".into()));
        }
        Ok(())
    }
}

/// Architecture of the graph-attention updater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmpConfig {
    /// Profile embedding width `d_b`.
    pub profile_dim: usize,
    /// Message/memory embedding width `d_e`.
    pub embed_dim: usize,
    /// MLP hidden and output width.
    pub mlp_width: usize,
    /// Number of attention layers; the last one always has one head and one output.
    pub depth: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub leaky_slope: f64,
    /// Parameter checkpoint; random initialisation when absent.
    pub checkpoint: Option<PathBuf>,
}

impl Default for GmpConfig {
    fn default() -> Self {
        GmpConfig {
            profile_dim: 768,
            embed_dim: 384,
            mlp_width: 64,
            depth: 2,
            heads: 4,
            head_dim: 8,
            leaky_slope: 0.2,
            checkpoint: None,
        }
    }
}

impl GmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.heads == 0 || self.head_dim == 0 || self.mlp_width == 0 {
            return Err(Error::Config("gmp dimensions must be positive".into()));
        }
        if self.profile_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Config(
                "embedding dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Number of leading dataset windows used for training.
    pub train_window: usize,
    pub n_virtual_agents: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.9,
            beta: 0.1,
            learning_rate: 1e-3,
            epochs: 100,
            train_window: 10,
            n_virtual_agents: 1000,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha and beta must be non-negative".into()));
        }
        if self.train_window < 2 {
            return Err(Error::Config("train_window must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Replace any remote failure with the stub result.
    pub fallback_stub: bool,
    pub remote: RemoteConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            fallback_stub: false,
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Chat-completion endpoint URL.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Total attempts per request.
    pub max_attempts: usize,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
    /// Directory overriding the built-in prompt templates.
    pub template_dir: Option<PathBuf>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            api_key_env: "LLM_API_KEY".into(),
            model: "gpt-4o-mini".into(),
            timeout_secs: 30.0,
            max_attempts: 3,
            backoff_base_ms: 200,
            max_in_flight: 8,
            template_dir: None,
        }
    }
}
