//! Text services: embedding, keyword extraction, generation and stance
//! scoring.
//!
//! The stubs in [`stub`] are deterministic and never touch the network. The
//! [`remote`] client talks to a chat-completion endpoint for generation and
//! scoring; embeddings always come from the hashing stub.

pub mod remote;
pub mod stub;
mod templates;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ProviderConfig, ProviderKind};
use crate::model::Message;
use crate::rng::SimRng;

pub use remote::{RemoteClient, RemoteGenerator, RemoteScorer};
pub use stub::{
    lexicon_valence, stance_band, stub_embed, stub_generate, stub_keywords, stub_score, tokenize,
    KeywordIndex, StanceBand, StubEmbedder, StubGenerator, StubKeyworder, StubScorer,
};
pub use templates::PromptTemplates;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("unparseable response: {0}")]
    Parse(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

static NETWORK_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Number of outbound HTTP requests attempted by this process.
pub fn network_request_count() -> u64 {
    NETWORK_REQUESTS.load(Ordering::SeqCst)
}

pub(crate) fn record_network_request() {
    NETWORK_REQUESTS.fetch_add(1, Ordering::SeqCst);
}

pub trait Embedder: Send + Sync {
    /// Content embedding of width [`Embedder::dim`].
    fn embed(&self, text: &str) -> Vec<f64>;
    /// Profile embedding of width [`Embedder::profile_dim`].
    fn embed_profile(&self, text: &str) -> Vec<f64>;
    fn dim(&self) -> usize;
    fn profile_dim(&self) -> usize;
}

pub trait Keyworder: Send + Sync {
    fn keyword_embedding(&self, text: &str) -> Vec<f64>;
    /// Rarest tokens of `text`, most informative first.
    fn keywords(&self, text: &str) -> Vec<String>;
}

/// A memory handed to the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RecalledMemory {
    pub content: String,
    pub opinion: f64,
}

/// Everything a core agent perceives when it is asked to post.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub persona: &'a str,
    pub topic: &'a str,
    pub news: &'a [String],
    /// Retrieved memories, best first.
    pub memories: &'a [RecalledMemory],
    pub inbox: &'a [Arc<Message>],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub text: String,
    /// The opinion the generator aimed for, when it knows one.
    pub intended_opinion: Option<f64>,
}

pub trait Generator: Send + Sync {
    fn generate(
        &self,
        request: &GenerationRequest<'_>,
        rng: &mut SimRng,
    ) -> Result<Generated, ProviderError>;
}

pub trait Scorer: Send + Sync {
    /// Stance of `text` in `[-1, 1]`.
    fn score(&self, text: &str) -> Result<f64, ProviderError>;
}

/// Runs `primary` and answers with `fallback` whenever it fails.
pub struct WithFallback<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Generator, F: Generator> Generator for WithFallback<P, F> {
    fn generate(
        &self,
        request: &GenerationRequest<'_>,
        rng: &mut SimRng,
    ) -> Result<Generated, ProviderError> {
        self.primary
            .generate(request, rng)
            .or_else(|_| self.fallback.generate(request, rng))
    }
}

impl<P: Scorer, F: Scorer> Scorer for WithFallback<P, F> {
    fn score(&self, text: &str) -> Result<f64, ProviderError> {
        self.primary
            .score(text)
            .or_else(|_| self.fallback.score(text))
    }
}

#[derive(Clone)]
pub struct ProviderBundle {
    pub embedder: Arc<dyn Embedder>,
    pub keyworder: Arc<dyn Keyworder>,
    pub generator: Arc<dyn Generator>,
    pub scorer: Arc<dyn Scorer>,
}

impl ProviderBundle {
    /// Offline providers. `index` supplies token rarities for keywords.
    pub fn stub(index: Arc<KeywordIndex>, embed_dim: usize, profile_dim: usize) -> Self {
        ProviderBundle {
            embedder: Arc::new(StubEmbedder::new(embed_dim, profile_dim)),
            keyworder: Arc::new(StubKeyworder::new(index.clone(), embed_dim)),
            generator: Arc::new(StubGenerator::new(index)),
            scorer: Arc::new(StubScorer),
        }
    }

    pub fn from_config(
        config: &ProviderConfig,
        topic: &str,
        index: Arc<KeywordIndex>,
        embed_dim: usize,
        profile_dim: usize,
    ) -> Result<Self, ProviderError> {
        let mut bundle = Self::stub(index.clone(), embed_dim, profile_dim);
        if config.kind == ProviderKind::Stub {
            return Ok(bundle);
        }
        let templates = match &config.remote.template_dir {
            Some(dir) => PromptTemplates::load_dir(dir)?,
            None => PromptTemplates::default(),
        };
        let client = Arc::new(RemoteClient::new(&config.remote)?);
        let generator = RemoteGenerator::new(client.clone(), templates.clone());
        let scorer = RemoteScorer::new(client, templates, topic);
        if config.fallback_stub {
            bundle.generator = Arc::new(WithFallback {
                primary: generator,
                fallback: StubGenerator::new(index),
            });
            bundle.scorer = Arc::new(WithFallback {
                primary: scorer,
                fallback: StubScorer,
            });
        } else {
            bundle.generator = Arc::new(generator);
            bundle.scorer = Arc::new(scorer);
        }
        Ok(bundle)
    }
}
