//! Deterministic offline providers.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::{Embedder, Generated, GenerationRequest, Generator, Keyworder, ProviderError, Scorer};
use crate::model::clamp_opinion;
use crate::rng::SimRng;

/// Lowercased alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn fnv1a(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn hash_into(out: &mut [f64], token: &str, weight: f64) {
    let h = fnv1a(token);
    let bucket = (h % out.len() as u64) as usize;
    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
    out[bucket] += sign * weight;
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Signed feature hashing of word tokens, L2-normalised. Empty text (or a
/// complete hash cancellation) gives the zero vector.
pub fn stub_embed(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if dim == 0 {
        return v;
    }
    for token in tokenize(text) {
        hash_into(&mut v, &token, 1.0);
    }
    normalize(v)
}

/// Document frequencies over a corpus, used to rank tokens by rarity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeywordIndex {
    doc_freq: HashMap<String, u64>,
    n_docs: u64,
}

impl KeywordIndex {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index = KeywordIndex::default();
        for text in texts {
            index.add_document(text);
        }
        index
    }

    pub fn add_document(&mut self, text: &str) {
        let mut tokens = tokenize(text);
        tokens.sort();
        tokens.dedup();
        for t in tokens {
            *self.doc_freq.entry(t).or_insert(0) += 1;
        }
        self.n_docs += 1;
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn doc_freq(&self, token: &str) -> u64 {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    /// Inverse document frequency `ln((1 + N) / (1 + df))`.
    pub fn idf(&self, token: &str) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq(token) as f64)).ln()
    }

    /// Up to `k` distinct tokens of `text`, rarest first, ties by lexicographic order.
    pub fn top_keywords(&self, text: &str, k: usize) -> Vec<String> {
        let mut tokens = tokenize(text);
        tokens.sort();
        tokens.dedup();
        tokens.sort_by(|a, b| {
            self.doc_freq(a)
                .cmp(&self.doc_freq(b))
                .then_with(|| a.cmp(b))
        });
        tokens.truncate(k);
        tokens
    }
}

const KEYWORDS_PER_TEXT: usize = 3;

/// Hash embedding of the three rarest tokens, each weighted by its inverse
/// document frequency, L2-normalised. With no rarity signal (every weight
/// zero) the tokens count equally.
pub fn stub_keywords(text: &str, dim: usize, index: &KeywordIndex) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    if dim == 0 {
        return v;
    }
    let top = index.top_keywords(text, KEYWORDS_PER_TEXT);
    let mut weights: Vec<f64> = top.iter().map(|t| index.idf(t)).collect();
    if weights.iter().all(|w| *w <= 0.0) {
        weights.iter_mut().for_each(|w| *w = 1.0);
    }
    for (t, w) in top.iter().zip(&weights) {
        hash_into(&mut v, t, *w);
    }
    normalize(v)
}

const POSITIVE: &[&str] = &[
    "agree",
    "approve",
    "benefit",
    "best",
    "excellent",
    "fair",
    "favor",
    "glad",
    "good",
    "great",
    "happy",
    "hope",
    "like",
    "love",
    "positive",
    "praise",
    "proud",
    "right",
    "support",
    "supportive",
    "trust",
    "welcome",
    "win",
];
const NEGATIVE: &[&str] = &[
    "against",
    "angry",
    "awful",
    "bad",
    "condemn",
    "disagree",
    "distrust",
    "fail",
    "fear",
    "harm",
    "hate",
    "negative",
    "oppose",
    "reject",
    "sad",
    "skeptical",
    "terrible",
    "unfair",
    "worse",
    "worst",
    "wrong",
];

/// Mean valence (+1/−1) of lexicon words in `text`; 0 when none occur.
pub fn lexicon_valence(text: &str) -> f64 {
    let (mut sum, mut hits) = (0.0, 0usize);
    for t in tokenize(text) {
        if POSITIVE.contains(&t.as_str()) {
            sum += 1.0;
            hits += 1;
        } else if NEGATIVE.contains(&t.as_str()) {
            sum -= 1.0;
            hits += 1;
        }
    }
    if hits == 0 {
        0.0
    } else {
        clamp_opinion(sum / hits as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StanceBand {
    Oppose,
    Neutral,
    Support,
}

impl StanceBand {
    pub fn label(self) -> &'static str {
        match self {
            StanceBand::Oppose => "oppose",
            StanceBand::Neutral => "neutral",
            StanceBand::Support => "support",
        }
    }

    /// Representative opinion of the band.
    pub fn value(self) -> f64 {
        match self {
            StanceBand::Oppose => -2.0 / 3.0,
            StanceBand::Neutral => 0.0,
            StanceBand::Support => 2.0 / 3.0,
        }
    }

    pub fn marker(self) -> String {
        format!("[stance:{}]", self.label())
    }

    fn parse(label: &str) -> Option<Self> {
        match label {
            "oppose" => Some(StanceBand::Oppose),
            "neutral" => Some(StanceBand::Neutral),
            "support" => Some(StanceBand::Support),
            _ => None,
        }
    }
}

pub fn stance_band(opinion: f64) -> StanceBand {
    if opinion > 1.0 / 3.0 {
        StanceBand::Support
    } else if opinion < -1.0 / 3.0 {
        StanceBand::Oppose
    } else {
        StanceBand::Neutral
    }
}

/// Post text used by agents whose opinion is already numeric.
pub fn band_post(opinion: f64, topic: &str) -> String {
    format!(
        "{} my view on {topic} is {:+.3}",
        stance_band(opinion).marker(),
        clamp_opinion(opinion)
    )
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

const OPENERS: [[&str; 3]; 3] = [
    [
        "I cannot accept where",
        "Honestly worried about",
        "Not convinced by the push on",
    ],
    [
        "Still weighing both sides of",
        "Reading more before judging",
        "Mixed feelings about",
    ],
    [
        "Glad to see progress on",
        "Standing with everyone on",
        "This is the right call on",
    ],
];

/// `clamp(0.6·mean(memory opinions) + 0.3·mean(inbox opinions) + 0.1·bias)`
/// with the profile bias taken from the persona's lexicon valence, rendered as
/// a stance-band post mentioning the best memory's keyword.
pub fn stub_generate(
    request: &GenerationRequest<'_>,
    index: &KeywordIndex,
    rng: &mut SimRng,
) -> Generated {
    let mem = mean(request.memories.iter().map(|m| m.opinion));
    let inbox = mean(request.inbox.iter().map(|m| m.opinion.value()));
    let bias = lexicon_valence(request.persona);
    let opinion = clamp_opinion(0.6 * mem + 0.3 * inbox + 0.1 * bias);
    let band = stance_band(opinion);
    let row = match band {
        StanceBand::Oppose => 0,
        StanceBand::Neutral => 1,
        StanceBand::Support => 2,
    };
    let opener = OPENERS[row][rng.random_range(0..OPENERS[row].len())];
    let mut text = format!("{} {opener} {}", band.marker(), request.topic);
    if let Some(top) = request.memories.first() {
        if let Some(kw) = index.top_keywords(&top.content, 1).first() {
            text.push_str(" #");
            text.push_str(kw);
        }
    }
    Generated {
        text,
        intended_opinion: Some(opinion),
    }
}

/// Band marker when present, otherwise the lexicon valence.
pub fn stub_score(text: &str) -> f64 {
    if let Some(start) = text.find("[stance:") {
        let rest = &text[start + "[stance:".len()..];
        if let Some(end) = rest.find(']') {
            if let Some(band) = StanceBand::parse(&rest[..end]) {
                return band.value();
            }
        }
    }
    lexicon_valence(text)
}

#[derive(Debug, Clone, Copy)]
pub struct StubEmbedder {
    dim: usize,
    profile_dim: usize,
}

impl StubEmbedder {
    pub fn new(dim: usize, profile_dim: usize) -> Self {
        StubEmbedder { dim, profile_dim }
    }
}

impl Embedder for StubEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        stub_embed(text, self.dim)
    }

    fn embed_profile(&self, text: &str) -> Vec<f64> {
        stub_embed(text, self.profile_dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn profile_dim(&self) -> usize {
        self.profile_dim
    }
}

#[derive(Debug, Clone)]
pub struct StubKeyworder {
    index: Arc<KeywordIndex>,
    dim: usize,
}

impl StubKeyworder {
    pub fn new(index: Arc<KeywordIndex>, dim: usize) -> Self {
        StubKeyworder { index, dim }
    }
}

impl Keyworder for StubKeyworder {
    fn keyword_embedding(&self, text: &str) -> Vec<f64> {
        stub_keywords(text, self.dim, &self.index)
    }

    fn keywords(&self, text: &str) -> Vec<String> {
        self.index.top_keywords(text, KEYWORDS_PER_TEXT)
    }
}

#[derive(Debug, Clone)]
pub struct StubGenerator {
    index: Arc<KeywordIndex>,
}

impl StubGenerator {
    pub fn new(index: Arc<KeywordIndex>) -> Self {
        StubGenerator { index }
    }
}

impl Generator for StubGenerator {
    fn generate(
        &self,
        request: &GenerationRequest<'_>,
        rng: &mut SimRng,
    ) -> Result<Generated, ProviderError> {
        Ok(stub_generate(request, &self.index, rng))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StubScorer;

impl Scorer for StubScorer {
    fn score(&self, text: &str) -> Result<f64, ProviderError> {
        Ok(stub_score(text))
    }
}
