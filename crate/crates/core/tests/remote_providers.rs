mod common;

use std::sync::Arc;
use std::time::Duration;

use common::mock::{MockServer, Reply};
use hybridsim_core::config::{ProviderConfig, ProviderKind, RemoteConfig};
use hybridsim_core::providers::{
    network_request_count, GenerationRequest, Generator, KeywordIndex, PromptTemplates,
    ProviderBundle, ProviderError, RemoteClient, RemoteGenerator, RemoteScorer, Scorer,
};
use hybridsim_core::rng::seeded_rng;

fn remote(url: &str, timeout_secs: f64) -> RemoteConfig {
    RemoteConfig {
        endpoint: url.into(),
        api_key_env: "HYBRIDSIM_TEST_UNSET_KEY".into(),
        timeout_secs,
        max_attempts: 3,
        backoff_base_ms: 1,
        ..RemoteConfig::default()
    }
}

fn scorer(server: &MockServer, timeout_secs: f64) -> RemoteScorer {
    let client = Arc::new(RemoteClient::new(&remote(&server.url, timeout_secs)).unwrap());
    RemoteScorer::new(client, PromptTemplates::default(), "the levy")
}

#[test]
fn numeric_reply_is_parsed() {
    let server = MockServer::start(vec![Reply::Content("0.7".into())]);
    let before = network_request_count();
    assert_eq!(scorer(&server, 5.0).score("some post").unwrap(), 0.7);
    assert_eq!(server.hits(), 1);
    assert!(network_request_count() > before);
}

#[test]
fn garbage_three_times_is_a_parse_error() {
    let server = MockServer::start(vec![Reply::Content("I think it's good".into())]);
    let err = scorer(&server, 5.0).score("some post").unwrap_err();
    assert!(matches!(err, ProviderError::Parse(_)), "{err:?}");
    assert_eq!(server.hits(), 3);
}

#[test]
fn garbage_then_number_recovers_on_retry() {
    let server = MockServer::start(vec![
        Reply::Content("hmm".into()),
        Reply::Content("-0.25".into()),
    ]);
    assert_eq!(scorer(&server, 5.0).score("x").unwrap(), -0.25);
    assert_eq!(server.hits(), 2);
}

#[test]
fn slow_reply_is_a_timeout() {
    let server = MockServer::start(vec![Reply::Delayed(
        Duration::from_millis(1500),
        "0.1".into(),
    )]);
    let err = scorer(&server, 0.3).score("x").unwrap_err();
    assert!(matches!(err, ProviderError::Timeout(_)), "{err:?}");
}

#[test]
fn server_error_and_refused_connection_are_network_errors() {
    let server = MockServer::start(vec![Reply::Status(500)]);
    let err = scorer(&server, 5.0).score("x").unwrap_err();
    assert!(matches!(err, ProviderError::Network(_)), "{err:?}");

    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", closed.local_addr().unwrap());
    drop(closed);
    let client = Arc::new(RemoteClient::new(&remote(&url, 2.0)).unwrap());
    let err = RemoteScorer::new(client, PromptTemplates::default(), "t")
        .score("x")
        .unwrap_err();
    assert!(matches!(err, ProviderError::Network(_)), "{err:?}");
}

#[test]
fn empty_endpoint_is_a_config_error() {
    assert!(matches!(
        RemoteClient::new(&remote("", 1.0)),
        Err(ProviderError::Config(_))
    ));
}

#[test]
fn generator_returns_trimmed_text() {
    let server = MockServer::start(vec![Reply::Content("  Fares are too high.  ".into())]);
    let client = Arc::new(RemoteClient::new(&remote(&server.url, 5.0)).unwrap());
    let generator = RemoteGenerator::new(client, PromptTemplates::default());
    let req = GenerationRequest {
        persona: "a commuter",
        topic: "the levy",
        news: &[],
        memories: &[],
        inbox: &[],
    };
    let g = generator.generate(&req, &mut seeded_rng(0)).unwrap();
    assert_eq!(g.text, "Fares are too high.");
    assert_eq!(g.intended_opinion, None);
}

#[test]
fn fallback_bundle_uses_stub_after_failures() {
    let server = MockServer::start(vec![Reply::Content("not a number".into())]);
    let config = ProviderConfig {
        kind: ProviderKind::Remote,
        fallback_stub: true,
        remote: remote(&server.url, 5.0),
    };
    let bundle = ProviderBundle::from_config(
        &config,
        "the levy",
        Arc::new(KeywordIndex::default()),
        16,
        16,
    )
    .unwrap();
    let v = bundle.scorer.score("[stance:support] yes").unwrap();
    assert!((v - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(server.hits(), 3);

    let strict = ProviderConfig {
        fallback_stub: false,
        ..config
    };
    let bundle = ProviderBundle::from_config(
        &strict,
        "the levy",
        Arc::new(KeywordIndex::default()),
        16,
        16,
    )
    .unwrap();
    assert!(bundle.scorer.score("[stance:support] yes").is_err());
}
