use std::sync::Arc;
use std::time::Duration;

use diffmig_core::llm::{
    summarize_usage, ChatRequest, Clock, CostTable, HttpReply, LlmClient, LlmError, ManualClock,
    OpenAiProvider, RecordingTransport, RetryPolicy, TransportError, UsageLabels, UsageLedger,
};

const BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"```python\nx = 2\n```"}}],"usage":{"prompt_tokens":1000,"completion_tokens":200}}"#;

fn reply(status: u16, body: &str, retry_after: Option<u64>) -> Result<HttpReply, TransportError> {
    Ok(HttpReply {
        status,
        body: body.into(),
        retry_after: retry_after.map(Duration::from_secs),
    })
}

fn setup() -> (Arc<RecordingTransport>, Arc<ManualClock>, LlmClient) {
    let transport = Arc::new(RecordingTransport::ok(BODY));
    let provider = OpenAiProvider::new(
        "http://localhost:9/v1",
        Some("sk-x".into()),
        transport.clone(),
        Duration::from_secs(30),
    );
    let clock = Arc::new(ManualClock::new());
    let client = LlmClient::new(Arc::new(provider)).with_clock(clock.clone());
    (transport, clock, client)
}

#[test]
fn retries_follow_backoff_and_retry_after() {
    let (transport, clock, client) = setup();
    transport.push(reply(503, "overloaded", None));
    transport.push(Err(TransportError::Timeout));
    transport.push(reply(429, "slow down", Some(7)));
    let req = ChatRequest::new("gpt-4o-2024-08-06", "", "migrate this");
    let done = client
        .complete(&req, &UsageLabels::new("c", "aim-rc"))
        .unwrap();

    assert_eq!(done.retries, 3);
    assert_eq!(done.response.text, "```python\nx = 2\n```");
    assert_eq!(transport.request_count(), 4);
    assert_eq!(
        clock.sleeps(),
        [
            Duration::from_secs(2),
            Duration::from_secs(4),
            Duration::from_secs(7)
        ]
    );
    // every attempt sends the identical body
    let bodies: Vec<String> = transport.requests().into_iter().map(|r| r.body).collect();
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));

    let records = client.ledger().records();
    assert_eq!(records.len(), 1);
    // 1000 * 2.5 / 1e6 + 200 * 10 / 1e6
    assert!((records[0].cost_usd.unwrap() - 0.0045).abs() < 1e-12);
}

#[test]
fn persistent_failures_surface_after_max_retries() {
    let (transport, clock, client) = setup();
    let client = client.with_retry(RetryPolicy {
        max_retries: 2,
        ..RetryPolicy::default()
    });
    for _ in 0..5 {
        transport.push(reply(502, "bad gateway", None));
    }
    let err = client
        .complete(
            &ChatRequest::new("gpt-4o", "", "x"),
            &UsageLabels::new("c", "m"),
        )
        .unwrap_err();
    assert_eq!(
        err,
        LlmError::Server {
            status: 502,
            body: "bad gateway".into()
        }
    );
    assert_eq!(transport.request_count(), 3);
    assert_eq!(clock.sleeps().len(), 2);
    assert!(client.ledger().is_empty());
}

#[test]
fn auth_and_overflow_are_not_retried() {
    for (status, body) in [
        (401, "invalid api key"),
        (400, "This model's maximum context length is 128000 tokens"),
    ] {
        let (transport, clock, client) = setup();
        transport.push(reply(status, body, None));
        let err = client
            .complete(
                &ChatRequest::new("gpt-4o", "", "x"),
                &UsageLabels::new("c", "m"),
            )
            .unwrap_err();
        assert!(!err.is_transient(), "{err}");
        assert_eq!(transport.request_count(), 1);
        assert!(clock.sleeps().is_empty());
    }
}

#[test]
fn token_budget_spaces_requests() {
    let (transport, clock, client) = setup();
    // each prompt is ~250 heuristic tokens and each reply reports 200
    // completion tokens; a 600/min budget admits one request per minute
    let client = client.with_budget(Some(600));
    let req = ChatRequest::new("gpt-4o", "", "y".repeat(1000));
    for _ in 0..3 {
        client.complete(&req, &UsageLabels::new("c", "m")).unwrap();
    }
    assert_eq!(transport.request_count(), 3);
    assert!(!clock.sleeps().is_empty());
    assert!(clock.now() >= Duration::from_secs(60));
}

#[test]
fn ledger_roundtrip_and_summary() {
    let (_, _, client) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("usage.jsonl");
    let ledger = UsageLedger::default();
    let client = client.with_ledger(ledger.clone());
    for method in ["aim-rc", "aim-rc", "aim-nc"] {
        client
            .complete(
                &ChatRequest::new("gpt-4o", "", "x"),
                &UsageLabels::new("proj", method),
            )
            .unwrap();
    }
    ledger.save_jsonl(&path).unwrap();
    let loaded = UsageLedger::load_jsonl(&path).unwrap();
    assert_eq!(loaded, ledger.records());
    let rows = summarize_usage(&loaded, &CostTable::openai_defaults());
    assert_eq!(rows.len(), 2);
    let rc = rows.iter().find(|r| r.method == "aim-rc").unwrap();
    assert_eq!((rc.prompt_tokens, rc.completion_tokens), (2000, 400));
    assert!((rc.cost_usd.unwrap() - 0.009).abs() < 1e-12);
}
