#![cfg(feature = "http")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use effchan::harness::openai::{OpenAiChat, OpenAiConfig, OpenAiEmbeddings};
use effchan::harness::{
    fetch_embeddings, AgentConfig, BackendError, Decoding, FixedClock, Harness, Layer,
    RetryPolicy, Task, WorkflowSpec,
};
use serde_json::Value;

struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Serves `replies` (status, body) in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path: request_line.split_whitespace().nth(1).unwrap().to_string(),
                auth,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn chat_reply(text: &str) -> (u16, String) {
    (
        200,
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string(),
    )
}

fn config(url: &str) -> OpenAiConfig {
    OpenAiConfig {
        base_url: url.to_string(),
        api_key: Some("sk-test".into()),
        timeout: Duration::from_secs(5),
    }
}

fn task() -> Task {
    Task {
        id: "t1".into(),
        question: "What is 6*7?".into(),
        choices: None,
        answer: Some("42".into()),
    }
}

#[test]
fn vote_over_http_retries_server_errors() {
    let (url, seen) = serve(vec![
        (503, "busy".into()),
        chat_reply("Working... Answer: 42"),
    ]);
    let chat = OpenAiChat::new(config(&url))
        .unwrap()
        .with_model_override(Some("served-model".into()));
    let clock = FixedClock::default();
    let mut h = Harness::new(&chat, &clock, 0);
    h.retry = RetryPolicy::no_delay(2);
    let agents = vec![AgentConfig::new("m", None, Decoding::default())];
    let t = h
        .run_workflow(&task(), Layer::L1, &agents, WorkflowSpec::vote(1))
        .unwrap();
    assert_eq!(t.calls[0].attempts, 2);
    assert_eq!(t.calls[0].extracted_answer.as_deref(), Some("42"));
    assert!(t.is_correct());

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].path, "/v1/chat/completions");
    assert_eq!(seen[1].auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen[1].body["model"], "served-model");
    assert_eq!(seen[1].body["messages"][0]["role"], "system");
    assert_eq!(seen[1].body["messages"][1]["role"], "user");
    assert_eq!(seen[1].body["max_tokens"], 1024);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![(400, "bad request".into()), chat_reply("unused")]);
    let chat = OpenAiChat::new(config(&url)).unwrap();
    let clock = FixedClock::default();
    let mut h = Harness::new(&chat, &clock, 0);
    h.retry = RetryPolicy::no_delay(3);
    let agents = vec![AgentConfig::new("m", None, Decoding::default())];
    let t = h
        .run_workflow(&task(), Layer::L1, &agents, WorkflowSpec::vote(1))
        .unwrap();
    assert_eq!(t.calls[0].attempts, 1);
    assert!(t.calls[0].error.as_deref().unwrap().contains("400"));
    assert!(!t.valid);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn embeddings_are_batched_and_reordered() {
    let first = serde_json::json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0]},
        {"index": 0, "embedding": [1.0, 0.0]},
    ]});
    let second = serde_json::json!({"data": [{"index": 0, "embedding": [0.5, 0.5]}]});
    let (url, seen) = serve(vec![(200, first.to_string()), (200, second.to_string())]);
    let emb = OpenAiEmbeddings::new(config(&url), "embedder", 2).unwrap();
    let texts: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let out = fetch_embeddings(&texts, &emb, &RetryPolicy::no_delay(0)).unwrap();
    assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], serde_json::json!(["a", "b"]));
    assert_eq!(seen[1].body["input"], serde_json::json!(["c"]));
    assert_eq!(seen[1].body["model"], "embedder");
}

#[test]
fn malformed_payload_is_a_protocol_error() {
    let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    let emb = OpenAiEmbeddings::new(config(&url), "e", 8).unwrap();
    let (url2, _) = serve(vec![(200, "not json".into())]);
    let emb2 = OpenAiEmbeddings::new(config(&url2), "e", 8).unwrap();
    let texts = vec!["x".to_string()];
    for e in [&emb, &emb2] {
        match fetch_embeddings(&texts, e, &RetryPolicy::no_delay(0)) {
            Err(effchan::harness::HarnessError::Backend(BackendError::Protocol(_))) => {}
            other => panic!("expected protocol error, got {other:?}"),
        }
    }
}
