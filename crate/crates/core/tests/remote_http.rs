use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use kgqa_core::llm::{complete, ChatPrompt, LlmError, PerplexityProvider, RemoteBackend, RemoteConfig, Role};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Minimal HTTP/1.1 server answering each request with the next scripted
/// response.
fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for ((status, body), stream) in responses.into_iter().zip(listener.incoming()) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let (mut len, mut auth) = (0, None);
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (name, value) = h.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => len = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { path, auth, body: serde_json::from_slice(&buf).unwrap_or(Value::Null) });
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn backend(base: String) -> RemoteBackend {
    let mut cfg = RemoteConfig::new(base, "test-model");
    cfg.backoff = Duration::from_millis(5);
    cfg.max_retries = 2;
    cfg.api_key = Some("sk-test".into());
    cfg.timeout = Duration::from_secs(5);
    RemoteBackend::new(cfg)
}

fn prompt() -> ChatPrompt {
    let mut p = ChatPrompt { system: "be brief".into(), ..Default::default() };
    p.push(Role::User, "Question: hi");
    p
}

fn chat_ok(text: &str) -> String {
    json!({"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 7, "completion_tokens": 2}}).to_string()
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (base, seen) = serve(vec![(503, "busy".into()), (429, "slow down".into()), (200, chat_ok("Done: x"))]);
    let c = complete(&prompt(), &backend(base)).unwrap();
    assert_eq!(c.text, "Done: x");
    assert_eq!((c.usage.prompt_tokens, c.usage.completion_tokens), (7, 2));
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen[0].body["temperature"], 0);
    assert_eq!(seen[0].body["messages"][0], json!({"role": "system", "content": "be brief"}));
    assert_eq!(seen[0].body["messages"][1], json!({"role": "user", "content": "Question: hi"}));
}

#[test]
fn gives_up_after_the_retry_limit() {
    let (base, seen) = serve(vec![(500, "a".into()), (502, "b".into()), (500, "c".into()), (200, chat_ok("late"))]);
    let err = complete(&prompt(), &backend(base)).unwrap_err();
    assert!(matches!(err, LlmError::Transport { attempts: 3, .. }), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = serve(vec![(400, "bad request".into()), (200, chat_ok("never"))]);
    let err = complete(&prompt(), &backend(base)).unwrap_err();
    assert_eq!(err.to_string(), "backend returned status 400: bad request");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn over_budget_prompt_sends_nothing() {
    let (base, seen) = serve(vec![(200, chat_ok("x"))]);
    let mut cfg = RemoteConfig::new(base, "m");
    cfg.context_budget = 5;
    let err = complete(&prompt(), &RemoteBackend::new(cfg)).unwrap_err();
    assert!(matches!(err, LlmError::BudgetExceeded { budget: 5, .. }));
    assert!(seen.lock().unwrap().is_empty());
}

#[test]
fn perplexity_scores_only_the_continuation() {
    // context "ab" is two chars; tokens at offsets 0,1 belong to it
    let lp = json!({"choices": [{"logprobs": {
        "tokens": ["a", "b", "c", "d"],
        "token_logprobs": [null, -5.0, -1.0, -3.0],
        "text_offset": [0, 1, 2, 3]
    }}]});
    let (base, seen) = serve(vec![(200, lp.to_string())]);
    let ppl = backend(base).perplexity("ab", "cd").unwrap();
    assert!((ppl - 2.0f64.exp()).abs() < 1e-12);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/completions");
    assert_eq!(seen[0].body["prompt"], "abcd");
    assert_eq!(seen[0].body["echo"], true);
}

#[test]
fn malformed_success_body_is_a_provider_error() {
    let (base, _) = serve(vec![(200, "{\"choices\": []}".into())]);
    assert!(matches!(complete(&prompt(), &backend(base)), Err(LlmError::Provider(_))));
}
