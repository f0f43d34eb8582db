use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use wolf_arena::backend::{
    complete_with_retry, ApiBackend, ApiConfig, BackendError, ChatBackend, ChatRequest, RetryPolicy,
};

#[derive(Debug, Clone)]
struct Seen {
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves canned (status, body) responses in order, one per connection.
fn fake_server(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(": ").unwrap_or((line, ""));
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.parse().unwrap(),
                    "authorization" => auth = Some(v.to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen { auth, body: serde_json::from_slice(&buf).unwrap_or_default() });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn backend(url: String, key_env: &str) -> ApiBackend {
    ApiBackend::new(ApiConfig {
        url,
        api_key_env: key_env.to_string(),
        model: "test-model".into(),
        timeout: Duration::from_secs(5),
    })
    .unwrap()
}

#[test]
fn posts_chat_request_and_reads_first_choice() {
    std::env::set_var("WOLF_TEST_KEY_A", "sk-123");
    let (url, seen) = fake_server(vec![(200, ok_body("I vote for Agent[02]."))]);
    let b = backend(url, "WOLF_TEST_KEY_A");
    let resp = b.complete(&ChatRequest::new("system text", "user text")).unwrap();
    assert_eq!(resp.text, "I vote for Agent[02].");
    assert_eq!(resp.backend_id, "api:test-model");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-123"));
    let body = &seen[0].body;
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], "system text");
    assert_eq!(body["messages"][1]["content"], "user text");
    assert!((body["temperature"].as_f64().unwrap() - 0.7).abs() < 1e-6);
    assert_eq!(body["max_tokens"], 512);
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = fake_server(vec![(503, "{}".into()), (500, "{}".into()), (200, ok_body("fine"))]);
    let b = backend(url, "WOLF_TEST_KEY_UNSET");
    let policy = RetryPolicy { retries: 2, base_delay: Duration::from_millis(1) };
    let resp = complete_with_retry(&b, &ChatRequest::new("s", "u"), policy).unwrap();
    assert_eq!(resp.text, "fine");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0].auth.is_none());
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, seen) = fake_server(vec![(401, "{}".into()), (200, ok_body("never"))]);
    let b = backend(url, "WOLF_TEST_KEY_UNSET");
    let err = complete_with_retry(&b, &ChatRequest::new("s", "u"), RetryPolicy::immediate()).unwrap_err();
    assert!(matches!(err, BackendError::Auth(_)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_replies_are_reported() {
    let (url, _) = fake_server(vec![(200, "{\"choices\": []}".into()), (404, "nope".into())]);
    let b = backend(url, "WOLF_TEST_KEY_UNSET");
    assert!(matches!(b.complete(&ChatRequest::new("s", "u")), Err(BackendError::BadReply(_))));
    assert!(matches!(b.complete(&ChatRequest::new("s", "u")), Err(BackendError::BadReply(_))));
}

#[test]
fn empty_prompt_is_rejected_before_sending() {
    let b = backend("http://127.0.0.1:9/unused".into(), "WOLF_TEST_KEY_UNSET");
    assert!(matches!(b.complete(&ChatRequest::new("s", "")), Err(BackendError::Precondition(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let b = backend(format!("http://127.0.0.1:{port}/x"), "WOLF_TEST_KEY_UNSET");
    let err = b.complete(&ChatRequest::new("s", "u")).unwrap_err();
    assert!(err.is_retryable(), "{err:?}");
}
