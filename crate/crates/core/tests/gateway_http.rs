use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use toc_core::gateway::{
    ChatRequest, EndpointConfig, Gateway, GatewayError, Message, ModelRole, OpenAiBackend,
    RetryPolicy,
};

struct Captured {
    auth: String,
    body: Value,
}

/// Serves one scripted status per connection and records what it received.
fn serve(statuses: Vec<u16>) -> (String, Arc<Mutex<Vec<Captured>>>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let handle = thread::spawn(move || {
        for status in statuses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured {
                auth,
                body: serde_json::from_slice(&body).unwrap(),
            });
            let payload = if status == 200 {
                r#"{"choices":[{"message":{"role":"assistant","content":"[0, 2]"}}]}"#
            } else {
                r#"{"error":"slow down"}"#
            };
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            )
            .unwrap();
        }
    });
    (url, seen, handle)
}

fn gateway(url: &str, max_attempts: u32, sleeps: Arc<Mutex<Vec<Duration>>>) -> Gateway {
    let backend = OpenAiBackend::new(
        Some("secret".into()),
        None,
        Some(EndpointConfig {
            endpoint: url.into(),
            model: "llm-test".into(),
        }),
        "file:///v/{video_id}.mp4",
        Duration::from_secs(5),
    )
    .unwrap();
    let retry = RetryPolicy {
        max_attempts,
        ..RetryPolicy::default()
    };
    Gateway::new(Box::new(backend), retry, 2)
        .with_sleeper(Arc::new(move |d| sleeps.lock().unwrap().push(d)))
}

#[test]
fn retries_rate_limits_then_succeeds() {
    let (url, seen, server) = serve(vec![429, 429, 200]);
    let sleeps = Arc::new(Mutex::new(Vec::new()));
    let gw = gateway(&url, 5, sleeps.clone());
    let mut req = ChatRequest::new(ModelRole::Llm, Message::user("pick clips"));
    req.seed = Some(3);
    assert_eq!(gw.complete(&req).unwrap(), "[0, 2]");
    server.join().unwrap();

    assert_eq!(gw.calls(), 3);
    assert_eq!(
        *sleeps.lock().unwrap(),
        vec![Duration::from_millis(500), Duration::from_millis(1000)]
    );
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(seen[0].auth, "Bearer secret");
    assert_eq!(seen[0].body["model"], "llm-test");
    assert_eq!(seen[0].body["seed"], 3);
    assert_eq!(seen[0].body["temperature"], 0.0);
    assert_eq!(seen[0].body["messages"][0]["role"], "user");
}

#[test]
fn gives_up_after_max_attempts() {
    let (url, _, server) = serve(vec![503, 503]);
    let gw = gateway(&url, 2, Arc::new(Mutex::new(Vec::new())));
    let req = ChatRequest::new(ModelRole::Llm, Message::user("x"));
    let err = gw.complete(&req).unwrap_err();
    server.join().unwrap();
    assert!(
        matches!(err, GatewayError::BackendUnavailable { attempts: 2, .. }),
        "{err}"
    );
}

#[test]
fn unauthorized_is_not_retried() {
    let (url, _, server) = serve(vec![401]);
    let gw = gateway(&url, 5, Arc::new(Mutex::new(Vec::new())));
    let err = gw
        .complete(&ChatRequest::new(ModelRole::Llm, Message::user("x")))
        .unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, GatewayError::Auth(_)));
    assert_eq!(gw.calls(), 1);
}

#[test]
fn missing_role_endpoint_fails_without_network() {
    let gw = gateway(
        "http://127.0.0.1:9/unused",
        5,
        Arc::new(Mutex::new(Vec::new())),
    );
    let err = gw
        .complete(&ChatRequest::new(ModelRole::Mllm, Message::user("x")))
        .unwrap_err();
    assert!(matches!(
        err,
        GatewayError::BackendUnavailable { attempts: 1, .. }
    ));
}

#[test]
fn missing_api_key_fails_before_connecting() {
    let err = OpenAiBackend::new(None, None, None, "", Duration::from_secs(1))
        .err()
        .unwrap();
    assert!(err.to_string().contains("TOC_API_KEY"), "{err}");
}
