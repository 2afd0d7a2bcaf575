//! The sidecar client against a minimal in-process HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use repocomplete_core::corpus::{Language, SourceFile};
use repocomplete_core::kb::build_kb;
use repocomplete_core::providers::{
    CompletionModel, Embedder, HttpSidecar, MockLlm, Providers, RuleSummarizer, Summarizer,
};
use serde_json::{json, Value};

type Handler = dyn Fn(&str, &Value, usize) -> (u16, String) + Send + Sync;

struct FakeSidecar {
    url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
}

impl FakeSidecar {
    fn start(handler: Box<Handler>) -> FakeSidecar {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let path = request_line
                    .split_whitespace()
                    .nth(1)
                    .unwrap_or("")
                    .to_string();
                let mut length = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = line.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let attempt = {
                    let mut log = log.lock().unwrap();
                    log.push((path.clone(), body.clone()));
                    log.iter().filter(|(p, _)| *p == path).count()
                };
                let (status, text) = handler(&path, &body, attempt);
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        FakeSidecar { url, requests }
    }

    fn client(&self, retries: u32) -> HttpSidecar {
        HttpSidecar::new(&self.url, Duration::from_secs(5), retries, 10).unwrap()
    }

    fn count(&self, path: &str) -> usize {
        self.requests
            .lock()
            .unwrap()
            .iter()
            .filter(|(p, _)| p == path)
            .count()
    }
}

fn well_behaved(path: &str, body: &Value, _: usize) -> (u16, String) {
    assert_eq!(body["v"], 1);
    match path {
        "/embed" => {
            let n = body["texts"].as_array().unwrap().len();
            let vectors: Vec<Value> = (0..n).map(|i| json!([3.0, 4.0, i as f64 * 0.0])).collect();
            (200, json!({"dim": 3, "vectors": vectors}).to_string())
        }
        "/summarize" => {
            let code = body["code"].as_str().unwrap();
            (
                200,
                json!({"docstring": format!("Summary of {} chars.", code.chars().count())})
                    .to_string(),
            )
        }
        "/complete" => (200, json!({"text": "a(b) + c(d) + e(f)\nnext"}).to_string()),
        _ => (404, json!({"error": "not_found"}).to_string()),
    }
}

#[test]
fn protocol_round_trip() {
    let server = FakeSidecar::start(Box::new(well_behaved));
    let client = server.client(0);
    let v = client.embed(&["x".into(), "y".into()]).unwrap();
    assert_eq!(v.len(), 2);
    assert!((v[0][0] - 0.6).abs() < 1e-12 && (v[0][1] - 0.8).abs() < 1e-12);
    assert_eq!(Embedder::dim(&client), Some(3));

    let doc = client
        .summarize("def f(x):\n    return x * 2\n", Language::Python)
        .unwrap();
    assert_eq!(doc, "Summary of 10 chars.");
    let req = server.requests.lock().unwrap()[1].clone();
    assert_eq!(req.1["language"], "python");

    assert_eq!(
        client.complete("p", 128).unwrap(),
        "a(b) + c(d) + e(f)\nnext"
    );
    assert_eq!(client.complete("p", 4).unwrap(), "a(b)");
    assert_eq!(server.requests.lock().unwrap()[2].1["max_new_tokens"], 128);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeSidecar::start(Box::new(|_: &str, _: &Value, _| {
        (413, json!({"error": "too_long"}).to_string())
    }));
    let err = server
        .client(3)
        .summarize("x", Language::Python)
        .unwrap_err();
    assert!(err.to_string().contains("too_long"), "{err}");
    assert_eq!(server.count("/summarize"), 1);
}

#[test]
fn server_errors_are_retried() {
    let server = FakeSidecar::start(Box::new(|path: &str, body: &Value, attempt| {
        if attempt < 3 {
            (503, json!({"error": "busy"}).to_string())
        } else {
            well_behaved(path, body, attempt)
        }
    }));
    assert!(server.client(1).complete("p", 8).is_err());
    assert_eq!(server.count("/complete"), 2);
    assert!(server.client(1).complete("p", 8).is_ok());
}

#[test]
fn malformed_or_inconsistent_responses_fail() {
    let server = FakeSidecar::start(Box::new(|path: &str, _: &Value, attempt| {
        match (path, attempt) {
            ("/embed", 1) => (
                200,
                json!({"dim": 3, "vectors": [[1.0, 0.0, 0.0]]}).to_string(),
            ),
            ("/embed", _) => (200, json!({"dim": 2, "vectors": [[1.0, 0.0]]}).to_string()),
            _ => (200, "not json".to_string()),
        }
    }));
    let client = server.client(0);
    client.embed(&["a".into()]).unwrap();
    assert!(
        client.embed(&["b".into()]).is_err(),
        "dimension changed between calls"
    );
    assert!(client.complete("p", 8).is_err());
}

#[test]
fn unreachable_endpoint_is_an_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let client = HttpSidecar::new(&url, Duration::from_millis(500), 1, 100).unwrap();
    assert!(client.embed(&["a".into()]).is_err());
}

#[test]
fn kb_builds_through_the_sidecar() {
    let server = FakeSidecar::start(Box::new(well_behaved));
    let sidecar = Arc::new(server.client(0));
    let providers = Providers {
        embedder: sidecar.clone(),
        summarizer: Arc::new(RuleSummarizer),
        llm: Arc::new(MockLlm::default()),
    };
    let files = vec![SourceFile::from_text(
        "m.py",
        Language::Python,
        "def f(a):\n    return a\n\n\ndef g():\n    return 1\n".to_string(),
    )];
    let kb = build_kb(&files, &[], &providers).unwrap();
    assert_eq!(kb.header.dim, 3);
    assert_eq!(kb.len(), 2);
    for e in &kb.entries {
        assert!(!e.degraded);
        assert!(e
            .ue_embeddings
            .iter()
            .all(|v| (v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9));
    }
    assert_eq!(RuleSummarizer.id(), "rule");
}
