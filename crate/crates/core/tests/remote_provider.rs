use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use teamup_core::embedding::{RemoteConfig, RemoteProvider, TextItem};
use teamup_core::{EmbedError, EmbeddingProvider};

#[derive(Debug, Clone)]
struct Seen {
    auth: Option<String>,
    body: String,
}

type Script = Box<dyn Fn(usize, &str) -> (u16, String) + Send>;

/// Serves one response per connection from `script(request_index, body)`.
fn mock_server(script: Script) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (i, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = Some(line["authorization:".len()..].trim().to_string());
                }
            }
            let mut body = vec![0u8; len];
            reader.read_exact(&mut body).unwrap();
            let body = String::from_utf8(body).unwrap();
            let (status, reply) = script(i, &body);
            log.lock().unwrap().push(Seen { auth, body });
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/embed"), seen)
}

fn vectors_for(body: &str, dim: usize) -> String {
    let texts: Vec<String> = serde_json::from_str(body).unwrap();
    let rows: Vec<Vec<f64>> = texts
        .iter()
        .map(|t| {
            let mut v = vec![0.0; dim];
            v[t.len() % dim] = 1.0;
            v[(t.len() + 1) % dim] = 0.5;
            v
        })
        .collect();
    serde_json::to_string(&rows).unwrap()
}

fn config(endpoint: String, dim: usize) -> RemoteConfig {
    RemoteConfig {
        endpoint,
        dimension: dim,
        batch_size: 64,
        cost_per_text: 0.0001,
        max_attempts: 3,
        backoff_base_ms: 1,
        timeout_secs: 5,
        ..RemoteConfig::default()
    }
}

fn items(n: usize) -> Vec<TextItem> {
    (0..n).map(|i| TextItem::plain(format!("text number {i}"))).collect()
}

#[test]
fn batches_are_chunked_and_counted() {
    let (url, seen) = mock_server(Box::new(|_, body| (200, vectors_for(body, 1536))));
    let p = RemoteProvider::with_token(config(url, 1536), "secret").unwrap();
    let out = p.embed_batch(&items(130)).unwrap();
    assert_eq!(out.len(), 130);
    assert!(out.iter().all(|v| v.dim() == 1536 && (v.norm() - 1.0).abs() < 1e-12));
    let seen = seen.lock().unwrap();
    // ceil(130 / 64) = 3
    assert_eq!(seen.len(), 3);
    let sizes: Vec<usize> = seen
        .iter()
        .map(|s| serde_json::from_str::<Vec<String>>(&s.body).unwrap().len())
        .collect();
    assert_eq!(sizes, vec![64, 64, 2]);
    assert!(seen.iter().all(|s| s.auth.as_deref() == Some("Bearer secret")));
    assert_eq!(p.texts_embedded(), 130);
    assert!((p.estimated_cost() - 0.013).abs() < 1e-12);
}

#[test]
fn wrong_dimension_is_rejected() {
    let (url, _) = mock_server(Box::new(|_, body| (200, vectors_for(body, 768))));
    let p = RemoteProvider::with_token(config(url, 1536), "t").unwrap();
    assert_eq!(
        p.embed_batch(&items(3)).unwrap_err(),
        EmbedError::DimensionMismatch {
            expected: 1536,
            actual: 768
        }
    );
    assert_eq!(p.texts_embedded(), 0);
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = mock_server(Box::new(|_, _| (401, "{}".into())));
    let p = RemoteProvider::with_token(config(url, 8), "bad").unwrap();
    assert!(matches!(p.embed_batch(&items(2)), Err(EmbedError::Auth(_))));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = mock_server(Box::new(|i, body| {
        if i < 2 {
            (503, "{}".into())
        } else {
            (200, vectors_for(body, 8))
        }
    }));
    let p = RemoteProvider::with_token(config(url, 8), "t").unwrap();
    assert_eq!(p.embed_batch(&items(5)).unwrap().len(), 5);
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert_eq!(p.requests_sent(), 3);
}

#[test]
fn rate_limit_exhausts_attempts() {
    let (url, seen) = mock_server(Box::new(|_, _| (429, "{}".into())));
    let p = RemoteProvider::with_token(config(url, 8), "t").unwrap();
    assert_eq!(
        p.embed_batch(&items(1)).unwrap_err(),
        EmbedError::RateLimited { attempts: 3 }
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn wrong_vector_count_is_a_provider_error() {
    let (url, _) = mock_server(Box::new(|_, _| (200, "[[1.0, 0.0]]".into())));
    let p = RemoteProvider::with_token(config(url, 2), "t").unwrap();
    assert!(matches!(p.embed_batch(&items(2)), Err(EmbedError::Provider(_))));
}

#[test]
fn network_failure_after_retries() {
    // Bind then drop so the port refuses connections.
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let p = RemoteProvider::with_token(config(format!("http://127.0.0.1:{port}/embed"), 8), "t").unwrap();
    assert!(matches!(p.embed_batch(&items(1)), Err(EmbedError::Network(_))));
    assert_eq!(p.requests_sent(), 3);
}

#[test]
fn config_errors() {
    assert!(matches!(
        RemoteProvider::with_token(RemoteConfig::default(), "t"),
        Err(EmbedError::Config(_))
    ));
    let cfg = RemoteConfig {
        endpoint: "http://localhost/x".into(),
        token_env: "TEAMUP_TEST_TOKEN_THAT_IS_NOT_SET".into(),
        ..RemoteConfig::default()
    };
    assert!(matches!(RemoteProvider::from_config(cfg), Err(EmbedError::Config(_))));
    let p = RemoteProvider::with_token(
        RemoteConfig {
            endpoint: "http://localhost/x".into(),
            ..RemoteConfig::default()
        },
        "t",
    )
    .unwrap();
    assert_eq!(p.embed_batch(&[TextItem::plain("  ")]).unwrap_err(), EmbedError::EmptyText);
}
