//! The HTTP client against a one-shot local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use dagreason::client::{ClientError, CompletionClient, CompletionRequest, HttpClient, HttpConfig};

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: serde_json::Value,
}

/// Serves one request with `status` and `body`, returning what it received.
fn serve_once(status: &'static str, body: &'static str) -> (String, thread::JoinHandle<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut request_line = String::new();
        reader.read_line(&mut request_line).unwrap();
        let mut headers = Vec::new();
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end().to_owned();
            if line.is_empty() {
                break;
            }
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            headers.push(line);
        }
        let mut raw = vec![0; length];
        reader.read_exact(&mut raw).unwrap();
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
        Captured {
            request_line: request_line.trim_end().to_owned(),
            headers,
            body: serde_json::from_slice(&raw).unwrap(),
        }
    });
    (base, handle)
}

fn client(base: String, key: Option<&str>) -> HttpClient {
    let config = HttpConfig {
        base_url: base,
        api_key_env: "UNUSED".into(),
        timeout: Duration::from_secs(10),
    };
    HttpClient::new(&config, key.map(str::to_owned)).unwrap()
}

#[test]
fn sends_chat_completion_and_reads_first_choice() {
    let (base, server) = serve_once(
        "200 OK",
        r#"{"choices":[{"message":{"role":"assistant","content":"Thus, the answer is 1"}},{"message":{"content":"second"}}]}"#,
    );
    let c = client(format!("{base}/"), Some("sk-test"));
    let mut request = CompletionRequest::greedy("What is the value of aaa?", "tiny-model");
    request.max_tokens = 64;
    assert_eq!(c.complete(&request).unwrap(), "Thus, the answer is 1");
    let seen = server.join().unwrap();
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert!(seen.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
    assert_eq!(
        seen.body,
        serde_json::json!({
            "model": "tiny-model",
            "messages": [{"role": "user", "content": "What is the value of aaa?"}],
            "temperature": 0.0,
            "max_tokens": 64
        })
    );
    assert!(!format!("{c:?}").contains("sk-test"));
}

#[test]
fn status_errors_carry_retryability() {
    let (base, server) = serve_once("503 Service Unavailable", r#"{"error":"busy"}"#);
    let err = client(base, None).complete(&CompletionRequest::greedy("q", "m")).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, ClientError::Status { status: 503, .. }));
    assert!(err.is_retryable());

    let (base, server) = serve_once("400 Bad Request", r#"{"error":"nope"}"#);
    let err = client(base, None).complete(&CompletionRequest::greedy("q", "m")).unwrap_err();
    let seen = server.join().unwrap();
    assert!(!seen.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization")));
    assert!(matches!(err, ClientError::Status { status: 400, .. }));
    assert!(!err.is_retryable());
}

#[test]
fn malformed_bodies_are_distinct() {
    let (base, server) = serve_once("200 OK", r#"{"choices":[]}"#);
    let err = client(base, None).complete(&CompletionRequest::greedy("q", "m")).unwrap_err();
    server.join().unwrap();
    assert!(matches!(err, ClientError::MalformedBody(_)));
    assert!(!err.is_retryable());
}

#[test]
fn unreachable_endpoint_is_transport() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = client(format!("http://127.0.0.1:{port}"), None)
        .complete(&CompletionRequest::greedy("q", "m"))
        .unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert!(err.is_retryable());
}
