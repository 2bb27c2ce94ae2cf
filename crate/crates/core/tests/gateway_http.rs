//! Remote gateway against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;

use tabprobe::gateway::{
    Backend, CompletionRequest, Gateway, RemoteClient, RemoteConfig, ResponseCache,
};
use tabprobe::prompt::PromptMessages;
use tabprobe::Error;

const OK_BODY: &str = r#"{"choices":[{"message":{"content":"A"},
  "logprobs":{"content":[{"token":"A","logprob":-0.2,
    "top_logprobs":[{"token":"A","logprob":-0.2},{"token":"B","logprob":-1.7}]}]}}]}"#;

#[derive(Default)]
struct Seen {
    auth: Vec<String>,
    bodies: Vec<Value>,
}

struct Server {
    url: String,
    seen: Arc<Mutex<Seen>>,
    peak: Arc<AtomicUsize>,
}

/// Serves `script(i)` as (status, body) for the i-th request.
fn serve(script: impl Fn(usize) -> (u16, String) + Send + Sync + 'static, delay: Duration) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let peak = Arc::new(AtomicUsize::new(0));
    let current = Arc::new(AtomicUsize::new(0));
    let count = Arc::new(AtomicUsize::new(0));
    let script = Arc::new(script);
    {
        let seen = seen.clone();
        let peak = peak.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (seen, peak, current, count, script) =
                    (seen.clone(), peak.clone(), current.clone(), count.clone(), script.clone());
                thread::spawn(move || {
                    let now = current.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    handle(stream, &seen, &count, &*script, delay);
                    current.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
    }
    Server { url, seen, peak }
}

fn handle(
    stream: TcpStream,
    seen: &Mutex<Seen>,
    count: &AtomicUsize,
    script: &dyn Fn(usize) -> (u16, String),
    delay: Duration,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0;
    let mut auth = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            match name.to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap(),
                "authorization" => auth = value.trim().to_string(),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    {
        let mut s = seen.lock().unwrap();
        s.auth.push(auth);
        s.bodies.push(serde_json::from_slice(&body).unwrap_or(Value::Null));
    }
    thread::sleep(delay);
    let (status, text) = script(count.fetch_add(1, Ordering::SeqCst));
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
}

fn gateway(url: &str, max_attempts: u32, cache: ResponseCache, max_in_flight: usize) -> Gateway {
    let client = RemoteClient::new(RemoteConfig {
        endpoint: url.to_string(),
        api_key: "sk-test".into(),
        model: "test-model".into(),
        max_attempts,
        base_backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(10),
    });
    Gateway::new(Backend::Remote(client), cache, max_in_flight)
}

fn request(user: &str) -> CompletionRequest {
    CompletionRequest {
        model: "test-model".into(),
        messages: PromptMessages {
            system: "Answer with A or B.".into(),
            user: user.into(),
        },
        temperature: 0.0,
        max_tokens: 8,
        top_logprobs: Some(20),
    }
}

#[test]
fn successful_call_sends_auth_and_logprob_fields() {
    let server = serve(|_| (200, OK_BODY.into()), Duration::ZERO);
    let gw = gateway(&server.url, 3, ResponseCache::memory(), 4);
    let c = gw.complete(&request("row 1")).unwrap();
    assert_eq!(c.text, "A");
    assert_eq!(c.first_token_logprobs.len(), 2);
    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.auth, vec!["Bearer sk-test".to_string()]);
    assert_eq!(seen.bodies[0]["model"], "test-model");
    assert_eq!(seen.bodies[0]["logprobs"], true);
    assert_eq!(seen.bodies[0]["top_logprobs"], 20);
}

#[test]
fn unauthorized_fails_without_retry() {
    let server = serve(|_| (401, r#"{"error":"bad key"}"#.into()), Duration::ZERO);
    let gw = gateway(&server.url, 5, ResponseCache::memory(), 1);
    assert!(matches!(gw.complete(&request("x")), Err(Error::Auth(_))));
    assert_eq!(server.seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn rate_limit_is_retried_then_succeeds() {
    let server = serve(|i| if i < 2 { (429, "{}".into()) } else { (200, OK_BODY.into()) }, Duration::ZERO);
    let gw = gateway(&server.url, 4, ResponseCache::memory(), 1);
    assert_eq!(gw.complete(&request("x")).unwrap().text, "A");
    assert_eq!(server.seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn rate_limit_exhaustion_is_reported() {
    let server = serve(|_| (429, "{}".into()), Duration::ZERO);
    let gw = gateway(&server.url, 3, ResponseCache::memory(), 1);
    assert!(matches!(
        gw.complete(&request("x")),
        Err(Error::RateLimitExhausted { attempts: 3 })
    ));
    assert_eq!(server.seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn malformed_body_is_an_error() {
    let server = serve(|_| (200, r#"{"choices":[{"message":{"content":"A"}}]}"#.into()), Duration::ZERO);
    let gw = gateway(&server.url, 2, ResponseCache::memory(), 1);
    assert!(matches!(gw.complete(&request("x")), Err(Error::MalformedResponse(_))));
}

#[test]
fn disk_cache_hit_sends_no_traffic() {
    let dir = tempfile::tempdir().unwrap();
    let server = serve(|_| (200, OK_BODY.into()), Duration::ZERO);
    let first = gateway(&server.url, 2, ResponseCache::disk(dir.path()).unwrap(), 2);
    let a = first.complete(&request("cached")).unwrap();
    assert!(!a.from_cache);

    let second = gateway(&server.url, 2, ResponseCache::disk(dir.path()).unwrap(), 2);
    let b = second.complete(&request("cached")).unwrap();
    assert!(b.from_cache);
    assert_eq!(a.first_token_logprobs, b.first_token_logprobs);
    assert_eq!(server.seen.lock().unwrap().bodies.len(), 1);
    let stats = second.stats();
    assert_eq!((stats.hits, stats.upstream_calls), (1, 0));
}

#[test]
fn in_flight_requests_are_bounded() {
    let server = serve(|_| (200, OK_BODY.into()), Duration::from_millis(40));
    let gw = gateway(&server.url, 1, ResponseCache::memory(), 2);
    thread::scope(|s| {
        for i in 0..8 {
            let gw = &gw;
            s.spawn(move || gw.complete(&request(&format!("row {i}"))).unwrap());
        }
    });
    assert_eq!(server.seen.lock().unwrap().bodies.len(), 8);
    assert!(gw.peak_in_flight() <= 2);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}
