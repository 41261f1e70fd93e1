//! Minimal in-process HTTP/1.1 server for exercising the remote backends
//! without a network service.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

use crate::valuefn::{AttributeScorer, MockLexiconScorer};

#[derive(Clone, Debug, PartialEq)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl MockRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> Option<Value> {
        serde_json::from_str(&self.body).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl MockResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        MockResponse {
            status: 200,
            body: body.into(),
            delay: Duration::ZERO,
        }
    }

    pub fn json(v: &Value) -> Self {
        Self::ok(v.to_string())
    }

    pub fn status(status: u16) -> Self {
        MockResponse {
            status,
            body: String::new(),
            delay: Duration::ZERO,
        }
    }
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

/// Serves every request with `handler` until dropped.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
    accept: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> std::io::Result<Self>
    where
        F: Fn(&MockRequest) -> MockResponse + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        let accept = {
            let (stop, hits, in_flight, peak) = (stop.clone(), hits.clone(), in_flight.clone(), peak.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = conn else { continue };
                    let (handler, hits, in_flight, peak) = (handler.clone(), hits.clone(), in_flight.clone(), peak.clone());
                    thread::spawn(move || {
                        let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(now, Ordering::SeqCst);
                        let _ = serve(stream, &*handler, &hits);
                        in_flight.fetch_sub(1, Ordering::SeqCst);
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            stop,
            hits,
            in_flight,
            peak,
            accept: Some(accept),
        })
    }

    /// A completions endpoint: `reply(prompt, n)` gives the choice texts.
    pub fn completions<F>(reply: F) -> std::io::Result<Self>
    where
        F: Fn(&str, usize) -> Vec<String> + Send + Sync + 'static,
    {
        Self::start(move |req| {
            let Some(body) = req.json() else {
                return MockResponse::status(400);
            };
            let prompt = body["prompt"].as_str().unwrap_or_default();
            let n = body["n"].as_u64().unwrap_or(1) as usize;
            let choices: Vec<Value> = reply(prompt, n).into_iter().map(|t| json!({ "text": t })).collect();
            MockResponse::json(&json!({ "choices": choices }))
        })
    }

    /// A scorer endpoint backed by a lexicon scorer.
    pub fn scorer(scorer: MockLexiconScorer) -> std::io::Result<Self> {
        Self::start(move |req| {
            let Some(body) = req.json() else {
                return MockResponse::status(400);
            };
            let text = crate::seq::tokenize(body["text"].as_str().unwrap_or_default());
            match scorer.score(&text) {
                Ok(s) => MockResponse::json(&serde_json::to_value(s).expect("plain scores")),
                Err(_) => MockResponse::status(500),
            }
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Requests answered so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Largest number of connections handled at once.
    pub fn peak_concurrency(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve(stream: TcpStream, handler: &Handler, hits: &AtomicUsize) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or("/").to_owned();
    if method.is_empty() {
        return Ok(());
    }
    let mut headers = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    let req = MockRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    };
    let resp = handler(&req);
    hits.fetch_add(1, Ordering::SeqCst);
    if !resp.delay.is_zero() {
        thread::sleep(resp.delay);
    }
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        resp.status,
        reason(resp.status),
        resp.body.len(),
        resp.body
    )?;
    out.flush()
}
