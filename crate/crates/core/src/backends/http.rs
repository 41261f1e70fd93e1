//! Blocking JSON-over-HTTP client with per-call timeout, bounded retry with
//! exponential backoff, and a cap on concurrent requests.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const API_KEY_ENV: &str = "SELFCORR_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub url: String,
    /// Per-attempt timeout; the whole call is also bounded by
    /// `timeout_ms * attempts`.
    pub timeout_ms: u64,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            url: String::new(),
            timeout_ms: 10_000,
            attempts: 3,
            backoff_ms: 200,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HttpError {
    #[error("endpoint unavailable after {attempts} attempt(s): {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct JsonClient {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: Gate,
}

enum Attempt<R> {
    Done(R),
    Retry(String),
    Fatal(HttpError),
}

impl JsonClient {
    pub fn new(cfg: HttpConfig) -> Result<Self, HttpError> {
        if cfg.url.is_empty() {
            return Err(HttpError::Unavailable {
                attempts: 0,
                last: "no endpoint URL configured".into(),
            });
        }
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| HttpError::Unavailable {
                attempts: 0,
                last: e.to_string(),
            })?;
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        let limit = cfg.max_in_flight.max(1);
        Ok(JsonClient {
            cfg,
            client,
            api_key,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn attempt<T: Serialize, R: DeserializeOwned>(&self, body: &T, timeout: Duration) -> Attempt<R> {
        let _permit = self.gate.acquire();
        let mut req = self.client.post(&self.cfg.url).timeout(timeout).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 || status.as_u16() == 408 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !status.is_success() {
            return Attempt::Fatal(HttpError::Unavailable {
                attempts: 1,
                last: format!("HTTP {status}"),
            });
        }
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match serde_json::from_str(&text) {
            Ok(r) => Attempt::Done(r),
            Err(e) => Attempt::Fatal(HttpError::Malformed(e.to_string())),
        }
    }

    /// POSTs `body` and decodes the JSON reply.
    pub fn post<T: Serialize, R: DeserializeOwned>(&self, body: &T) -> Result<R, HttpError> {
        let attempts = self.cfg.attempts.max(1);
        let per_call = Duration::from_millis(self.cfg.timeout_ms.max(1));
        let deadline = Instant::now() + per_call * attempts;
        let mut last = String::new();
        for attempt in 0..attempts {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(HttpError::Unavailable {
                    attempts: attempt,
                    last,
                });
            }
            match self.attempt(body, per_call.min(remaining)) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(HttpError::Unavailable { last, .. }) => {
                    return Err(HttpError::Unavailable {
                        attempts: attempt + 1,
                        last,
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
            if attempt + 1 < attempts {
                let backoff = Duration::from_millis(self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16)));
                let remaining = deadline.saturating_duration_since(Instant::now());
                thread::sleep(backoff.min(remaining));
            }
        }
        Err(HttpError::Unavailable { attempts, last })
    }
}
