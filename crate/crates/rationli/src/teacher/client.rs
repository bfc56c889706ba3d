//! Teacher endpoint: a chat-completions HTTP service, or a recorded fixture
//! for fully offline runs.
//!
//! Transport failures, rate limits, and server errors are retried with
//! exponential backoff and jitter; client-side rejections (bad key, bad
//! request) fail immediately. The fixture variant serves responses by cache
//! key, so a previously written response cache doubles as a fixture file.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use crate::teacher::prompt::PromptRequest;

/// Environment variable holding the bearer token for HTTP endpoints.
pub const API_KEY_ENV: &str = "TEACHER_API_KEY";

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(4),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt` (1-based): exponential growth,
    /// capped, then scaled by a random factor in [0.5, 1.0) so parallel
    /// workers do not retry in lockstep.
    fn backoff(&self, attempt: u32) -> Duration {
        let exp = self.initial_delay.as_secs_f64() * 2f64.powi(attempt.saturating_sub(1) as i32);
        let capped = exp.min(self.max_delay.as_secs_f64());
        let jitter = rand::thread_rng().gen_range(0.5..1.0);
        Duration::from_secs_f64(capped * jitter)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("api key missing: set {API_KEY_ENV}")]
    MissingApiKey,
    #[error("teacher request failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("teacher rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed teacher response: {0}")]
    MalformedResponse(String),
    #[error("fixture has no response for cache key {cache_key}")]
    FixtureMiss { cache_key: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: malformed fixture entry: {message}")]
    MalformedFixture {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

enum Attempt {
    Retryable(String),
    Fatal(TeacherError),
}

pub struct HttpTeacher {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    retry: RetryPolicy,
}

pub struct FixtureTeacher {
    responses: HashMap<String, String>,
}

/// Where rationale requests go. Shared by reference across worker threads.
pub enum TeacherEndpoint {
    Http(HttpTeacher),
    Fixture(FixtureTeacher),
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct ChatCompletion {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

fn estimate_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl TeacherEndpoint {
    pub fn http(url: impl Into<String>, model: impl Into<String>) -> TeacherEndpoint {
        TeacherEndpoint::Http(HttpTeacher {
            client: reqwest::blocking::Client::new(),
            url: url.into(),
            model: model.into(),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_retry(self, retry: RetryPolicy) -> TeacherEndpoint {
        match self {
            TeacherEndpoint::Http(http) => TeacherEndpoint::Http(HttpTeacher { retry, ..http }),
            fixture => fixture,
        }
    }

    pub fn fixture(responses: HashMap<String, String>) -> TeacherEndpoint {
        TeacherEndpoint::Fixture(FixtureTeacher { responses })
    }

    /// Load a fixture from JSONL rows carrying `cache_key` and
    /// `response_text`; extra fields (e.g. a cache's `prompt_text` and
    /// `timestamp`) are ignored.
    pub fn fixture_from_path(path: impl AsRef<Path>) -> Result<TeacherEndpoint, TeacherError> {
        #[derive(Deserialize)]
        struct FixtureEntry {
            cache_key: String,
            response_text: String,
        }
        let path = path.as_ref();
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TeacherError::Io {
            path: display.clone(),
            source,
        })?;
        let mut responses = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry =
                serde_json::from_str(line).map_err(|e| TeacherError::MalformedFixture {
                    path: display.clone(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            responses.insert(entry.cache_key, entry.response_text);
        }
        Ok(TeacherEndpoint::fixture(responses))
    }

    /// Issue one completion. Fixture lookups are instant; HTTP calls retry
    /// transient failures per the endpoint's policy.
    pub fn complete(&self, request: &PromptRequest) -> Result<TeacherResponse, TeacherError> {
        match self {
            TeacherEndpoint::Fixture(fixture) => {
                let text = fixture.responses.get(&request.cache_key).ok_or_else(|| {
                    TeacherError::FixtureMiss {
                        cache_key: request.cache_key.clone(),
                    }
                })?;
                Ok(TeacherResponse {
                    text: text.clone(),
                    prompt_tokens: estimate_tokens(&request.prompt_text),
                    completion_tokens: estimate_tokens(text),
                })
            }
            TeacherEndpoint::Http(http) => http.complete(request),
        }
    }
}

impl HttpTeacher {
    fn complete(&self, request: &PromptRequest) -> Result<TeacherResponse, TeacherError> {
        let api_key =
            std::env::var(API_KEY_ENV).map_err(|_| TeacherError::MissingApiKey)?;
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "max_tokens": request.max_response_tokens,
        });
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.try_once(&api_key, &body) {
                Ok(response) => return Ok(response),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(last_error)) => {
                    if attempt >= self.retry.max_attempts {
                        return Err(TeacherError::RetriesExhausted {
                            attempts: attempt,
                            last_error,
                        });
                    }
                    std::thread::sleep(self.retry.backoff(attempt));
                }
            }
        }
    }

    fn try_once(&self, api_key: &str, body: &serde_json::Value) -> Result<TeacherResponse, Attempt> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retryable(format!("transport error: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            let body = response.text().unwrap_or_default();
            return Err(Attempt::Retryable(format!(
                "status {}: {}",
                status.as_u16(),
                body.chars().take(200).collect::<String>()
            )));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Attempt::Fatal(TeacherError::Rejected {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            }));
        }
        let completion: ChatCompletion = response
            .json()
            .map_err(|e| Attempt::Fatal(TeacherError::MalformedResponse(e.to_string())))?;
        let choice = completion.choices.into_iter().next().ok_or_else(|| {
            Attempt::Fatal(TeacherError::MalformedResponse("no choices".to_string()))
        })?;
        let text = choice.message.content;
        let (prompt_tokens, completion_tokens) = match completion.usage {
            Some(usage) => (usage.prompt_tokens, usage.completion_tokens),
            None => (0, estimate_tokens(&text)),
        };
        Ok(TeacherResponse {
            text,
            prompt_tokens,
            completion_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::prompt::build_five_w_prompt;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_attempts: 3,
            initial_delay: Duration::from_millis(2),
            max_delay: Duration::from_millis(10),
        }
    }

    /// Minimal HTTP server answering each incoming request with the next
    /// canned (status, body) pair, then closing.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<usize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut served = 0;
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = [0u8; 65536];
                let mut data = Vec::new();
                // Read until the blank line, then trust content-length.
                loop {
                    let n = stream.read(&mut buf).unwrap();
                    if n == 0 {
                        break;
                    }
                    data.extend_from_slice(&buf[..n]);
                    if let Some(pos) = find_blank_line(&data) {
                        let header = String::from_utf8_lossy(&data[..pos]).to_lowercase();
                        let want: usize = header
                            .lines()
                            .find_map(|l| l.strip_prefix("content-length:"))
                            .map(|v| v.trim().parse().unwrap())
                            .unwrap_or(0);
                        if data.len() >= pos + 4 + want {
                            break;
                        }
                    }
                }
                let reason = if status == 200 { "OK" } else { "ERR" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\n\
                     content-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
                served += 1;
            }
            served
        });
        (addr, handle)
    }

    fn find_blank_line(data: &[u8]) -> Option<usize> {
        data.windows(4).position(|w| w == b"\r\n\r\n")
    }

    fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 21, "completion_tokens": 9},
        })
        .to_string()
    }

    #[test]
    fn fixture_serves_by_cache_key_and_reports_misses() {
        let req = build_five_w_prompt("a premise").unwrap();
        let endpoint = TeacherEndpoint::fixture(HashMap::from([(
            req.cache_key.clone(),
            "Who: a\nWhat: b\nWhy: c".to_string(),
        )]));
        let response = endpoint.complete(&req).unwrap();
        assert_eq!(response.text, "Who: a\nWhat: b\nWhy: c");
        assert!(response.prompt_tokens > 0);

        let other = build_five_w_prompt("different premise").unwrap();
        match endpoint.complete(&other).unwrap_err() {
            TeacherError::FixtureMiss { cache_key } => assert_eq!(cache_key, other.cache_key),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn fixture_accepts_cache_shaped_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        std::fs::write(
            &path,
            r#"{"cache_key":"k1","prompt_text":"p","response_text":"r1","timestamp":"t"}
{"cache_key":"k2","response_text":"r2"}
"#,
        )
        .unwrap();
        let endpoint = TeacherEndpoint::fixture_from_path(&path).unwrap();
        let req = PromptRequest {
            prompt_text: "p".to_string(),
            cache_key: "k2".to_string(),
            max_response_tokens: 8,
        };
        assert_eq!(endpoint.complete(&req).unwrap().text, "r2");
    }

    #[test]
    fn http_success_parses_content_and_usage() {
        std::env::set_var(API_KEY_ENV, "test-key");
        let (url, handle) = serve(vec![(200, ok_body("hello there"))]);
        let endpoint = TeacherEndpoint::http(url, "toy-model").with_retry(fast_retry());
        let req = build_five_w_prompt("a premise").unwrap();
        let response = endpoint.complete(&req).unwrap();
        assert_eq!(response.text, "hello there");
        assert_eq!(response.prompt_tokens, 21);
        assert_eq!(response.completion_tokens, 9);
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn http_retries_server_errors_until_success() {
        std::env::set_var(API_KEY_ENV, "test-key");
        let (url, handle) = serve(vec![
            (500, "oops".to_string()),
            (429, "slow down".to_string()),
            (200, ok_body("finally")),
        ]);
        let endpoint = TeacherEndpoint::http(url, "toy-model").with_retry(fast_retry());
        let req = build_five_w_prompt("a premise").unwrap();
        assert_eq!(endpoint.complete(&req).unwrap().text, "finally");
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn http_gives_up_after_max_attempts() {
        std::env::set_var(API_KEY_ENV, "test-key");
        let (url, handle) = serve(vec![
            (500, "a".to_string()),
            (500, "b".to_string()),
            (500, "c".to_string()),
        ]);
        let endpoint = TeacherEndpoint::http(url, "toy-model").with_retry(fast_retry());
        let req = build_five_w_prompt("a premise").unwrap();
        match endpoint.complete(&req).unwrap_err() {
            TeacherError::RetriesExhausted { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(handle.join().unwrap(), 3);
    }

    #[test]
    fn http_client_errors_fail_without_retry() {
        std::env::set_var(API_KEY_ENV, "test-key");
        let (url, handle) = serve(vec![(401, "bad key".to_string())]);
        let endpoint = TeacherEndpoint::http(url, "toy-model").with_retry(fast_retry());
        let req = build_five_w_prompt("a premise").unwrap();
        match endpoint.complete(&req).unwrap_err() {
            TeacherError::Rejected { status, body } => {
                assert_eq!(status, 401);
                assert_eq!(body, "bad key");
            }
            other => panic!("unexpected error {other:?}"),
        }
        assert_eq!(handle.join().unwrap(), 1);
    }

    #[test]
    fn missing_api_key_fails_fast() {
        std::env::remove_var(API_KEY_ENV);
        let endpoint = TeacherEndpoint::http("http://127.0.0.1:9", "toy-model");
        let req = build_five_w_prompt("a premise").unwrap();
        assert!(matches!(
            endpoint.complete(&req).unwrap_err(),
            TeacherError::MissingApiKey
        ));
    }
}
