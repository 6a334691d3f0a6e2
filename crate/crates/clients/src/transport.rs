use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;

use crate::error::{ClientError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    /// A 200 response in chat-completions shape carrying `content`.
    pub fn completion(content: &str) -> Self {
        Self {
            status: 200,
            body: serde_json::json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: format!("{{\"error\":{{\"message\":\"status {status}\"}}}}"),
        }
    }
}

/// The single network seam: POST a JSON body, get status and text back.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &str) -> Result<HttpResponse>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self { agent: config.into() }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, api_key: Option<&str>, body: &str) -> Result<HttpResponse> {
        let mut req = self.agent.post(url).content_type("application/json");
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Refuses every call and counts attempts; proves an offline run stayed offline.
#[derive(Default)]
pub struct FailOnUseTransport {
    calls: AtomicUsize,
}

impl FailOnUseTransport {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FailOnUseTransport {
    fn post_json(&self, url: &str, _: Option<&str>, _: &str) -> Result<HttpResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(ClientError::Transport(format!("network use forbidden (attempted POST {url})")))
    }
}

type Responder = Box<dyn Fn(&Value) -> HttpResponse + Send + Sync>;

/// Test double: serves queued responses, or computes them from the body.
pub struct ScriptedTransport {
    queue: Mutex<VecDeque<HttpResponse>>,
    responder: Option<Responder>,
    bodies: Mutex<Vec<Value>>,
}

impl ScriptedTransport {
    pub fn queue(responses: impl IntoIterator<Item = HttpResponse>) -> Self {
        Self {
            queue: Mutex::new(responses.into_iter().collect()),
            responder: None,
            bodies: Mutex::new(Vec::new()),
        }
    }

    pub fn from_fn(f: impl Fn(&Value) -> HttpResponse + Send + Sync + 'static) -> Self {
        Self {
            queue: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            bodies: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.bodies.lock().expect("lock").len()
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.bodies.lock().expect("lock").clone()
    }
}

impl Transport for ScriptedTransport {
    fn post_json(&self, _: &str, _: Option<&str>, body: &str) -> Result<HttpResponse> {
        let value: Value = serde_json::from_str(body)?;
        self.bodies.lock().expect("lock").push(value.clone());
        if let Some(next) = self.queue.lock().expect("lock").pop_front() {
            return Ok(next);
        }
        match &self.responder {
            Some(f) => Ok(f(&value)),
            None => Err(ClientError::Transport("script exhausted".into())),
        }
    }
}
