use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::MllmError;

/// Status and body of one HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

impl HttpReply {
    /// A 200 chat-completions reply whose first choice carries `text`.
    pub fn ok_text(text: &str) -> Self {
        let body = json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
        });
        Self {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: json!({"error": {"code": status}}).to_string(),
        }
    }
}

/// Sends one chat-completions request body and returns the raw reply.
pub trait Transport: Send + Sync {
    fn send(&self, request: &Value) -> Result<HttpReply, MllmError>;
}

/// Live OpenAI-compatible endpoint.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: String,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: &str) -> Result<Self, MllmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| MllmError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key: api_key.to_owned(),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &Value) -> Result<HttpReply, MllmError> {
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .header("content-type", "application/json")
            .body(request.to_string())
            .send()
            .map_err(|e| MllmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| MllmError::Transport(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

/// In-process transport driven by a closure over the request body.
pub struct MockTransport<F> {
    respond: F,
}

impl<F> MockTransport<F>
where
    F: Fn(&Value) -> HttpReply + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> Transport for MockTransport<F>
where
    F: Fn(&Value) -> HttpReply + Send + Sync,
{
    fn send(&self, request: &Value) -> Result<HttpReply, MllmError> {
        Ok((self.respond)(request))
    }
}

/// Mock replaying a fixed reply sequence regardless of the request.
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<HttpReply>>,
}

impl ScriptedTransport {
    pub fn new(replies: impl IntoIterator<Item = HttpReply>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
        }
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, _request: &Value) -> Result<HttpReply, MllmError> {
        self.replies
            .lock()
            .expect("script lock")
            .pop_front()
            .ok_or_else(|| MllmError::Transport("script exhausted".into()))
    }
}

/// Concatenated text parts of every message in a request body.
pub fn request_text(request: &Value) -> String {
    let mut out = String::new();
    for msg in request["messages"].as_array().into_iter().flatten() {
        match &msg["content"] {
            Value::String(s) => {
                out.push_str(s);
                out.push('\n');
            }
            Value::Array(parts) => {
                for p in parts {
                    if let Some(t) = p["text"].as_str() {
                        out.push_str(t);
                        out.push('\n');
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Number of image parts in a request body.
pub fn request_image_count(request: &Value) -> usize {
    request["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|m| m["content"].as_array())
        .flatten()
        .filter(|p| p["type"] == "image_url")
        .count()
}

/// Replay key: hash of the request with the model name removed, so a log
/// recorded against one deployment replays under another.
pub fn request_key(request: &Value) -> String {
    let mut r = request.clone();
    if let Some(obj) = r.as_object_mut() {
        obj.remove("model");
    }
    let digest = Sha256::digest(r.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Request with inline image data replaced by a hash and size summary.
pub fn summarize_request(request: &Value) -> Value {
    let mut r = request.clone();
    if let Some(msgs) = r["messages"].as_array_mut() {
        for m in msgs {
            if let Some(parts) = m["content"].as_array_mut() {
                for p in parts {
                    if let Some(url) = p["image_url"]["url"].as_str() {
                        let digest = Sha256::digest(url.as_bytes());
                        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
                        p["image_url"]["url"] = Value::String(format!("<image sha256:{hex} len:{}>", url.len()));
                    }
                }
            }
        }
    }
    r
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub key: String,
    pub request: Value,
    pub status: u16,
    pub body: String,
}

/// Serves replies recorded in a session log, keyed by request hash, in recorded order.
pub struct ReplayTransport {
    replies: Mutex<HashMap<String, VecDeque<HttpReply>>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = LogEntry>) -> Self {
        let mut replies: HashMap<String, VecDeque<HttpReply>> = HashMap::new();
        for e in entries {
            replies.entry(e.key).or_default().push_back(HttpReply {
                status: e.status,
                body: e.body,
            });
        }
        Self {
            replies: Mutex::new(replies),
        }
    }

    pub fn load(path: &Path) -> Result<Self, MllmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MllmError::Transport(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: LogEntry = serde_json::from_str(line)
                .map_err(|e| MllmError::Malformed(format!("session log line {}: {e}", n + 1)))?;
            entries.push(e);
        }
        Ok(Self::from_entries(entries))
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &Value) -> Result<HttpReply, MllmError> {
        let key = request_key(request);
        self.replies
            .lock()
            .expect("replay lock")
            .get_mut(&key)
            .and_then(|q| q.pop_front())
            .ok_or_else(|| MllmError::Transport(format!("no recorded reply for request {key}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_ignores_model() {
        let a = json!({"model": "a", "messages": [], "temperature": 0.0});
        let b = json!({"model": "b", "messages": [], "temperature": 0.0});
        assert_eq!(request_key(&a), request_key(&b));
        assert_ne!(request_key(&a), request_key(&json!({"messages": [1]})));
    }

    #[test]
    fn summary_drops_image_bytes() {
        let r = json!({"messages": [{"role": "user", "content": [
            {"type": "text", "text": "hi"},
            {"type": "image_url", "image_url": {"url": "data:image/png;base64,AAAA"}}
        ]}]});
        let s = summarize_request(&r);
        let url = s["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("<image sha256:"));
        assert_eq!(request_text(&r), "hi\n");
        assert_eq!(request_image_count(&r), 1);
    }

    #[test]
    fn replay_serves_in_order() {
        let req = json!({"messages": []});
        let key = request_key(&req);
        let entry = |status| LogEntry {
            key: key.clone(),
            request: req.clone(),
            status,
            body: String::new(),
        };
        let t = ReplayTransport::from_entries([entry(429), entry(200)]);
        assert_eq!(t.send(&req).unwrap().status, 429);
        assert_eq!(t.send(&req).unwrap().status, 200);
        assert!(t.send(&req).is_err());
    }
}
