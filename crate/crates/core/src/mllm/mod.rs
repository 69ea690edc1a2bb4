//! Client for OpenAI-compatible vision chat endpoints with pluggable transports,
//! bounded retries, an in-flight cap and a replayable JSON-lines session log.

mod transport;

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};
use thiserror::Error;

pub use transport::{
    request_image_count, request_key, request_text, summarize_request, HttpReply, HttpTransport, LogEntry,
    MockTransport, ReplayTransport, ScriptedTransport, Transport,
};

pub const MAX_IMAGE_BYTES: usize = 20 * 1024 * 1024;
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";

#[derive(Debug, Error)]
pub enum MllmError {
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("MLLM_API_KEY is not set")]
    MissingApiKey,
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: usize },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid prompt: {0}")]
    InvalidPayload(String),
    #[error("no valid choice among {valid:?} in {raw:?}")]
    NoValidChoice { valid: Vec<String>, raw: String },
}

impl MllmError {
    /// Errors that mean the endpoint is unusable, as opposed to a bad answer.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            MllmError::Auth(_) | MllmError::MissingApiKey | MllmError::RateLimited { .. } | MllmError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Text(String),
    Image { bytes: Vec<u8>, mime: String },
}

impl Part {
    pub fn text(s: impl Into<String>) -> Self {
        Part::Text(s.into())
    }

    pub fn png(bytes: Vec<u8>) -> Self {
        Part::Image {
            bytes,
            mime: "image/png".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPayload {
    pub system: String,
    pub turns: Vec<Vec<Part>>,
    /// Always 0.
    pub temperature: f32,
    pub max_tokens: u32,
}

impl PromptPayload {
    pub fn new(system: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            turns: Vec::new(),
            temperature: 0.0,
            max_tokens: 512,
        }
    }

    pub fn user(mut self, parts: Vec<Part>) -> Self {
        self.turns.push(parts);
        self
    }

    pub fn validate(&self) -> Result<(), MllmError> {
        if self.turns.is_empty() {
            return Err(MllmError::InvalidPayload("no user turn".into()));
        }
        if self.temperature != 0.0 {
            return Err(MllmError::InvalidPayload("temperature must be 0".into()));
        }
        for part in self.turns.iter().flatten() {
            if let Part::Image { bytes, .. } = part {
                if bytes.len() > MAX_IMAGE_BYTES {
                    return Err(MllmError::InvalidPayload(format!(
                        "image part of {} bytes exceeds 20 MB",
                        bytes.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Chat-completions request body.
    pub fn to_request(&self, model: &str) -> Value {
        let b64 = base64::engine::general_purpose::STANDARD;
        let mut messages = vec![json!({"role": "system", "content": self.system})];
        for turn in &self.turns {
            let content: Vec<Value> = turn
                .iter()
                .map(|p| match p {
                    Part::Text(t) => json!({"type": "text", "text": t}),
                    Part::Image { bytes, mime } => json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{mime};base64,{}", b64.encode(bytes))},
                    }),
                })
                .collect();
            messages.push(json!({"role": "user", "content": content}));
        }
        json!({
            "model": model,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MllmResponse {
    pub raw: String,
    /// Present iff `raw` holds a JSON object once code fences are stripped.
    pub parsed: Option<Value>,
    pub usage: Usage,
}

impl MllmResponse {
    pub fn from_text(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let parsed = parse_json_object(&raw);
        Self {
            raw,
            parsed,
            usage: Usage::default(),
        }
    }
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// First JSON object in the text: the whole text if it parses, else the widest `{...}` span.
pub fn parse_json_object(text: &str) -> Option<Value> {
    let body = strip_fences(text);
    let trimmed = body.trim();
    if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(trimmed) {
        return Some(v);
    }
    let start = trimmed.find('{')?;
    let end = trimmed.rfind('}')?;
    if end <= start {
        return None;
    }
    match serde_json::from_str::<Value>(&trimmed[start..=end]) {
        Ok(v @ Value::Object(_)) => Some(v),
        _ => None,
    }
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn mentions(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let h = haystack.as_bytes();
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let s = from + pos;
        let e = s + needle.len();
        let left_ok = s == 0 || !is_word_byte(h[s - 1]) || !is_word_byte(needle.as_bytes()[0]);
        let right_ok = e == h.len() || !is_word_byte(h[e]) || !is_word_byte(*needle.as_bytes().last().unwrap());
        if left_ok && right_ok {
            return true;
        }
        from = s + 1;
    }
    false
}

/// The member of `valid` named by the response: the JSON `choice` field when
/// present, otherwise the single valid string occurring as a whole word in the
/// raw text. Comparison is case-insensitive.
pub fn extract_choice<S: AsRef<str>>(resp: &MllmResponse, valid: &[S]) -> Result<String, MllmError> {
    let no_choice = || MllmError::NoValidChoice {
        valid: valid.iter().map(|s| s.as_ref().to_owned()).collect(),
        raw: resp.raw.clone(),
    };
    let choice = resp.parsed.as_ref().and_then(|v| match v.get("choice") {
        Some(Value::String(s)) => Some(s.trim().to_owned()),
        Some(Value::Number(n)) => Some(n.to_string()),
        _ => None,
    });
    if let Some(c) = choice {
        let c = c.to_lowercase();
        return valid
            .iter()
            .find(|v| v.as_ref().to_lowercase() == c)
            .map(|v| v.as_ref().to_owned())
            .ok_or_else(no_choice);
    }
    let text = resp.raw.to_lowercase();
    let mut hits: Vec<&str> = valid
        .iter()
        .map(|v| v.as_ref())
        .filter(|v| mentions(&text, &v.to_lowercase()))
        .collect();
    hits.dedup_by_key(|v| v.to_lowercase());
    match hits.as_slice() {
        [one] => Ok((*one).to_owned()),
        _ => Err(no_choice()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub model: String,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_base: Duration,
    pub max_retries: usize,
    pub max_in_flight: usize,
    pub session_log: Option<PathBuf>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            model: DEFAULT_MODEL.into(),
            backoff_base: Duration::from_secs(1),
            max_retries: 3,
            max_in_flight: 2,
            session_log: None,
        }
    }
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

impl Gate {
    fn acquire(&self) -> GateSlot<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate wait");
        }
        *n += 1;
        GateSlot(self)
    }
}

struct GateSlot<'a>(&'a Gate);

impl Drop for GateSlot<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Thread-safe vision chat client.
pub struct MllmClient {
    transport: Arc<dyn Transport>,
    config: ClientConfig,
    gate: Gate,
    log: Mutex<Option<File>>,
    calls: AtomicUsize,
    attempts: AtomicUsize,
}

impl MllmClient {
    pub fn new(transport: Arc<dyn Transport>, config: ClientConfig) -> Result<Self, MllmError> {
        let log = match &config.session_log {
            Some(path) => Some(open_log(path)?),
            None => None,
        };
        Ok(Self {
            transport,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                cap: config.max_in_flight.max(1),
            },
            config,
            log: Mutex::new(log),
            calls: AtomicUsize::new(0),
            attempts: AtomicUsize::new(0),
        })
    }

    /// Live HTTP client from `MLLM_API_KEY`, `MLLM_BASE_URL` and `MLLM_MODEL`.
    pub fn from_env(mut config: ClientConfig) -> Result<Self, MllmError> {
        let key = std::env::var("MLLM_API_KEY")
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or(MllmError::MissingApiKey)?;
        let base = std::env::var("MLLM_BASE_URL").unwrap_or_else(|_| DEFAULT_BASE_URL.into());
        if let Ok(model) = std::env::var("MLLM_MODEL") {
            config.model = model;
        }
        Self::new(Arc::new(HttpTransport::new(&base, &key)?), config)
    }

    /// Completed `complete` calls, each counting once regardless of retries.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// HTTP exchanges attempted, including retries.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    fn record(&self, request: &Value, reply: &HttpReply) -> Result<(), MllmError> {
        let mut guard = self.log.lock().expect("log lock");
        if let Some(file) = guard.as_mut() {
            let entry = LogEntry {
                key: request_key(request),
                request: summarize_request(request),
                status: reply.status,
                body: reply.body.clone(),
            };
            let line = serde_json::to_string(&entry).map_err(|e| MllmError::Malformed(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| MllmError::Transport(format!("session log: {e}")))?;
        }
        Ok(())
    }

    /// Sends the prompt and returns the first choice. Retries 429 and 5xx with
    /// exponential backoff; 401/403 fail immediately.
    pub fn complete(&self, payload: &PromptPayload) -> Result<MllmResponse, MllmError> {
        payload.validate()?;
        let request = payload.to_request(&self.config.model);
        let _slot = self.gate.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.attempts.fetch_add(1, Ordering::SeqCst);
            let reply = self.transport.send(&request)?;
            self.record(&request, &reply)?;
            match reply.status {
                200..=299 => return parse_completion(&reply.body),
                401 | 403 => return Err(MllmError::Auth(reply.status)),
                429 | 500..=599 => {
                    if attempt > self.config.max_retries {
                        return Err(if reply.status == 429 {
                            MllmError::RateLimited { attempts: attempt }
                        } else {
                            MllmError::Transport(format!("HTTP {} after {attempt} attempts", reply.status))
                        });
                    }
                    let delay = self.config.backoff_base * (1u32 << (attempt - 1));
                    log::warn!("MLLM HTTP {}; retrying in {:?}", reply.status, delay);
                    std::thread::sleep(delay);
                }
                s => return Err(MllmError::Transport(format!("HTTP {s}: {}", reply.body))),
            }
        }
    }
}

fn open_log(path: &Path) -> Result<File, MllmError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| MllmError::Transport(format!("session log: {e}")))?;
    }
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| MllmError::Transport(format!("session log {}: {e}", path.display())))
}

fn parse_completion(body: &str) -> Result<MllmResponse, MllmError> {
    let v: Value = serde_json::from_str(body).map_err(|e| MllmError::Malformed(e.to_string()))?;
    let content = &v["choices"][0]["message"]["content"];
    let raw = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join(""),
        _ => return Err(MllmError::Malformed("no choices[0].message.content".into())),
    };
    let mut resp = MllmResponse::from_text(raw);
    resp.usage = Usage {
        prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
        completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
    };
    Ok(resp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> ClientConfig {
        ClientConfig {
            backoff_base: Duration::ZERO,
            ..Default::default()
        }
    }

    fn prompt() -> PromptPayload {
        PromptPayload::new("sys").user(vec![Part::text("hello")])
    }

    #[test]
    fn json_reply_is_parsed() {
        let t = Arc::new(ScriptedTransport::new([HttpReply::ok_text("{\"choice\": 3}")]));
        let c = MllmClient::new(t, fast()).unwrap();
        let r = c.complete(&prompt()).unwrap();
        assert_eq!(r.parsed, Some(json!({"choice": 3})));
    }

    #[test]
    fn retries_then_succeeds() {
        let t = Arc::new(ScriptedTransport::new([
            HttpReply::status(429),
            HttpReply::status(429),
            HttpReply::ok_text("ok"),
        ]));
        let c = MllmClient::new(t, fast()).unwrap();
        assert_eq!(c.complete(&prompt()).unwrap().raw, "ok");
        assert_eq!(c.attempts(), 3);
        assert_eq!(c.calls(), 1);
    }

    #[test]
    fn auth_error_is_immediate() {
        let t = Arc::new(ScriptedTransport::new([HttpReply::status(401), HttpReply::ok_text("x")]));
        let c = MllmClient::new(t, fast()).unwrap();
        assert!(matches!(c.complete(&prompt()), Err(MllmError::Auth(401))));
        assert_eq!(c.attempts(), 1);
    }

    #[test]
    fn rate_limit_exhausts() {
        let t = Arc::new(ScriptedTransport::new(std::iter::repeat_n(HttpReply::status(429), 10)));
        let c = MllmClient::new(t, fast()).unwrap();
        assert!(matches!(c.complete(&prompt()), Err(MllmError::RateLimited { attempts: 4 })));
        let t = Arc::new(ScriptedTransport::new(std::iter::repeat_n(HttpReply::status(503), 10)));
        let c = MllmClient::new(t, fast()).unwrap();
        assert!(matches!(c.complete(&prompt()), Err(MllmError::Transport(_))));
    }

    #[test]
    fn payload_rules() {
        assert!(PromptPayload::new("s").validate().is_err());
        let mut p = prompt();
        p.temperature = 0.7;
        assert!(p.validate().is_err());
        let big = prompt().user(vec![Part::png(vec![0; MAX_IMAGE_BYTES + 1])]);
        assert!(big.validate().is_err());
    }

    #[test]
    fn choice_extraction() {
        let valid = ["metal", "wood"];
        let r = MllmResponse::from_text("{\"choice\":\"metal\"}");
        assert_eq!(extract_choice(&r, &valid).unwrap(), "metal");
        let r = MllmResponse::from_text("The material is Wood.");
        assert_eq!(extract_choice(&r, &valid).unwrap(), "wood");
        let r = MllmResponse::from_text("Either metal or wood.");
        assert!(matches!(extract_choice(&r, &valid), Err(MllmError::NoValidChoice { .. })));
        let r = MllmResponse::from_text("```json\n{\"choice\": \"WOOD\"}\n```");
        assert_eq!(extract_choice(&r, &valid).unwrap(), "wood");
        let r = MllmResponse::from_text("{\"choice\": \"stone\"}");
        assert!(extract_choice(&r, &valid).is_err());
    }

    #[test]
    fn whole_word_matching_keeps_ids_apart() {
        let valid = ["metal_gold_01", "metal_gold_02"];
        let r = MllmResponse::from_text("I pick metal_gold_02 because it is brighter.");
        assert_eq!(extract_choice(&r, &valid).unwrap(), "metal_gold_02");
        let r = MllmResponse::from_text("I pick metal.");
        assert!(extract_choice(&r, &["metal_gold_01"]).is_err());
    }

    #[test]
    fn session_log_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.jsonl");
        let live = Arc::new(MockTransport::new(|req: &Value| {
            HttpReply::ok_text(&format!("echo {}", request_text(req).len()))
        }));
        let cfg = ClientConfig {
            session_log: Some(path.clone()),
            ..fast()
        };
        let c = MllmClient::new(live, cfg).unwrap();
        let p = prompt().user(vec![Part::png(vec![1, 2, 3])]);
        let a = c.complete(&p).unwrap();
        let replay = MllmClient::new(Arc::new(ReplayTransport::load(&path).unwrap()), fast()).unwrap();
        assert_eq!(replay.complete(&p).unwrap(), a);
        assert!(!std::fs::read_to_string(&path).unwrap().contains("AQID"));
    }

    #[test]
    fn in_flight_cap_holds() {
        use std::sync::atomic::AtomicUsize;
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (l, p) = (live.clone(), peak.clone());
        let t = Arc::new(MockTransport::new(move |_: &Value| {
            let now = l.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            l.fetch_sub(1, Ordering::SeqCst);
            HttpReply::ok_text("x")
        }));
        let c = Arc::new(MllmClient::new(t, fast()).unwrap());
        let handles: Vec<_> = (0..6)
            .map(|_| {
                let c = c.clone();
                std::thread::spawn(move || c.complete(&prompt()).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert_eq!(c.calls(), 6);
    }
}
