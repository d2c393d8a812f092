//! Language-model transports. `mock` answers from substring rules, `replay`
//! looks responses up by prompt hash, `http` talks to a JSON chat endpoint.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::prompt::prompt_hash;
use crate::ExtractError;

pub trait Transport: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String, ExtractError>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MockRule {
    pub contains: String,
    pub response: String,
}

/// Canned responses: the first rule whose `contains` occurs in the prompt
/// wins, otherwise `default`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MockTransport {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: String,
}

impl MockTransport {
    pub fn new(default: impl Into<String>) -> Self {
        MockTransport {
            rules: Vec::new(),
            default: default.into(),
        }
    }

    pub fn rule(mut self, contains: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            contains: contains.into(),
            response: response.into(),
        });
        self
    }

    /// Reads `{"rules": [{"contains", "response"}], "default"}`.
    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        let text = fs::read_to_string(path).map_err(|source| ExtractError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Transport for MockTransport {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, prompt: &str) -> Result<String, ExtractError> {
        let hit = self.rules.iter().find(|r| prompt.contains(&r.contains));
        Ok(hit.map_or(&self.default, |r| &r.response).clone())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub prompt_hash: String,
    pub response: String,
}

/// Recorded responses keyed by SHA-256 of the prompt. A prompt that was
/// never recorded is a transport failure.
#[derive(Clone, Debug, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, String>,
}

impl ReplayTransport {
    pub fn from_records(records: impl IntoIterator<Item = ReplayRecord>) -> Self {
        ReplayTransport {
            responses: records.into_iter().map(|r| (r.prompt_hash, r.response)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExtractError> {
        let io = |source| ExtractError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = File::open(path).map_err(io)?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| ExtractError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, prompt: &str) -> Result<String, ExtractError> {
        let hash = prompt_hash(prompt);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or_else(|| ExtractError::transport("replay", format!("no recorded response for prompt {hash}")))
    }
}

/// Appends every successful exchange to a replay file so a live run can be
/// replayed offline later.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    path: PathBuf,
    sink: Mutex<File>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>, path: &Path) -> Result<Self, ExtractError> {
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| ExtractError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(RecordingTransport {
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new(sink),
        })
    }
}

impl Transport for RecordingTransport {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn send(&self, prompt: &str) -> Result<String, ExtractError> {
        let response = self.inner.send(prompt)?;
        let rec = ReplayRecord {
            prompt_hash: prompt_hash(prompt),
            response: response.clone(),
        };
        let line = serde_json::to_string(&rec)?;
        let mut sink = self.sink.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(sink, "{line}").map_err(|source| ExtractError::Io {
            path: self.path.clone(),
            source,
        })?;
        Ok(response)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. The
    /// token itself is never stored in configs or logs.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat".into(),
            model: "vicuna-13b".into(),
            api_key_env: "SCTC_LLM_API_KEY".into(),
            timeout_secs: 120,
            retries: 3,
            max_in_flight: 4,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpTransport {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    gate: Gate,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Result<Self, ExtractError> {
        if config.max_in_flight == 0 {
            return Err(ExtractError::transport("http", "max_in_flight must be positive"));
        }
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build();
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::debug!("{} is not set; sending requests without authorization", config.api_key_env);
        }
        Ok(HttpTransport {
            gate: Gate {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            },
            agent: ureq::Agent::new_with_config(agent_config),
            api_key,
            config,
        })
    }

    fn attempt(&self, prompt: &str) -> Result<String, String> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| e.to_string())?;
        let parsed: ChatResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(parsed.content)
    }
}

impl Transport for HttpTransport {
    fn name(&self) -> &str {
        "http"
    }

    fn send(&self, prompt: &str) -> Result<String, ExtractError> {
        let _permit = self.gate.acquire();
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            match self.attempt(prompt) {
                Ok(content) => return Ok(content),
                Err(e) => {
                    log::warn!("http attempt {} of {} failed: {e}", attempt + 1, self.config.retries + 1);
                    last = e;
                }
            }
        }
        Err(ExtractError::transport(
            "http",
            format!("gave up after {} attempts: {last}", self.config.retries + 1),
        ))
    }
}

/// Everything a transport factory may need; the CLI fills this from the
/// `[transport]` config table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSettings {
    /// Rules file for `mock`, recording for `replay`.
    pub path: Option<PathBuf>,
    /// When set, successful exchanges are appended here as replay records.
    pub record: Option<PathBuf>,
    pub http: HttpConfig,
}

type Factory = Box<dyn Fn(&TransportSettings) -> Result<Arc<dyn Transport>, ExtractError> + Send + Sync>;

/// Transports selectable by name.
pub struct TransportRegistry {
    factories: BTreeMap<String, Factory>,
}

impl TransportRegistry {
    pub fn empty() -> Self {
        TransportRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("mock", |s| {
            Ok(match &s.path {
                Some(p) => Arc::new(MockTransport::load(p)?) as Arc<dyn Transport>,
                None => Arc::new(MockTransport::default()),
            })
        });
        reg.register("replay", |s| {
            let path = s
                .path
                .as_deref()
                .ok_or_else(|| ExtractError::transport("replay", "a replay file path is required"))?;
            Ok(Arc::new(ReplayTransport::load(path)?))
        });
        reg.register("http", |s| Ok(Arc::new(HttpTransport::new(s.http.clone())?)));
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&TransportSettings) -> Result<Arc<dyn Transport>, ExtractError> + Send + Sync + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, settings: &TransportSettings) -> Result<Arc<dyn Transport>, ExtractError> {
        let factory = self.factories.get(name).ok_or_else(|| ExtractError::UnknownTransport {
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        let inner = factory(settings)?;
        match &settings.record {
            Some(path) => Ok(Arc::new(RecordingTransport::new(inner, path)?)),
            None => Ok(inner),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn mock_first_rule_wins() {
        let m = MockTransport::new("none").rule("alpha", "A").rule("al", "B");
        assert_eq!(m.send("xx alpha").unwrap(), "A");
        assert_eq!(m.send("xx alps").unwrap(), "B");
        assert_eq!(m.send("zzz").unwrap(), "none");
    }

    #[test]
    fn recording_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        let rec = RecordingTransport::new(Arc::new(MockTransport::new("hello")), &path).unwrap();
        rec.send("p1").unwrap();
        rec.send("p2").unwrap();
        let replay = ReplayTransport::load(&path).unwrap();
        assert_eq!(replay.len(), 2);
        assert_eq!(replay.send("p1").unwrap(), "hello");
        assert!(matches!(replay.send("p3"), Err(ExtractError::Transport { .. })));
    }

    #[test]
    fn unknown_transport_lists_known() {
        let err = TransportRegistry::builtin()
            .create("carrier-pigeon", &TransportSettings::default())
            .err()
            .unwrap();
        assert!(err.to_string().contains("http, mock, replay"));
    }

    fn serve(responses: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut requests = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                loop {
                    let n = stream.read(&mut chunk).unwrap();
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf);
                    if let Some(end) = text.find("\r\n\r\n") {
                        let len = text[..end]
                            .lines()
                            .find_map(|l| {
                                let (k, v) = l.split_once(':')?;
                                k.eq_ignore_ascii_case("content-length").then(|| v.trim().parse::<usize>().ok())?
                            })
                            .unwrap_or(0);
                        if buf.len() >= end + 4 + len || n == 0 {
                            break;
                        }
                    }
                }
                requests.push(String::from_utf8_lossy(&buf).into_owned());
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            requests
        });
        (format!("http://{addr}/chat"), handle)
    }

    #[test]
    fn http_retries_then_succeeds() {
        let (endpoint, server) = serve(vec![(500, "{}"), (200, r#"{"content":"A; Reject; B"}"#)]);
        let t = HttpTransport::new(HttpConfig {
            endpoint,
            model: "m".into(),
            api_key_env: "SCTC_TEST_KEY_THAT_IS_UNSET".into(),
            timeout_secs: 5,
            retries: 2,
            max_in_flight: 1,
        })
        .unwrap();
        assert_eq!(t.send("hello").unwrap(), "A; Reject; B");
        let requests = server.join().unwrap();
        assert_eq!(requests.len(), 2);
        let (_, body) = requests[1].split_once("\r\n\r\n").unwrap();
        let body: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(
            body,
            serde_json::json!({"model": "m", "messages": [{"role": "user", "content": "hello"}]})
        );
        assert!(!requests[1].to_ascii_lowercase().contains("authorization"));
    }

    #[test]
    fn http_gives_up_after_bounded_retries() {
        let (endpoint, server) = serve(vec![(503, "{}"), (503, "{}")]);
        let t = HttpTransport::new(HttpConfig {
            endpoint,
            timeout_secs: 5,
            retries: 1,
            ..HttpConfig::default()
        })
        .unwrap();
        let err = t.send("x").unwrap_err();
        assert!(err.to_string().contains("gave up after 2 attempts"));
        server.join().unwrap();
    }
}
