//! Chat-completions client for external model endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use crate::harness::{Agent, AgentError, AgentReply, RuntimeRegime};
use crate::trace::ChatMessage;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_API_KEY_ENV: &str = "OKBENCH_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelClientConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub api_key_env: String,
    pub attempts: u32,
    pub backoff: Duration,
    pub request_timeout: Duration,
    /// Semantics the served model was tuned under, for trace metadata.
    pub train_semantics: RuntimeRegime,
}

impl ModelClientConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_new_tokens: crate::harness::DEFAULT_MAX_NEW_TOKENS,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            attempts: 3,
            backoff: Duration::from_millis(500),
            request_timeout: Duration::from_secs(120),
            train_semantics: RuntimeRegime::Persistent,
        }
    }
}

pub struct ModelAgent {
    config: ModelClientConfig,
    http: ureq::Agent,
}

enum Attempt {
    Retry(String),
    Fatal(AgentError),
}

impl ModelAgent {
    pub fn new(config: ModelClientConfig) -> Result<Self, AgentError> {
        if config.temperature.is_nan() || config.temperature < 0.0 {
            return Err(AgentError::ResponseMalformed(format!("invalid temperature {}", config.temperature)));
        }
        let http = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.request_timeout))
            .build()
            .into();
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &ModelClientConfig {
        &self.config
    }

    fn api_key(&self) -> Result<String, AgentError> {
        match std::env::var(&self.config.api_key_env) {
            Ok(k) if !k.is_empty() => Ok(k),
            _ => Err(AgentError::AuthFailure(format!("environment variable {} is not set", self.config.api_key_env))),
        }
    }

    fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_new_tokens,
        })
    }

    fn attempt(&self, key: &str, body: &Value) -> Result<AgentReply, Attempt> {
        let mut resp = self
            .http
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(Attempt::Fatal(AgentError::AuthFailure(format!("endpoint returned {status}")))),
            408 | 429 | 500..=599 => return Err(Attempt::Retry(format!("endpoint returned {status}"))),
            _ => return Err(Attempt::Fatal(AgentError::ResponseMalformed(format!("endpoint returned {status}")))),
        }
        let v: Value =
            resp.body_mut().read_json().map_err(|e| Attempt::Fatal(AgentError::ResponseMalformed(e.to_string())))?;
        parse_completion(&v).map_err(Attempt::Fatal)
    }
}

/// Extracts the assistant text and token usage from a completion body.
pub fn parse_completion(v: &Value) -> Result<AgentReply, AgentError> {
    let text = v["choices"][0]["message"]["content"]
        .as_str()
        .ok_or_else(|| AgentError::ResponseMalformed("missing choices[0].message.content".into()))?;
    let usage = &v["usage"];
    Ok(AgentReply {
        text: text.to_string(),
        prompt_tokens: usage["prompt_tokens"].as_u64(),
        completion_tokens: usage["completion_tokens"].as_u64(),
    })
}

impl Agent for ModelAgent {
    fn name(&self) -> String {
        format!("model:{}", self.config.model)
    }

    fn train_semantics(&self) -> RuntimeRegime {
        self.config.train_semantics
    }

    fn next_action(&mut self, messages: &[ChatMessage]) -> Result<AgentReply, AgentError> {
        let key = self.api_key()?;
        let body = self.request_body(messages);
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(i - 1));
            }
            match self.attempt(&key, &body) {
                Ok(r) => return Ok(r),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) => last = e,
            }
        }
        Err(AgentError::EndpointUnreachable(format!("{attempts} attempts failed; last: {last}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    /// Serves canned `(status, body)` responses in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let l = line.to_ascii_lowercase();
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut out = stream;
                write!(
                    out,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, hits, handle)
    }

    fn config(url: &str, env: &str) -> ModelClientConfig {
        let mut c = ModelClientConfig::new(url, "test-model");
        c.api_key_env = env.into();
        c.backoff = Duration::from_millis(5);
        c
    }

    fn ok_body(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}], "usage": {"prompt_tokens": 11, "completion_tokens": 4}})
            .to_string()
    }

    #[test]
    fn missing_key_fails_before_network() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let mut agent = ModelAgent::new(config(&url, "OKBENCH_TEST_KEY_UNSET_91")).unwrap();
        let err = agent.next_action(&[ChatMessage::user("hi")]).unwrap_err();
        assert!(matches!(err, AgentError::AuthFailure(_)));
        assert!(listener.accept().is_err(), "no connection expected");
    }

    #[test]
    fn valid_endpoint_returns_text() {
        std::env::set_var("OKBENCH_TEST_KEY_OK", "k");
        let (url, hits, handle) = serve(vec![(200, ok_body("Reflect.\n```python\nfinish()\n```"))]);
        let mut agent = ModelAgent::new(config(&url, "OKBENCH_TEST_KEY_OK")).unwrap();
        let r = agent.next_action(&[ChatMessage::system("s"), ChatMessage::user("t")]).unwrap();
        assert!(r.text.contains("finish()"));
        assert_eq!(r.prompt_tokens, Some(11));
        assert_eq!(r.completion_tokens, Some(4));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
        let bodies = handle.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["temperature"], json!(0.2));
        assert_eq!(sent["messages"][0], json!({"role": "system", "content": "s"}));
        assert_eq!(sent["model"], json!("test-model"));
    }

    #[test]
    fn three_server_errors_mean_unreachable() {
        std::env::set_var("OKBENCH_TEST_KEY_500", "k");
        let (url, hits, handle) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
        let mut agent = ModelAgent::new(config(&url, "OKBENCH_TEST_KEY_500")).unwrap();
        let err = agent.next_action(&[ChatMessage::user("t")]).unwrap_err();
        assert!(matches!(err, AgentError::EndpointUnreachable(_)), "{err}");
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn transient_error_then_success() {
        std::env::set_var("OKBENCH_TEST_KEY_RETRY", "k");
        let (url, hits, handle) = serve(vec![(503, "{}".into()), (200, ok_body("done"))]);
        let mut agent = ModelAgent::new(config(&url, "OKBENCH_TEST_KEY_RETRY")).unwrap();
        assert_eq!(agent.next_action(&[ChatMessage::user("t")]).unwrap().text, "done");
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn malformed_body_is_reported() {
        std::env::set_var("OKBENCH_TEST_KEY_BAD", "k");
        let (url, _, handle) = serve(vec![(200, r#"{"choices": []}"#.into())]);
        let mut agent = ModelAgent::new(config(&url, "OKBENCH_TEST_KEY_BAD")).unwrap();
        let err = agent.next_action(&[ChatMessage::user("t")]).unwrap_err();
        assert!(matches!(err, AgentError::ResponseMalformed(_)));
        handle.join().unwrap();
    }

    #[test]
    fn refused_connection_is_unreachable() {
        std::env::set_var("OKBENCH_TEST_KEY_REFUSED", "k");
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut agent =
            ModelAgent::new(config(&format!("http://127.0.0.1:{port}/v1"), "OKBENCH_TEST_KEY_REFUSED")).unwrap();
        let err = agent.next_action(&[ChatMessage::user("t")]).unwrap_err();
        assert!(matches!(err, AgentError::EndpointUnreachable(_)));
    }

    #[test]
    fn negative_temperature_rejected() {
        let mut c = config("http://127.0.0.1:1/", "X");
        c.temperature = -0.1;
        assert!(ModelAgent::new(c).is_err());
    }
}
