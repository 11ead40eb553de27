//! OpenAI-style `/chat/completions` client.

use std::time::Duration;

use serde::Deserialize;

use super::{Completion, LlmConfig, LlmError, Request};

pub(super) struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    seed: Option<u64>,
    token: Option<String>,
    max_retries: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    message: Option<Message>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl HttpBackend {
    pub(super) fn new(config: &LlmConfig) -> Self {
        let base = config.base_url.as_deref().unwrap_or_default().trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Self {
            agent: ureq::AgentBuilder::new().timeout(config.timeout()).build(),
            url,
            model: config.model_name.clone(),
            temperature: config.temperature,
            seed: config.seed,
            token: config.api_token.clone(),
            max_retries: config.max_retries,
        }
    }

    fn send_once(&self, prompt: &str) -> Result<String, LlmError> {
        let mut body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
        });
        if let Some(seed) = self.seed {
            body["seed"] = seed.into();
        }
        let mut req = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_json(body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                return Err(LlmError::Status { status, body });
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                return Err(if msg.contains("timed out") { LlmError::Timeout } else { LlmError::Transport(msg) });
            }
        };
        let parsed: ChatResponse =
            resp.into_json().map_err(|e| LlmError::Transport(format!("bad response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LlmError::Transport("response has no choices".into()))?;
        choice
            .message
            .map(|m| m.content)
            .or(choice.text)
            .ok_or_else(|| LlmError::Transport("first choice carries no text".into()))
    }
}

fn retryable(err: &LlmError) -> bool {
    match err {
        LlmError::Transport(_) | LlmError::Timeout => true,
        LlmError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Completion for HttpBackend {
    fn complete(&self, request: &Request<'_>) -> Result<String, LlmError> {
        let prompt = request.prompt();
        let attempts = self.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(&prompt) {
                Ok(reply) => return Ok(reply),
                Err(err) if retryable(&err) && attempt < attempts => {
                    log::warn!("LLM request failed (attempt {attempt}/{attempts}): {err}");
                    std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
                }
                Err(err) if retryable(&err) => {
                    return Err(LlmError::RetriesExhausted { attempts, last: err.to_string() })
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::LlmGateway;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves `responses` (status, body) to successive connections and
    /// forwards each request body to the returned channel.
    fn stub(responses: Vec<(u16, &'static str)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let _ = tx.send(String::from_utf8(buf).unwrap());
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), rx)
    }

    #[test]
    fn sends_single_user_message_and_reads_first_choice() {
        let (url, requests) = stub(vec![(200, r#"{"choices":[{"message":{"role":"assistant","content":"Same."}}]}"#)]);
        let g = LlmGateway::new(LlmConfig { seed: Some(7), ..LlmConfig::http(url) }).unwrap();
        assert_eq!(g.chat("hello").unwrap(), "Same.");
        let sent: serde_json::Value = serde_json::from_str(&requests.recv().unwrap()).unwrap();
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "hello");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["seed"], 7);
    }

    #[test]
    fn server_errors_are_retried() {
        let ok = r#"{"choices":[{"message":{"content":"different"}}]}"#;
        let (url, _) = stub(vec![(503, "busy"), (200, ok)]);
        let g = LlmGateway::new(LlmConfig::http(url)).unwrap();
        assert_eq!(g.chat("x").unwrap(), "different");
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, _) = stub(vec![(400, "bad request")]);
        let g = LlmGateway::new(LlmConfig::http(url)).unwrap();
        assert!(matches!(g.chat("x"), Err(LlmError::Status { status: 400, .. })));
    }

    #[test]
    fn unreachable_host_exhausts_retries() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let cfg = LlmConfig { max_retries: 2, timeout_secs: 2.0, ..LlmConfig::http(format!("http://127.0.0.1:{port}")) };
        let err = LlmGateway::new(cfg).unwrap().chat("x").unwrap_err();
        assert!(matches!(err, LlmError::RetriesExhausted { attempts: 3, .. }), "{err}");
    }
}
