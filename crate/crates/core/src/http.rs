//! Blocking JSON-over-HTTP with a bounded attempt budget, shared by the
//! text provider and the model adapter.

use std::time::Duration;

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum HttpFailure {
    /// Every attempt failed at the transport level, timed out, or got a
    /// retryable status (429 or 5xx).
    Exhausted { attempts: u32, last: String },
    /// A non-retryable status.
    Status { status: u16, body: String },
    /// The response body was not JSON.
    Decode(String),
}

impl std::fmt::Display for HttpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpFailure::Exhausted { attempts, last } => write!(f, "gave up after {attempts} attempt(s): {last}"),
            HttpFailure::Status { status, body } => write!(f, "HTTP {status}: {body}"),
            HttpFailure::Decode(msg) => write!(f, "response is not JSON: {msg}"),
        }
    }
}

pub(crate) struct JsonClient {
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl JsonClient {
    /// `attempts` counts the first try; 0 is treated as 1.
    pub(crate) fn new(timeout: Duration, attempts: u32, backoff: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            attempts: attempts.max(1),
            backoff,
        }
    }

    pub(crate) fn post(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, HttpFailure> {
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            if attempt > 1 {
                std::thread::sleep(self.backoff * (attempt - 1));
            }
            let mut request = self.agent.post(url);
            if let Some(token) = bearer {
                request = request.header("Authorization", &format!("Bearer {token}"));
            }
            match request.send_json(body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if status == 429 || status >= 500 {
                        last = format!("HTTP {status}");
                        log::warn!("{url}: attempt {attempt}/{}: {last}", self.attempts);
                        continue;
                    }
                    if !(200..300).contains(&status) {
                        let body = response.body_mut().read_to_string().unwrap_or_default();
                        return Err(HttpFailure::Status { status, body });
                    }
                    return response
                        .body_mut()
                        .read_json::<Value>()
                        .map_err(|e| HttpFailure::Decode(e.to_string()));
                }
                Err(e) => {
                    last = e.to_string();
                    log::warn!("{url}: attempt {attempt}/{}: {last}", self.attempts);
                }
            }
        }
        Err(HttpFailure::Exhausted {
            attempts: self.attempts,
            last,
        })
    }
}
