//! Remote detector client.
//!
//! Wire protocol: `POST <endpoint>` with `content-type: application/json` and
//! body `{"image_png_base64": "<standard base64 of an 8-bit PNG>"}`; the
//! response body is `{"label": 0 | 1}`.

use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{Label, Oracle, OracleError, QueryLedger};
use crate::image::{decode_png, encode_png, ImageTensor};

/// Retries after the first attempt for transport failures and 5xx replies.
pub const MAX_RETRIES: u32 = 3;

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub image_png_base64: String,
}

pub fn encode_request(img: &ImageTensor) -> Result<String, OracleError> {
    let png = encode_png(img).map_err(|e| OracleError::Encode(e.to_string()))?;
    let req = QueryRequest {
        image_png_base64: STANDARD.encode(png),
    };
    serde_json::to_string(&req).map_err(|e| OracleError::Encode(e.to_string()))
}

/// Server-side inverse of [`encode_request`].
pub fn decode_request(body: &[u8]) -> Result<ImageTensor, OracleError> {
    let req: QueryRequest =
        serde_json::from_slice(body).map_err(|e| OracleError::Malformed(e.to_string()))?;
    let png = STANDARD
        .decode(req.image_png_base64.as_bytes())
        .map_err(|e| OracleError::Malformed(e.to_string()))?;
    decode_png(&png).map_err(|e| OracleError::Malformed(e.to_string()))
}

/// Parse `{"label": 0 | 1}`. Anything else, including a bare array, is malformed.
pub fn parse_verdict(body: &[u8]) -> Result<Label, OracleError> {
    let value: serde_json::Value =
        serde_json::from_slice(body).map_err(|e| OracleError::Malformed(e.to_string()))?;
    let label = value
        .as_object()
        .and_then(|o| o.get("label"))
        .ok_or_else(|| OracleError::Malformed("expected an object with a \"label\" field".into()))?;
    match label.as_u64() {
        Some(0) => Ok(Label::Real),
        Some(1) => Ok(Label::Fake),
        _ => Err(OracleError::Malformed(format!("label must be 0 or 1, got {label}"))),
    }
}

pub fn encode_verdict(label: Label) -> String {
    format!("{{\"label\":{}}}", label.as_u8())
}

#[derive(Debug, Clone)]
pub struct HttpOracleConfig {
    pub endpoint: String,
    pub timeout: Duration,
    pub backoff_base: Duration,
    pub bearer_token: Option<String>,
}

impl HttpOracleConfig {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout,
            backoff_base: Duration::from_millis(50),
            bearer_token: None,
        }
    }
}

pub struct HttpOracle {
    config: HttpOracleConfig,
    agent: ureq::Agent,
    ledger: QueryLedger,
}

impl std::fmt::Debug for HttpOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpOracle")
            .field("endpoint", &self.config.endpoint)
            .field("queries", &self.ledger.total())
            .finish()
    }
}

enum Attempt {
    Done(Result<Label, OracleError>),
    Retry(OracleError),
}

impl HttpOracle {
    pub fn new(config: HttpOracleConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        Self {
            config,
            agent,
            ledger: QueryLedger::new(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .set("content-type", "application/json");
        if let Some(token) = &self.config.bearer_token {
            req = req.set("authorization", &format!("Bearer {token}"));
        }
        match req.send_string(body) {
            Ok(resp) => {
                let mut buf = Vec::new();
                match std::io::Read::read_to_end(&mut resp.into_reader(), &mut buf) {
                    Ok(_) => Attempt::Done(parse_verdict(&buf)),
                    Err(e) => Attempt::Retry(OracleError::Transport(e.to_string())),
                }
            }
            Err(ureq::Error::Status(code, _)) if code >= 500 => {
                Attempt::Retry(OracleError::Status(code))
            }
            Err(ureq::Error::Status(code, _)) => Attempt::Done(Err(OracleError::Status(code))),
            Err(ureq::Error::Transport(t)) => Attempt::Retry(OracleError::Transport(t.to_string())),
        }
    }
}

impl Oracle for HttpOracle {
    fn query(&self, img: &ImageTensor) -> Result<Label, OracleError> {
        let body = encode_request(img)?;
        let mut last = None;
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                let wait = self.config.backoff_base * 2u32.pow(attempt - 1);
                debug!("retrying oracle query in {wait:?} (attempt {attempt})");
                thread::sleep(wait);
            }
            match self.attempt(&body) {
                Attempt::Done(result) => {
                    let label = result?;
                    self.ledger.record();
                    return Ok(label);
                }
                Attempt::Retry(err) => {
                    warn!("oracle query failed: {err}");
                    last = Some(err);
                }
            }
        }
        Err(match last {
            Some(OracleError::Status(code)) => OracleError::Status(code),
            Some(err) => OracleError::Transport(format!("retries exhausted: {err}")),
            None => OracleError::Transport("retries exhausted".into()),
        })
    }

    fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}
