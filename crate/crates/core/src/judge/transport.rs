//! OpenAI-style chat-completions client. Protocol level only: a JSON POST
//! with a messages array, optional image parts, bearer auth from an env
//! var, and a global timeout. Anything speaking this shape can judge.

use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::logging;

/// One user turn: the prompt text plus image refs to attach in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub text: String,
    pub images: Vec<String>,
    pub temperature: f64,
}

/// Something that can answer a chat request with assistant text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

pub struct HttpTransport {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: &str, api_key_env: &str, timeout_s: f64) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout_s.max(0.001))))
            .http_status_as_error(true)
            .build()
            .into();
        HttpTransport {
            endpoint: endpoint.to_string(),
            api_key: std::env::var(api_key_env).ok().filter(|k| !k.is_empty()),
            agent,
        }
    }

    fn build_body(&self, request: &ChatRequest) -> Value {
        let content: Value = if request.images.is_empty() {
            // plain string content has the broadest server support
            Value::String(request.text.clone())
        } else {
            let mut parts = vec![json!({"type": "text", "text": request.text})];
            for image in &request.images {
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": image_to_url(image)}
                }));
            }
            Value::Array(parts)
        };
        json!({
            "model": request.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
        })
    }
}

/// Pass URLs and data URIs through; read local paths and inline them as
/// base64 data URLs so a remote judge can see benchmark images.
fn image_to_url(image_ref: &str) -> String {
    if image_ref.starts_with("http://")
        || image_ref.starts_with("https://")
        || image_ref.starts_with("data:")
    {
        return image_ref.to_string();
    }
    match std::fs::read(image_ref) {
        Ok(bytes) => {
            let media = match image_ref.rsplit('.').next().map(|e| e.to_ascii_lowercase()) {
                Some(ext) if ext == "jpg" || ext == "jpeg" => "image/jpeg",
                Some(ext) if ext == "webp" => "image/webp",
                Some(ext) if ext == "gif" => "image/gif",
                _ => "image/png",
            };
            format!("data:{media};base64,{}", base64_encode(&bytes))
        }
        Err(e) => {
            logging::warn(&format!(
                "cannot read image {image_ref:?}: {e}; sending ref as-is"
            ));
            image_ref.to_string()
        }
    }
}

const BASE64_ALPHABET: &[u8; 64] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

fn base64_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len().div_ceil(3) * 4);
    for chunk in bytes.chunks(3) {
        let b = [
            chunk[0],
            *chunk.get(1).unwrap_or(&0),
            *chunk.get(2).unwrap_or(&0),
        ];
        let n = u32::from_be_bytes([0, b[0], b[1], b[2]]);
        out.push(BASE64_ALPHABET[((n >> 18) & 63) as usize] as char);
        out.push(BASE64_ALPHABET[((n >> 12) & 63) as usize] as char);
        out.push(if chunk.len() > 1 {
            BASE64_ALPHABET[((n >> 6) & 63) as usize] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            BASE64_ALPHABET[(n & 63) as usize] as char
        } else {
            '='
        });
    }
    out
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let body = self.build_body(request);
        logging::debug(&format!(
            "POST {} body={} auth={}",
            self.endpoint,
            body,
            if self.api_key.is_some() {
                "Bearer <redacted>"
            } else {
                "<none>"
            }
        ));
        let mut builder = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = builder
            .send_json(&body)
            .map_err(|e| Error::Judge(format!("request to {} failed: {e}", self.endpoint)))?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::Judge(format!("unreadable response body: {e}")))?;
        logging::debug(&format!("response body={value}"));
        extract_assistant_text(&value)
            .ok_or_else(|| Error::Judge("response carries no assistant content".into()))
    }
}

/// Pull the assistant text out of a chat-completions response; tolerates
/// both string content and array-of-parts content.
pub fn extract_assistant_text(response: &Value) -> Option<String> {
    let content = response
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => {
            let text: String = parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join("");
            Some(text)
        }
        _ => None,
    }
}
