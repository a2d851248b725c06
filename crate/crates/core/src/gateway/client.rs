//! HTTP client side of the gateway protocol.

use std::time::Duration;

use super::thing::ThingDescription;
use super::GatewayError;
use crate::value::Value;

#[derive(Clone)]
pub struct GatewayClient {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl GatewayClient {
    pub fn new(url: &str, token: Option<&str>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(5)))
            .build()
            .into();
        Self {
            base: url.trim_end_matches('/').to_string(),
            token: token.map(str::to_string),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn auth(&self) -> Option<String> {
        self.token.as_ref().map(|t| format!("Bearer {t}"))
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<serde_json::Value, GatewayError> {
        let mut resp = resp.map_err(|e| GatewayError::Unreachable(format!("{}: {e}", self.base)))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Protocol(e.to_string()))?;
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| GatewayError::Protocol(format!("bad JSON: {e}")))?;
        let msg = || json.get("error").and_then(|e| e.as_str()).unwrap_or("").to_string();
        match status {
            200..=299 => Ok(json),
            400 => Err(GatewayError::BadRequest(msg())),
            401 | 403 => Err(GatewayError::Unauthorized),
            404 => Err(GatewayError::NotFound(msg())),
            s => Err(GatewayError::Protocol(format!("status {s}: {}", msg()))),
        }
    }

    fn get(&self, path: &str) -> Result<serde_json::Value, GatewayError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(a) = self.auth() {
            req = req.header("Authorization", a);
        }
        self.finish(req.call())
    }

    fn send(&self, put: bool, path: &str, body: serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let url = format!("{}{path}", self.base);
        let mut req = if put { self.agent.put(url) } else { self.agent.post(url) };
        req = req.header("Content-Type", "application/json");
        if let Some(a) = self.auth() {
            req = req.header("Authorization", a);
        }
        self.finish(req.send(body.to_string()))
    }

    pub fn things(&self) -> Result<Vec<ThingDescription>, GatewayError> {
        let json = self.get("/things")?;
        serde_json::from_value(json).map_err(|e| GatewayError::Protocol(format!("ledger: {e}")))
    }

    pub fn get_property(&self, thing: &str, name: &str) -> Result<serde_json::Value, GatewayError> {
        let json = self.get(&format!("/things/{thing}/properties/{name}"))?;
        json.get(name)
            .cloned()
            .ok_or_else(|| GatewayError::Protocol(format!("response lacks {name}")))
    }

    pub fn put_property(&self, thing: &str, name: &str, value: &Value) -> Result<(), GatewayError> {
        self.send(
            true,
            &format!("/things/{thing}/properties/{name}"),
            serde_json::json!({ name: value }),
        )
        .map(|_| ())
    }

    pub fn invoke_action(&self, thing: &str, action: &str, params: &[(String, String)]) -> Result<(), GatewayError> {
        let input: serde_json::Map<String, serde_json::Value> = params
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        self.send(
            false,
            &format!("/things/{thing}/actions/{action}"),
            serde_json::json!({ action: input }),
        )
        .map(|_| ())
    }
}
