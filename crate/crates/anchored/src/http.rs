//! Blocking HTTP client for the model service, implementing the adapter traits.

use std::time::Duration;

use anchored_core::adapters::{
    adapter_error, AdapterSet, DenoiseRequest, Denoiser, DepthEstimator, DepthRequest, DescribeRequest, Describer,
    Endpoint, InpaintRequest, Inpainter,
};
use anchored_core::sampling::Signal;
use anchored_core::{DepthMap, Result, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::wire::{self, DenoiseResponse, DepthResponse, DescribeResponse, ErrorBody, InpaintResponse};

/// Overrides the configured service URL when set.
pub const ENDPOINT_ENV: &str = "ANCHORED_MODEL_ENDPOINT";

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Clone)]
pub struct HttpClient {
    base: String,
    agent: ureq::Agent,
    retries: u32,
}

impl std::fmt::Debug for HttpClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpClient").field("base", &self.base).field("retries", &self.retries).finish()
    }
}

enum Failure {
    /// Worth another attempt: transport trouble or a 5xx.
    Transient(String),
    Fatal(String),
}

impl HttpClient {
    /// `retries` extra attempts are made after a transport error or 5xx reply.
    pub fn new(base: &str, timeout: Duration, retries: u32) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClient { base: base.trim_end_matches('/').to_string(), agent, retries }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn attempt<R: DeserializeOwned>(&self, url: &str, body: &str) -> std::result::Result<R, Failure> {
        let mut resp = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| Failure::Transient(format!("request to {url} failed: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| Failure::Transient(format!("reading response from {url} failed: {e}")))?;
        if status != 200 {
            let detail = match serde_json::from_str::<ErrorBody>(&text) {
                Ok(b) => b.error,
                Err(_) => format!("unstructured body {:?}", text.chars().take(200).collect::<String>()),
            };
            let msg = format!("HTTP {status}: {detail}");
            return Err(if status >= 500 { Failure::Transient(msg) } else { Failure::Fatal(msg) });
        }
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("response does not match schema: {e}")))
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, endpoint: Endpoint, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base, wire::route(endpoint));
        let body = serde_json::to_string(body).map_err(|e| adapter_error(endpoint, e.to_string()))?;
        let mut tries = 0;
        loop {
            match self.attempt(&url, &body) {
                Ok(r) => return Ok(r),
                Err(Failure::Transient(_)) if tries < self.retries => tries += 1,
                Err(Failure::Transient(m) | Failure::Fatal(m)) => return Err(adapter_error(endpoint, m)),
            }
        }
    }

    /// All four adapters backed by this client.
    pub fn adapter_set(&self) -> AdapterSet {
        AdapterSet::new(Box::new(self.clone()), Box::new(self.clone()), Box::new(self.clone()), Box::new(self.clone()))
    }
}

impl Inpainter for HttpClient {
    fn inpaint(&mut self, req: &InpaintRequest<'_>) -> Result<RgbImage> {
        let r: InpaintResponse = self.post(Endpoint::Inpaint, &wire::inpaint_body(req))?;
        wire::rgb_from_b64("image", &r.image).map_err(|m| adapter_error(Endpoint::Inpaint, m))
    }
}

impl DepthEstimator for HttpClient {
    fn estimate_depth(&mut self, req: &DepthRequest<'_>) -> Result<DepthMap> {
        let r: DepthResponse = self.post(Endpoint::Depth, &wire::depth_body(req))?;
        wire::depth_from_b64("depth", &r.depth).map_err(|m| adapter_error(Endpoint::Depth, m))
    }
}

impl Describer for HttpClient {
    fn describe(&mut self, req: &DescribeRequest<'_>) -> Result<String> {
        let r: DescribeResponse = self.post(Endpoint::Describe, &wire::describe_body(req))?;
        Ok(r.text)
    }
}

impl Denoiser for HttpClient {
    fn denoise(&mut self, req: &DenoiseRequest<'_>) -> Result<Signal> {
        let r: DenoiseResponse = self.post(Endpoint::Denoise, &wire::denoise_body(req))?;
        wire::decode_tensor("mu", &r.mu).map_err(|m| adapter_error(Endpoint::Denoise, m))
    }
}
