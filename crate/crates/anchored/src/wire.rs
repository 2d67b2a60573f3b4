//! JSON bodies of the model-service protocol. Images travel as base64 PNG-8,
//! depth as base64 PNG-16 in millimetres, masks as PNG-8 with 255 meaning
//! "generate", and denoiser signals as base64 little-endian `f32` tensors of
//! shape `[height, width, 3]`.
//!
//! Every body rejects unknown fields, so the same types serve as the schema
//! for both directions.

use anchored_core::adapters::{DenoiseRequest, DepthRequest, DescribeRequest, Endpoint, InpaintRequest};
use anchored_core::sampling::Signal;
use anchored_core::{DepthMap, RgbImage};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::imageio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintBody {
    pub image: String,
    pub depth: String,
    pub mask: String,
    pub prompt: String,
    pub gamma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintResponse {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthBody {
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthResponse {
    pub depth: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeBody {
    pub image: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescribeResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    pub data: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseBody {
    pub x: Tensor,
    pub t: usize,
    #[serde(rename = "T")]
    pub total: usize,
    pub prompt: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiseResponse {
    pub mu: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: String,
}

pub fn b64_png_rgb(img: &RgbImage) -> String {
    B64.encode(imageio::encode_rgb(img))
}

fn unbase64(field: &str, s: &str) -> Result<Vec<u8>, String> {
    B64.decode(s).map_err(|e| format!("{field}: invalid base64: {e}"))
}

pub fn rgb_from_b64(field: &str, s: &str) -> Result<RgbImage, String> {
    imageio::decode_rgb(&unbase64(field, s)?).map_err(|e| format!("{field}: {e}"))
}

pub fn depth_from_b64(field: &str, s: &str) -> Result<DepthMap, String> {
    imageio::decode_depth_mm(&unbase64(field, s)?).map_err(|e| format!("{field}: {e}"))
}

pub fn encode_tensor(x: &Signal) -> Tensor {
    let mut bytes = Vec::with_capacity(x.as_slice().len() * 4);
    for v in x.as_slice() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Tensor { data: B64.encode(bytes), shape: vec![x.height(), x.width(), 3] }
}

pub fn decode_tensor(field: &str, t: &Tensor) -> Result<Signal, String> {
    let [h, w, c] = t.shape[..] else {
        return Err(format!("{field}: shape must have three dimensions, got {:?}", t.shape));
    };
    if c != 3 {
        return Err(format!("{field}: last dimension must be 3, got {c}"));
    }
    let bytes = unbase64(field, &t.data)?;
    if bytes.len() != h * w * c * 4 {
        return Err(format!("{field}: {} bytes do not match shape {:?}", bytes.len(), t.shape));
    }
    let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
    Signal::from_vec(w, h, data).map_err(|e| format!("{field}: {e}"))
}

pub fn inpaint_body(req: &InpaintRequest<'_>) -> InpaintBody {
    InpaintBody {
        image: b64_png_rgb(req.image),
        depth: B64.encode(imageio::encode_depth_mm(req.depth)),
        mask: B64.encode(imageio::encode_mask(req.generate)),
        prompt: req.prompt.to_string(),
        gamma: req.gamma,
        seed: req.seed,
    }
}

/// The reference depth is a test hook for local stubs and is not sent.
pub fn depth_body(req: &DepthRequest<'_>) -> DepthBody {
    DepthBody { image: b64_png_rgb(req.image) }
}

pub fn describe_body(req: &DescribeRequest<'_>) -> DescribeBody {
    DescribeBody { image: b64_png_rgb(req.image), question: req.question.to_string() }
}

/// The reference signal is a test hook for local stubs and is not sent.
pub fn denoise_body(req: &DenoiseRequest<'_>) -> DenoiseBody {
    DenoiseBody { x: encode_tensor(req.x), t: req.t, total: req.total, prompt: req.prompt.to_string(), seed: req.seed }
}

pub fn route(endpoint: Endpoint) -> &'static str {
    match endpoint {
        Endpoint::Inpaint => "/inpaint",
        Endpoint::Depth => "/depth",
        Endpoint::Describe => "/describe",
        Endpoint::Denoise => "/denoise",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let x = Signal::from_vec(2, 1, vec![0.5, -1.25, 3.0, 0.0, 1e-3, -7.5]).unwrap();
        let t = encode_tensor(&x);
        assert_eq!(t.shape, vec![1, 2, 3]);
        let back = decode_tensor("x", &t).unwrap();
        for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn tensor_shape_checks() {
        let t = Tensor { data: B64.encode([0u8; 12]), shape: vec![1, 2, 3] };
        assert!(decode_tensor("mu", &t).unwrap_err().contains("do not match"));
        let t = Tensor { data: B64.encode([0u8; 12]), shape: vec![1, 3] };
        assert!(decode_tensor("mu", &t).is_err());
    }

    #[test]
    fn bodies_reject_unknown_fields() {
        assert!(serde_json::from_str::<DescribeResponse>(r#"{"text":"Yes"}"#).is_ok());
        assert!(serde_json::from_str::<DescribeResponse>(r#"{"text":"Yes","extra":1}"#).is_err());
        assert!(serde_json::from_str::<DenoiseBody>(r#"{"x":{"data":"","shape":[0,0,3]},"t":1,"total":2,"prompt":"","seed":0}"#).is_err());
    }
}
