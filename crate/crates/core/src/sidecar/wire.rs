//! Message types of the sidecar protocol.
//!
//! Each message is one JSON object on its own line. Tensors travel as
//! `{"shape": [...], "data": "<base64 of little-endian f32>"}`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::img::Image;
use crate::tensor::Tensor;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Hello,
    Encode,
    PredictNoise,
    LatentGradToImage,
    Caption,
    EmbedText,
    EmbedImage,
    Ping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub kind: Kind,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<Kind>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub payload: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
}

impl Response {
    pub fn ok(id: u64, kind: Kind, payload: Value) -> Self {
        Self {
            id,
            kind: Some(kind),
            payload,
            error: None,
        }
    }

    pub fn err(id: u64, code: &str, message: impl Into<String>) -> Self {
        Self {
            id,
            kind: None,
            payload: Value::Null,
            error: Some(WireError {
                code: code.into(),
                message: message.into(),
            }),
        }
    }
}

/// Latent layout the server's encoder produces for an `h × w` image:
/// `[channels, h / downscale, w / downscale]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentGeometry {
    pub channels: usize,
    pub downscale: usize,
}

impl LatentGeometry {
    pub fn latent_shape(&self, height: usize, width: usize) -> Result<Vec<usize>> {
        let d = self.downscale;
        if d == 0 || !height.is_multiple_of(d) || !width.is_multiple_of(d) {
            return Err(Error::Config(format!(
                "image {width}x{height} is not divisible by the latent downscale {d}"
            )));
        }
        Ok(vec![self.channels, height / d, width / d])
    }
}

/// Server side of the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol: u32,
    pub latent: LatentGeometry,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub server: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireTensor {
    pub shape: Vec<usize>,
    pub data: String,
}

impl WireTensor {
    /// Packs as f32; values outside f32 range saturate to ±inf.
    pub fn pack(t: &Tensor) -> Self {
        let mut bytes = Vec::with_capacity(t.data.len() * 4);
        for &v in &t.data {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Self {
            shape: t.shape.clone(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn pack_image(image: &Image) -> Self {
        Self::pack(&Tensor::from_image(image))
    }

    pub fn unpack(&self) -> Result<Tensor> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Backend(format!("tensor payload is not base64: {e}")))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Backend(format!("tensor payload of {} bytes is not f32", bytes.len())));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }
}
