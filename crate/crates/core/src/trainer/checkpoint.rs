//! Parameter checkpoints: JSON with shape headers and base64 payloads of
//! little-endian `f64` values.
//!
//! ```text
//! {"format":"fan-checkpoint/1","config":{..},"num_classes":3,
//!  "tensors":[{"name":"w_k","rows":8,"cols":16,"data":"<base64>"},..]}
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::ModelParams;
use crate::attention::AttentionParams;
use crate::error::{invalid_field, Result};
use crate::numeric::RealMatrix;

pub const CHECKPOINT_FORMAT: &str = "fan-checkpoint/1";

const TENSOR_NAMES: [&str; 4] = ["w_k", "w_q", "classifier_w", "classifier_b"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

impl Tensor {
    fn encode(name: &str, m: &RealMatrix) -> Self {
        let bytes: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: STANDARD.encode(bytes),
        }
    }

    fn decode(&self) -> Result<RealMatrix> {
        let field = || format!("tensors.{}", self.name);
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| invalid_field(field(), format!("bad base64: {e}")))?;
        if bytes.len() != 8 * self.rows * self.cols {
            return Err(invalid_field(
                field(),
                format!(
                    "{}x{} needs {} bytes, payload has {}",
                    self.rows,
                    self.cols,
                    8 * self.rows * self.cols,
                    bytes.len()
                ),
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        RealMatrix::new(self.rows, self.cols, data).map_err(|e| invalid_field(field(), e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: TrainConfig,
    pub num_classes: usize,
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, config: &TrainConfig) -> Self {
        let bias = RealMatrix::from_raw(1, params.classifier_b.len(), params.classifier_b.clone());
        let tensors = vec![
            Tensor::encode("w_k", &params.attention.w_k),
            Tensor::encode("w_q", &params.attention.w_q),
            Tensor::encode("classifier_w", &params.classifier_w),
            Tensor::encode("classifier_b", &bias),
        ];
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config: config.clone(),
            num_classes: params.num_classes(),
            tensors,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(invalid_field(
                "format",
                format!("expected `{CHECKPOINT_FORMAT}`, found `{}`", self.format),
            ));
        }
        let mut found = Vec::with_capacity(4);
        for name in TENSOR_NAMES {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| invalid_field("tensors", format!("missing tensor `{name}`")))?;
            found.push(t.decode()?);
        }
        let bias = found.pop().expect("four tensors");
        let classifier_w = found.pop().expect("four tensors");
        let w_q = found.pop().expect("four tensors");
        let w_k = found.pop().expect("four tensors");
        let attention = AttentionParams::new(w_k, w_q)?;
        if classifier_w.rows() != bias.cols() || bias.rows() != 1 {
            return Err(invalid_field(
                "tensors.classifier_b",
                format!("expected 1x{}, found {}x{}", classifier_w.rows(), bias.rows(), bias.cols()),
            ));
        }
        Ok(ModelParams {
            attention,
            classifier_w,
            classifier_b: bias.into_data(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
