//! Self-describing model checkpoints: architecture, every parameter tensor,
//! and the full preprocessing recipe (schema, vocabularies, scaler) needed
//! to turn a raw CSV window into a de-normalized forecast.
//!
//! The container is JSON with a magic header and version; f64 values survive
//! the round trip exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ImputePolicy, Scaler, Schema};
use crate::models::{
    Activation, DenseLayer, DiscriminatorModel, DiscriminatorSpec, ForecasterModel,
    ForecasterSpec, LstmLayerParams,
};
use crate::tensor::Tensor;

pub const MAGIC: &str = "MATSF-CHECKPOINT";
pub const VERSION: u32 = 1;

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint format error: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl TensorData {
    fn of(t: &Tensor) -> Self {
        TensorData { shape: t.shape(), values: t.to_vec() }
    }

    fn to_parameter(&self) -> Result<Tensor> {
        Tensor::parameter(&self.shape, self.values.clone())
            .map_err(|e| CheckpointError::Format(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayerData {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_gates: TensorData,
    pub u_gates: TensorData,
    pub b_gates: TensorData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecasterData {
    pub spec: ForecasterSpec,
    pub layers: Vec<LstmLayerData>,
    pub head_w: TensorData,
    pub head_b: TensorData,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayerData {
    pub w: TensorData,
    pub b: TensorData,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorData {
    pub spec: DiscriminatorSpec,
    pub layers: Vec<DenseLayerData>,
}

/// Everything needed to reproduce the preprocessing of a training run on new
/// rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub schema: Schema,
    pub impute_policy: ImputePolicy,
    pub categorical_vocab: BTreeMap<String, Vec<String>>,
    pub scaler: Scaler,
    pub lookback: usize,
    pub horizon: usize,
    pub feature_columns: Vec<String>,
    pub target_columns: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub system: String,
    pub pipeline: PipelineSpec,
    pub forecasters: Vec<ForecasterData>,
    pub discriminator: Option<DiscriminatorData>,
}

impl Checkpoint {
    pub fn new(
        system: &str,
        pipeline: PipelineSpec,
        forecasters: &[ForecasterModel],
        discriminator: Option<&DiscriminatorModel>,
    ) -> Self {
        Checkpoint {
            magic: MAGIC.to_string(),
            version: VERSION,
            system: system.to_string(),
            pipeline,
            forecasters: forecasters.iter().map(pack_forecaster).collect(),
            discriminator: discriminator.map(pack_discriminator),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let raw = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&raw)?;
        if ckpt.magic != MAGIC {
            return Err(CheckpointError::Format(format!(
                "bad magic '{}' (expected '{MAGIC}')",
                ckpt.magic
            )));
        }
        if ckpt.version != VERSION {
            return Err(CheckpointError::Format(format!(
                "unsupported version {} (expected {VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn unpack_forecasters(&self) -> Result<Vec<ForecasterModel>> {
        self.forecasters.iter().map(unpack_forecaster).collect()
    }

    pub fn unpack_discriminator(&self) -> Result<Option<DiscriminatorModel>> {
        self.discriminator.as_ref().map(unpack_discriminator).transpose()
    }
}

fn pack_forecaster(m: &ForecasterModel) -> ForecasterData {
    ForecasterData {
        spec: m.spec(),
        layers: m
            .layers
            .iter()
            .map(|l| LstmLayerData {
                input_size: l.input_size,
                hidden_size: l.hidden_size,
                w_gates: TensorData::of(&l.w_gates),
                u_gates: TensorData::of(&l.u_gates),
                b_gates: TensorData::of(&l.b_gates),
            })
            .collect(),
        head_w: TensorData::of(&m.head_w),
        head_b: TensorData::of(&m.head_b),
    }
}

fn unpack_forecaster(d: &ForecasterData) -> Result<ForecasterModel> {
    let layers = d
        .layers
        .iter()
        .map(|l| {
            Ok(LstmLayerParams {
                input_size: l.input_size,
                hidden_size: l.hidden_size,
                w_gates: l.w_gates.to_parameter()?,
                u_gates: l.u_gates.to_parameter()?,
                b_gates: l.b_gates.to_parameter()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if layers.is_empty() {
        return Err(CheckpointError::Format("forecaster has no layers".into()));
    }
    Ok(ForecasterModel {
        layers,
        head_w: d.head_w.to_parameter()?,
        head_b: d.head_b.to_parameter()?,
        out: d.spec.out,
        target: d.spec.target,
    })
}

fn pack_discriminator(m: &DiscriminatorModel) -> DiscriminatorData {
    DiscriminatorData {
        spec: m.spec(),
        layers: m
            .layers
            .iter()
            .map(|l| DenseLayerData {
                w: TensorData::of(&l.w),
                b: TensorData::of(&l.b),
                activation: l.activation,
            })
            .collect(),
    }
}

fn unpack_discriminator(d: &DiscriminatorData) -> Result<DiscriminatorModel> {
    let layers = d
        .layers
        .iter()
        .map(|l| {
            Ok(DenseLayer {
                w: l.w.to_parameter()?,
                b: l.b.to_parameter()?,
                activation: l.activation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscriminatorModel {
        layers,
        input_size: d.spec.input_size,
    })
}
