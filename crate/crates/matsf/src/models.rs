//! The three network families: per-variable stacked-LSTM forecasters, the
//! feed-forward discriminator, and the multi-output forecaster reused by the
//! multi-output baseline (same trunk, wider head).

use serde::{Deserialize, Serialize};

use crate::tensor::{sub_seed, CounterRng, Tensor, TensorError};

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Seed-stream tags so each party of a run draws independent parameters.
pub const STREAM_FORECASTER: u64 = 0x10;
pub const STREAM_DISCRIMINATOR: u64 = 0x20;

pub fn forecaster_seed(run_seed: u64, variable: usize) -> u64 {
    sub_seed(run_seed, STREAM_FORECASTER + variable as u64)
}

pub fn discriminator_seed(run_seed: u64) -> u64 {
    sub_seed(run_seed, STREAM_DISCRIMINATOR)
}

// ── input batches ────────────────────────────────────────────────────

/// A dense `[batch × lookback × features]` input block, outside any
/// differentiation graph.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    values: Vec<f64>,
    batch: usize,
    lookback: usize,
    features: usize,
}

impl WindowBatch {
    pub fn new(values: Vec<f64>, batch: usize, lookback: usize, features: usize) -> Result<Self> {
        if values.len() != batch * lookback * features {
            return Err(ModelError::Config(format!(
                "window batch of {} values does not match {batch}x{lookback}x{features}",
                values.len()
            )));
        }
        Ok(WindowBatch { values, batch, lookback, features })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Leaf tensor `[batch × features]` for one timestep of every window.
    pub fn step_tensor(&self, t: usize) -> Tensor {
        let mut out = Vec::with_capacity(self.batch * self.features);
        for b in 0..self.batch {
            let start = (b * self.lookback + t) * self.features;
            out.extend_from_slice(&self.values[start..start + self.features]);
        }
        Tensor::from_values(&[self.batch, self.features], out).expect("shape consistent")
    }
}

// ── LSTM forecaster ──────────────────────────────────────────────────

/// Packed gate layout along the 4·hidden axis.
pub const GATE_ORDER: [&str; 4] = ["input", "forget", "cell", "output"];

/// One LSTM layer. Gates are packed (input, forget, cell, output) along the
/// first axis of `w_gates`/`u_gates`/`b_gates`.
pub struct LstmLayerParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_gates: Tensor, // [4H × input]
    pub u_gates: Tensor, // [4H × H]
    pub b_gates: Tensor, // [4H]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetIndex {
    Variable(usize),
    All,
}

/// Stacked LSTM with a linear head. `out` is 1 for per-variable models and
/// the variable count for the multi-output baseline.
pub struct ForecasterModel {
    pub layers: Vec<LstmLayerParams>,
    pub head_w: Tensor, // [out × H]
    pub head_b: Tensor, // [out]
    pub out: usize,
    pub target: TargetIndex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForecasterSpec {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub out: usize,
    pub target: TargetIndex,
}

impl ForecasterSpec {
    pub fn single_variable(input_size: usize, hidden_size: usize, num_layers: usize, variable: usize) -> Self {
        ForecasterSpec {
            input_size,
            hidden_size,
            num_layers,
            out: 1,
            target: TargetIndex::Variable(variable),
        }
    }

    pub fn multi_output(input_size: usize, hidden_size: usize, num_layers: usize, out: usize) -> Self {
        ForecasterSpec {
            input_size,
            hidden_size,
            num_layers,
            out,
            target: TargetIndex::All,
        }
    }
}

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights from the counter-based
/// generator; biases zero except the forget-gate slice, which starts at 1.
pub fn init_forecaster(spec: &ForecasterSpec, seed: u64) -> Result<ForecasterModel> {
    if spec.input_size == 0 || spec.hidden_size == 0 || spec.num_layers == 0 || spec.out == 0 {
        return Err(ModelError::Config(format!(
            "all sizes must be positive: {spec:?}"
        )));
    }
    if let TargetIndex::Variable(_) = spec.target {
        if spec.out != 1 {
            return Err(ModelError::Config(
                "single-variable forecaster must have out = 1".into(),
            ));
        }
    }
    let h = spec.hidden_size;
    let mut rng = CounterRng::new(seed);
    let mut layers = Vec::with_capacity(spec.num_layers);
    for l in 0..spec.num_layers {
        let input = if l == 0 { spec.input_size } else { h };
        let wb = 1.0 / (input as f64).sqrt();
        let ub = 1.0 / (h as f64).sqrt();
        let w_gates = Tensor::parameter(&[4 * h, input], rng.fill_symmetric(4 * h * input, wb))?;
        let u_gates = Tensor::parameter(&[4 * h, h], rng.fill_symmetric(4 * h * h, ub))?;
        let mut bias = vec![0.0; 4 * h];
        bias[h..2 * h].fill(1.0); // forget gate
        let b_gates = Tensor::parameter(&[4 * h], bias)?;
        layers.push(LstmLayerParams {
            input_size: input,
            hidden_size: h,
            w_gates,
            u_gates,
            b_gates,
        });
    }
    let hb = 1.0 / (h as f64).sqrt();
    let head_w = Tensor::parameter(&[spec.out, h], rng.fill_symmetric(spec.out * h, hb))?;
    let head_b = Tensor::parameter(&[spec.out], vec![0.0; spec.out])?;
    Ok(ForecasterModel {
        layers,
        head_w,
        head_b,
        out: spec.out,
        target: spec.target,
    })
}

impl ForecasterModel {
    pub fn parameters(&self) -> Vec<Tensor> {
        let mut ps = Vec::with_capacity(self.layers.len() * 3 + 2);
        for l in &self.layers {
            ps.push(l.w_gates.clone());
            ps.push(l.u_gates.clone());
            ps.push(l.b_gates.clone());
        }
        ps.push(self.head_w.clone());
        ps.push(self.head_b.clone());
        ps
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn spec(&self) -> ForecasterSpec {
        ForecasterSpec {
            input_size: self.input_size(),
            hidden_size: self.hidden_size(),
            num_layers: self.layers.len(),
            out: self.out,
            target: self.target,
        }
    }
}

/// One LSTM cell step over a batch of rows.
///
///   i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
///   g = tanh(W_g x + U_g h + b_g) o = σ(W_o x + U_o h + b_o)
///   c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
pub fn lstm_cell_forward(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    params: &LstmLayerParams,
) -> Result<(Tensor, Tensor)> {
    let hs = params.hidden_size;
    let gates = x
        .matmul(&params.w_gates.transpose()?)?
        .add(&h.matmul(&params.u_gates.transpose()?)?)?
        .add(&params.b_gates)?; // [B × 4H]
    let i = gates.narrow(1, 0, hs)?.sigmoid();
    let f = gates.narrow(1, hs, hs)?.sigmoid();
    let g = gates.narrow(1, 2 * hs, hs)?.tanh();
    let o = gates.narrow(1, 3 * hs, hs)?.sigmoid();
    let c_new = f.mul(c)?.add(&i.mul(&g)?)?;
    let h_new = o.mul(&c_new.tanh())?;
    Ok((h_new, c_new))
}

/// Unroll the stack over the lookback window and project the final hidden
/// state. Hidden and cell states start at zero for every window.
pub fn forecaster_forward(model: &ForecasterModel, window: &WindowBatch) -> Result<Tensor> {
    if window.lookback() == 0 || window.batch() == 0 {
        return Err(ModelError::Tensor(TensorError::Contract {
            op: "forecaster_forward",
            message: "empty window".into(),
        }));
    }
    if window.features() != model.input_size() {
        return Err(ModelError::Tensor(TensorError::Dimension {
            op: "forecaster_forward",
            lhs: vec![window.batch(), window.lookback(), window.features()],
            rhs: vec![model.input_size()],
        }));
    }
    let batch = window.batch();
    let mut seq: Vec<Tensor> = (0..window.lookback()).map(|t| window.step_tensor(t)).collect();
    for layer in &model.layers {
        let mut h = Tensor::zeros(&[batch, layer.hidden_size]);
        let mut c = Tensor::zeros(&[batch, layer.hidden_size]);
        let mut next = Vec::with_capacity(seq.len());
        for x in &seq {
            let (nh, nc) = lstm_cell_forward(x, &h, &c, layer)?;
            h = nh;
            c = nc;
            next.push(h.clone());
        }
        seq = next;
    }
    let last = seq.last().expect("lookback >= 1");
    Ok(last
        .matmul(&model.head_w.transpose()?)?
        .add(&model.head_b)?)
}

// ── discriminator ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub struct DenseLayer {
    pub w: Tensor, // [out × in]
    pub b: Tensor, // [out]
    pub activation: Activation,
}

/// Feed-forward classifier over variable vectors; the final layer is a
/// single sigmoid unit, so scores live strictly inside (0, 1).
pub struct DiscriminatorModel {
    pub layers: Vec<DenseLayer>,
    pub input_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub input_size: usize,
    pub hidden_widths: Vec<usize>,
}

impl DiscriminatorSpec {
    /// Two relu hidden layers of width 4·d.
    pub fn default_for(d: usize) -> Self {
        DiscriminatorSpec {
            input_size: d,
            hidden_widths: vec![4 * d, 4 * d],
        }
    }
}

pub fn init_discriminator(spec: &DiscriminatorSpec, seed: u64) -> Result<DiscriminatorModel> {
    if spec.input_size == 0 || spec.hidden_widths.contains(&0) {
        return Err(ModelError::Config(format!(
            "all sizes must be positive: {spec:?}"
        )));
    }
    let mut rng = CounterRng::new(seed);
    let mut widths = vec![spec.input_size];
    widths.extend(&spec.hidden_widths);
    widths.push(1);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for i in 0..widths.len() - 1 {
        let (fan_in, fan_out) = (widths[i], widths[i + 1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Tensor::parameter(&[fan_out, fan_in], rng.fill_symmetric(fan_out * fan_in, bound))?;
        let b = Tensor::parameter(&[fan_out], vec![0.0; fan_out])?;
        let activation = if i + 2 == widths.len() {
            Activation::Sigmoid
        } else {
            Activation::Relu
        };
        layers.push(DenseLayer { w, b, activation });
    }
    Ok(DiscriminatorModel {
        layers,
        input_size: spec.input_size,
    })
}

impl DiscriminatorModel {
    pub fn parameters(&self) -> Vec<Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [l.w.clone(), l.b.clone()])
            .collect()
    }

    pub fn set_frozen(&self, frozen: bool) {
        for p in self.parameters() {
            p.set_requires_grad(!frozen);
        }
    }

    pub fn spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            input_size: self.input_size,
            hidden_widths: self
                .layers
                .iter()
                .take(self.layers.len() - 1)
                .map(|l| l.w.shape()[0])
                .collect(),
        }
    }
}

/// Score a `[batch × d]` block of variable vectors; outputs are strictly
/// inside (0, 1).
pub fn discriminator_forward(model: &DiscriminatorModel, v: &Tensor) -> Result<Tensor> {
    let shape = v.shape();
    if shape.len() != 2 || shape[1] != model.input_size {
        return Err(ModelError::Tensor(TensorError::Dimension {
            op: "discriminator_forward",
            lhs: shape,
            rhs: vec![model.input_size],
        }));
    }
    let mut x = v.clone();
    for layer in &model.layers {
        let pre = x.matmul(&layer.w.transpose()?)?.add(&layer.b)?;
        x = match layer.activation {
            Activation::Relu => pre.relu(),
            Activation::Sigmoid => pre.sigmoid().clamp_open_unit(),
        };
    }
    Ok(x)
}
