//! Joint two-phase mini-batch training of d single-variable forecasters
//! against one discriminator.
//!
//! Each mini-batch runs the forecast phase (every forecaster takes one MSE
//! step on its own variable) and then the regularization phase: the
//! discriminator learns to separate real target vectors from the
//! concatenation of the forecasters' outputs, after which the forecasters
//! update to fool it. The two baselines reuse the same driver with the
//! regularization phase switched off or the per-variable models replaced by
//! one multi-output network.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::eval;
use crate::models::{
    discriminator_forward, forecaster_forward, DiscriminatorModel, ForecasterModel, ModelError,
    WindowBatch,
};
use crate::tensor::{OptimizerKind, OptimizerState, Tensor, TensorError};

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("divergence at epoch {epoch}, batch {batch}: {loss_name} = {value}; aborting with partial report")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss_name: &'static str,
        value: f64,
        partial: Box<TrainReport>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("metric error: {0}")]
    Eval(#[from] eval::EvalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_forecast: f64,
    pub lr_disc: f64,
    pub lr_gen: f64,
    pub optimizer: OptimizerKind,
    pub disc_steps_per_batch: usize,
    pub gen_steps_per_batch: usize,
    /// Weight of the adversarial generator loss; 0 disables the
    /// regularization pressure entirely.
    pub lambda_adv: f64,
    /// Minimize log(1 - D(G)) literally instead of the non-saturating
    /// -log D(G) default.
    pub saturating_generator_loss: bool,
    /// Abort when any recorded loss is non-finite or exceeds this.
    pub loss_abort_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr_forecast: 1e-3,
            lr_disc: 1e-3,
            lr_gen: 1e-4,
            optimizer: OptimizerKind::Adam,
            disc_steps_per_batch: 1,
            gen_steps_per_batch: 1,
            lambda_adv: 0.1,
            saturating_generator_loss: false,
            loss_abort_threshold: 1e6,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if [self.lr_forecast, self.lr_disc, self.lr_gen]
            .iter()
            .any(|lr| !lr.is_finite() || *lr <= 0.0)
        {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        if self.disc_steps_per_batch == 0 || self.gen_steps_per_batch == 0 {
            return Err(TrainError::Config("per-batch step counts must be positive".into()));
        }
        if !self.lambda_adv.is_finite() || self.lambda_adv < 0.0 {
            return Err(TrainError::Config("lambda_adv must be non-negative".into()));
        }
        if !self.loss_abort_threshold.is_finite() || self.loss_abort_threshold <= 0.0 {
            return Err(TrainError::Config("loss_abort_threshold must be positive".into()));
        }
        Ok(())
    }

    fn make_optimizer(&self, lr: f64) -> Result<OptimizerState> {
        Ok(OptimizerState::new(self.optimizer, lr)?)
    }
}

/// Everything recorded for one epoch; adversarial runs fill the
/// discriminator fields, the baselines leave them empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub forecast_loss: Vec<f64>,
    pub disc_loss: Option<f64>,
    pub disc_accuracy: Option<f64>,
    pub gen_loss: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Per-variable test MSE in original units.
    pub test_mse: Vec<f64>,
    pub config: TrainConfig,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// The system being trained; baselines share this driver.
pub enum SystemSpec<'a> {
    Adversarial {
        forecasters: &'a mut [ForecasterModel],
        discriminator: &'a mut DiscriminatorModel,
    },
    ParallelSingle {
        forecasters: &'a mut [ForecasterModel],
    },
    MultiOutput {
        model: &'a mut ForecasterModel,
    },
}

impl SystemSpec<'_> {
    fn num_variables(&self) -> usize {
        match self {
            SystemSpec::Adversarial { forecasters, .. } | SystemSpec::ParallelSingle { forecasters } => {
                forecasters.len()
            }
            SystemSpec::MultiOutput { model } => model.out,
        }
    }
}

/// The adversarial system: forecast phase then regularization phase on
/// every mini-batch.
pub fn train(
    forecasters: &mut [ForecasterModel],
    discriminator: &mut DiscriminatorModel,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_system(
        SystemSpec::Adversarial { forecasters, discriminator },
        dataset,
        cfg,
    )
}

struct Phases {
    /// One state per forecaster so the models stay fully independent (a
    /// shared Adam step count would couple them through bias correction).
    opt_forecast: Vec<OptimizerState>,
    opt_disc: OptimizerState,
    opt_gen: OptimizerState,
}

pub fn train_system(mut system: SystemSpec<'_>, dataset: &WindowedDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() || dataset.train_indices().is_empty() {
        return Err(TrainError::Config("dataset has no training windows".into()));
    }
    if dataset.test_indices().is_empty() {
        return Err(TrainError::Config(
            "dataset has no test windows; split it before training".into(),
        ));
    }
    let d = dataset.num_targets();
    if system.num_variables() != d {
        return Err(TrainError::Config(format!(
            "system models {} variables but the dataset has {d} targets",
            system.num_variables()
        )));
    }

    let start = std::time::Instant::now();
    let forecast_states = match &system {
        SystemSpec::MultiOutput { .. } => 1,
        _ => d,
    };
    let mut phases = Phases {
        opt_forecast: (0..forecast_states)
            .map(|_| cfg.make_optimizer(cfg.lr_forecast))
            .collect::<Result<_>>()?,
        opt_disc: cfg.make_optimizer(cfg.lr_disc)?,
        opt_gen: cfg.make_optimizer(cfg.lr_gen)?,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_indices: Vec<usize> = dataset.train_indices().collect();
    let mut epochs: Vec<EpochRecord> = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order = train_indices.clone();
        order.shuffle(&mut rng);

        let mut forecast_acc = vec![0.0; d];
        let mut disc_acc_sum = 0.0;
        let mut disc_loss_sum = 0.0;
        let mut gen_loss_sum = 0.0;
        let mut batches = 0usize;

        for (batch_no, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (windows, targets) = dataset.gather_batch(chunk);
            let outcome = run_batch(&mut system, &mut phases, &windows, &targets, chunk.len(), d, cfg);
            let metrics = match outcome {
                Ok(m) => m,
                Err(PhaseError::Diverged { loss_name, value }) => {
                    return Err(TrainError::Divergence {
                        epoch,
                        batch: batch_no,
                        loss_name,
                        value,
                        partial: Box::new(finish_report(
                            &system, dataset, cfg, epochs, start, d,
                        )?),
                    });
                }
                Err(PhaseError::Train(e)) => return Err(e),
            };
            for (acc, l) in forecast_acc.iter_mut().zip(metrics.forecast_loss.iter()) {
                *acc += l;
            }
            if let Some((dl, da, gl)) = metrics.adversarial {
                disc_loss_sum += dl;
                disc_acc_sum += da;
                gen_loss_sum += gl;
            }
            batches += 1;
        }

        let b = batches as f64;
        let adversarial = matches!(system, SystemSpec::Adversarial { .. });
        epochs.push(EpochRecord {
            epoch,
            forecast_loss: forecast_acc.iter().map(|v| v / b).collect(),
            disc_loss: adversarial.then_some(disc_loss_sum / b),
            disc_accuracy: adversarial.then_some(disc_acc_sum / b),
            gen_loss: adversarial.then_some(gen_loss_sum / b),
        });
    }

    finish_report(&system, dataset, cfg, epochs, start, d)
}

fn finish_report(
    system: &SystemSpec<'_>,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
    epochs: Vec<EpochRecord>,
    start: std::time::Instant,
    d: usize,
) -> Result<TrainReport> {
    let test_idx: Vec<usize> = dataset.test_indices().collect();
    let (pred, truth) = predict_indices(system, dataset, &test_idx, cfg.batch_size)?;
    let test_mse = eval::mse_per_variable(&pred, &truth, test_idx.len(), d, &dataset.target_scalers())?;
    Ok(TrainReport {
        epochs,
        test_mse,
        config: cfg.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

struct BatchMetrics {
    forecast_loss: Vec<f64>,
    adversarial: Option<(f64, f64, f64)>, // (disc_loss, disc_acc, gen_loss)
}

pub enum PhaseError {
    Diverged { loss_name: &'static str, value: f64 },
    Train(TrainError),
}

impl From<TrainError> for PhaseError {
    fn from(e: TrainError) -> Self {
        PhaseError::Train(e)
    }
}

impl From<ModelError> for PhaseError {
    fn from(e: ModelError) -> Self {
        PhaseError::Train(e.into())
    }
}

impl From<TensorError> for PhaseError {
    fn from(e: TensorError) -> Self {
        PhaseError::Train(e.into())
    }
}

fn guard(loss_name: &'static str, value: f64, cfg: &TrainConfig) -> std::result::Result<f64, PhaseError> {
    if !value.is_finite() || value.abs() > cfg.loss_abort_threshold {
        Err(PhaseError::Diverged { loss_name, value })
    } else {
        Ok(value)
    }
}

fn run_batch(
    system: &mut SystemSpec<'_>,
    phases: &mut Phases,
    windows: &WindowBatch,
    targets: &[f64],
    n: usize,
    d: usize,
    cfg: &TrainConfig,
) -> std::result::Result<BatchMetrics, PhaseError> {
    match system {
        SystemSpec::Adversarial { forecasters, discriminator } => {
            let forecast_loss =
                forecast_phase_step(forecasters, windows, targets, n, d, &mut phases.opt_forecast, cfg)?;
            let adversarial = regularization_phase_step(
                forecasters,
                discriminator,
                windows,
                targets,
                n,
                d,
                &mut phases.opt_disc,
                &mut phases.opt_gen,
                cfg,
            )?;
            Ok(BatchMetrics { forecast_loss, adversarial: Some(adversarial) })
        }
        SystemSpec::ParallelSingle { forecasters } => {
            let forecast_loss =
                forecast_phase_step(forecasters, windows, targets, n, d, &mut phases.opt_forecast, cfg)?;
            Ok(BatchMetrics { forecast_loss, adversarial: None })
        }
        SystemSpec::MultiOutput { model } => {
            let forecast_loss =
                multi_output_phase_step(model, windows, targets, n, d, &mut phases.opt_forecast[0], cfg)?;
            Ok(BatchMetrics { forecast_loss, adversarial: None })
        }
    }
}

fn target_column_tensor(targets: &[f64], n: usize, d: usize, col: usize) -> Tensor {
    let vals: Vec<f64> = (0..n).map(|r| targets[r * d + col]).collect();
    Tensor::from_values(&[n, 1], vals).expect("shape consistent")
}

fn mse_loss(pred: &Tensor, truth: &Tensor) -> std::result::Result<Tensor, TensorError> {
    let diff = pred.sub(truth)?;
    Ok(diff.mul(&diff)?.mean())
}

/// Forecast phase: one MSE step per forecaster on its own variable; models
/// share no parameters and each steps against its own optimizer state.
pub fn forecast_phase_step(
    forecasters: &mut [ForecasterModel],
    windows: &WindowBatch,
    targets: &[f64],
    n: usize,
    d: usize,
    opts: &mut [OptimizerState],
    cfg: &TrainConfig,
) -> std::result::Result<Vec<f64>, PhaseError> {
    debug_assert_eq!(forecasters.len(), opts.len());
    let mut losses = Vec::with_capacity(forecasters.len());
    for (i, model) in forecasters.iter_mut().enumerate() {
        let pred = forecaster_forward(model, windows)?;
        let truth = target_column_tensor(targets, n, d, i);
        let loss = mse_loss(&pred, &truth)?;
        let value = guard("forecast_loss", loss.item(), cfg)?;
        loss.backward()?;
        opts[i].step(&model.parameters()).map_err(TrainError::from)?;
        losses.push(value);
    }
    Ok(losses)
}

/// Multi-output phase: summed MSE across all variables, one step on the
/// single shared model; per-variable losses are still reported separately.
fn multi_output_phase_step(
    model: &mut ForecasterModel,
    windows: &WindowBatch,
    targets: &[f64],
    n: usize,
    d: usize,
    opt: &mut OptimizerState,
    cfg: &TrainConfig,
) -> std::result::Result<Vec<f64>, PhaseError> {
    let pred = forecaster_forward(model, windows)?; // [n × d]
    let mut losses = Vec::with_capacity(d);
    let mut per_var = Vec::with_capacity(d);
    for i in 0..d {
        let pred_i = pred.narrow(1, i, 1)?;
        let truth = target_column_tensor(targets, n, d, i);
        let loss = mse_loss(&pred_i, &truth)?;
        per_var.push(guard("forecast_loss", loss.item(), cfg)?);
        losses.push(loss);
    }
    let mut total = losses[0].clone();
    for l in &losses[1..] {
        total = total.add(l)?;
    }
    total.backward()?;
    opt.step(&model.parameters()).map_err(TrainError::from)?;
    Ok(per_var)
}

/// Concatenated forecaster outputs for a batch, as a live graph.
fn forecast_concat(
    forecasters: &[ForecasterModel],
    windows: &WindowBatch,
) -> std::result::Result<Tensor, PhaseError> {
    let mut parts = Vec::with_capacity(forecasters.len());
    for model in forecasters {
        parts.push(forecaster_forward(model, windows)?);
    }
    Ok(Tensor::concat(&parts, 1)?)
}

/// Non-saturating generator objective -mean(log D(z)) over a batch of
/// concatenated forecasts, as a differentiable scalar.
pub fn generator_adversarial_loss(
    disc: &DiscriminatorModel,
    forecast_concat: &Tensor,
) -> std::result::Result<Tensor, ModelError> {
    let scores = discriminator_forward(disc, forecast_concat)?;
    Ok(scores.log_clamped(1e-12).mean().neg())
}

/// Saturating variant: minimize mean(log(1 - D(z))) literally.
pub fn generator_adversarial_loss_saturating(
    disc: &DiscriminatorModel,
    forecast_concat: &Tensor,
) -> std::result::Result<Tensor, ModelError> {
    let scores = discriminator_forward(disc, forecast_concat)?;
    let ones = Tensor::full(&scores.shape(), 1.0);
    Ok(ones.sub(&scores)?.log_clamped(1e-12).mean())
}

/// Fraction of 2n scored rows on the correct strict side of 0.5: a real row
/// counts when its score exceeds 0.5, a forecast row when its score is
/// below. A score of exactly 0.5 is classified as forecast and counts for
/// neither side.
fn discriminator_accuracy(real_scores: &[f64], fake_scores: &[f64]) -> f64 {
    let correct = real_scores.iter().filter(|&&s| s > 0.5).count()
        + fake_scores.iter().filter(|&&s| s < 0.5).count();
    correct as f64 / (real_scores.len() + fake_scores.len()) as f64
}

/// Held-out discriminator accuracy for frozen models.
pub fn evaluate_discriminator(
    disc: &DiscriminatorModel,
    predictions: &[f64],
    targets: &[f64],
    n: usize,
    d: usize,
) -> std::result::Result<f64, ModelError> {
    let real = discriminator_forward(disc, &Tensor::from_values(&[n, d], targets.to_vec()).map_err(ModelError::from)?)?;
    let fake = discriminator_forward(disc, &Tensor::from_values(&[n, d], predictions.to_vec()).map_err(ModelError::from)?)?;
    Ok(discriminator_accuracy(&real.to_vec(), &fake.to_vec()))
}

/// Regularization phase. First the discriminator takes
/// `disc_steps_per_batch` updates against frozen forecasters, minimizing
/// -[log D(real) + log(1 - D(fake))]; then every forecaster takes
/// `gen_steps_per_batch` updates against the frozen discriminator on the
/// lambda-scaled generator objective. Returns (disc_loss, disc_accuracy,
/// gen_loss) from the final pass of each half.
#[allow(clippy::too_many_arguments)]
pub fn regularization_phase_step(
    forecasters: &mut [ForecasterModel],
    disc: &mut DiscriminatorModel,
    windows: &WindowBatch,
    targets: &[f64],
    n: usize,
    d: usize,
    opt_disc: &mut OptimizerState,
    opt_gen: &mut OptimizerState,
    cfg: &TrainConfig,
) -> std::result::Result<(f64, f64, f64), PhaseError> {
    let real = Tensor::from_values(&[n, d], targets.to_vec()).map_err(TrainError::from)?;

    // (a) discriminator updates; forecaster parameters stay frozen, so the
    // concatenated forecasts are detached once and reused.
    let fake = forecast_concat(forecasters, windows)?.detach();
    let mut disc_loss = 0.0;
    let mut disc_acc = 0.0;
    for _ in 0..cfg.disc_steps_per_batch {
        let real_scores = discriminator_forward(disc, &real)?;
        let fake_scores = discriminator_forward(disc, &fake)?;
        let ones = Tensor::full(&fake_scores.shape(), 1.0);
        let loss = real_scores
            .log_clamped(1e-12)
            .mean()
            .neg()
            .add(&ones.sub(&fake_scores).map_err(TrainError::from)?.log_clamped(1e-12).mean().neg())
            .map_err(TrainError::from)?;
        disc_loss = guard("disc_loss", loss.item(), cfg)?;
        disc_acc = discriminator_accuracy(&real_scores.to_vec(), &fake_scores.to_vec());
        loss.backward().map_err(TrainError::from)?;
        opt_disc.step(&disc.parameters()).map_err(TrainError::from)?;
    }

    // (b) generator updates against the frozen discriminator.
    disc.set_frozen(true);
    let mut gen_loss = 0.0;
    let gen_result: std::result::Result<(), PhaseError> = (|| {
        for _ in 0..cfg.gen_steps_per_batch {
            let concat = forecast_concat(forecasters, windows)?;
            let objective = if cfg.saturating_generator_loss {
                generator_adversarial_loss_saturating(disc, &concat)?
            } else {
                generator_adversarial_loss(disc, &concat)?
            };
            gen_loss = guard("gen_loss", objective.item(), cfg)?;
            objective.scale(cfg.lambda_adv).backward().map_err(TrainError::from)?;
            let params: Vec<Tensor> = forecasters.iter().flat_map(|m| m.parameters()).collect();
            opt_gen.step(&params).map_err(TrainError::from)?;
        }
        Ok(())
    })();
    disc.set_frozen(false);
    gen_result?;

    Ok((disc_loss, disc_acc, gen_loss))
}

/// Frozen-model predictions over the given window indices, batched;
/// returns (predictions, targets) as row-major `[len × d]` blocks.
pub fn predict_indices(
    system: &SystemSpec<'_>,
    dataset: &WindowedDataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = dataset.num_targets();
    let mut pred = Vec::with_capacity(indices.len() * d);
    let mut truth = Vec::with_capacity(indices.len() * d);
    for chunk in indices.chunks(batch_size.max(1)) {
        let (windows, targets) = dataset.gather_batch(chunk);
        let block = match system {
            SystemSpec::Adversarial { forecasters, .. } | SystemSpec::ParallelSingle { forecasters } => {
                let mut parts = Vec::with_capacity(forecasters.len());
                for model in forecasters.iter() {
                    parts.push(forecaster_forward(model, &windows)?);
                }
                Tensor::concat(&parts, 1)?
            }
            SystemSpec::MultiOutput { model } => forecaster_forward(model, &windows)?,
        };
        pred.extend(block.to_vec());
        truth.extend_from_slice(&targets);
    }
    Ok((pred, truth))
}

/// Convenience wrapper when the models are not borrowed in a SystemSpec.
pub fn predict_with_forecasters(
    forecasters: &[ForecasterModel],
    dataset: &WindowedDataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = dataset.num_targets();
    let mut pred = Vec::with_capacity(indices.len() * d);
    let mut truth = Vec::with_capacity(indices.len() * d);
    for chunk in indices.chunks(batch_size.max(1)) {
        let (windows, targets) = dataset.gather_batch(chunk);
        let block = if forecasters.len() == 1 && forecasters[0].out == d {
            forecaster_forward(&forecasters[0], &windows)?
        } else {
            let mut parts = Vec::with_capacity(forecasters.len());
            for model in forecasters.iter() {
                parts.push(forecaster_forward(model, &windows)?);
            }
            Tensor::concat(&parts, 1)?
        };
        pred.extend(block.to_vec());
        truth.extend_from_slice(&targets);
    }
    Ok((pred, truth))
}
