//! Reproducible runs: resolve a configuration, drive the full pipeline and
//! the chosen system, and write every artifact into the output directory.
//!
//! Layout of a run directory:
//!   config.toml        resolved configuration echo (re-runnable)
//!   epochs.jsonl       one record per epoch
//!   summary.json       machine-readable results (deterministic)
//!   checkpoint.json    models plus the preprocessing recipe
//!   timing.txt         wall-clock seconds (excluded from determinism)
//!   plots/             discriminator.csv, forecast_loss.csv,
//!                      test_traces.csv, mse_per_variable.csv

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines;
use crate::checkpoint::{Checkpoint, CheckpointError, PipelineSpec};
use crate::data::{
    self, air_quality_schema, air_quality_targets, ColumnDecl, ColumnKind, DataError,
    ImputePolicy, Schema, TimestampSpec, WindowedDataset,
};
use crate::eval::{self, EvalError, EvalResult};
use crate::models::{
    self, discriminator_seed, forecaster_seed, init_discriminator, init_forecaster,
    DiscriminatorModel, DiscriminatorSpec, ForecasterModel, ForecasterSpec, ModelError,
    WindowBatch,
};
use crate::report::{self, ReportError, RunSummary};
use crate::synth::{self, CoupledProcessSpec, Drive, SynthError};
use crate::trainer::{self, TrainConfig, TrainError, TrainReport};

pub type Result<T> = std::result::Result<T, RunError>;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Exit code 1.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 2.
    #[error("data error: {0}")]
    Data(String),
    /// Exit code 3.
    #[error("divergence: {0}")]
    Divergence(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Data(_) => 2,
            RunError::Divergence(_) => 3,
        }
    }
}

impl From<DataError> for RunError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => RunError::Config(e.to_string()),
            _ => RunError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for RunError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => RunError::Divergence(e.to_string()),
            TrainError::Config(_) => RunError::Config(e.to_string()),
            other => RunError::Config(other.to_string()),
        }
    }
}

impl From<SynthError> for RunError {
    fn from(e: SynthError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<ModelError> for RunError {
    fn from(e: ModelError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<CheckpointError> for RunError {
    fn from(e: CheckpointError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ReportError> for RunError {
    fn from(e: ReportError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<EvalError> for RunError {
    fn from(e: EvalError) -> Self {
        RunError::Config(e.to_string())
    }
}

// ── configuration ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    Adversarial,
    MultiOutput,
    Parallel,
}

impl SystemKind {
    pub fn name(&self) -> &'static str {
        match self {
            SystemKind::Adversarial => "adversarial",
            SystemKind::MultiOutput => "multi_output",
            SystemKind::Parallel => "parallel",
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "adversarial" => Ok(SystemKind::Adversarial),
            "multi_output" | "multi-output" => Ok(SystemKind::MultiOutput),
            "parallel" => Ok(SystemKind::Parallel),
            other => Err(format!("unknown system '{other}'")),
        }
    }
}

/// Compact synthetic-process description for the CLI; expands to a cyclic
/// coupling matrix (see [`CoupledProcessSpec::cyclic`]).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SynthSpec {
    pub d: usize,
    pub length: usize,
    pub diag: f64,
    pub cross: f64,
    pub noise_std: f64,
    pub amplitude: f64,
    pub period: f64,
    pub seed: Option<u64>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            d: 3,
            length: 5000,
            diag: 0.3,
            cross: 0.5,
            noise_std: 0.05,
            amplitude: 1.0,
            period: 24.0,
            seed: None,
        }
    }
}

impl SynthSpec {
    /// Parse "d=3,length=5000,noise=0.05,..." key=value lists.
    pub fn parse(input: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for pair in input.split(',').filter(|p| !p.trim().is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| RunError::Config(format!("bad synth spec entry '{pair}'")))?;
            let value = value.trim();
            let parse_f64 = || {
                value
                    .parse::<f64>()
                    .map_err(|_| RunError::Config(format!("bad synth value '{value}' for {key}")))
            };
            match key.trim() {
                "d" => spec.d = value.parse().map_err(|_| RunError::Config(format!("bad d '{value}'")))?,
                "length" => {
                    spec.length = value.parse().map_err(|_| RunError::Config(format!("bad length '{value}'")))?
                }
                "diag" => spec.diag = parse_f64()?,
                "cross" => spec.cross = parse_f64()?,
                "noise" | "noise_std" => spec.noise_std = parse_f64()?,
                "amp" | "amplitude" => spec.amplitude = parse_f64()?,
                "period" => spec.period = parse_f64()?,
                "seed" => {
                    spec.seed = Some(value.parse().map_err(|_| RunError::Config(format!("bad seed '{value}'")))?)
                }
                other => return Err(RunError::Config(format!("unknown synth key '{other}'"))),
            }
        }
        Ok(spec)
    }

    pub fn to_process(&self, fallback_seed: u64) -> CoupledProcessSpec {
        let mut p = CoupledProcessSpec::cyclic(
            self.d,
            self.diag,
            self.cross,
            self.noise_std,
            self.length,
            self.seed.unwrap_or(fallback_seed),
        );
        p.drive = Drive::Sinusoid { amplitude: self.amplitude, period: self.period };
        p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    Csv { path: PathBuf },
    Synth { spec: SynthSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    /// Use the air-quality schema when the header carries its columns,
    /// otherwise fall back to the generic declaration.
    Auto,
    AirQuality,
    Generic,
}

/// Fully resolved run description; serializes to the config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemKind,
    pub source: DataSource,
    pub schema: SchemaKind,
    /// Timestamp column for generic schemas.
    pub timestamp_column: String,
    /// Target columns; empty means "all data columns" for generic schemas
    /// and the seven standard targets for the air-quality schema.
    pub targets: Vec<String>,
    pub lookback: usize,
    pub layers: usize,
    pub units: usize,
    /// Hidden widths of the discriminator; empty means two layers of 4·d.
    pub disc_hidden: Vec<usize>,
    pub horizon: usize,
    pub train_fraction: f64,
    pub impute: ImputePolicy,
    pub train: TrainConfig,
    /// Not part of the echo: two otherwise-identical runs must produce
    /// byte-identical metric files regardless of where they land.
    #[serde(skip, default)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn defaults(source: DataSource, out_dir: PathBuf) -> Self {
        RunConfig {
            system: SystemKind::Adversarial,
            source,
            schema: SchemaKind::Auto,
            timestamp_column: "t".into(),
            targets: Vec::new(),
            lookback: 12,
            layers: 1,
            units: 16,
            disc_hidden: Vec::new(),
            horizon: 1,
            train_fraction: 0.8,
            impute: ImputePolicy::DropLeading,
            train: TrainConfig::default(),
            out_dir,
        }
    }

    /// The two experiment shapes baked in as profiles.
    pub fn apply_profile(&mut self, profile: &str) -> Result<()> {
        match profile {
            "airquality" => {
                self.schema = SchemaKind::AirQuality;
                self.lookback = 24;
                self.layers = 3;
                self.units = 10;
            }
            "industrial" => {
                self.lookback = 96;
                self.layers = 1;
                self.units = 100;
            }
            other => return Err(RunError::Config(format!("unknown profile '{other}'"))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.out_dir.as_os_str().is_empty() {
            return Err(RunError::Config("an output directory is required".into()));
        }
        if self.lookback == 0 || self.layers == 0 || self.units == 0 || self.horizon == 0 {
            return Err(RunError::Config(
                "lookback, layers, units and horizon must be positive".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(RunError::Config(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

// ── training runs ────────────────────────────────────────────────────

struct PreparedData {
    dataset: WindowedDataset,
    pipeline: PipelineSpec,
    dataset_hash: String,
}

fn csv_headers(csv_path: &Path) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)
        .map_err(|e| RunError::Data(format!("cannot read {}: {e}", csv_path.display())))?;
    Ok(reader
        .headers()
        .map_err(|e| RunError::Data(format!("cannot read header of {}: {e}", csv_path.display())))?
        .iter()
        .map(String::from)
        .collect())
}

fn resolve_schema(cfg: &RunConfig, csv_path: &Path) -> Result<(Schema, Vec<String>)> {
    let schema_kind = match cfg.schema {
        SchemaKind::Auto => {
            let headers = csv_headers(csv_path)?;
            let aq = air_quality_schema();
            let has_all = aq.columns.iter().all(|c| headers.contains(&c.name))
                && ["year", "month", "day", "hour"]
                    .iter()
                    .all(|t| headers.iter().any(|h| h == t));
            if has_all {
                SchemaKind::AirQuality
            } else {
                SchemaKind::Generic
            }
        }
        other => other,
    };
    match schema_kind {
        SchemaKind::Auto => unreachable!("resolved above"),
        SchemaKind::AirQuality => {
            let targets = if cfg.targets.is_empty() {
                air_quality_targets()
            } else {
                cfg.targets.clone()
            };
            Ok((air_quality_schema(), targets))
        }
        SchemaKind::Generic => {
            // declare every non-timestamp header column as continuous
            let headers = csv_headers(csv_path)?;
            let columns: Vec<ColumnDecl> = headers
                .iter()
                .filter(|h| *h != &cfg.timestamp_column)
                .map(|h| ColumnDecl::continuous(h))
                .collect();
            if columns.is_empty() {
                return Err(RunError::Data(format!(
                    "{} has no data columns besides '{}'",
                    csv_path.display(),
                    cfg.timestamp_column
                )));
            }
            let targets = if cfg.targets.is_empty() {
                columns.iter().map(|c| c.name.clone()).collect()
            } else {
                cfg.targets.clone()
            };
            let schema = Schema {
                columns,
                timestamp: TimestampSpec::IndexColumn { column: cfg.timestamp_column.clone() },
            };
            Ok((schema, targets))
        }
    }
}

fn hash_dataset(csv_path: &Path, cfg: &RunConfig, targets: &[String]) -> Result<String> {
    let bytes = std::fs::read(csv_path)
        .map_err(|e| RunError::Data(format!("cannot read {}: {e}", csv_path.display())))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    hasher.update(cfg.lookback.to_le_bytes());
    hasher.update(cfg.horizon.to_le_bytes());
    hasher.update(cfg.train_fraction.to_le_bytes());
    hasher.update(format!("{:?}", cfg.impute).as_bytes());
    for t in targets {
        hasher.update(t.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Run the preprocessing pipeline on a CSV file and carve supervised
/// windows with a chronological split; the scaler is fitted strictly before
/// the first test target row.
fn prepare_data(cfg: &RunConfig, csv_path: &Path) -> Result<PreparedData> {
    let (schema, targets) = resolve_schema(cfg, csv_path)?;
    let dataset_hash = hash_dataset(csv_path, cfg, &targets)?;

    let frame = data::load_csv(csv_path, &schema)?;
    let frame = data::impute(&frame, cfg.impute, &targets)?;

    let mut vocab_map = BTreeMap::new();
    let mut encoded = frame;
    let categorical: Vec<String> = schema
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .map(|c| c.name.clone())
        .collect();
    for col in &categorical {
        let ci = encoded.column_index(col)?;
        let vocab = encoded.columns[ci]
            .vocabulary
            .clone()
            .unwrap_or_default();
        vocab_map.insert(col.clone(), vocab.clone());
        encoded = data::encode_categorical_with_vocab(&encoded, col, &vocab)?;
    }

    let (fit_rows, _) = data::fit_prefix_rows(encoded.rows(), cfg.lookback, cfg.horizon, cfg.train_fraction)?;
    let (scaled, scaler) = data::scale_fit_transform_rows(&encoded, fit_rows)?;
    let dataset = data::make_windows(&scaled, cfg.lookback, &targets, cfg.horizon, &scaler)?
        .with_split_fraction(cfg.train_fraction)?;

    let pipeline = PipelineSpec {
        schema,
        impute_policy: cfg.impute,
        categorical_vocab: vocab_map,
        scaler,
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        feature_columns: dataset.feature_names.clone(),
        target_columns: targets,
    };
    Ok(PreparedData { dataset, pipeline, dataset_hash })
}

fn init_models(cfg: &RunConfig, dataset: &WindowedDataset) -> Result<(Vec<ForecasterModel>, Option<DiscriminatorModel>)> {
    let d = dataset.num_targets();
    let features = dataset.num_features();
    let seed = cfg.train.seed;
    match cfg.system {
        SystemKind::MultiOutput => {
            let spec = ForecasterSpec::multi_output(features, cfg.units, cfg.layers, d);
            Ok((vec![init_forecaster(&spec, forecaster_seed(seed, 0))?], None))
        }
        SystemKind::Parallel | SystemKind::Adversarial => {
            let mut forecasters = Vec::with_capacity(d);
            for i in 0..d {
                let spec = ForecasterSpec::single_variable(features, cfg.units, cfg.layers, i);
                forecasters.push(init_forecaster(&spec, forecaster_seed(seed, i))?);
            }
            let disc = if cfg.system == SystemKind::Adversarial {
                let dspec = if cfg.disc_hidden.is_empty() {
                    DiscriminatorSpec::default_for(d)
                } else {
                    DiscriminatorSpec { input_size: d, hidden_widths: cfg.disc_hidden.clone() }
                };
                Some(init_discriminator(&dspec, discriminator_seed(seed))?)
            } else {
                None
            };
            Ok((forecasters, disc))
        }
    }
}

/// Final evaluation of frozen models on the test split.
pub fn evaluate_models(
    forecasters: &[ForecasterModel],
    discriminator: Option<&DiscriminatorModel>,
    dataset: &WindowedDataset,
    batch_size: usize,
) -> Result<EvalResult> {
    let test_idx: Vec<usize> = dataset.test_indices().collect();
    let (pred, truth) = trainer::predict_with_forecasters(forecasters, dataset, &test_idx, batch_size)
        .map_err(RunError::from)?;
    evaluate_predictions(&pred, &truth, discriminator, dataset)
}

/// Metrics over already-computed test predictions.
pub fn evaluate_predictions(
    pred: &[f64],
    truth: &[f64],
    discriminator: Option<&DiscriminatorModel>,
    dataset: &WindowedDataset,
) -> Result<EvalResult> {
    let n = dataset.test_indices().len();
    let d = dataset.num_targets();
    let scalers = dataset.target_scalers();
    let mse = eval::mse_per_variable(pred, truth, n, d, &scalers)?;
    let mae = eval::mae_per_variable(pred, truth, n, d, &scalers)?;
    let mse_scaled = eval::mse_per_variable_scaled(pred, truth, n, d)?;
    let joint = eval::joint_consistency(pred, truth, n, d)?;
    let disc_accuracy = match discriminator {
        Some(disc) => Some(
            trainer::evaluate_discriminator(disc, pred, truth, n, d).map_err(RunError::from)?,
        ),
        None => None,
    };
    Ok(EvalResult {
        variable_names: dataset.target_names.clone(),
        mse,
        mae,
        mse_scaled,
        disc_accuracy,
        joint,
    })
}

pub struct TrainOutcome {
    pub summary: RunSummary,
    pub report: TrainReport,
}

/// The `train` subcommand: pipeline, chosen system, artifacts.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.train.validate().map_err(RunError::from)?;
    std::fs::create_dir_all(cfg.out_dir.join("plots"))
        .map_err(|e| RunError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;

    // resolve the data source; synthetic sources are materialized as CSV so
    // every run exercises the same ingestion path
    let csv_path = match &cfg.source {
        DataSource::Csv { path } => path.clone(),
        DataSource::Synth { spec } => {
            let process = spec.to_process(crate::tensor::sub_seed(cfg.train.seed, 0x5));
            let frame = synth::generate(&process)?;
            let path = cfg.out_dir.join("synth.csv");
            data::write_csv(&frame, &path)?;
            path
        }
    };

    let prepared = prepare_data(cfg, &csv_path)?;
    let dataset = &prepared.dataset;
    let (mut forecasters, mut discriminator) = init_models(cfg, dataset)?;

    let train_result = match cfg.system {
        SystemKind::Adversarial => trainer::train(
            &mut forecasters,
            discriminator.as_mut().expect("adversarial has a discriminator"),
            dataset,
            &cfg.train,
        ),
        SystemKind::Parallel => baselines::train_parallel_single(&mut forecasters, dataset, &cfg.train),
        SystemKind::MultiOutput => baselines::train_multi_output(&mut forecasters[0], dataset, &cfg.train),
    };

    let report = match train_result {
        Ok(r) => r,
        Err(TrainError::Divergence { epoch, batch, loss_name, value, partial }) => {
            // leave the partial epoch log behind for diagnosis, then abort
            let _ = report::write_epochs_jsonl(&cfg.out_dir.join("epochs.jsonl"), &partial.epochs);
            return Err(RunError::Divergence(format!(
                "{loss_name} = {value} at epoch {epoch}, batch {batch}"
            )));
        }
        Err(e) => return Err(e.into()),
    };

    let test_idx: Vec<usize> = dataset.test_indices().collect();
    let (pred, truth) =
        trainer::predict_with_forecasters(&forecasters, dataset, &test_idx, cfg.train.batch_size)
            .map_err(RunError::from)?;
    let eval_result = evaluate_predictions(&pred, &truth, discriminator.as_ref(), dataset)?;

    let summary = RunSummary {
        system: cfg.system.name().to_string(),
        dataset_hash: prepared.dataset_hash.clone(),
        variables: dataset.target_names.clone(),
        eval: eval_result.clone(),
        epochs_recorded: report.epochs.len(),
        final_forecast_loss: report.epochs.last().map(|e| e.forecast_loss.clone()),
        final_disc_accuracy: report.epochs.last().and_then(|e| e.disc_accuracy),
        config: serde_json::to_value(cfg).map_err(|e| RunError::Config(e.to_string()))?,
    };

    write_artifacts(
        cfg,
        &prepared,
        &forecasters,
        discriminator.as_ref(),
        &report,
        &summary,
        &pred,
        &truth,
    )?;
    Ok(TrainOutcome { summary, report })
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    cfg: &RunConfig,
    prepared: &PreparedData,
    forecasters: &[ForecasterModel],
    discriminator: Option<&DiscriminatorModel>,
    report: &TrainReport,
    summary: &RunSummary,
    pred: &[f64],
    truth: &[f64],
) -> Result<()> {
    let out = &cfg.out_dir;
    let toml_echo = toml::to_string_pretty(cfg).map_err(|e| RunError::Config(e.to_string()))?;
    std::fs::write(out.join("config.toml"), toml_echo)
        .map_err(|e| RunError::Data(format!("cannot write config echo: {e}")))?;

    report::write_epochs_jsonl(&out.join("epochs.jsonl"), &report.epochs)?;
    report::write_summary(&out.join("summary.json"), summary)?;
    std::fs::write(out.join("timing.txt"), format!("wall_seconds={}\n", report.wall_seconds))
        .map_err(|e| RunError::Data(format!("cannot write timing: {e}")))?;

    Checkpoint::new(cfg.system.name(), prepared.pipeline.clone(), forecasters, discriminator)
        .save(&out.join("checkpoint.json"))?;

    let dataset = &prepared.dataset;
    let plots = out.join("plots");
    report::write_discriminator_csv(&plots.join("discriminator.csv"), &report.epochs)?;
    report::write_forecast_loss_csv(
        &plots.join("forecast_loss.csv"),
        &report.epochs,
        &dataset.target_names,
    )?;
    let rows: Vec<usize> = dataset.test_indices().map(|j| dataset.target_rows[j]).collect();
    report::write_traces_csv(
        &plots.join("test_traces.csv"),
        &rows,
        &dataset.target_names,
        pred,
        truth,
        &dataset.target_scalers(),
    )?;
    report::write_mse_csv(&plots.join("mse_per_variable.csv"), &summary.eval)?;
    Ok(())
}

// ── comparison runs ──────────────────────────────────────────────────

/// The `compare` subcommand over two or more finished run directories.
pub fn run_compare(dirs: &[PathBuf], out_csv: Option<&Path>) -> Result<eval::ComparisonTable> {
    if dirs.len() < 2 {
        return Err(RunError::Config(format!(
            "compare needs at least two run directories, got {}",
            dirs.len()
        )));
    }
    let mut entries = Vec::with_capacity(dirs.len());
    let mut hash: Option<String> = None;
    for dir in dirs {
        let summary = report::load_summary(&dir.join("summary.json"))?;
        match &hash {
            None => hash = Some(summary.dataset_hash.clone()),
            Some(h) if *h != summary.dataset_hash => {
                return Err(RunError::Data(format!(
                    "dataset hash mismatch: {} was trained on different data",
                    dir.display()
                )));
            }
            _ => {}
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| summary.system.clone());
        entries.push((format!("{name}[{}]", summary.system), summary.eval));
    }
    let table = eval::compare_systems(&entries).map_err(RunError::from)?;
    if let Some(path) = out_csv {
        report::write_comparison_csv(path, &table)?;
    }
    Ok(table)
}

// ── forecasting from a checkpoint ────────────────────────────────────

/// The `forecast` subcommand: run the checkpointed pipeline over a CSV
/// window and print one de-normalized value per target column.
pub fn run_forecast(checkpoint_path: &Path, data_path: &Path) -> Result<Vec<(String, f64)>> {
    let ckpt = Checkpoint::load(checkpoint_path)?;
    let pipeline = &ckpt.pipeline;
    let forecasters = ckpt.unpack_forecasters()?;
    if forecasters.is_empty() {
        return Err(RunError::Data("checkpoint holds no forecasters".into()));
    }

    let frame = data::load_csv(data_path, &pipeline.schema)?;
    let frame = data::impute(&frame, pipeline.impute_policy, &pipeline.target_columns)?;
    let mut encoded = frame;
    for (col, vocab) in &pipeline.categorical_vocab {
        encoded = data::encode_categorical_with_vocab(&encoded, col, vocab)?;
    }
    let scaled = data::scale_transform(&encoded, &pipeline.scaler);

    let names: Vec<String> = scaled.columns.iter().map(|c| c.name.clone()).collect();
    if names != pipeline.feature_columns {
        return Err(RunError::Data(format!(
            "feature columns {names:?} do not match the checkpoint's {:?}",
            pipeline.feature_columns
        )));
    }
    if scaled.rows() < pipeline.lookback {
        return Err(RunError::Data(format!(
            "window of {} rows is shorter than the lookback {}",
            scaled.rows(),
            pipeline.lookback
        )));
    }

    let f = scaled.num_columns();
    let start = scaled.rows() - pipeline.lookback;
    let mut values = Vec::with_capacity(pipeline.lookback * f);
    for r in start..scaled.rows() {
        for c in 0..f {
            values.push(scaled.value(r, c));
        }
    }
    let window = WindowBatch::new(values, 1, pipeline.lookback, f).map_err(RunError::from)?;

    let d = pipeline.target_columns.len();
    let flat: Vec<f64> = if forecasters.len() == 1 && forecasters[0].out == d {
        models::forecaster_forward(&forecasters[0], &window)
            .map_err(RunError::from)?
            .to_vec()
    } else {
        if forecasters.len() != d {
            return Err(RunError::Data(format!(
                "checkpoint holds {} forecasters for {d} targets",
                forecasters.len()
            )));
        }
        let mut out = Vec::with_capacity(d);
        for m in &forecasters {
            out.push(
                models::forecaster_forward(m, &window)
                    .map_err(RunError::from)?
                    .item(),
            );
        }
        out
    };

    Ok(pipeline
        .target_columns
        .iter()
        .zip(flat.iter())
        .map(|(name, &scaled_value)| {
            let value = pipeline
                .scaler
                .entry(name)
                .map(|e| e.inverse(scaled_value))
                .unwrap_or(scaled_value);
            (name.clone(), value)
        })
        .collect())
}
