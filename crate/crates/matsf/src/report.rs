//! Run artifacts: the line-oriented epoch log, the machine-readable summary,
//! and the plot-ready CSV files (loss/accuracy curves, forecast-vs-target
//! traces, per-variable MSE bars).
//!
//! Every writer formats floats with Rust's shortest round-trip notation and
//! fixed field orders, so re-running a seeded run reproduces each file byte
//! for byte. Wall-clock time deliberately lives in a separate `timing.txt`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ScalerEntry;
use crate::eval::{ComparisonTable, EvalResult};
use crate::trainer::EpochRecord;

pub type Result<T> = std::result::Result<T, ReportError>;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

/// Machine-readable end-of-run document; everything a comparison needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub system: String,
    pub dataset_hash: String,
    pub variables: Vec<String>,
    pub eval: EvalResult,
    pub epochs_recorded: usize,
    pub final_forecast_loss: Option<Vec<f64>>,
    pub final_disc_accuracy: Option<f64>,
    /// Resolved configuration echo.
    pub config: serde_json::Value,
}

/// One JSON record per epoch.
pub fn write_epochs_jsonl(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    for e in epochs {
        let line = serde_json::to_string(e)?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)?;
    std::fs::write(path, json).map_err(io_err(path))
}

pub fn load_summary(path: &Path) -> Result<RunSummary> {
    let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Discriminator loss/accuracy and generator loss per epoch.
pub fn write_discriminator_csv(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    writeln!(out, "epoch,disc_loss,disc_accuracy,gen_loss").map_err(io_err(path))?;
    for e in epochs {
        writeln!(
            out,
            "{},{},{},{}",
            e.epoch,
            e.disc_loss.map(|v| v.to_string()).unwrap_or_default(),
            e.disc_accuracy.map(|v| v.to_string()).unwrap_or_default(),
            e.gen_loss.map(|v| v.to_string()).unwrap_or_default(),
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Per-variable forecast-phase loss curves.
pub fn write_forecast_loss_csv(path: &Path, epochs: &[EpochRecord], names: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    write!(out, "epoch").map_err(io_err(path))?;
    for n in names {
        write!(out, ",{n}").map_err(io_err(path))?;
    }
    writeln!(out).map_err(io_err(path))?;
    for e in epochs {
        write!(out, "{}", e.epoch).map_err(io_err(path))?;
        for l in &e.forecast_loss {
            write!(out, ",{l}").map_err(io_err(path))?;
        }
        writeln!(out).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Forecast-vs-target traces on the test split, de-normalized to original
/// units; one row per test window.
pub fn write_traces_csv(
    path: &Path,
    rows: &[usize],
    names: &[String],
    pred: &[f64],
    truth: &[f64],
    scalers: &[ScalerEntry],
) -> Result<()> {
    let d = names.len();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    write!(out, "row").map_err(io_err(path))?;
    for n in names {
        write!(out, ",{n}_true,{n}_pred").map_err(io_err(path))?;
    }
    writeln!(out).map_err(io_err(path))?;
    for (i, row) in rows.iter().enumerate() {
        write!(out, "{row}").map_err(io_err(path))?;
        for c in 0..d {
            let t = scalers[c].inverse(truth[i * d + c]);
            let p = scalers[c].inverse(pred[i * d + c]);
            write!(out, ",{t},{p}").map_err(io_err(path))?;
        }
        writeln!(out).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Per-variable MSE bars in original and scaled units, plus MAE.
pub fn write_mse_csv(path: &Path, eval: &EvalResult) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    writeln!(out, "variable,mse,mse_scaled,mae").map_err(io_err(path))?;
    for (i, n) in eval.variable_names.iter().enumerate() {
        writeln!(out, "{n},{},{},{}", eval.mse[i], eval.mse_scaled[i], eval.mae[i]).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}

/// Long-format comparison rows (one per metric, variable and system) for
/// plotting.
pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    writeln!(out, "metric,variable,system,value,winner").map_err(io_err(path))?;
    for (v, name) in table.variables.iter().enumerate() {
        for (s, system) in table.systems.iter().enumerate() {
            let win = table.winner[v] == Some(s);
            writeln!(out, "mse,{name},{system},{},{}", table.mse[s][v], win as u8)
                .map_err(io_err(path))?;
        }
    }
    for (s, system) in table.systems.iter().enumerate() {
        writeln!(out, "joint_gap,,{system},{},", table.joint_gap[s]).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))?;
    Ok(())
}
