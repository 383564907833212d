//! Shared metrics: per-variable error in original units, discriminator
//! diagnostics, and the joint-consistency gap comparing forecast
//! cross-structure to the data's.

use serde::{Deserialize, Serialize};

use crate::data::ScalerEntry;

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// Pearson correlation matrices of predictions and targets plus their
/// Frobenius distance. A zero-variance column keeps a unit diagonal, its
/// off-diagonal correlations are reported as 0, and it is flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointConsistency {
    pub pred_corr: Vec<f64>,
    pub true_corr: Vec<f64>,
    pub frobenius_gap: f64,
    pub degenerate_pred: Vec<bool>,
    pub degenerate_true: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalResult {
    pub variable_names: Vec<String>,
    /// Column-wise mean squared error in original (inverse-scaled) units.
    pub mse: Vec<f64>,
    pub mae: Vec<f64>,
    /// Same errors in scaled units, for cross-checking.
    pub mse_scaled: Vec<f64>,
    pub disc_accuracy: Option<f64>,
    pub joint: JointConsistency,
}

fn check_shapes(pred: &[f64], truth: &[f64], n: usize, d: usize, op: &str) -> Result<()> {
    if pred.len() != n * d || truth.len() != n * d {
        return Err(EvalError::Dimension(format!(
            "{op}: expected {n}x{d} blocks, got {} and {} values",
            pred.len(),
            truth.len()
        )));
    }
    if d == 0 || n == 0 {
        return Err(EvalError::Contract(format!("{op}: empty input")));
    }
    Ok(())
}

/// Column-wise mean squared error after inverse scaling both sides back to
/// original units. `scalers` must align with the d columns.
pub fn mse_per_variable(
    pred: &[f64],
    truth: &[f64],
    n: usize,
    d: usize,
    scalers: &[ScalerEntry],
) -> Result<Vec<f64>> {
    check_shapes(pred, truth, n, d, "mse_per_variable")?;
    if scalers.len() != d {
        return Err(EvalError::Dimension(format!(
            "mse_per_variable: {} scaler entries for {d} columns",
            scalers.len()
        )));
    }
    let mut out = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            let p = scalers[c].inverse(pred[r * d + c]);
            let t = scalers[c].inverse(truth[r * d + c]);
            out[c] += (p - t) * (p - t);
        }
    }
    for v in out.iter_mut() {
        *v /= n as f64;
    }
    Ok(out)
}

pub fn mae_per_variable(
    pred: &[f64],
    truth: &[f64],
    n: usize,
    d: usize,
    scalers: &[ScalerEntry],
) -> Result<Vec<f64>> {
    check_shapes(pred, truth, n, d, "mae_per_variable")?;
    let mut out = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            let p = scalers[c].inverse(pred[r * d + c]);
            let t = scalers[c].inverse(truth[r * d + c]);
            out[c] += (p - t).abs();
        }
    }
    for v in out.iter_mut() {
        *v /= n as f64;
    }
    Ok(out)
}

/// Column-wise MSE without unscaling.
pub fn mse_per_variable_scaled(pred: &[f64], truth: &[f64], n: usize, d: usize) -> Result<Vec<f64>> {
    let identity: Vec<ScalerEntry> = (0..d)
        .map(|c| ScalerEntry { column: format!("c{c}"), min: 0.0, max: 1.0 })
        .collect();
    mse_per_variable(pred, truth, n, d, &identity)
}

/// Pearson correlation matrix of an `[n × d]` block. Zero-variance columns
/// are flagged; their off-diagonals are 0 and the diagonal stays exactly 1.
pub fn correlation_matrix(data: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<bool>) {
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for c in 0..d {
            mean[c] += data[r * d + c];
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        for i in 0..d {
            let xi = data[r * d + i] - mean[i];
            for j in i..d {
                cov[i * d + j] += xi * (data[r * d + j] - mean[j]);
            }
        }
    }
    let degenerate: Vec<bool> = (0..d).map(|i| cov[i * d + i] <= 0.0).collect();
    let mut corr = vec![0.0; d * d];
    for i in 0..d {
        corr[i * d + i] = 1.0;
        for j in i + 1..d {
            let denom = (cov[i * d + i] * cov[j * d + j]).sqrt();
            let c = if degenerate[i] || degenerate[j] {
                0.0
            } else {
                cov[i * d + j] / denom
            };
            corr[i * d + j] = c;
            corr[j * d + i] = c;
        }
    }
    (corr, degenerate)
}

/// Correlation matrices of both blocks and the Frobenius distance between
/// them. Correlation is scale-invariant, so scaled and original units give
/// the same answer.
pub fn joint_consistency(pred: &[f64], truth: &[f64], n: usize, d: usize) -> Result<JointConsistency> {
    check_shapes(pred, truth, n, d, "joint_consistency")?;
    if n < 3 {
        return Err(EvalError::Contract(format!(
            "joint_consistency needs at least 3 rows, got {n}"
        )));
    }
    let (pred_corr, degenerate_pred) = correlation_matrix(pred, n, d);
    let (true_corr, degenerate_true) = correlation_matrix(truth, n, d);
    let frobenius_gap = pred_corr
        .iter()
        .zip(true_corr.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(JointConsistency {
        pred_corr,
        true_corr,
        frobenius_gap,
        degenerate_pred,
        degenerate_true,
    })
}

// ── system comparison ────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub systems: Vec<String>,
    pub variables: Vec<String>,
    /// `mse[s][v]` — per-system, per-variable MSE in original units.
    pub mse: Vec<Vec<f64>>,
    /// Winner (row index into `systems`) per variable; None on a tie or a
    /// single system.
    pub winner: Vec<Option<usize>>,
    pub joint_gap: Vec<f64>,
}

/// Tabulate per-variable MSE across systems evaluated on the same split,
/// marking the winner per variable.
pub fn compare_systems(entries: &[(String, EvalResult)]) -> Result<ComparisonTable> {
    if entries.is_empty() {
        return Err(EvalError::Contract("no systems to compare".into()));
    }
    let variables = entries[0].1.variable_names.clone();
    for (name, r) in entries {
        if r.variable_names != variables {
            return Err(EvalError::Contract(format!(
                "system '{name}' reports different variables: {:?} vs {:?}",
                r.variable_names, variables
            )));
        }
    }
    let mse: Vec<Vec<f64>> = entries.iter().map(|(_, r)| r.mse.clone()).collect();
    let winner: Vec<Option<usize>> = (0..variables.len())
        .map(|v| {
            if entries.len() < 2 {
                return None;
            }
            let mut best = 0usize;
            let mut tied = false;
            for s in 1..entries.len() {
                if mse[s][v] < mse[best][v] {
                    best = s;
                    tied = false;
                } else if mse[s][v] == mse[best][v] {
                    tied = true;
                }
            }
            if tied {
                None
            } else {
                Some(best)
            }
        })
        .collect();
    Ok(ComparisonTable {
        systems: entries.iter().map(|(n, _)| n.clone()).collect(),
        variables,
        mse,
        winner,
        joint_gap: entries.iter().map(|(_, r)| r.joint.frobenius_gap).collect(),
    })
}

impl std::fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:<12}", "variable")?;
        for s in &self.systems {
            write!(f, " {s:>18}")?;
        }
        writeln!(f, " {:>10}", "winner")?;
        for (v, name) in self.variables.iter().enumerate() {
            write!(f, "{name:<12}")?;
            for s in 0..self.systems.len() {
                write!(f, " {:>18.6e}", self.mse[s][v])?;
            }
            match self.winner[v] {
                Some(s) => writeln!(f, " {:>10}", self.systems[s])?,
                None => writeln!(f, " {:>10}", "-")?,
            }
        }
        write!(f, "{:<12}", "joint_gap")?;
        for g in &self.joint_gap {
            write!(f, " {g:>18.6e}")?;
        }
        writeln!(f, " {:>10}", "")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::CounterRng;

    fn identity_scalers(d: usize) -> Vec<ScalerEntry> {
        (0..d)
            .map(|c| ScalerEntry { column: format!("c{c}"), min: 0.0, max: 1.0 })
            .collect()
    }

    #[test]
    fn mse_zero_when_equal() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let out = mse_per_variable(&x, &x, 2, 2, &identity_scalers(2)).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn mse_one_when_off_by_one_in_original_units() {
        let truth = vec![0.2, 0.4, 0.6, 0.8];
        let pred: Vec<f64> = truth.iter().map(|v| v + 1.0).collect();
        let out = mse_per_variable(&pred, &truth, 2, 2, &identity_scalers(2)).unwrap();
        for v in out {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_respects_inverse_scaling() {
        // scaled diff of 0.5 over a range of 10 is an original-unit diff of 5
        let scalers = vec![ScalerEntry { column: "a".into(), min: 0.0, max: 10.0 }];
        let out = mse_per_variable(&[0.5], &[0.0], 1, 1, &scalers).unwrap();
        assert!((out[0] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_scalar_loop_oracle() {
        let mut rng = CounterRng::new(15);
        let (n, d) = (17, 3);
        let pred = rng.fill_symmetric(n * d, 2.0);
        let truth = rng.fill_symmetric(n * d, 2.0);
        let scalers: Vec<ScalerEntry> = (0..d)
            .map(|c| ScalerEntry { column: format!("c{c}"), min: -3.0, max: 5.0 })
            .collect();
        let got = mse_per_variable(&pred, &truth, n, d, &scalers).unwrap();
        for c in 0..d {
            let mut acc = 0.0;
            for r in 0..n {
                let p = pred[r * d + c] * 8.0 - 3.0;
                let t = truth[r * d + c] * 8.0 - 3.0;
                acc += (p - t) * (p - t);
            }
            acc /= n as f64;
            assert!((got[c] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(mse_per_variable(&[1.0], &[1.0, 2.0], 1, 2, &identity_scalers(2)).is_err());
    }

    #[test]
    fn metrics_invariant_under_row_permutation() {
        let mut rng = CounterRng::new(25);
        let (n, d) = (9, 2);
        let pred = rng.fill_symmetric(n * d, 1.0);
        let truth = rng.fill_symmetric(n * d, 1.0);
        let perm: Vec<usize> = vec![4, 1, 7, 0, 8, 3, 2, 6, 5];
        let permute = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; x.len()];
            for (dst, &src) in perm.iter().enumerate() {
                out[dst * d..(dst + 1) * d].copy_from_slice(&x[src * d..(src + 1) * d]);
            }
            out
        };
        let a = mse_per_variable(&pred, &truth, n, d, &identity_scalers(d)).unwrap();
        let b = mse_per_variable(&permute(&pred), &permute(&truth), n, d, &identity_scalers(d)).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let ja = joint_consistency(&pred, &truth, n, d).unwrap();
        let jb = joint_consistency(&permute(&pred), &permute(&truth), n, d).unwrap();
        assert!((ja.frobenius_gap - jb.frobenius_gap).abs() < 1e-12);
    }

    #[test]
    fn joint_gap_zero_on_identical_blocks() {
        let mut rng = CounterRng::new(35);
        let x = rng.fill_symmetric(30, 1.0);
        let j = joint_consistency(&x, &x, 10, 3).unwrap();
        assert_eq!(j.frobenius_gap, 0.0);
        for i in 0..3 {
            assert_eq!(j.pred_corr[i * 3 + i], 1.0);
        }
    }

    #[test]
    fn destroying_structure_opens_gap() {
        // strongly coupled truth: columns equal plus tiny jitter
        let mut rng = CounterRng::new(45);
        let n = 50;
        let mut truth = Vec::with_capacity(n * 2);
        for _ in 0..n {
            let v = rng.next_symmetric(1.0);
            truth.push(v);
            truth.push(v + 0.01 * rng.next_symmetric(1.0));
        }
        // column-shuffled predictions: independent columns
        let mut pred = truth.clone();
        let col1: Vec<f64> = (0..n).map(|r| truth[r * 2 + 1]).collect();
        for r in 0..n {
            pred[r * 2 + 1] = col1[(r + n / 2) % n];
        }
        let j = joint_consistency(&pred, &truth, n, 2).unwrap();
        assert!(j.frobenius_gap > 0.5, "gap = {}", j.frobenius_gap);
    }

    #[test]
    fn zero_variance_column_flagged_not_nan() {
        let n = 5;
        let mut pred = Vec::new();
        for r in 0..n {
            pred.push(1.0); // constant column
            pred.push(r as f64);
        }
        let truth: Vec<f64> = (0..n * 2).map(|i| i as f64).collect();
        let j = joint_consistency(&pred, &truth, n, 2).unwrap();
        assert!(j.degenerate_pred[0]);
        assert!(!j.degenerate_pred[1]);
        assert_eq!(j.pred_corr[1], 0.0);
        assert_eq!(j.pred_corr[0], 1.0);
        assert!(j.frobenius_gap.is_finite());
    }

    fn fake_result(names: &[&str], mse: &[f64], gap: f64) -> EvalResult {
        let d = names.len();
        EvalResult {
            variable_names: names.iter().map(|s| s.to_string()).collect(),
            mse: mse.to_vec(),
            mae: vec![0.0; d],
            mse_scaled: vec![0.0; d],
            disc_accuracy: None,
            joint: JointConsistency {
                pred_corr: vec![1.0; d * d],
                true_corr: vec![1.0; d * d],
                frobenius_gap: gap,
                degenerate_pred: vec![false; d],
                degenerate_true: vec![false; d],
            },
        }
    }

    #[test]
    fn single_system_table_has_no_winners() {
        let t = compare_systems(&[("solo".into(), fake_result(&["a"], &[1.0], 0.1))]).unwrap();
        assert_eq!(t.systems.len(), 1);
        assert_eq!(t.winner, vec![None]);
    }

    #[test]
    fn identical_systems_tie_everywhere() {
        let r = fake_result(&["a", "b"], &[1.0, 2.0], 0.1);
        let t = compare_systems(&[("x".into(), r.clone()), ("y".into(), r)]).unwrap();
        assert_eq!(t.winner, vec![None, None]);
    }

    #[test]
    fn winner_marked_per_variable() {
        let a = fake_result(&["a", "b"], &[1.0, 5.0], 0.2);
        let b = fake_result(&["a", "b"], &[2.0, 3.0], 0.1);
        let t = compare_systems(&[("first".into(), a), ("second".into(), b)]).unwrap();
        assert_eq!(t.winner, vec![Some(0), Some(1)]);
        let rendered = format!("{t}");
        assert!(rendered.contains("first"));
        assert!(rendered.contains("joint_gap"));
    }

    #[test]
    fn mismatched_variable_sets_rejected() {
        let a = fake_result(&["a"], &[1.0], 0.0);
        let b = fake_result(&["b"], &[1.0], 0.0);
        assert!(compare_systems(&[("x".into(), a), ("y".into(), b)]).is_err());
    }
}
