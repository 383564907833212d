//! The two comparison architectures: a single multi-output network and d
//! fully independent single-output networks. Both run through the trainer's
//! driver so metric differences are attributable to architecture alone.

use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::models::ForecasterModel;
use crate::trainer::{train_system, Result, SystemSpec, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    MultiOutput,
    ParallelSingleOutput,
}

/// One network emitting all d variables, trained on the summed MSE across
/// variables ("an integrated loss"); per-variable losses are still reported
/// separately.
pub fn train_multi_output(
    model: &mut ForecasterModel,
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if model.out != dataset.num_targets() {
        return Err(TrainError::Config(format!(
            "multi-output model emits {} variables but the dataset has {}",
            model.out,
            dataset.num_targets()
        )));
    }
    train_system(SystemSpec::MultiOutput { model }, dataset, cfg)
}

/// d independent single-output networks: the forecast phase alone, which is
/// exactly the adversarial trainer with the regularization phase removed.
pub fn train_parallel_single(
    models: &mut [ForecasterModel],
    dataset: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_system(SystemSpec::ParallelSingle { forecasters: models }, dataset, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, ColumnKind, ColumnMeta, Scaler, TimeSeriesFrame};
    use crate::models::{
        discriminator_seed, forecaster_seed, init_discriminator, init_forecaster,
        DiscriminatorSpec, ForecasterSpec,
    };
    use crate::tensor::CounterRng;
    use crate::trainer::train;

    fn toy_dataset(rows: usize, d: usize, seed: u64) -> WindowedDataset {
        let mut rng = CounterRng::new(seed);
        let columns: Vec<ColumnMeta> = (0..d)
            .map(|c| ColumnMeta {
                name: format!("v{c}"),
                kind: ColumnKind::Continuous,
                vocabulary: None,
            })
            .collect();
        let mut values = Vec::with_capacity(rows * d);
        for t in 0..rows {
            for c in 0..d {
                let base = ((t as f64) * 0.4 + 2.0 * c as f64).sin() * 0.4 + 0.5;
                values.push(base + 0.05 * rng.next_symmetric(1.0));
            }
        }
        let frame =
            TimeSeriesFrame::new(columns, (0..rows as i64).collect(), values, vec![false; rows * d]).unwrap();
        let targets: Vec<String> = (0..d).map(|c| format!("v{c}")).collect();
        make_windows(&frame, 3, &targets, 1, &Scaler::default())
            .unwrap()
            .with_split_fraction(0.8)
            .unwrap()
    }

    fn single_models(dataset: &WindowedDataset, seed: u64, hidden: usize) -> Vec<ForecasterModel> {
        (0..dataset.num_targets())
            .map(|i| {
                let spec = ForecasterSpec::single_variable(dataset.num_features(), hidden, 1, i);
                init_forecaster(&spec, forecaster_seed(seed, i)).unwrap()
            })
            .collect()
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_targets_with_symmetrized_head_stay_symmetric() {
        // two output units that start identical see identical targets, so
        // their losses coincide at every epoch
        let d = 2;
        let rows = 50;
        let columns: Vec<ColumnMeta> = (0..d)
            .map(|c| ColumnMeta {
                name: format!("v{c}"),
                kind: ColumnKind::Continuous,
                vocabulary: None,
            })
            .collect();
        let mut values = Vec::new();
        for t in 0..rows {
            let v = ((t as f64) * 0.3).sin() * 0.4 + 0.5;
            values.push(v);
            values.push(v); // identical across variables
        }
        let frame =
            TimeSeriesFrame::new(columns, (0..rows as i64).collect(), values, vec![false; rows * d]).unwrap();
        let ds = make_windows(&frame, 3, &["v0".into(), "v1".into()], 1, &Scaler::default())
            .unwrap()
            .with_split_fraction(0.8)
            .unwrap();

        let spec = ForecasterSpec::multi_output(ds.num_features(), 4, 1, d);
        let mut model = init_forecaster(&spec, forecaster_seed(5, 0)).unwrap();
        // symmetrize the head: both output rows identical
        let hw = model.head_w.to_vec();
        let hidden = model.hidden_size();
        let row0 = hw[..hidden].to_vec();
        model.head_w.update_values(|v| {
            v[hidden..2 * hidden].copy_from_slice(&row0);
        });
        model.head_b.update_values(|v| v.fill(0.0));

        let report = train_multi_output(&mut model, &ds, &cfg(4)).unwrap();
        for e in &report.epochs {
            assert_eq!(e.forecast_loss[0], e.forecast_loss[1], "epoch {}", e.epoch);
        }
    }

    #[test]
    fn d_equals_one_matches_single_variable_trajectory() {
        let ds = toy_dataset(50, 1, 11);
        let mut multi = init_forecaster(
            &ForecasterSpec::multi_output(ds.num_features(), 4, 1, 1),
            forecaster_seed(3, 0),
        )
        .unwrap();
        let multi_report = train_multi_output(&mut multi, &ds, &cfg(4)).unwrap();

        let mut singles = single_models(&ds, 3, 4);
        let single_report = train_parallel_single(&mut singles, &ds, &cfg(4)).unwrap();

        for (a, b) in multi_report.epochs.iter().zip(single_report.epochs.iter()) {
            assert_eq!(a.forecast_loss, b.forecast_loss);
        }
        assert_eq!(multi_report.test_mse, single_report.test_mse);
    }

    #[test]
    fn parallel_equals_adversarial_with_lambda_zero() {
        let ds = toy_dataset(60, 2, 13);
        let c = TrainConfig { lambda_adv: 0.0, ..cfg(4) };

        let mut parallel = single_models(&ds, 17, 4);
        let parallel_report = train_parallel_single(&mut parallel, &ds, &c).unwrap();

        let mut adversarial = single_models(&ds, 17, 4);
        let mut disc = init_discriminator(&DiscriminatorSpec::default_for(2), discriminator_seed(17)).unwrap();
        let adversarial_report = train(&mut adversarial, &mut disc, &ds, &c).unwrap();

        for (p, a) in parallel_report.epochs.iter().zip(adversarial_report.epochs.iter()) {
            assert_eq!(p.forecast_loss, a.forecast_loss, "epoch {}", p.epoch);
        }
        assert_eq!(parallel_report.test_mse, adversarial_report.test_mse);
    }

    #[test]
    fn variable_order_does_not_couple_independent_models() {
        let ds = toy_dataset(50, 3, 19);
        let mut forward = single_models(&ds, 23, 4);
        let report_forward = train_parallel_single(&mut forward, &ds, &cfg(3)).unwrap();

        // permute model order along with their target bindings; each model
        // still sees the same data, so each variable's loss sequence is
        // unchanged
        let mut permuted: Vec<ForecasterModel> = Vec::new();
        for i in [2usize, 0, 1] {
            let spec = ForecasterSpec::single_variable(ds.num_features(), 4, 1, i);
            permuted.push(init_forecaster(&spec, forecaster_seed(23, i)).unwrap());
        }
        // build a dataset whose target columns are reordered the same way
        let permuted_ds = {
            let mut names = ds.target_names.clone();
            names.swap(0, 2);
            names.swap(1, 2); // order [2, 0, 1]
            let mut rng = CounterRng::new(19);
            let rows = 50;
            let columns: Vec<ColumnMeta> = (0..3)
                .map(|c| ColumnMeta {
                    name: format!("v{c}"),
                    kind: ColumnKind::Continuous,
                    vocabulary: None,
                })
                .collect();
            let mut values = Vec::with_capacity(rows * 3);
            for t in 0..rows {
                for c in 0..3 {
                    let base = ((t as f64) * 0.4 + 2.0 * c as f64).sin() * 0.4 + 0.5;
                    values.push(base + 0.05 * rng.next_symmetric(1.0));
                }
            }
            let frame = TimeSeriesFrame::new(columns, (0..rows as i64).collect(), values, vec![false; rows * 3])
                .unwrap();
            make_windows(&frame, 3, &names, 1, &Scaler::default())
                .unwrap()
                .with_split_fraction(0.8)
                .unwrap()
        };
        // model i in `permuted` predicts original variable [2,0,1][i], which
        // is target column i of permuted_ds
        let report_permuted = train_parallel_single(&mut permuted, &permuted_ds, &cfg(3)).unwrap();

        for (ef, ep) in report_forward.epochs.iter().zip(report_permuted.epochs.iter()) {
            // variable 2's sequence is now at position 0, etc.
            assert_eq!(ef.forecast_loss[2], ep.forecast_loss[0]);
            assert_eq!(ef.forecast_loss[0], ep.forecast_loss[1]);
            assert_eq!(ef.forecast_loss[1], ep.forecast_loss[2]);
        }
    }

    #[test]
    fn multi_output_converges_on_toy_data() {
        let ds = toy_dataset(80, 2, 29);
        let mut model = init_forecaster(
            &ForecasterSpec::multi_output(ds.num_features(), 8, 1, 2),
            forecaster_seed(31, 0),
        )
        .unwrap();
        let report = train_multi_output(&mut model, &ds, &cfg(12)).unwrap();
        let first: f64 = report.epochs.first().unwrap().forecast_loss.iter().sum();
        let last: f64 = report.epochs.last().unwrap().forecast_loss.iter().sum();
        assert!(last < first * 0.8, "no convergence: {first} -> {last}");
    }

    #[test]
    fn wrong_output_width_is_config_error() {
        let ds = toy_dataset(40, 2, 37);
        let mut model = init_forecaster(
            &ForecasterSpec::multi_output(ds.num_features(), 4, 1, 3),
            forecaster_seed(0, 0),
        )
        .unwrap();
        assert!(matches!(
            train_multi_output(&mut model, &ds, &cfg(1)),
            Err(TrainError::Config(_))
        ));
    }
}
