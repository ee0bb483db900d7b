//! Permutation importance, single- and few-neuron classification, and spike
//! statistics per unit.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::raster::SpikeRaster;
use crate::readout::{fit_logreg, predict, sigmoid, FeatureMatrix, FeatureMeta, FitOptions, LinearModel, ReadoutError};
use crate::seed::stage_rng;

pub const DEFAULT_REPEATS: usize = 10;
pub const DEFAULT_K_MAX: usize = 10;

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub meta: FeatureMeta,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<FeatureImportance>,
    pub repeats: usize,
    pub seed: u64,
    /// Which split the scores were computed on.
    pub split: String,
    /// Accuracy on the unpermuted data.
    pub baseline: f64,
}

impl ImportanceReport {
    pub fn means(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.mean).collect()
    }
}

fn check_eval(model: &LinearModel, x: &FeatureMatrix, y: &[bool]) -> Result<(), ReadoutError> {
    if x.n_cols() != model.weights.len() {
        return Err(ReadoutError::Dimension {
            expected: model.weights.len(),
            got: x.n_cols(),
        });
    }
    if x.n_rows() != y.len() {
        return Err(ReadoutError::LabelCount {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    if y.is_empty() {
        return Err(ReadoutError::Empty);
    }
    Ok(())
}

/// Accuracy drop when one column is shuffled, averaged over `repeats`
/// shuffles. Repeat `r` of feature `f` draws from its own stream so reports
/// do not depend on evaluation order or thread count.
///
/// The permuted logit is updated from the unpermuted one, so a zero weight or
/// a constant column gives exactly zero importance.
pub fn permutation_importance(
    model: &LinearModel,
    x: &FeatureMatrix,
    y: &[bool],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ReadoutError> {
    check_eval(model, x, y)?;
    let repeats = repeats.max(1);
    let logits: Vec<f64> = (0..x.n_rows()).map(|r| model.decision(x.row(r))).collect();
    let score = |z: &dyn Fn(usize) -> f64| (0..y.len()).filter(|&i| (sigmoid(z(i)) >= 0.5) == y[i]).count() as f64 / y.len() as f64;
    let baseline = score(&|i| logits[i]);
    let features = (0..x.n_cols())
        .into_par_iter()
        .map(|f| {
            let coef = model.weights[f] / model.standardization[f].scale;
            let col = x.column(f);
            let drops: Vec<f64> = (0..repeats)
                .map(|r| {
                    let mut rng = stage_rng(seed, "permutation", ((r as u64) << 32) | f as u64);
                    let mut perm = col.clone();
                    perm.shuffle(&mut rng);
                    baseline - score(&|i| logits[i] + coef * (perm[i] - col[i]))
                })
                .collect();
            let (mean, std) = mean_std(&drops);
            FeatureImportance {
                meta: x.columns()[f],
                mean,
                std,
            }
        })
        .collect();
    Ok(ImportanceReport {
        features,
        repeats,
        seed,
        split: "test".into(),
        baseline,
    })
}

/// Training accuracy of a one-feature model for every column.
pub fn single_feature_train_accuracy(x: &FeatureMatrix, y: &[bool], opts: &FitOptions) -> Result<Vec<f64>, ReadoutError> {
    (0..x.n_cols())
        .into_par_iter()
        .map(|f| {
            let xf = x.select_columns(&[f]);
            let m = fit_logreg(&xf, y, opts)?;
            let p = predict(&m, &xf)?;
            Ok(crate::readout::label_accuracy(&p.labels, y))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleNeuronScore {
    pub feature: usize,
    pub meta: FeatureMeta,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// TP / (TP + TN); `None` when there are no true classifications.
    pub tp_share: Option<f64>,
    pub tn_share: Option<f64>,
}

/// Fits one single-feature model per column on the training split and scores
/// it on the test split.
pub fn single_neuron_scores(
    x_train: &FeatureMatrix,
    y_train: &[bool],
    x_test: &FeatureMatrix,
    y_test: &[bool],
    opts: &FitOptions,
) -> Result<Vec<SingleNeuronScore>, ReadoutError> {
    if y_test.is_empty() || y_train.is_empty() {
        return Err(ReadoutError::Empty);
    }
    if x_train.n_cols() != x_test.n_cols() {
        return Err(ReadoutError::Dimension {
            expected: x_train.n_cols(),
            got: x_test.n_cols(),
        });
    }
    (0..x_train.n_cols())
        .into_par_iter()
        .map(|f| {
            let xf = x_train.select_columns(&[f]);
            let m = fit_logreg(&xf, y_train, opts)?;
            let train = predict(&m, &xf)?.labels;
            let test = predict(&m, &x_test.select_columns(&[f]))?.labels;
            let tp = test.iter().zip(y_test).filter(|(&p, &t)| p && t).count();
            let tn = test.iter().zip(y_test).filter(|(&p, &t)| !p && !t).count();
            let (tp_share, tn_share) = if tp + tn == 0 {
                (None, None)
            } else {
                let total = (tp + tn) as f64;
                (Some(tp as f64 / total), Some(tn as f64 / total))
            };
            Ok(SingleNeuronScore {
                feature: f,
                meta: x_train.columns()[f],
                train_accuracy: crate::readout::label_accuracy(&train, y_train),
                test_accuracy: crate::readout::label_accuracy(&test, y_test),
                tp_share,
                tn_share,
            })
        })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewNeuronStep {
    pub k: usize,
    /// Column added at this step.
    pub feature: usize,
    pub meta: FeatureMeta,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Every column exactly once: best single-feature training accuracy
    /// first, the rest by descending importance.
    pub order: Vec<usize>,
    pub steps: Vec<FewNeuronStep>,
}

/// Selection order from single-feature training accuracies and importances.
pub fn selection_order(train_accuracy: &[f64], importance: &[f64]) -> Vec<usize> {
    let Some(first) = argmax(train_accuracy) else {
        return Vec::new();
    };
    let mut rest: Vec<usize> = (0..importance.len()).filter(|&i| i != first).collect();
    rest.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    std::iter::once(first).chain(rest).collect()
}

/// Refits a model on the first `k` selected features for `k = 1..=k_max`.
pub fn select_few(
    x_train: &FeatureMatrix,
    y_train: &[bool],
    test: Option<(&FeatureMatrix, &[bool])>,
    importances: &ImportanceReport,
    k_max: usize,
    opts: &FitOptions,
) -> Result<SelectionResult, ReadoutError> {
    if importances.features.len() != x_train.n_cols() {
        return Err(ReadoutError::Dimension {
            expected: x_train.n_cols(),
            got: importances.features.len(),
        });
    }
    let k_max = if k_max > x_train.n_cols() {
        log::warn!("k_max {k_max} exceeds {} features; truncating", x_train.n_cols());
        x_train.n_cols()
    } else {
        k_max
    };
    let single = single_feature_train_accuracy(x_train, y_train, opts)?;
    let order = selection_order(&single, &importances.means());
    let steps = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let cols = &order[..k];
            let xk = x_train.select_columns(cols);
            let m = fit_logreg(&xk, y_train, opts)?;
            let train_accuracy = crate::readout::label_accuracy(&predict(&m, &xk)?.labels, y_train);
            let test_accuracy = match test {
                Some((xt, yt)) => Some(crate::readout::accuracy(&m, &xt.select_columns(cols), yt)?),
                None => None,
            };
            Ok(FewNeuronStep {
                k,
                feature: order[k - 1],
                meta: x_train.columns()[order[k - 1]],
                train_accuracy,
                test_accuracy,
            })
        })
        .collect::<Result<Vec<_>, ReadoutError>>()?;
    Ok(SelectionResult { order, steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeStat {
    pub mean: f64,
    pub std: f64,
}

/// Per-channel mean and population std of spike counts over utterances.
/// Rasters must share a channel count.
pub fn mean_spikes_per_utterance(rasters: &[SpikeRaster]) -> Vec<SpikeStat> {
    let Some(first) = rasters.first() else {
        return Vec::new();
    };
    let counts: Vec<Vec<u32>> = rasters.iter().map(|r| r.spike_counts().counts).collect();
    (0..first.n_channels())
        .map(|c| {
            let v: Vec<f64> = counts.iter().map(|k| f64::from(k[c])).collect();
            let (mean, std) = mean_std(&v);
            SpikeStat { mean, std }
        })
        .collect()
}

/// Same statistics from a spike-count feature matrix, one per column.
pub fn feature_spike_stats(x: &FeatureMatrix) -> Vec<SpikeStat> {
    (0..x.n_cols())
        .map(|c| {
            let (mean, std) = mean_std(&x.column(c));
            SpikeStat { mean, std }
        })
        .collect()
}

/// One row of the `layer,unit,metric,value,std` report layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub meta: FeatureMeta,
    pub metric: &'static str,
    pub value: Option<f64>,
    pub std: Option<f64>,
}

pub fn importance_rows(report: &ImportanceReport) -> Vec<ReportRow> {
    report
        .features
        .iter()
        .map(|f| ReportRow {
            meta: f.meta,
            metric: "importance",
            value: Some(f.mean),
            std: Some(f.std),
        })
        .collect()
}

pub fn single_neuron_rows(scores: &[SingleNeuronScore]) -> Vec<ReportRow> {
    scores
        .iter()
        .flat_map(|s| {
            [
                ("train_accuracy", Some(s.train_accuracy)),
                ("test_accuracy", Some(s.test_accuracy)),
                ("tp_share", s.tp_share),
                ("tn_share", s.tn_share),
            ]
            .map(|(metric, value)| ReportRow {
                meta: s.meta,
                metric,
                value,
                std: None,
            })
        })
        .collect()
}

pub fn spike_rows(metas: &[FeatureMeta], stats: &[SpikeStat]) -> Vec<ReportRow> {
    metas
        .iter()
        .zip(stats)
        .map(|(&meta, s)| ReportRow {
            meta,
            metric: "spikes_per_utterance",
            value: Some(s.mean),
            std: Some(s.std),
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |v| v.to_string())
}

/// Writes report rows, each preceded by the given leading fields. Missing
/// values (undefined shares) are written as `nan`.
pub fn write_report_rows<W: Write>(mut w: W, leading: &[&str], rows: &[ReportRow]) -> std::io::Result<()> {
    for r in rows {
        for field in leading {
            write!(w, "{field},")?;
        }
        writeln!(
            w,
            "{},{},{},{},{}",
            r.meta.layer.name(),
            r.meta.unit,
            r.metric,
            fmt_opt(r.value),
            fmt_opt(r.std)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use crate::readout::Standardization;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed_model(weights: Vec<f64>, bias: f64) -> LinearModel {
        let n = weights.len();
        LinearModel {
            standardization: vec![Standardization { mean: 0.0, scale: 1.0 }; n],
            features: (0..n).map(|unit| FeatureMeta { layer: Layer::Formants, unit }).collect(),
            weights,
            bias,
            lambda: 0.0,
            tol: 1e-8,
            iterations: 0,
            converged: true,
            loss_trace: vec![],
        }
    }

    /// Mean accuracy over every permutation of `col`, by enumeration.
    fn enumerated_permuted_accuracy(col: &[f64], y: &[bool], predict: impl Fn(usize, f64) -> bool) -> f64 {
        fn perms(items: Vec<f64>) -> Vec<Vec<f64>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let x = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, x);
                    out.push(p);
                }
            }
            out
        }
        let all = perms(col.to_vec());
        let total: f64 = all
            .iter()
            .map(|p| p.iter().enumerate().filter(|&(i, &v)| predict(i, v) == y[i]).count() as f64 / y.len() as f64)
            .sum();
        total / all.len() as f64
    }

    #[test]
    fn perfect_single_feature_drops_to_chance() {
        let col = [0.0, 0.0, 1.0, 1.0];
        let y = [false, false, true, true];
        let expected = 1.0 - enumerated_permuted_accuracy(&col, &y, |_, v| v > 0.5);
        assert!((expected - 0.5).abs() < 1e-12);
        let x = FeatureMatrix::unlabeled(&col.iter().map(|&v| vec![v]).collect::<Vec<_>>());
        let m = fixed_model(vec![10.0], -5.0);
        let rep = permutation_importance(&m, &x, &y, 4000, 5).unwrap();
        assert_eq!(rep.baseline, 1.0);
        assert!((rep.features[0].mean - expected).abs() < 0.02, "{}", rep.features[0].mean);
    }

    #[test]
    fn constant_and_zero_weight_features_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![3.0, rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[1] > 0.5).collect();
        let x = FeatureMatrix::unlabeled(&rows);
        let m = fit_logreg(&x, &y, &FitOptions { lambda: 0.01, ..FitOptions::default() }).unwrap();
        let rep = permutation_importance(&m, &x, &y, 10, 1).unwrap();
        assert_eq!(rep.features[0].mean, 0.0);
        assert_eq!(rep.features[0].std, 0.0);
        let zero = fixed_model(vec![0.0; 3], 0.3);
        let rep = permutation_importance(&zero, &x, &y, 10, 1).unwrap();
        assert!(rep.features.iter().all(|f| f.mean == 0.0 && f.std == 0.0));
    }

    #[test]
    fn twin_feature_keeps_model_working() {
        // Two copies of a perfectly predictive binary feature, weight split
        // evenly. Mixed permuted rows sit on the boundary (p = 0.5, labeled
        // positive), so only negatives drawing a permuted 1 flip.
        let col = [0.0, 0.0, 1.0, 1.0];
        let y = [false, false, true, true];
        let rows: Vec<Vec<f64>> = col.iter().map(|&v| vec![v, v]).collect();
        let x = FeatureMatrix::unlabeled(&rows);
        let twin = fixed_model(vec![2.0, 2.0], -2.0);
        let solo = fixed_model(vec![4.0], -2.0);
        let x_solo = x.select_columns(&[0]);
        assert_eq!(crate::readout::accuracy(&twin, &x, &y).unwrap(), 1.0);
        let twin_oracle = 1.0 - enumerated_permuted_accuracy(&col, &y, |i, v| col[i] + v >= 1.0);
        let solo_oracle = 1.0 - enumerated_permuted_accuracy(&col, &y, |_, v| v >= 0.5);
        assert!((solo_oracle - 0.5).abs() < 1e-12);
        assert!((twin_oracle - 0.25).abs() < 1e-12);
        let rep = permutation_importance(&twin, &x, &y, 4000, 3).unwrap();
        let solo_rep = permutation_importance(&solo, &x_solo, &y, 4000, 3).unwrap();
        assert!((rep.features[0].mean - twin_oracle).abs() < 0.02, "{}", rep.features[0].mean);
        assert!((solo_rep.features[0].mean - solo_oracle).abs() < 0.02);
        // Still above chance: the twin carries the signal.
        assert!(rep.baseline - rep.features[0].mean > 0.7);
        // A fitted model on the twins splits its weight evenly.
        let fitted = fit_logreg(&x, &y, &FitOptions { lambda: 1e-3, ..FitOptions::default() }).unwrap();
        assert!((fitted.weights[0] - fitted.weights[1]).abs() < 1e-9);
    }

    #[test]
    fn importance_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..5).map(|_| rng.random_range(0.0..5.0)).collect()).collect();
        let y: Vec<bool> = rows.iter().map(|r| r[0] > r[1]).collect();
        let x = FeatureMatrix::unlabeled(&rows);
        let m = fit_logreg(&x, &y, &FitOptions::default()).unwrap();
        assert_eq!(permutation_importance(&m, &x, &y, 10, 77).unwrap(), permutation_importance(&m, &x, &y, 10, 77).unwrap());
    }

    #[test]
    fn single_neuron_cases() {
        let n = 40;
        let y: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = y
            .iter()
            .map(|&t| vec![if t { 5.0 } else { 1.0 }, rng.random_range(0.0..1.0)])
            .collect();
        let x = FeatureMatrix::unlabeled(&rows);
        let s = single_neuron_scores(&x, &y, &x, &y, &FitOptions { lambda: 1e-3, ..FitOptions::default() }).unwrap();
        assert_eq!(s[0].test_accuracy, 1.0);
        assert!((s[0].tp_share.unwrap() - 0.25).abs() < 1e-12);
        assert!((s[0].tn_share.unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn unrelated_feature_is_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mk = |rng: &mut ChaCha8Rng, n: usize| {
            let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
            (FeatureMatrix::unlabeled(&rows), y)
        };
        let (xtr, ytr) = mk(&mut rng, 400);
        let (xte, yte) = mk(&mut rng, 4000);
        let s = single_neuron_scores(&xtr, &ytr, &xte, &yte, &FitOptions::default()).unwrap();
        assert!((s[0].test_accuracy - 0.5).abs() < 0.05, "{}", s[0].test_accuracy);
    }

    #[test]
    fn all_positive_predictions_shares() {
        // Bias-only model that always predicts positive.
        let y = [true, false, true, false];
        let x = FeatureMatrix::unlabeled(&[vec![0.0], vec![0.0], vec![0.0], vec![0.0]]);
        let m = fixed_model(vec![0.0], 2.0);
        let pred = predict(&m, &x).unwrap().labels;
        let tp = pred.iter().zip(&y).filter(|(&p, &t)| p && t).count();
        let tn = pred.iter().zip(&y).filter(|(&p, &t)| !p && !t).count();
        assert_eq!((tp, tn), (2, 0));
        // The scorer uses the same counting; a never-correct fixture yields
        // the sentinel.
        let wrong = [true, true];
        let xs = FeatureMatrix::unlabeled(&[vec![1.0], vec![1.0]]);
        let train_y = [true, false];
        let xt = FeatureMatrix::unlabeled(&[vec![0.0], vec![1.0]]);
        let s = single_neuron_scores(&xt, &train_y, &xs, &wrong, &FitOptions { lambda: 1e-3, ..FitOptions::default() }).unwrap();
        assert_eq!(s[0].test_accuracy, 0.0);
        assert_eq!((s[0].tp_share, s[0].tn_share), (None, None));
    }

    #[test]
    fn spike_stats() {
        let a = SpikeRaster::from_events(2, 30, (0..10).map(|b| (b, 0))).unwrap();
        let b = SpikeRaster::from_events(2, 30, (0..20).map(|b| (b, 0))).unwrap();
        let s = mean_spikes_per_utterance(&[a, b]);
        assert_eq!(s[0], SpikeStat { mean: 15.0, std: 5.0 });
        assert_eq!(s[1], SpikeStat { mean: 0.0, std: 0.0 });
    }

    fn two_channel_task(seed: u64, n: usize) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let y = rows.iter().map(|r| r[0] + r[1] > 1.0).collect();
        (FeatureMatrix::unlabeled(&rows), y)
    }

    #[test]
    fn selection_needs_two_channels() {
        let (x, y) = two_channel_task(1, 300);
        let (xt, yt) = two_channel_task(2, 300);
        let opts = FitOptions { lambda: 1e-4, ..FitOptions::default() };
        let m = fit_logreg(&x, &y, &opts).unwrap();
        let imp = permutation_importance(&m, &xt, &yt, 10, 0).unwrap();
        let sel = select_few(&x, &y, Some((&xt, &yt)), &imp, 3, &opts).unwrap();
        let mut sorted = sel.order.clone();
        sorted.sort();
        assert_eq!(sorted, vec![0, 1, 2]);
        assert!(sel.order[..2].contains(&0) && sel.order[..2].contains(&1));
        assert!(sel.steps[1].train_accuracy > sel.steps[0].train_accuracy);
        let single = single_feature_train_accuracy(&x, &y, &opts).unwrap();
        assert_eq!(sel.steps[0].train_accuracy, single[sel.order[0]]);
        assert_eq!(single[sel.order[0]], single.iter().cloned().fold(f64::MIN, f64::max));
    }

    #[test]
    fn duplicated_best_feature_adds_nothing() {
        let (x, y) = two_channel_task(3, 200);
        let rows: Vec<Vec<f64>> = (0..x.n_rows()).map(|r| vec![x.get(r, 0), x.get(r, 0)]).collect();
        let xd = FeatureMatrix::unlabeled(&rows);
        let opts = FitOptions { lambda: 1e-4, ..FitOptions::default() };
        let imp = ImportanceReport {
            features: xd.columns().iter().map(|&meta| FeatureImportance { meta, mean: 0.0, std: 0.0 }).collect(),
            repeats: 1,
            seed: 0,
            split: "test".into(),
            baseline: 0.0,
        };
        let sel = select_few(&xd, &y, None, &imp, 5, &opts).unwrap();
        assert_eq!(sel.steps.len(), 2);
        assert_eq!(sel.order, vec![0, 1]);
        assert_eq!(sel.steps[0].train_accuracy, sel.steps[1].train_accuracy);
    }

    #[test]
    fn order_ties_go_to_lowest_index() {
        assert_eq!(selection_order(&[0.5, 0.7, 0.7, 0.1], &[0.2, 0.0, 0.3, 0.3]), vec![1, 2, 3, 0]);
    }
}
