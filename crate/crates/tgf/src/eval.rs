//! Evaluation protocol: chronological train/test split, class-balance
//! undersampling, ROC-AUC with mid-rank tie handling, sliding-window
//! evaluation, permutation feature importance, and per-class value
//! histograms.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::history::{HistoryConfig, Pipeline};
use crate::learn::{ForestModel, ForestParams, LearnError};
use crate::seeds::derive_seed;
use crate::streamio::LabeledLink;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels must both contain positives and negatives")]
    SingleClass,
    #[error("scores and labels have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("training set contains no anomalous links")]
    NoAnomalies,
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("window {index} (links {start}..{end}): {source}")]
    Window { index: usize, start: usize, end: usize, source: Box<EvalError> },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    History(#[from] crate::history::HistoryError),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
}

/// Index of the first test row for a chronological split of `ell` rows.
pub fn split_index(ell: usize, r: f64) -> Result<usize, EvalError> {
    if !(r > 0.0 && r < 1.0) {
        return Err(EvalError::BadRatio(r));
    }
    Ok((r * ell as f64).floor() as usize)
}

/// First ⌊r·ℓ⌋ rows train, the rest test, no shuffling.
pub fn chronological_split<T>(rows: &[T], r: f64) -> Result<(&[T], &[T]), EvalError> {
    let k = split_index(rows.len(), r)?;
    Ok(rows.split_at(k))
}

/// Keep all anomalous rows plus an equal-size uniform sample of normal rows,
/// in seeded shuffled order. Returns the selected row indices and whether the
/// all-normals fallback fired.
pub fn undersample_indices(
    labels: &[u8],
    seed: u64,
) -> Result<(Vec<usize>, bool), EvalError> {
    let anomalous: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if anomalous.is_empty() {
        return Err(EvalError::NoAnomalies);
    }
    let mut normal: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let short = normal.len() < anomalous.len();
    normal.shuffle(&mut rng);
    normal.truncate(anomalous.len());
    let mut selected = anomalous;
    selected.extend(normal);
    selected.shuffle(&mut rng);
    Ok((selected, short))
}

/// ROC-AUC via the Mann-Whitney rank statistic with mid-ranks for ties:
/// the probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_pos_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based mid-rank of the tie group [i, j]
        let mid_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_pos_sum += mid_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_pos_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalCounts {
    pub total: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_anomalies: usize,
    pub test_anomalies: usize,
    pub balanced_train_size: usize,
    pub all_normals_fallback: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseTimings {
    pub undersample_secs: f64,
    pub train_secs: f64,
    pub score_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub auc: f64,
    pub split_ratio: f64,
    pub seed: u64,
    pub counts: EvalCounts,
    pub history_ids: Vec<String>,
    pub forest: ForestParams,
    pub timings: PhaseTimings,
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub model: ForestModel,
    /// (stream index within the evaluated rows, score, label) per test row
    pub test_scores: Vec<(usize, f64, u8)>,
}

/// The full protocol on an extracted feature matrix: chronological split,
/// undersample, train, score the test rows, ROC-AUC.
pub fn evaluate(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: Vec<String>,
    history_ids: Vec<String>,
    r: f64,
    params: &ForestParams,
    seed: u64,
) -> Result<EvalOutcome, EvalError> {
    evaluate_threaded(x, y, feature_names, history_ids, r, params, seed, 1)
}

/// [`evaluate`] with parallel tree growing; results match the serial run.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_threaded(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: Vec<String>,
    history_ids: Vec<String>,
    r: f64,
    params: &ForestParams,
    seed: u64,
    threads: usize,
) -> Result<EvalOutcome, EvalError> {
    let k = split_index(x.len(), r)?;
    let (x_train, x_test) = x.split_at(k);
    let (y_train, y_test) = y.split_at(k);

    let t0 = Instant::now();
    let (selected, short) = undersample_indices(y_train, derive_seed(seed, "undersample", 0))?;
    let bx: Vec<Vec<f64>> = selected.iter().map(|&i| x_train[i].clone()).collect();
    let by: Vec<u8> = selected.iter().map(|&i| y_train[i]).collect();
    let undersample_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let forest_params = ForestParams { seed: derive_seed(seed, "forest", 0), ..params.clone() };
    let model = crate::learn::train_threaded(&bx, &by, feature_names, &forest_params, threads)?;
    let train_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let scores = model.score_rows(x_test)?;
    let auc = roc_auc(&scores, y_test)?;
    let score_secs = t2.elapsed().as_secs_f64();

    let report = EvalReport {
        auc,
        split_ratio: r,
        seed,
        counts: EvalCounts {
            total: x.len(),
            train_size: k,
            test_size: x.len() - k,
            train_anomalies: y_train.iter().filter(|&&l| l == 1).count(),
            test_anomalies: y_test.iter().filter(|&&l| l == 1).count(),
            balanced_train_size: by.len(),
            all_normals_fallback: short,
        },
        history_ids,
        forest: forest_params,
        timings: PhaseTimings { undersample_secs, train_secs, score_secs },
    };
    let test_scores = scores
        .into_iter()
        .zip(y_test)
        .enumerate()
        .map(|(i, (s, &l))| (k + i, s, l))
        .collect();
    Ok(EvalOutcome { report, model, test_scores })
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowAuc {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub auc: f64,
}

/// Repeat the split/undersample/train/test protocol over overlapping windows
/// of the stream. Each window restarts from an empty history: no feature
/// leaks across the window start.
///
/// `window_fraction` is the window length as a fraction of the stream and
/// `step_fraction` the stride; the defaults (0.5, 0.01) yield exactly 50
/// windows.
#[allow(clippy::too_many_arguments)]
pub fn sliding_window_eval(
    stream: &[LabeledLink],
    configs: &[HistoryConfig],
    params: &ForestParams,
    window_fraction: f64,
    step_fraction: f64,
    r: f64,
    seed: u64,
) -> Result<Vec<WindowAuc>, EvalError> {
    let ell = stream.len();
    let win_len = (window_fraction * ell as f64).floor() as usize;
    let step = step_fraction * ell as f64;
    let n_windows = ((1.0 - window_fraction) / step_fraction).round() as usize;
    let mut out = Vec::with_capacity(n_windows);
    for i in 0..n_windows {
        let start = (i as f64 * step).floor() as usize;
        let end = (start + win_len).min(ell);
        let window = &stream[start..end];
        let mut pipeline = Pipeline::new(configs.to_vec());
        let mut x = Vec::with_capacity(window.len());
        let mut y = Vec::with_capacity(window.len());
        for l in window {
            let row = pipeline.observe(&l.link)?;
            x.push(row.into_iter().map(|v| v as f64).collect::<Vec<f64>>());
            y.push(l.label.as_u8());
        }
        let outcome = evaluate(
            &x,
            &y,
            pipeline.header(),
            configs.iter().map(|c| c.id.clone()).collect(),
            r,
            params,
            derive_seed(seed, "window", i as u64),
        )
        .map_err(|e| EvalError::Window { index: i, start, end, source: Box::new(e) })?;
        out.push(WindowAuc { index: i, start, end, auc: outcome.report.auc });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub column: usize,
    /// AUC decrease for each repeat, in repeat order
    pub decreases: Vec<f64>,
    pub mean_decrease: f64,
}

/// Shuffle one test column at a time and measure the AUC drop, `repeats`
/// times per feature. Returns entries ranked by mean decrease.
pub fn permutation_importance(
    model: &ForestModel,
    x_test: &[Vec<f64>],
    y_test: &[u8],
    repeats: usize,
    seed: u64,
) -> Result<(f64, Vec<FeatureImportance>), EvalError> {
    let scores = model.score_rows(x_test)?;
    let baseline = roc_auc(&scores, y_test)?;
    let n = x_test.len();
    let mut entries = Vec::with_capacity(model.n_features());
    let mut shuffled = x_test.to_vec();
    for col in 0..model.n_features() {
        let mut decreases = Vec::with_capacity(repeats);
        for rep in 0..repeats {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                seed,
                "perm",
                (col * repeats + rep) as u64,
            ));
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            for (i, &src) in perm.iter().enumerate() {
                shuffled[i][col] = x_test[src][col];
            }
            let s = model.score_rows(&shuffled)?;
            decreases.push(baseline - roc_auc(&s, y_test)?);
        }
        // restore the column
        for (row, orig) in shuffled.iter_mut().zip(x_test) {
            row[col] = orig[col];
        }
        let mean_decrease = decreases.iter().sum::<f64>() / repeats as f64;
        entries.push(FeatureImportance {
            feature: model.feature_names[col].clone(),
            column: col,
            decreases,
            mean_decrease,
        });
    }
    entries.sort_by(|a, b| b.mean_decrease.partial_cmp(&a.mean_decrease).unwrap());
    Ok((baseline, entries))
}

/// Exact per-class value histogram of one feature column.
pub fn feature_distribution(
    x: &[Vec<f64>],
    y: &[u8],
    column: usize,
) -> (BTreeMap<u64, u64>, BTreeMap<u64, u64>) {
    let mut normal = BTreeMap::new();
    let mut anomalous = BTreeMap::new();
    for (row, &label) in x.iter().zip(y) {
        let bucket = row[column] as u64;
        let map = if label == 1 { &mut anomalous } else { &mut normal };
        *map.entry(bucket).or_insert(0) += 1;
    }
    (normal, anomalous)
}

/// (feature rows, labels, column names) as extracted from a labeled stream.
pub type FeatureData = (Vec<Vec<f64>>, Vec<u8>, Vec<String>);

/// Feature extraction for a labeled stream: one concatenated row per link.
pub fn extract_features(
    stream: &[LabeledLink],
    configs: &[HistoryConfig],
) -> Result<FeatureData, EvalError> {
    let mut pipeline = Pipeline::new(configs.to_vec());
    let mut x = Vec::with_capacity(stream.len());
    let mut y = Vec::with_capacity(stream.len());
    for l in stream {
        let row = pipeline.observe(&l.link)?;
        x.push(row.into_iter().map(|v| v as f64).collect::<Vec<f64>>());
        y.push(l.label.as_u8());
    }
    Ok((x, y, pipeline.header()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::train;
    use proptest::prelude::*;
    use rand::Rng;

    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_sizes() {
        let rows: Vec<u32> = (0..10).collect();
        let (train, test) = chronological_split(&rows, 0.7).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        let rows: Vec<u32> = (0..100).collect();
        let (train, _) = chronological_split(&rows, 0.9).unwrap();
        assert_eq!(train, &(0..90).collect::<Vec<u32>>()[..]);
    }

    #[test]
    fn split_concatenation_is_identity() {
        let rows: Vec<u32> = (0..57).collect();
        let (a, b) = chronological_split(&rows, 0.33).unwrap();
        let glued: Vec<u32> = a.iter().chain(b).copied().collect();
        assert_eq!(glued, rows);
    }

    #[test]
    fn bad_ratio_rejected() {
        let rows = [1, 2, 3];
        assert!(chronological_split(&rows, 0.0).is_err());
        assert!(chronological_split(&rows, 1.0).is_err());
    }

    #[test]
    fn undersample_balances() {
        let labels: Vec<u8> =
            (0..100).map(|i| u8::from(i == 3 || i == 40 || i == 77)).collect();
        let (selected, short) = undersample_indices(&labels, 1).unwrap();
        assert!(!short);
        assert_eq!(selected.len(), 6);
        let pos = selected.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos, 3);
        // no duplicates
        let mut uniq = selected.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 6);
    }

    #[test]
    fn undersample_without_anomalies_is_error() {
        assert!(matches!(undersample_indices(&[0, 0, 0], 1), Err(EvalError::NoAnomalies)));
    }

    #[test]
    fn undersample_fewer_normals_takes_all() {
        let labels = [1, 1, 1, 0];
        let (selected, short) = undersample_indices(&labels, 1).unwrap();
        assert!(short);
        assert_eq!(selected.len(), 4);
    }

    #[test]
    fn undersample_selection_is_uniform() {
        // every normal row should be picked with frequency ~ a/97
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i < 3)).collect();
        let mut hits = vec![0u32; 100];
        let runs = 12_000;
        for seed in 0..runs {
            let (selected, _) = undersample_indices(&labels, seed).unwrap();
            for i in selected {
                if labels[i] == 0 {
                    hits[i] += 1;
                }
            }
        }
        let expect = runs as f64 * 3.0 / 97.0;
        for (i, &h) in hits.iter().enumerate().skip(3) {
            // ~4 sigma of the binomial, across 97 simultaneous checks
            let rel = (h as f64 - expect) / expect;
            assert!(rel.abs() < 0.21, "row {i}: {h} hits vs {expect:.1} expected");
        }
    }

    fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if li != 1 {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj != 0 {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_trivial_values() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.7, 0.6], &[1, 0, 1, 0]).unwrap(), 0.75);
    }

    #[test]
    fn auc_single_class_is_error() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn auc_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(4..60);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let got = roc_auc(&scores, &labels).unwrap();
            assert!((got - brute_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn auc_flip_symmetry(raw in proptest::collection::vec((0u8..2, 0u32..16), 4..60)) {
            let labels: Vec<u8> = raw.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = raw.iter().map(|&(_, s)| s as f64).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&scores, &flipped).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            raw in proptest::collection::vec((0u8..2, 0u32..16), 4..60)
        ) {
            let labels: Vec<u8> = raw.iter().map(|&(l, _)| l).collect();
            let scores: Vec<f64> = raw.iter().map(|&(_, s)| s as f64).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let transformed: Vec<f64> = scores.iter().map(|&s| (s * 3.0 + 1.0).exp()).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            let b = roc_auc(&transformed, &labels).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    fn toy_model_and_data() -> (ForestModel, Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 400;
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let signal = rng.gen_range(0..20) as f64;
                let noise = rng.gen_range(0..20) as f64;
                vec![signal, noise, 7.0]
            })
            .collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 10.0)).collect();
        let params = ForestParams { n_trees: 20, seed: 4, ..ForestParams::default() };
        let names = vec!["signal".into(), "noise".into(), "constant".into()];
        let model = train(&x[..300], &y[..300], names, &params).unwrap();
        (model, x[300..].to_vec(), y[300..].to_vec())
    }

    #[test]
    fn constant_feature_has_zero_importance() {
        let (model, xt, yt) = toy_model_and_data();
        let (_, entries) = permutation_importance(&model, &xt, &yt, 5, 1).unwrap();
        let constant = entries.iter().find(|e| e.feature == "constant").unwrap();
        for &d in &constant.decreases {
            assert_eq!(d, 0.0, "shuffling a constant column is the identity");
        }
    }

    #[test]
    fn signal_feature_ranks_first() {
        let (model, xt, yt) = toy_model_and_data();
        let (baseline, entries) = permutation_importance(&model, &xt, &yt, 10, 1).unwrap();
        assert_eq!(entries[0].feature, "signal");
        assert_eq!(entries[0].decreases.len(), 10);
        assert!(entries[0].mean_decrease > 0.2);
        assert!(baseline > 0.9);
    }

    #[test]
    fn histogram_matches_group_by() {
        let x = vec![vec![3.0], vec![3.0], vec![5.0], vec![3.0]];
        let y = vec![0, 1, 0, 0];
        let (normal, anomalous) = feature_distribution(&x, &y, 0);
        assert_eq!(normal.get(&3), Some(&2));
        assert_eq!(normal.get(&5), Some(&1));
        assert_eq!(anomalous.get(&3), Some(&1));
        let n_total: u64 = normal.values().sum();
        let a_total: u64 = anomalous.values().sum();
        assert_eq!(n_total, 3);
        assert_eq!(a_total, 1);
    }

    #[test]
    fn single_row_histogram() {
        let (normal, anomalous) = feature_distribution(&[vec![9.0]], &[0], 0);
        assert_eq!(normal.len(), 1);
        assert_eq!(normal.get(&9), Some(&1));
        assert!(anomalous.is_empty());
    }
}
