//! Random forest of CART trees with Gini impurity, scoring links by the mean
//! class-1 leaf fraction across trees.
//!
//! Everything is deterministic given the seed: per-tree seeds are derived
//! from (seed, tree index), split candidates are midpoints between
//! consecutive distinct sorted values, and ties break on lowest feature index
//! then smallest threshold.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("training data is empty")]
    EmptyInput,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("row has {got} features, model expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// ⌊√F⌋ features per split (the usual forest default).
    Sqrt,
    /// All features at every split.
    All,
    Fixed(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => n_features,
            MaxFeatures::Fixed(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// class-1 fraction of the training samples in this leaf
        fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn score(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { fraction } => return *fraction,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Node>,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Anomaly score in [0,1]: mean class-1 leaf fraction over trees.
    pub fn score(&self, row: &[f64]) -> Result<f64, LearnError> {
        if row.len() != self.n_features() {
            return Err(LearnError::WidthMismatch { expected: self.n_features(), got: row.len() });
        }
        Ok(self.score_unchecked(row))
    }

    pub fn score_unchecked(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.score(row)).sum();
        sum / self.trees.len() as f64
    }

    pub fn score_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, LearnError> {
        rows.iter().map(|r| self.score(r)).collect()
    }

    /// Per-tree scores of one row, for decomposition checks.
    pub fn tree_scores(&self, row: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.score(row)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    max_features: usize,
    max_depth: Option<usize>,
    min_samples_split: usize,
    min_samples_leaf: usize,
    n_features: usize,
    rng: ChaCha8Rng,
    // scratch for feature subsampling
    feature_pool: Vec<usize>,
}

impl<'a> TreeBuilder<'a> {
    fn build(&mut self, indices: &mut [usize], depth: usize) -> Node {
        let total = indices.len();
        let pos = indices.iter().filter(|&&i| self.y[i] == 1).count();
        let fraction = pos as f64 / total as f64;
        let pure = pos == 0 || pos == total;
        let depth_capped = self.max_depth.is_some_and(|d| depth >= d);
        if pure || total < self.min_samples_split || depth_capped {
            return Node::Leaf { fraction };
        }

        let best = match self.best_split(indices, pos) {
            Some(b) => b,
            None => return Node::Leaf { fraction },
        };

        // stable partition keeps index order within children deterministic
        let mut left: Vec<usize> = Vec::with_capacity(total);
        let mut right: Vec<usize> = Vec::with_capacity(total);
        for &i in indices.iter() {
            if self.x[i][best.feature] <= best.threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.build(&mut left, depth + 1)),
            right: Box::new(self.build(&mut right, depth + 1)),
        }
    }

    fn sample_features(&mut self) -> Vec<usize> {
        let k = self.max_features.min(self.n_features);
        if k == self.n_features {
            return (0..self.n_features).collect();
        }
        // partial Fisher-Yates, then ascending for the index tie-break
        for i in 0..k {
            let j = self.rng.gen_range(i..self.n_features);
            self.feature_pool.swap(i, j);
        }
        let mut chosen: Vec<usize> = self.feature_pool[..k].to_vec();
        chosen.sort_unstable();
        chosen
    }

    fn best_split(&mut self, indices: &[usize], pos: usize) -> Option<SplitCandidate> {
        let total = indices.len();
        let parent = gini(pos, total);
        let features = self.sample_features();
        let mut best: Option<SplitCandidate> = None;

        let mut column: Vec<(f64, u8)> = Vec::with_capacity(total);
        for feature in features {
            column.clear();
            column.extend(indices.iter().map(|&i| (self.x[i][feature], self.y[i])));
            column.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left_pos = 0usize;
            for split_at in 1..total {
                left_pos += column[split_at - 1].1 as usize;
                if column[split_at].0 == column[split_at - 1].0 {
                    continue;
                }
                let left_n = split_at;
                let right_n = total - split_at;
                if left_n < self.min_samples_leaf || right_n < self.min_samples_leaf {
                    continue;
                }
                let threshold = column[split_at - 1].0 / 2.0 + column[split_at].0 / 2.0;
                let right_pos = pos - left_pos;
                let weighted = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(right_pos, right_n))
                    / total as f64;
                let gain = parent - weighted;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitCandidate { feature, threshold, gain });
                }
            }
        }
        best
    }
}

/// Train a forest on integer-valued feature rows and 0/1 labels.
pub fn train(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: Vec<String>,
    params: &ForestParams,
) -> Result<ForestModel, LearnError> {
    train_threaded(x, y, feature_names, params, 1)
}

/// Like [`train`], growing trees on up to `threads` worker threads. Output
/// is identical to the serial run.
pub fn train_threaded(
    x: &[Vec<f64>],
    y: &[u8],
    feature_names: Vec<String>,
    params: &ForestParams,
    threads: usize,
) -> Result<ForestModel, LearnError> {
    if x.is_empty() || x[0].is_empty() {
        return Err(LearnError::EmptyInput);
    }
    let n = x.len();
    let n_features = x[0].len();
    if y.len() != n {
        return Err(LearnError::BadParams(format!("{n} rows but {} labels", y.len())));
    }
    if feature_names.len() != n_features {
        return Err(LearnError::BadParams(format!(
            "{n_features} columns but {} feature names",
            feature_names.len()
        )));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == n {
        return Err(LearnError::SingleClass);
    }
    if params.n_trees == 0 {
        return Err(LearnError::BadParams("n_trees must be >= 1".into()));
    }
    let max_features = params.max_features.resolve(n_features);
    if max_features == 0 || max_features > n_features {
        return Err(LearnError::BadParams(format!(
            "max_features {max_features} outside 1..={n_features}"
        )));
    }

    let grow = |tree_idx: usize| -> Node {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(params.seed, "tree", tree_idx as u64));
        let mut indices: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut builder = TreeBuilder {
            x,
            y,
            max_features,
            max_depth: params.max_depth,
            min_samples_split: params.min_samples_split.max(2),
            min_samples_leaf: params.min_samples_leaf.max(1),
            n_features,
            rng,
            feature_pool: (0..n_features).collect(),
        };
        builder.build(&mut indices, 0)
    };

    let trees: Vec<Node> = if threads <= 1 || params.n_trees == 1 {
        (0..params.n_trees).map(grow).collect()
    } else {
        // per-tree seeds make parallel and serial runs identical
        let chunk = params.n_trees.div_ceil(threads);
        let all_indices: Vec<usize> = (0..params.n_trees).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = all_indices
                .chunks(chunk)
                .map(|idxs| scope.spawn(|| idxs.iter().map(|&i| grow(i)).collect::<Vec<Node>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("tree worker")).collect()
        })
    };

    Ok(ForestModel { version: MODEL_VERSION, params: params.clone(), feature_names, trees })
}
