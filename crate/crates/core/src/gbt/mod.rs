//! Gradient-boosted regression trees with squared-error loss.
//!
//! Splits are exact greedy over sorted feature values with midpoint
//! thresholds. Nothing is sampled, so equal inputs always give byte-identical
//! models.

mod tree;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use tree::TreeBuilder;
pub use tree::{Node, Tree};

/// Version string written to and required from model files.
pub const MODEL_FORMAT_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum GbtError {
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported model version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },
    #[error("invalid model: {0}")]
    Schema(String),
}

/// Row-major feature matrix with one regression target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMatrix {
    rows: usize,
    feature_count: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainMatrix {
    pub fn new(feature_count: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<Self, GbtError> {
        if feature_count == 0 {
            return Err(GbtError::InvalidData("feature_count must be at least 1".into()));
        }
        if targets.is_empty() {
            return Err(GbtError::InvalidData("at least one row is required".into()));
        }
        if features.len() != targets.len() * feature_count {
            return Err(GbtError::InvalidData(format!(
                "{} feature values for {} rows of {} features",
                features.len(),
                targets.len(),
                feature_count
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(GbtError::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                pos / feature_count,
                pos % feature_count
            )));
        }
        if let Some(pos) = targets.iter().position(|v| !v.is_finite()) {
            return Err(GbtError::InvalidData(format!("non-finite target at row {pos}")));
        }
        Ok(Self { rows: targets.len(), feature_count, features, targets })
    }

    /// Builds a matrix from per-row feature vectors.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], targets: Vec<f64>) -> Result<Self, GbtError> {
        let feature_count = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != feature_count) {
            return Err(GbtError::InvalidData("rows have differing lengths".into()));
        }
        let features = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(feature_count, features, targets)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_count..(i + 1) * self.feature_count]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub max_depth: usize,
    pub n_trees: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self { max_depth: 10, n_trees: 400, learning_rate: 0.1, min_samples_leaf: 2 }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<(), GbtError> {
        if self.max_depth == 0 {
            return Err(GbtError::InvalidParams("max_depth must be at least 1".into()));
        }
        if self.n_trees == 0 {
            return Err(GbtError::InvalidParams("n_trees must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GbtError::InvalidParams(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(GbtError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained boosted ensemble with one scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub version: String,
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_count: usize,
    pub max_depth: usize,
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    /// A model with no trees that always predicts `value`.
    pub fn constant(value: f64, feature_count: usize) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION.into(),
            base_score: value,
            learning_rate: 1.0,
            feature_count,
            max_depth: 0,
            trees: Vec::new(),
        }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// `base_score + learning_rate * sum(leaf values)`.
    pub fn predict(&self, x: &[f64]) -> Result<f64, GbtError> {
        if x.len() != self.feature_count {
            return Err(GbtError::DimensionMismatch { expected: self.feature_count, got: x.len() });
        }
        Ok(self.eval(x))
    }

    /// Prediction without the length check; `x` must hold `feature_count` values.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.feature_count);
        let leaves: f64 = self.trees.iter().map(|t| t.eval(x)).sum();
        self.base_score + self.learning_rate * leaves
    }

    /// The same model restricted to its first `k` trees.
    pub fn truncated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.trees.truncate(k);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GbtError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| GbtError::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        match value.get("version") {
            Some(serde_json::Value::String(v)) if v == MODEL_FORMAT_VERSION => {}
            Some(other) => {
                let found = other.as_str().map(str::to_string).unwrap_or_else(|| other.to_string());
                return Err(GbtError::Version { found, expected: MODEL_FORMAT_VERSION.into() });
            }
            None => return Err(GbtError::Schema("missing version field".into())),
        }
        let model: TreeEnsemble =
            serde_json::from_value(value).map_err(|e| GbtError::Schema(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), GbtError> {
        fs::write(path, self.to_json()).map_err(|source| GbtError::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self, GbtError> {
        let text = fs::read_to_string(path).map_err(|source| GbtError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// Checks node indices, feature indices and depth.
    pub fn validate(&self) -> Result<(), GbtError> {
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(GbtError::Schema("non-finite base_score or learning_rate".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(GbtError::Schema(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                match *node {
                    Node::Split { feat, thr, left, right } => {
                        if feat >= self.feature_count {
                            return Err(GbtError::Schema(format!(
                                "tree {t} node {i}: feature {feat} >= feature_count {}",
                                self.feature_count
                            )));
                        }
                        let n = tree.nodes.len();
                        if left <= i || right <= i || left >= n || right >= n || thr.is_nan() {
                            return Err(GbtError::Schema(format!("tree {t} node {i}: bad split")));
                        }
                    }
                    Node::Leaf { leaf } if !leaf.is_finite() => {
                        return Err(GbtError::Schema(format!("tree {t} node {i}: non-finite leaf")));
                    }
                    Node::Leaf { .. } => {}
                }
            }
            if tree.depth() > self.max_depth {
                return Err(GbtError::Schema(format!(
                    "tree {t} depth {} exceeds max_depth {}",
                    tree.depth(),
                    self.max_depth
                )));
            }
        }
        Ok(())
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Fits a boosted ensemble by repeatedly growing a tree on the current residuals.
pub fn fit(data: &TrainMatrix, params: &GbtParams) -> Result<TreeEnsemble, GbtError> {
    params.validate()?;
    let n = data.rows();
    let targets = data.targets();
    let base_score = targets.iter().sum::<f64>() / n as f64;
    let mut model = TreeEnsemble {
        version: MODEL_FORMAT_VERSION.into(),
        base_score,
        learning_rate: params.learning_rate,
        feature_count: data.feature_count(),
        max_depth: params.max_depth,
        trees: Vec::with_capacity(params.n_trees),
    };
    if targets.iter().all(|&t| t == targets[0]) {
        model.base_score = targets[0];
        return Ok(model);
    }

    let sorted: Vec<Vec<u32>> = (0..data.feature_count())
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| data.row(a as usize)[f].total_cmp(&data.row(b as usize)[f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    // Running sum of leaf values per row, so training predictions follow the
    // same arithmetic as `eval`.
    let mut leaf_sums = vec![0.0; n];
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = targets[i] - (base_score + params.learning_rate * leaf_sums[i]);
        }
        let tree = TreeBuilder {
            features: &data.features,
            feature_count: data.feature_count(),
            residual: &residual,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
        }
        .build(sorted.clone());
        if matches!(tree.nodes.as_slice(), [Node::Leaf { leaf }] if *leaf == 0.0) {
            break;
        }
        for (i, sum) in leaf_sums.iter_mut().enumerate() {
            *sum += tree.eval(data.row(i));
        }
        model.trees.push(tree);
    }
    Ok(model)
}
