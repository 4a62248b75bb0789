use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A node of a binary regression tree. Index 0 is the root; children always
/// have larger indices than their parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { feat: usize, thr: f64, left: usize, right: usize },
    Leaf { leaf: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Leaf value reached by `x`. Goes left when `x[feat] < thr`.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Split { feat, thr, left, right } => {
                    idx = if x[feat] < thr { left } else { right };
                }
                Node::Leaf { leaf } => return leaf,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn is_leaf_only(&self) -> bool {
        matches!(self.nodes.as_slice(), [Node::Leaf { .. }])
    }
}

/// Rows below which the per-feature split scan stays on one thread.
const PARALLEL_ROWS: usize = 4096;

/// Relative gain below which a node is not split.
const MIN_RELATIVE_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Grows one tree on `residual` by exact greedy variance reduction.
pub(crate) struct TreeBuilder<'a> {
    pub features: &'a [f64],
    pub feature_count: usize,
    pub residual: &'a [f64],
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl TreeBuilder<'_> {
    #[inline]
    fn value(&self, row: u32, feature: usize) -> f64 {
        self.features[row as usize * self.feature_count + feature]
    }

    /// `sorted[f]` lists the rows of the root ordered by feature `f`.
    pub fn build(&self, sorted: Vec<Vec<u32>>) -> Tree {
        let mut nodes = Vec::new();
        let mut goes_left = vec![false; self.residual.len()];
        self.grow(sorted, 0, &mut nodes, &mut goes_left);
        Tree { nodes }
    }

    fn grow(
        &self,
        sorted: Vec<Vec<u32>>,
        depth: usize,
        nodes: &mut Vec<Node>,
        goes_left: &mut [bool],
    ) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.residual[r as usize]).sum();
        let mean = sum / n as f64;
        let idx = nodes.len();
        nodes.push(Node::Leaf { leaf: mean });

        if depth >= self.max_depth || n < 2 * self.min_samples_leaf {
            return idx;
        }
        let sse: f64 = rows.iter().map(|&r| (self.residual[r as usize] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return idx;
        }
        let best = match self.best_split(&sorted, sum) {
            Some(c) if c.gain > MIN_RELATIVE_GAIN * sse => c,
            _ => return idx,
        };

        for &r in &sorted[best.feature] {
            goes_left[r as usize] = self.value(r, best.feature) < best.threshold;
        }
        let (left, right): (Vec<_>, Vec<_>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition::<Vec<u32>, _>(|&r| goes_left[r as usize]))
            .unzip();

        let left_idx = self.grow(left, depth + 1, nodes, goes_left);
        let right_idx = self.grow(right, depth + 1, nodes, goes_left);
        nodes[idx] =
            Node::Split { feat: best.feature, thr: best.threshold, left: left_idx, right: right_idx };
        idx
    }

    fn best_split(&self, sorted: &[Vec<u32>], sum: f64) -> Option<SplitCandidate> {
        let scan = |f: usize| self.scan_feature(f, &sorted[f], sum);
        let per_feature: Vec<Option<SplitCandidate>> = if sorted[0].len() >= PARALLEL_ROWS {
            (0..self.feature_count).into_par_iter().map(scan).collect()
        } else {
            (0..self.feature_count).map(scan).collect()
        };
        // Strict comparison in feature order keeps the lowest feature on ties.
        per_feature.into_iter().flatten().fold(None, |best, c| match best {
            Some(b) if b.gain >= c.gain => Some(b),
            _ => Some(c),
        })
    }

    /// Best threshold for one feature; ties keep the lowest threshold.
    fn scan_feature(&self, feature: usize, rows: &[u32], sum: f64) -> Option<SplitCandidate> {
        let n = rows.len();
        let total = sum * sum / n as f64;
        let mut best: Option<SplitCandidate> = None;
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += self.residual[rows[i] as usize];
            let n_left = i + 1;
            let n_right = n - n_left;
            if n_right < self.min_samples_leaf {
                break;
            }
            if n_left < self.min_samples_leaf {
                continue;
            }
            let lo = self.value(rows[i], feature);
            let hi = self.value(rows[i + 1], feature);
            if lo == hi {
                continue;
            }
            let right_sum = sum - left_sum;
            let gain = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64 - total;
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitCandidate { feature, threshold: midpoint(lo, hi), gain });
            }
        }
        best
    }
}

/// Threshold between two distinct sorted values such that `lo < t <= hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid <= lo {
        hi
    } else {
        mid
    }
}
