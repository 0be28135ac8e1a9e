use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of input features.
pub const NUM_FEATURES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbrtParams {
    fn default() -> Self {
        GbrtParams {
            n_trees: 200,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
        }
    }
}

/// Thresholds travel as decimal strings: the shortest representation that
/// parses back to the same `f64`.
mod decimal {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:?}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let text = String::deserialize(d)?;
        text.parse::<f64>().map_err(D::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        #[serde(with = "decimal")]
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64; NUM_FEATURES]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Every split threshold in the tree, per feature.
    pub fn thresholds(&self, out: &mut Vec<(usize, f64)>) {
        if let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = self
        {
            out.push((*feature, *threshold));
            left.thresholds(out);
            right.thresholds(out);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTree {
    pub weight: f64,
    pub root: TreeNode,
}

/// `h(x) = initial + Σ weight · tree(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub initial: f64,
    pub trees: Vec<WeightedTree>,
}

impl TreeEnsemble {
    pub fn constant(value: f64) -> Self {
        TreeEnsemble {
            initial: value,
            trees: Vec::new(),
        }
    }

    pub fn predict(&self, x: &[f64; NUM_FEATURES]) -> f64 {
        self.initial + self.trees.iter().map(|t| t.weight * t.root.predict(x)).sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Per-round mean squared errors recorded during training.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub train_mse: Vec<f64>,
    pub holdout_mse: Vec<f64>,
}

impl TrainingLog {
    /// `round,train_mse,holdout_mse`; the holdout column is empty when no
    /// holdout set was given.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("round,train_mse,holdout_mse\n");
        for (k, t) in self.train_mse.iter().enumerate() {
            let h = self.holdout_mse.get(k).map(|v| format!("{v:?}")).unwrap_or_default();
            let _ = writeln!(s, "{},{t:?},{h}", k + 1);
        }
        s
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len().max(1) as f64
}

struct Builder<'a> {
    x: &'a [[f64; NUM_FEATURES]],
    /// Sample indices sorted by each feature (ties by index).
    order: [Vec<usize>; NUM_FEATURES],
    params: GbrtParams,
    member: Vec<bool>,
}

impl Builder<'_> {
    fn build(&mut self, idx: &[usize], r: &[f64], depth: usize) -> TreeNode {
        let n = idx.len();
        let sum: f64 = idx.iter().map(|&i| r[i]).sum();
        let mean = sum / n as f64;
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) {
            return TreeNode::Leaf { value: mean };
        }
        for &i in idx {
            self.member[i] = true;
        }
        // Best split by squared-error reduction; ties keep the first found,
        // i.e. the lowest feature and then the lowest threshold.
        let parent = sum * sum / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = Vec::with_capacity(n);
        for f in 0..NUM_FEATURES {
            sorted.clear();
            sorted.extend(self.order[f].iter().copied().filter(|&i| self.member[i]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += r[sorted[k]];
                let nl = k + 1;
                let (a, b) = (self.x[sorted[k]][f], self.x[sorted[k + 1]][f]);
                if nl < self.params.min_leaf || n - nl < self.params.min_leaf || a == b {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64 - parent;
                if gain > 1e-12 * (1.0 + parent.abs()) && best.is_none_or(|(g, _, _)| gain > g) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((gain, f, t));
                }
            }
        }
        for &i in idx {
            self.member[i] = false;
        }
        let Some((_, feature, threshold)) = best else {
            return TreeNode::Leaf { value: mean };
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(&li, r, depth + 1)),
            right: Box::new(self.build(&ri, r, depth + 1)),
        }
    }
}

/// Least-squares gradient boosting: start from the target mean and fit
/// each round's depth-limited tree to the current residuals with exact
/// leaf means.
pub fn train_gbrt(
    x: &[[f64; NUM_FEATURES]],
    y: &[f64],
    params: &GbrtParams,
    holdout: Option<(&[[f64; NUM_FEATURES]], &[f64])>,
) -> Result<(TreeEnsemble, TrainingLog)> {
    if x.is_empty() || x.len() != y.len() || x.len() < params.min_leaf {
        return Err(Error::NoSamples);
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Invariant("non-finite training data".into()));
    }
    let n = x.len();
    let initial = y.iter().sum::<f64>() / n as f64;
    let order = std::array::from_fn(|f| {
        let mut o: Vec<usize> = (0..n).collect();
        o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        o
    });
    let mut builder = Builder {
        x,
        order,
        params: *params,
        member: vec![false; n],
    };
    let mut pred = vec![initial; n];
    let mut hold_pred: Vec<f64> = holdout.map(|(hx, _)| vec![initial; hx.len()]).unwrap_or_default();
    let mut ensemble = TreeEnsemble::constant(initial);
    let mut log = TrainingLog::default();
    let all: Vec<usize> = (0..n).collect();
    let mut residual = vec![0.0; n];
    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let root = builder.build(&all, &residual, 0);
        for i in 0..n {
            pred[i] += params.learning_rate * root.predict(&x[i]);
        }
        log.train_mse.push(mse(&pred, y));
        if let Some((hx, hy)) = holdout {
            for (p, xi) in hold_pred.iter_mut().zip(hx) {
                *p += params.learning_rate * root.predict(xi);
            }
            log.holdout_mse.push(mse(&hold_pred, hy));
        }
        ensemble.trees.push(WeightedTree {
            weight: params.learning_rate,
            root,
        });
    }
    Ok((ensemble, log))
}
