//! Gradient-boosted regression trees for binary log-loss.
//!
//! Each round fits a depth-limited tree to the gradient and hessian of the
//! log-loss with exact greedy splits (every distinct value of every feature
//! is a candidate), then sets each leaf to its Newton step. A leaf step that
//! would raise that leaf's loss is halved until it does not, so the training
//! loss never increases from one round to the next.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Reserved for subsampling; training without it is fully deterministic.
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Config("gbdt.n_trees must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "gbdt.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::Config(
                "gbdt.min_samples_leaf must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// A regression tree node. Samples with `x[feature_index] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf_value: f64,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf_value } => return *leaf_value,
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature_index] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A trained ensemble. The raw score is
/// `base_score + learning_rate * Σ tree(x)` in log-odds of label 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-loss of label `y` at raw score `z`, stable for large `|z|`.
fn log_loss(y: f64, z: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::Arity {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    /// P(label = 1 | x).
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.predict_raw(x).map(sigmoid)
    }
}

/// Row-major design matrix with 0/1 targets.
pub struct TrainingSet<'a> {
    pub rows: &'a [Vec<f64>],
    pub targets: &'a [f64],
    pub feature_names: Vec<String>,
}

/// Trains a model; see [`train_with_log`].
pub fn train(data: &TrainingSet<'_>, config: &GbdtConfig) -> Result<GbdtModel> {
    train_with_log(data, config).map(|(m, _)| m)
}

/// Trains a model and returns the mean training log-loss after each round.
pub fn train_with_log(
    data: &TrainingSet<'_>,
    config: &GbdtConfig,
) -> Result<(GbdtModel, Vec<f64>)> {
    config.validate()?;
    let n = data.rows.len();
    if n != data.targets.len() {
        return Err(Error::Misaligned(format!(
            "{n} rows but {} targets",
            data.targets.len()
        )));
    }
    let d = data.feature_names.len();
    if let Some(bad) = data.rows.iter().find(|r| r.len() != d) {
        return Err(Error::Arity {
            expected: d,
            found: bad.len(),
        });
    }
    let positives = data.targets.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateTraining(format!(
            "all {n} training samples have label {}",
            if positives == 0 { 0 } else { 1 }
        )));
    }

    let prior = positives as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut raw = vec![base_score; n];

    let sorted: Vec<Vec<usize>> = (0..d)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| data.rows[a][f].total_cmp(&data.rows[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut log = Vec::with_capacity(config.n_trees);
    for _ in 0..config.n_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - data.targets[i];
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let grower = Grower {
            rows: data.rows,
            targets: data.targets,
            raw: &raw,
            grad: &grad,
            hess: &hess,
            sorted: &sorted,
            config,
        };
        let (tree, leaf_of) = grower.grow();
        for i in 0..n {
            raw[i] += config.learning_rate * leaf_of[i];
        }
        trees.push(tree);
        let loss = (0..n)
            .map(|i| log_loss(data.targets[i], raw[i]))
            .sum::<f64>()
            / n as f64;
        log.push(loss);
    }

    Ok((
        GbdtModel {
            base_score,
            learning_rate: config.learning_rate,
            feature_names: data.feature_names.clone(),
            trees,
        },
        log,
    ))
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    raw: &'a [f64],
    grad: &'a [f64],
    hess: &'a [f64],
    sorted: &'a [Vec<usize>],
    config: &'a GbdtConfig,
}

struct BuildNode {
    g: f64,
    h: f64,
    count: usize,
    split: Option<(usize, f64, usize, usize)>,
    value: f64,
}

impl BuildNode {
    fn empty() -> Self {
        Self {
            g: 0.0,
            h: 0.0,
            count: 0,
            split: None,
            value: 0.0,
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Running left-side statistics of one node while scanning a feature.
#[derive(Clone, Copy, Default)]
struct Scan {
    g: f64,
    h: f64,
    count: usize,
    last: f64,
}

const MIN_GAIN: f64 = 1e-12;

impl Grower<'_> {
    /// Grows one tree level by level. Returns it with each sample's leaf value.
    fn grow(&self) -> (TreeNode, Vec<f64>) {
        let n = self.rows.len();
        let min_leaf = self.config.min_samples_leaf;
        let mut node_of = vec![0usize; n];
        let mut nodes = vec![BuildNode {
            g: self.grad.iter().sum(),
            h: self.hess.iter().sum(),
            count: n,
            split: None,
            value: 0.0,
        }];
        let mut frontier = vec![0usize];

        for _ in 0..self.config.max_depth {
            let open: Vec<usize> = frontier
                .iter()
                .copied()
                .filter(|&k| nodes[k].count >= 2 * min_leaf)
                .collect();
            if open.is_empty() {
                break;
            }
            let best = self.best_splits(&nodes, &node_of, &open);
            let mut next = Vec::new();
            for (k, cand) in open.iter().copied().zip(best) {
                let Some(c) = cand else { continue };
                let left = nodes.len();
                nodes.extend([BuildNode::empty(), BuildNode::empty()]);
                nodes[k].split = Some((c.feature, c.threshold, left, left + 1));
                next.extend([left, left + 1]);
            }
            if next.is_empty() {
                break;
            }
            for i in 0..n {
                if let Some((f, thr, l, r)) = nodes[node_of[i]].split {
                    let child = if self.rows[i][f] <= thr { l } else { r };
                    node_of[i] = child;
                    let node = &mut nodes[child];
                    node.g += self.grad[i];
                    node.h += self.hess[i];
                    node.count += 1;
                }
            }
            frontier = next;
        }

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        for (i, &k) in node_of.iter().enumerate() {
            members[k].push(i);
        }
        for (k, node) in nodes.iter_mut().enumerate() {
            if node.split.is_none() {
                node.value = self.leaf_value(node, &members[k]);
            }
        }
        let leaf_of = node_of.iter().map(|&k| nodes[k].value).collect();
        (assemble(&nodes, 0), leaf_of)
    }

    /// Best split of every open node, scanning each presorted feature once.
    fn best_splits(
        &self,
        nodes: &[BuildNode],
        node_of: &[usize],
        open: &[usize],
    ) -> Vec<Option<Candidate>> {
        let min_leaf = self.config.min_samples_leaf;
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &k) in open.iter().enumerate() {
            slot[k] = s;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        for (f, order) in self.sorted.iter().enumerate() {
            let mut scan = vec![Scan::default(); open.len()];
            for &i in order {
                let s = slot[node_of[i]];
                if s == usize::MAX {
                    continue;
                }
                let node = &nodes[open[s]];
                let x = self.rows[i][f];
                let st = &mut scan[s];
                if st.count >= min_leaf && node.count - st.count >= min_leaf && x > st.last {
                    let (gr, hr) = (node.g - st.g, node.h - st.h);
                    let gain = st.g * st.g / st.h + gr * gr / hr - node.g * node.g / node.h;
                    if gain > MIN_GAIN && best[s].is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (st.last + x);
                        if threshold >= x || !threshold.is_finite() {
                            threshold = st.last;
                        }
                        best[s] = Some(Candidate {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
                st.g += self.grad[i];
                st.h += self.hess[i];
                st.count += 1;
                st.last = x;
            }
        }
        best
    }

    /// Newton step for a leaf, halved until it does not raise the leaf's loss.
    fn leaf_value(&self, node: &BuildNode, members: &[usize]) -> f64 {
        if members.is_empty() || node.h <= 0.0 {
            return 0.0;
        }
        let lr = self.config.learning_rate;
        let loss_at = |step: f64| -> f64 {
            members
                .iter()
                .map(|&i| log_loss(self.targets[i], self.raw[i] + lr * step))
                .sum()
        };
        let current = loss_at(0.0);
        let mut value = -node.g / node.h;
        for _ in 0..40 {
            if !value.is_finite() {
                break;
            }
            if loss_at(value) <= current {
                return value;
            }
            value *= 0.5;
        }
        0.0
    }
}

fn assemble(nodes: &[BuildNode], k: usize) -> TreeNode {
    match nodes[k].split {
        Some((feature_index, threshold, l, r)) => TreeNode::Split {
            feature_index,
            threshold,
            left: Box::new(assemble(nodes, l)),
            right: Box::new(assemble(nodes, r)),
        },
        None => TreeNode::Leaf {
            leaf_value: nodes[k].value,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn zero_trees_predict_half() {
        let m = GbdtModel {
            base_score: 0.0,
            learning_rate: 0.1,
            feature_names: names(2),
            trees: vec![],
        };
        assert_eq!(m.predict_proba(&[1.0, 2.0]).unwrap(), 0.5);
        assert!(matches!(
            m.predict_proba(&[1.0]),
            Err(Error::Arity {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn single_class_is_degenerate() {
        let rows = vec![vec![1.0]; 10];
        let targets = vec![1.0; 10];
        let set = TrainingSet {
            rows: &rows,
            targets: &targets,
            feature_names: names(1),
        };
        let err = train(&set, &GbdtConfig::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate training set"));
    }

    #[test]
    fn constant_feature_predicts_prior() {
        let rows = vec![vec![3.0, -1.0]; 40];
        let targets: Vec<f64> = (0..40)
            .map(|i| if i % 4 == 0 { 1.0 } else { 0.0 })
            .collect();
        let set = TrainingSet {
            rows: &rows,
            targets: &targets,
            feature_names: names(2),
        };
        let m = train(&set, &GbdtConfig::default()).unwrap();
        assert_eq!(m.trees.len(), 100);
        for x in [[3.0, -1.0], [0.0, 0.0], [1e9, -1e9]] {
            assert!((m.predict_proba(&x).unwrap() - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn splits_respect_depth_and_min_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let targets: Vec<f64> = rows
            .iter()
            .map(|r| {
                if r[0] * r[1] + 0.3 * r[2] > 0.4 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let config = GbdtConfig {
            n_trees: 20,
            max_depth: 2,
            min_samples_leaf: 20,
            ..Default::default()
        };
        let set = TrainingSet {
            rows: &rows,
            targets: &targets,
            feature_names: names(3),
        };
        let m = train(&set, &config).unwrap();
        for t in &m.trees {
            assert!(t.depth() <= 2);
        }
        // Count samples per leaf of the first tree.
        fn leaf_path(t: &TreeNode, x: &[f64], path: &mut String) {
            if let TreeNode::Split {
                feature_index,
                threshold,
                left,
                right,
            } = t
            {
                if x[*feature_index] <= *threshold {
                    path.push('L');
                    leaf_path(left, x, path)
                } else {
                    path.push('R');
                    leaf_path(right, x, path)
                }
            }
        }
        let mut counts = std::collections::HashMap::new();
        for r in &rows {
            let mut p = String::new();
            leaf_path(&m.trees[0], r, &mut p);
            *counts.entry(p).or_insert(0) += 1;
        }
        assert!(counts.len() > 1);
        assert!(counts.values().all(|&c| c >= 20), "{counts:?}");
    }

    #[test]
    fn loss_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random(), rng.random()]).collect();
        // Noisy labels so that the fit cannot become perfect.
        let targets: Vec<f64> = rows
            .iter()
            .map(|r| {
                if r[0] + 0.5 * rng.random::<f64>() > 0.7 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let set = TrainingSet {
            rows: &rows,
            targets: &targets,
            feature_names: names(2),
        };
        let config = GbdtConfig {
            learning_rate: 1.0,
            min_samples_leaf: 1,
            max_depth: 4,
            ..Default::default()
        };
        let (_, log) = train_with_log(&set, &config).unwrap();
        for w in log.windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn serialization_shape() {
        let tree = TreeNode::Split {
            feature_index: 1,
            threshold: 0.5,
            left: Box::new(TreeNode::Leaf { leaf_value: -1.0 }),
            right: Box::new(TreeNode::Leaf { leaf_value: 2.0 }),
        };
        let m = GbdtModel {
            base_score: 0.25,
            learning_rate: 0.1,
            feature_names: names(2),
            trees: vec![tree],
        };
        let json = serde_json::to_value(&m).unwrap();
        assert_eq!(json["trees"][0]["feature_index"], 1);
        assert_eq!(json["trees"][0]["left"]["leaf_value"], -1.0);
        let back: GbdtModel = serde_json::from_value(json).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.predict_raw(&[0.0, 0.7]).unwrap(), 0.25 + 0.1 * 2.0);
    }
}
