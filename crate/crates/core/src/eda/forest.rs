//! CART random forests, kept just rich enough to produce mean-decrease-in-
//! impurity importances: variance reduction for continuous targets, Gini
//! for categorical ones.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{exec, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `⌈√p⌉`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    /// Artificial problems with fewer labelled rows are skipped.
    pub min_rows: usize,
    /// Subsample each problem to at most this many rows before bagging.
    pub max_rows: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 8,
            min_leaf: 5,
            features_per_split: None,
            seed: 0,
            min_rows: 30,
            max_rows: None,
        }
    }
}

impl ForestConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::config("max_depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::config("min_leaf must be at least 1"));
        }
        Ok(())
    }

    fn mtry(&self, p: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
            .clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone)]
pub enum Target {
    Regression(Vec<f64>),
    Classification { labels: Vec<usize>, n_classes: usize },
}

impl Target {
    fn len(&self) -> usize {
        match self {
            Target::Regression(y) => y.len(),
            Target::Classification { labels, .. } => labels.len(),
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Impurity decrease per feature, weighted by node size.
    pub importance: Vec<f64>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// Normalized MDI importance per feature; all zeros if no tree split.
    pub importance: Vec<f64>,
}

/// Column-major predictors: `features[j][i]` is feature j of row i.
pub fn fit_forest(features: &[Vec<f64>], target: &Target, cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    let n = target.len();
    if n == 0 {
        return Err(Error::contract("forest needs at least one row"));
    }
    if features.iter().any(|f| f.len() != n) {
        return Err(Error::contract("feature columns differ in length from target"));
    }
    let p = features.len();
    let trees = exec::map_indexed(cfg.n_trees, |t| {
        let mut rng = seed::rng_for(cfg.seed, &[t as u64]);
        let bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        grow(features, target, cfg, bag, &mut rng)
    });

    let mut importance = vec![0.0; p];
    let mut used = 0usize;
    for tree in &trees {
        let total: f64 = tree.importance.iter().sum();
        if total > 0.0 {
            used += 1;
            for (acc, v) in importance.iter_mut().zip(&tree.importance) {
                *acc += v / total;
            }
        }
    }
    if used > 0 {
        let total: f64 = importance.iter().sum();
        for v in &mut importance {
            *v /= total;
        }
    }
    Ok(Forest { trees, importance })
}

struct Builder<'a> {
    features: &'a [Vec<f64>],
    target: &'a Target,
    cfg: &'a ForestConfig,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

fn grow(
    features: &[Vec<f64>],
    target: &Target,
    cfg: &ForestConfig,
    bag: Vec<usize>,
    rng: &mut seed::Rng,
) -> Tree {
    let mut b = Builder {
        features,
        target,
        cfg,
        nodes: Vec::new(),
        importance: vec![0.0; features.len()],
    };
    b.build(bag, 0, rng);
    Tree {
        nodes: b.nodes,
        importance: b.importance,
    }
}

/// Running sufficient statistics for one side of a split.
#[derive(Clone)]
enum Stats {
    Reg { n: f64, sum: f64, sq: f64 },
    Cls { n: f64, counts: Vec<f64> },
}

impl Stats {
    fn empty(target: &Target) -> Self {
        match target {
            Target::Regression(_) => Stats::Reg {
                n: 0.0,
                sum: 0.0,
                sq: 0.0,
            },
            Target::Classification { n_classes, .. } => Stats::Cls {
                n: 0.0,
                counts: vec![0.0; *n_classes],
            },
        }
    }

    fn add(&mut self, target: &Target, i: usize, sign: f64) {
        match (self, target) {
            (Stats::Reg { n, sum, sq }, Target::Regression(y)) => {
                *n += sign;
                *sum += sign * y[i];
                *sq += sign * y[i] * y[i];
            }
            (Stats::Cls { n, counts }, Target::Classification { labels, .. }) => {
                *n += sign;
                counts[labels[i]] += sign;
            }
            _ => unreachable!("stats and target kinds agree"),
        }
    }

    /// Node size times impurity: SSE for regression, `n · Gini` for classes.
    fn weighted_impurity(&self) -> f64 {
        match self {
            Stats::Reg { n, sum, sq } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    (sq - sum * sum / n).max(0.0)
                }
            }
            Stats::Cls { n, counts } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    n - counts.iter().map(|c| c * c).sum::<f64>() / n
                }
            }
        }
    }

    fn leaf_value(&self) -> f64 {
        match self {
            Stats::Reg { n, sum, .. } => sum / n.max(1.0),
            Stats::Cls { counts, .. } => {
                let mut best = 0;
                for (k, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = k;
                    }
                }
                best as f64
            }
        }
    }
}

impl Builder<'_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize, rng: &mut seed::Rng) -> usize {
        let mut stats = Stats::empty(self.target);
        for &i in &idx {
            stats.add(self.target, i, 1.0);
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(stats.leaf_value()));

        let parent = stats.weighted_impurity();
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_leaf || parent <= 1e-12 {
            return at;
        }

        let p = self.features.len();
        let mtry = self.cfg.mtry(p);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.clone();
        for feature in sample(rng, p, mtry).into_iter() {
            let col = &self.features[feature];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left = Stats::empty(self.target);
            let mut right = stats.clone();
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                left.add(self.target, i, 1.0);
                right.add(self.target, i, -1.0);
                let n_left = pos + 1;
                if n_left < self.cfg.min_leaf || order.len() - n_left < self.cfg.min_leaf {
                    continue;
                }
                let (here, next) = (col[i], col[order[pos + 1]]);
                if here == next {
                    continue;
                }
                let gain = parent - left.weighted_impurity() - right.weighted_impurity();
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (here + next)));
                }
            }
        }

        let Some((gain, feature, threshold)) = best else {
            return at;
        };
        self.importance[feature] += gain;
        let col = &self.features[feature];
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}
