//! Lloyd's k-means under a weighted Euclidean metric with k-means++ seeding.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use super::metric::{weighted_sq_distance, WeightVector};
use super::validity::db_from_parts;
use crate::error::{Error, Result};
use crate::{exec, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid coordinate shift.
    pub tol: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_iter: 300,
            tol: 1e-4,
            n_init: 10,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if self.n_init == 0 {
            return Err(Error::config("n_init must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config("tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<f64>,
    #[serde(skip)]
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// `None` when k = 1.
    pub db_score: Option<f64>,
    pub n_iter: usize,
}

impl ClusteringModel {
    pub fn centroid(&self, j: usize) -> &[f64] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// One restart: the fitted model plus the inertia after every Lloyd update.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub model: ClusteringModel,
    pub inertia_trace: Vec<f64>,
}

/// Fits k-means with `n_init` restarts and keeps the lowest inertia.
/// Restart `r` is seeded from `(cfg.seed, r)`; ties go to the lower restart.
pub fn kmeans_fit(x: &FeatureMatrix, w: &WeightVector, cfg: &KMeansConfig) -> Result<ClusteringModel> {
    check_inputs(x, w, cfg)?;
    let runs = exec::map_indexed(cfg.n_init, |r| {
        lloyd(x, w.as_slice(), cfg, seed::derive(cfg.seed, &[r as u64]))
    });
    let mut best: Option<ClusteringModel> = None;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.model.inertia < b.inertia) {
            best = Some(run.model);
        }
    }
    let mut model = best.expect("n_init >= 1");
    if model.k >= 2 {
        model.db_score = Some(db_from_parts(
            x,
            &model.assignments,
            &model.centroids,
            model.k,
            w.as_slice(),
        ));
    }
    Ok(model)
}

/// A single seeded restart, exposing the per-iteration inertia.
pub fn kmeans_single(
    x: &FeatureMatrix,
    w: &WeightVector,
    cfg: &KMeansConfig,
    run_seed: u64,
) -> Result<LloydRun> {
    check_inputs(x, w, cfg)?;
    Ok(lloyd(x, w.as_slice(), cfg, run_seed))
}

fn check_inputs(x: &FeatureMatrix, w: &WeightVector, cfg: &KMeansConfig) -> Result<()> {
    cfg.validate()?;
    if w.dim() != x.dim() {
        return Err(Error::contract(format!(
            "weights have dimension {}, data has {}",
            w.dim(),
            x.dim()
        )));
    }
    if x.n_rows() < cfg.k {
        return Err(Error::contract(format!(
            "{} rows cannot form {} clusters",
            x.n_rows(),
            cfg.k
        )));
    }
    Ok(())
}

fn lloyd(x: &FeatureMatrix, w: &[f64], cfg: &KMeansConfig, run_seed: u64) -> LloydRun {
    let (k, d) = (cfg.k, x.dim());
    let mut rng = seed::rng(run_seed);
    let mut centroids = plus_plus(x, w, k, &mut rng);
    let mut labels = vec![0usize; x.n_rows()];
    let mut dist = vec![0.0f64; x.n_rows()];
    let mut trace = Vec::new();
    let mut n_iter = 0;

    for _ in 0..cfg.max_iter {
        n_iter += 1;
        assign(x, w, &centroids, k, &mut labels, &mut dist);
        repair_empty(x, &mut centroids, k, &mut labels, &mut dist);
        let updated = means(x, &labels, k, d);
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        centroids = updated;
        trace.push(total_inertia(x, w, &centroids, &labels));
        if shift < cfg.tol {
            break;
        }
    }

    assign(x, w, &centroids, k, &mut labels, &mut dist);
    repair_empty(x, &mut centroids, k, &mut labels, &mut dist);
    centroids = means(x, &labels, k, d);
    let inertia = total_inertia(x, w, &centroids, &labels);

    LloydRun {
        model: ClusteringModel {
            k,
            dim: d,
            centroids,
            assignments: labels,
            inertia,
            db_score: None,
            n_iter,
        },
        inertia_trace: trace,
    }
}

/// k-means++: first centre uniform, each next one drawn with probability
/// proportional to the squared distance from the nearest chosen centre.
fn plus_plus(x: &FeatureMatrix, w: &[f64], k: usize, rng: &mut seed::Rng) -> Vec<f64> {
    let n = x.n_rows();
    let mut chosen = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen.push(first);
    let mut dist: Vec<f64> = x
        .rows()
        .map(|r| weighted_sq_distance(r, x.row(first), w))
        .collect();

    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &di) in dist.iter().enumerate() {
                if di <= 0.0 {
                    continue;
                }
                acc += di;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // Every point coincides with a centre; fall back to an unused row.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, r) in x.rows().enumerate() {
            let dn = weighted_sq_distance(r, x.row(next), w);
            if dn < dist[i] {
                dist[i] = dn;
            }
        }
    }

    let mut centroids = Vec::with_capacity(k * x.dim());
    for &c in &chosen {
        centroids.extend_from_slice(x.row(c));
    }
    centroids
}

fn assign(x: &FeatureMatrix, w: &[f64], centroids: &[f64], k: usize, labels: &mut [usize], dist: &mut [f64]) {
    let d = x.dim();
    for (i, row) in x.rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            let dj = weighted_sq_distance(row, &centroids[j * d..(j + 1) * d], w);
            if dj < best_d {
                best_d = dj;
                best = j;
            }
        }
        labels[i] = best;
        dist[i] = best_d;
    }
}

/// Moves the row farthest from its own centroid into each empty cluster.
fn repair_empty(x: &FeatureMatrix, centroids: &mut [f64], k: usize, labels: &mut [usize], dist: &mut [f64]) {
    let d = x.dim();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, &di) in dist.iter().enumerate() {
            if sizes[labels[i]] > 1 && di > far_d {
                far_d = di;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        sizes[labels[i]] -= 1;
        sizes[j] = 1;
        labels[i] = j;
        dist[i] = 0.0;
        centroids[j * d..(j + 1) * d].copy_from_slice(x.row(i));
    }
}

fn means(x: &FeatureMatrix, labels: &[usize], k: usize, d: usize) -> Vec<f64> {
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];
    for (row, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for j in 0..k {
        let c = counts[j].max(1) as f64;
        for s in &mut sums[j * d..(j + 1) * d] {
            *s /= c;
        }
    }
    sums
}

fn total_inertia(x: &FeatureMatrix, w: &[f64], centroids: &[f64], labels: &[usize]) -> f64 {
    let d = x.dim();
    x.rows()
        .zip(labels)
        .map(|(row, &l)| weighted_sq_distance(row, &centroids[l * d..(l + 1) * d], w))
        .sum()
}
