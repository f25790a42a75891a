//! Density-based clustering with a k-distance knee heuristic for `eps`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use super::metric::{weighted_sq_distance, WeightVector};
use crate::error::{Error, Result};
use crate::exec;

/// Label of points that belong to no cluster.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DbscanConfig {
    /// Neighborhood radius; `None` picks the knee of the k-distance curve.
    pub eps: Option<f64>,
    /// Core-point threshold, counting the point itself; `None` means `max(5, 2d)`.
    pub min_pts: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbscanResult {
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanConfig {
    pub fn resolved_min_pts(&self, d: usize) -> usize {
        self.min_pts.unwrap_or_else(|| (2 * d).max(5))
    }
}

/// Classical DBSCAN. Clusters are numbered in order of their lowest-index
/// core point; a border point reachable from several clusters joins the
/// lowest-numbered one.
pub fn dbscan_fit(x: &FeatureMatrix, w: &WeightVector, cfg: &DbscanConfig) -> Result<DbscanResult> {
    if w.dim() != x.dim() {
        return Err(Error::contract("weights and data differ in dimension"));
    }
    let min_pts = cfg.resolved_min_pts(x.dim());
    if min_pts == 0 {
        return Err(Error::config("min_pts must be at least 1"));
    }
    if x.n_rows() < min_pts {
        return Err(Error::contract(format!(
            "{} rows is fewer than min_pts = {min_pts}",
            x.n_rows()
        )));
    }
    let eps = match cfg.eps {
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => return Err(Error::config(format!("eps must be positive, got {e}"))),
        None => knee_eps(x, w, min_pts),
    };
    let eps2 = eps * eps;
    let wv = w.as_slice();
    let n = x.n_rows();

    let neighbors = |i: usize| -> Vec<usize> {
        let p = x.row(i);
        (0..n)
            .filter(|&j| weighted_sq_distance(p, x.row(j), wv) <= eps2)
            .collect()
    };
    let core: Vec<bool> = exec::map_indexed(n, |i| {
        let p = x.row(i);
        x.rows()
            .filter(|q| weighted_sq_distance(p, q, wv) <= eps2)
            .take(min_pts)
            .count()
            >= min_pts
    });

    let mut labels = vec![NOISE; n];
    let mut n_clusters = 0usize;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        let id = n_clusters as i64;
        n_clusters += 1;
        labels[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbors(p) {
                if labels[q] == NOISE {
                    labels[q] = id;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    let n_noise = labels.iter().filter(|&&l| l == NOISE).count();
    Ok(DbscanResult {
        labels,
        n_clusters,
        n_noise,
        eps,
        min_pts,
    })
}

/// Picks `eps` at the point of maximum second difference of the ascending
/// curve of distances to the `(min_pts − 1)`-th nearest other point.
pub fn knee_eps(x: &FeatureMatrix, w: &WeightVector, min_pts: usize) -> f64 {
    let n = x.n_rows();
    let kth = min_pts.saturating_sub(1).clamp(1, n.saturating_sub(1).max(1));
    let wv = w.as_slice();
    let mut curve: Vec<f64> = exec::map_indexed(n, |i| {
        let p = x.row(i);
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| weighted_sq_distance(p, x.row(j), wv))
            .collect();
        if d.is_empty() {
            return 0.0;
        }
        let idx = (kth - 1).min(d.len() - 1);
        let (_, v, _) = d.select_nth_unstable_by(idx, f64::total_cmp);
        v.sqrt()
    });
    curve.sort_by(f64::total_cmp);

    let mut eps = *curve.last().unwrap_or(&0.0);
    if curve.len() >= 3 {
        let mut best = f64::NEG_INFINITY;
        for i in 1..curve.len() - 1 {
            let second = curve[i + 1] - 2.0 * curve[i] + curve[i - 1];
            if second > best {
                best = second;
                eps = curve[i];
            }
        }
    }
    if eps <= 0.0 {
        eps = curve.iter().copied().find(|&v| v > 0.0).unwrap_or(f64::EPSILON);
    }
    eps
}
