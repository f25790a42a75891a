//! Number-of-clusters search: a DBSCAN estimate refined by scanning its
//! neighborhood for the lowest Davies-Bouldin index.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan_fit, DbscanConfig};
use super::kmeans::{kmeans_fit, KMeansConfig};
use super::matrix::FeatureMatrix;
use super::metric::WeightVector;
use crate::error::{Error, Result};
use crate::{exec, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KSearch {
    pub dbscan: DbscanConfig,
    /// Half-width of the candidate window around the DBSCAN estimate.
    pub radius: usize,
    /// Upper bound on candidate k.
    pub k_max: Option<usize>,
    /// Run DBSCAN on at most this many rows, drawn without replacement.
    pub dbscan_sample: Option<usize>,
}

impl Default for KSearch {
    fn default() -> Self {
        Self {
            dbscan: DbscanConfig::default(),
            radius: 2,
            k_max: None,
            dbscan_sample: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: usize,
    /// Raw DBSCAN cluster count, noise excluded.
    pub k_dbscan: usize,
    /// `(k, Davies-Bouldin)` for every candidate evaluated.
    pub scores: Vec<(usize, f64)>,
}

/// `[max(2, k₀ − radius), k₀ + radius]` with `k₀ = max(k_dbscan, 2)`.
pub fn candidate_ks(k_dbscan: usize, radius: usize) -> Vec<usize> {
    let center = k_dbscan.max(2);
    let lo = center.saturating_sub(radius).max(2);
    (lo..=center + radius).collect()
}

/// Returns the candidate k with the lowest Davies-Bouldin index under the
/// given weights; ties go to the smaller k.
pub fn select_k(
    x: &FeatureMatrix,
    w: &WeightVector,
    search: &KSearch,
    kmeans: &KMeansConfig,
) -> Result<KSelection> {
    if x.n_rows() < 4 {
        return Err(Error::contract("k selection needs at least 4 rows"));
    }
    let db_input;
    let db_x = match search.dbscan_sample {
        Some(cap) if cap < x.n_rows() => {
            let mut rng = seed::rng_for(kmeans.seed, &[0xDB5C]);
            let mut rows = sample(&mut rng, x.n_rows(), cap).into_vec();
            rows.sort_unstable();
            db_input = x.take_rows(&rows);
            &db_input
        }
        _ => x,
    };
    let k_dbscan = if db_x.n_rows() >= search.dbscan.resolved_min_pts(x.dim()) {
        dbscan_fit(db_x, w, &search.dbscan)?.n_clusters
    } else {
        0
    };

    let upper = search.k_max.unwrap_or(usize::MAX).min(x.n_rows());
    let candidates: Vec<usize> = candidate_ks(k_dbscan, search.radius)
        .into_iter()
        .filter(|&k| k <= upper)
        .collect();
    if candidates.is_empty() {
        return Err(Error::contract(format!("no candidate k fits within {upper}")));
    }

    let scores = exec::try_map_indexed(candidates.len(), |i| {
        let k = candidates[i];
        let cfg = KMeansConfig {
            k,
            seed: seed::derive(kmeans.seed, &[k as u64]),
            ..kmeans.clone()
        };
        let model = kmeans_fit(x, w, &cfg)?;
        Ok::<_, Error>((k, model.db_score.unwrap_or(f64::INFINITY)))
    })?;

    let mut best = scores[0];
    for &(k, db) in &scores[1..] {
        if db < best.1 {
            best = (k, db);
        }
    }
    Ok(KSelection {
        k: best.0,
        k_dbscan,
        scores,
    })
}
