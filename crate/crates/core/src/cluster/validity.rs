//! Internal validity scores under the weighted metric.

use super::kmeans::ClusteringModel;
use super::matrix::FeatureMatrix;
use super::metric::{weighted_sq_distance, WeightVector};
use crate::error::{Error, Result};

/// Sum of weighted squared distances from each row to its centroid.
pub fn inertia(x: &FeatureMatrix, model: &ClusteringModel, w: &WeightVector) -> Result<f64> {
    check(x, model, w)?;
    let d = model.dim;
    Ok(x.rows()
        .zip(&model.assignments)
        .map(|(r, &l)| weighted_sq_distance(r, &model.centroids[l * d..(l + 1) * d], w.as_slice()))
        .sum())
}

/// Davies-Bouldin index: mean over clusters of the worst
/// `(Sᵢ + Sⱼ) / Mᵢⱼ`, where `Sᵢ` is the mean member-to-centroid distance and
/// `Mᵢⱼ` the distance between centroids. Lower is better. Coincident
/// centroids give `f64::INFINITY`.
pub fn davies_bouldin(x: &FeatureMatrix, model: &ClusteringModel, w: &WeightVector) -> Result<f64> {
    check(x, model, w)?;
    if model.k < 2 {
        return Err(Error::contract("Davies-Bouldin needs at least two clusters"));
    }
    if model.cluster_sizes().contains(&0) {
        return Err(Error::contract("Davies-Bouldin needs non-empty clusters"));
    }
    Ok(db_from_parts(
        x,
        &model.assignments,
        &model.centroids,
        model.k,
        w.as_slice(),
    ))
}

pub(crate) fn db_from_parts(
    x: &FeatureMatrix,
    labels: &[usize],
    centroids: &[f64],
    k: usize,
    w: &[f64],
) -> f64 {
    let d = x.dim();
    let centroid = |j: usize| &centroids[j * d..(j + 1) * d];
    let mut scatter = vec![0.0f64; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in x.rows().zip(labels) {
        scatter[l] += weighted_sq_distance(r, centroid(l), w).sqrt();
        counts[l] += 1;
    }
    for (s, &c) in scatter.iter_mut().zip(&counts) {
        *s /= c.max(1) as f64;
    }

    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in (0..k).filter(|&j| j != i) {
            let sep = weighted_sq_distance(centroid(i), centroid(j), w).sqrt();
            if sep <= 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max((scatter[i] + scatter[j]) / sep);
        }
        total += worst;
    }
    total / k as f64
}

fn check(x: &FeatureMatrix, model: &ClusteringModel, w: &WeightVector) -> Result<()> {
    if model.assignments.len() != x.n_rows() {
        return Err(Error::contract("assignments do not match the data"));
    }
    if model.dim != x.dim() || w.dim() != x.dim() {
        return Err(Error::contract("dimension mismatch"));
    }
    if model.assignments.iter().any(|&a| a >= model.k) {
        return Err(Error::contract("assignment references a missing centroid"));
    }
    Ok(())
}
