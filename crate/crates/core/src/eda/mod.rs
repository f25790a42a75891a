//! Exploratory statistics: missing rates, 3σ outliers, dense intervals for
//! the normalizer, and variable importance from artificial prediction
//! problems.

mod forest;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use forest::{fit_forest, Forest, ForestConfig, Target, Tree};

use crate::dataset::{ColumnKind, ColumnTable};
use crate::error::{Error, Result};
use crate::preprocess::{fit_label_encoding, median, mode};

/// Minimum non-missing values for a dense-interval estimate.
pub const MIN_DENSE_VALUES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingRate {
    pub column: String,
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingReport {
    pub entries: Vec<MissingRate>,
}

impl MissingReport {
    pub fn rate(&self, column: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.column == column)
            .map(|e| e.missing_rate)
    }
}

pub fn compute_missing_rates(table: &ColumnTable) -> Result<MissingReport> {
    if table.n_rows() == 0 {
        return Err(Error::contract("missing rates need at least one row"));
    }
    let n = table.n_rows() as f64;
    Ok(MissingReport {
        entries: table
            .schema()
            .columns()
            .iter()
            .zip(table.columns())
            .map(|(spec, col)| MissingRate {
                column: spec.name.clone(),
                missing_rate: col.missing_count() as f64 / n,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierEntry {
    pub column: String,
    pub mean: f64,
    /// Population standard deviation over non-missing values.
    pub std: f64,
    pub n_present: usize,
    pub outlier_fraction: f64,
    pub outlier_rows: Vec<usize>,
    /// Set when the column is constant and nothing can be flagged.
    pub degenerate_spread: bool,
}

/// Flags rows with `|x − mean| > k_sigma · std`.
pub fn flag_outliers(table: &ColumnTable, column: &str, k_sigma: f64) -> Result<OutlierEntry> {
    let col = table.column(column)?;
    if col.kind() != ColumnKind::Continuous {
        return Err(Error::contract(format!("\"{column}\" is not continuous")));
    }
    let present: Vec<(usize, f64)> = (0..col.len())
        .filter_map(|r| col.f64_at(r).map(|v| (r, v)))
        .collect();
    if present.len() < 2 {
        return Err(Error::contract(format!(
            "\"{column}\" needs at least 2 values for outlier detection"
        )));
    }
    let n = present.len() as f64;
    let mean = present.iter().map(|p| p.1).sum::<f64>() / n;
    let var = present.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let degenerate = present.iter().all(|p| p.1 == present[0].1);
    let outlier_rows: Vec<usize> = if degenerate {
        Vec::new()
    } else {
        present
            .iter()
            .filter(|p| (p.1 - mean).abs() > k_sigma * std)
            .map(|p| p.0)
            .collect()
    };
    Ok(OutlierEntry {
        column: column.to_string(),
        mean,
        std: if degenerate { 0.0 } else { std },
        n_present: present.len(),
        outlier_fraction: outlier_rows.len() as f64 / n,
        outlier_rows,
        degenerate_spread: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseInterval {
    pub column: String,
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation quantile of ascending `sorted` at `p ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn dense_interval_of(column: &str, values: &[f64], central_mass: f64) -> Result<DenseInterval> {
    if !(central_mass > 0.0 && central_mass <= 1.0) {
        return Err(Error::config(format!(
            "central_mass must be in (0, 1], got {central_mass}"
        )));
    }
    if values.len() < MIN_DENSE_VALUES {
        return Err(Error::contract(format!(
            "\"{column}\" has {} values; a dense interval needs {MIN_DENSE_VALUES}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - central_mass) / 2.0;
    Ok(DenseInterval {
        column: column.to_string(),
        lo: quantile_sorted(&sorted, tail),
        hi: quantile_sorted(&sorted, 1.0 - tail),
    })
}

/// Central `central_mass` quantile interval of the non-missing values.
pub fn estimate_dense_interval(
    table: &ColumnTable,
    column: &str,
    central_mass: f64,
) -> Result<DenseInterval> {
    let col = table.column(column)?;
    if col.kind() != ColumnKind::Continuous {
        return Err(Error::contract(format!("\"{column}\" is not continuous")));
    }
    dense_interval_of(column, &col.present_f64(), central_mass)
}

/// Non-negative per-variable importances summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ImportanceVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    /// Importances of `features` renormalized to the simplex.
    pub fn restricted_to(&self, features: &[String]) -> crate::WeightVector {
        let raw: Vec<f64> = features.iter().map(|f| self.get(f).unwrap_or(0.0)).collect();
        crate::WeightVector::repair(&raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemImportance {
    pub target: String,
    pub n_rows: usize,
    /// Aligned with the report's variable names; `None` for the target.
    pub importances: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedProblem {
    pub target: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub vector: ImportanceVector,
    pub problems: Vec<ProblemImportance>,
    pub skipped: Vec<SkippedProblem>,
}

/// Per-variable mean over the problems where the variable is a predictor.
/// Variables that are never predictors get zero.
pub fn aggregate_importance(problems: &[Vec<Option<f64>>], n_vars: usize) -> Vec<f64> {
    (0..n_vars)
        .map(|v| {
            let seen: Vec<f64> = problems.iter().filter_map(|p| p[v]).collect();
            if seen.is_empty() {
                0.0
            } else {
                seen.iter().sum::<f64>() / seen.len() as f64
            }
        })
        .collect()
}

fn normalize_or_uniform(raw: Vec<f64>) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    if sum > 0.0 {
        raw.into_iter().map(|v| v / sum).collect()
    } else {
        let n = raw.len() as f64;
        vec![1.0 / n; raw.len()]
    }
}

/// For each target, fits a forest predicting it from every other column on
/// the rows where it is present, then averages the normalized MDI
/// importances per variable and renormalizes.
pub fn rank_variable_importance(
    table: &ColumnTable,
    targets: &[String],
    forest: &ForestConfig,
) -> Result<ImportanceReport> {
    forest.validate()?;
    let schema = table.schema();
    let names: Vec<String> = schema.columns().iter().map(|c| c.name.clone()).collect();
    let mut problems = Vec::new();
    let mut skipped = Vec::new();

    for (t_i, target) in targets.iter().enumerate() {
        let t_col = schema.index_of(target)?;
        let column = table.column_at(t_col);
        let mut rows: Vec<usize> = (0..table.n_rows()).filter(|&r| !column.is_missing(r)).collect();
        if rows.len() < forest.min_rows {
            skipped.push(SkippedProblem {
                target: target.clone(),
                reason: format!("{} labelled rows, need {}", rows.len(), forest.min_rows),
            });
            continue;
        }
        if let Some(cap) = forest.max_rows {
            if rows.len() > cap {
                let mut rng = crate::seed::rng_for(forest.seed, &[t_i as u64, 0x5AB]);
                let mut pick = rand::seq::index::sample(&mut rng, rows.len(), cap).into_vec();
                pick.sort_unstable();
                rows = pick.into_iter().map(|i| rows[i]).collect();
            }
        }
        let sub = table.take_rows(&rows);

        let predictors: Vec<usize> = (0..names.len()).filter(|&c| c != t_col).collect();
        let features: Vec<Vec<f64>> = predictors
            .iter()
            .map(|&c| encode_predictor(&sub, c))
            .collect::<Result<_>>()?;
        let target_values = match schema.columns()[t_col].kind {
            ColumnKind::Continuous => Target::Regression(sub.column_at(t_col).present_f64()),
            ColumnKind::Categorical => {
                let col = sub.column_at(t_col);
                let enc = fit_label_encoding(target, col.present_labels())?;
                let index: std::collections::HashMap<&str, usize> = enc
                    .categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.as_str(), i))
                    .collect();
                Target::Classification {
                    labels: col.present_labels().iter().map(|l| index[l]).collect(),
                    n_classes: enc.cardinality(),
                }
            }
        };
        let cfg = ForestConfig {
            seed: crate::seed::derive(forest.seed, &[t_i as u64]),
            ..forest.clone()
        };
        let fitted = fit_forest(&features, &target_values, &cfg)?;
        let mut importances = vec![None; names.len()];
        for (k, &c) in predictors.iter().enumerate() {
            importances[c] = Some(fitted.importance[k]);
        }
        problems.push(ProblemImportance {
            target: target.clone(),
            n_rows: rows.len(),
            importances,
        });
    }

    let raw: Vec<Vec<Option<f64>>> = problems.iter().map(|p| p.importances.clone()).collect();
    let values = normalize_or_uniform(aggregate_importance(&raw, names.len()));
    Ok(ImportanceReport {
        vector: ImportanceVector { names, values },
        problems,
        skipped,
    })
}

/// Numeric view of a predictor with gaps filled by the median (continuous)
/// or mode (categorical, then label-encoded).
fn encode_predictor(table: &ColumnTable, c: usize) -> Result<Vec<f64>> {
    let col = table.column_at(c);
    let n = table.n_rows();
    Ok(match col.kind() {
        ColumnKind::Continuous => {
            let present = col.present_f64();
            let fill = if present.is_empty() { 0.0 } else { median(&present) };
            (0..n).map(|r| col.f64_at(r).unwrap_or(fill)).collect()
        }
        ColumnKind::Categorical => {
            let labels = col.present_labels();
            if labels.is_empty() {
                return Ok(vec![0.0; n]);
            }
            let fill = mode(labels.iter().copied()).to_string();
            let enc = fit_label_encoding("predictor", labels)?;
            (0..n)
                .map(|r| enc.encode(col.label_at(r).unwrap_or(&fill)))
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaReport {
    pub spec_version: String,
    pub n_rows: usize,
    pub missing: MissingReport,
    pub outliers: Vec<OutlierEntry>,
    pub dense_intervals: Vec<DenseInterval>,
    pub importance: Option<ImportanceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdaConfig {
    pub k_sigma: f64,
    pub central_mass: f64,
    /// Targets of the artificial problems; empty means every column.
    pub importance_targets: Vec<String>,
    pub forest: ForestConfig,
    pub skip_importance: bool,
}

impl Default for EdaConfig {
    fn default() -> Self {
        Self {
            k_sigma: 3.0,
            central_mass: 0.98,
            importance_targets: Vec::new(),
            forest: ForestConfig::default(),
            skip_importance: false,
        }
    }
}

pub fn run_eda(table: &ColumnTable, cfg: &EdaConfig) -> Result<EdaReport> {
    let missing = compute_missing_rates(table)?;
    let mut outliers = Vec::new();
    let mut dense_intervals = Vec::new();
    for spec in table.schema().columns() {
        if spec.kind != ColumnKind::Continuous {
            continue;
        }
        let present = table.column(&spec.name)?.n_present();
        if present >= 2 {
            outliers.push(flag_outliers(table, &spec.name, cfg.k_sigma)?);
        }
        if present >= MIN_DENSE_VALUES {
            dense_intervals.push(estimate_dense_interval(table, &spec.name, cfg.central_mass)?);
        }
    }
    let importance = if cfg.skip_importance {
        None
    } else {
        let targets = if cfg.importance_targets.is_empty() {
            table.schema().columns().iter().map(|c| c.name.clone()).collect()
        } else {
            cfg.importance_targets.clone()
        };
        Some(rank_variable_importance(table, &targets, &cfg.forest)?)
    };
    Ok(EdaReport {
        spec_version: crate::FORMAT_VERSION.to_string(),
        n_rows: table.n_rows(),
        missing,
        outliers,
        dense_intervals,
        importance,
    })
}

impl EdaReport {
    /// Plain-text tables for terminal output.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "rows: {}", self.n_rows);
        let _ = writeln!(s, "\n{:<28} {:>10}", "column", "missing %");
        for e in &self.missing.entries {
            let _ = writeln!(s, "{:<28} {:>9.2}%", e.column, 100.0 * e.missing_rate);
        }
        let _ = writeln!(
            s,
            "\n{:<28} {:>12} {:>12} {:>10}",
            "column", "mean", "std", "outlier %"
        );
        for o in &self.outliers {
            let _ = writeln!(
                s,
                "{:<28} {:>12.4} {:>12.4} {:>9.2}%{}",
                o.column,
                o.mean,
                o.std,
                100.0 * o.outlier_fraction,
                if o.degenerate_spread { " (constant)" } else { "" }
            );
        }
        let _ = writeln!(s, "\n{:<28} {:>12} {:>12}", "column", "dense lo", "dense hi");
        for d in &self.dense_intervals {
            let _ = writeln!(s, "{:<28} {:>12.4} {:>12.4}", d.column, d.lo, d.hi);
        }
        if let Some(imp) = &self.importance {
            let _ = writeln!(s, "\n{:<28} {:>10}", "variable", "importance");
            for (n, v) in imp.vector.names.iter().zip(&imp.vector.values) {
                let _ = writeln!(s, "{:<28} {:>10.4}", n, v);
            }
            for sk in &imp.skipped {
                let _ = writeln!(s, "skipped problem {}: {}", sk.target, sk.reason);
            }
        }
        s
    }
}
