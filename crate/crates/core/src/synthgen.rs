//! Synthetic corpora with controlled missingness, outliers and planted
//! cluster structure.
//!
//! Every row first draws a split-variable availability pattern and a latent
//! cluster within that pattern. Informative columns then draw from a
//! cluster-specific location; non-informative columns ignore the latent
//! label. Each column uses its own RNG substreams derived from
//! `(seed, column index)`, so columns can be generated in any order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Column, ColumnKind, ColumnSpec, ColumnTable, TableSchema};
use crate::error::{Error, Result};
use crate::partition::RegionKey;
use crate::{exec, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Distribution_ {
    /// Log-normal: `median · exp(sigma · (offset + z))`.
    HeavyTail { median: f64, sigma: f64 },
    /// `mean + std · (offset + z)`, clamped to `[lo, hi]`.
    BoundedNormal { mean: f64, std: f64, lo: f64, hi: f64 },
    /// Base frequencies; informative columns tilt each cluster towards its
    /// own favourite label.
    Categorical {
        labels: Vec<String>,
        frequencies: Vec<f64>,
    },
}

pub use Distribution_ as ValueDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenColumn {
    pub spec: ColumnSpec,
    #[serde(default)]
    pub missing_rate: f64,
    pub distribution: ValueDistribution,
    /// Fraction of present heavy-tail values multiplied by `outlier_factor`.
    #[serde(default)]
    pub outlier_rate: f64,
    /// Whether the column carries the planted cluster signal.
    #[serde(default = "yes")]
    pub informative: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternWeight {
    /// Presence bits over the split variables, e.g. `"101"`.
    pub key: RegionKey,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_rows: usize,
    pub seed: u64,
    pub columns: Vec<GenColumn>,
    /// Latent clusters per availability pattern unless overridden.
    #[serde(default = "three")]
    pub planted_clusters: usize,
    /// Per-pattern cluster counts keyed by presence bits.
    #[serde(default)]
    pub planted_per_pattern: BTreeMap<String, usize>,
    /// Joint distribution of split-variable presence. When absent each split
    /// variable goes missing independently at its own `missing_rate`.
    #[serde(default)]
    pub split_patterns: Option<Vec<PatternWeight>>,
    /// Distance between adjacent cluster centres in within-cluster sd units.
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_outlier_factor")]
    pub outlier_factor: f64,
}

fn three() -> usize {
    3
}

fn default_separation() -> f64 {
    4.0
}

fn default_outlier_factor() -> f64 {
    25.0
}

/// Rows of a generated corpus together with their latent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub table: ColumnTable,
    /// Presence pattern drawn for each row.
    pub pattern: Vec<RegionKey>,
    /// Latent cluster within the pattern.
    pub cluster: Vec<usize>,
}

impl GeneratorSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn schema(&self) -> Result<TableSchema> {
        TableSchema::new(self.columns.iter().map(|c| c.spec.clone()).collect())
    }

    fn split_columns(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&c| self.columns[c].spec.split_variable)
            .collect()
    }

    pub fn clusters_for(&self, key: &RegionKey) -> usize {
        self.planted_per_pattern
            .get(&key.to_string())
            .copied()
            .unwrap_or(self.planted_clusters)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::contract("generator needs at least one row"));
        }
        self.schema()?;
        if self.planted_clusters == 0 || self.planted_per_pattern.values().any(|&k| k == 0) {
            return Err(Error::config("planted cluster counts must be at least 1"));
        }
        if !(self.separation >= 0.0) || !(self.outlier_factor > 0.0) {
            return Err(Error::config("separation and outlier_factor must be positive"));
        }
        for c in &self.columns {
            let name = &c.spec.name;
            if !(0.0..=1.0).contains(&c.missing_rate) || !(0.0..=1.0).contains(&c.outlier_rate) {
                return Err(Error::config(format!("rates for \"{name}\" must lie in [0, 1]")));
            }
            match (&c.distribution, c.spec.kind) {
                (ValueDistribution::Categorical { labels, frequencies }, ColumnKind::Categorical) => {
                    if labels.is_empty() || labels.len() != frequencies.len() {
                        return Err(Error::config(format!("\"{name}\" needs one frequency per label")));
                    }
                    if frequencies.iter().any(|&f| !(f >= 0.0)) || frequencies.iter().sum::<f64>() <= 0.0 {
                        return Err(Error::config(format!("\"{name}\" has invalid frequencies")));
                    }
                    if labels
                        .iter()
                        .any(|l| crate::dataset::MISSING_SENTINELS.contains(&l.as_str()))
                    {
                        return Err(Error::config(format!(
                            "\"{name}\" uses a missing-value sentinel as a label"
                        )));
                    }
                }
                (ValueDistribution::HeavyTail { median, sigma }, ColumnKind::Continuous) => {
                    if !(*median > 0.0) || !(*sigma > 0.0) {
                        return Err(Error::config(format!("\"{name}\" needs median, sigma > 0")));
                    }
                }
                (ValueDistribution::BoundedNormal { std, lo, hi, .. }, ColumnKind::Continuous) => {
                    if !(*std > 0.0) || !(lo < hi) {
                        return Err(Error::config(format!("\"{name}\" needs std > 0 and lo < hi")));
                    }
                }
                _ => {
                    return Err(Error::config(format!(
                        "distribution of \"{name}\" does not match its kind"
                    )))
                }
            }
        }
        if let Some(patterns) = &self.split_patterns {
            let m = self.split_columns().len();
            if patterns.is_empty()
                || patterns.iter().any(|p| p.key.len() != m || !(p.weight >= 0.0))
                || patterns.iter().map(|p| p.weight).sum::<f64>() <= 0.0
            {
                return Err(Error::config(format!(
                    "split_patterns need non-negative weights over {m}-bit keys"
                )));
            }
        }
        Ok(())
    }
}

/// Generates the table described by `spec`.
pub fn generate_corpus(spec: &GeneratorSpec) -> Result<ColumnTable> {
    Ok(generate_labelled(spec)?.table)
}

/// Generates the table along with each row's latent pattern and cluster.
pub fn generate_labelled(spec: &GeneratorSpec) -> Result<Corpus> {
    spec.validate()?;
    let n = spec.n_rows;
    let split_cols = spec.split_columns();

    let mut rng = seed::rng_for(spec.seed, &[0xA11]);
    let pattern: Vec<RegionKey> = match &spec.split_patterns {
        Some(patterns) => {
            let dist = WeightedIndex::new(patterns.iter().map(|p| p.weight))
                .map_err(|e| Error::config(format!("split_patterns: {e}")))?;
            (0..n)
                .map(|_| patterns[dist.sample(&mut rng)].key.clone())
                .collect()
        }
        None => {
            let rates: Vec<f64> = split_cols.iter().map(|&c| spec.columns[c].missing_rate).collect();
            (0..n)
                .map(|_| RegionKey::new(rates.iter().map(|&r| rng.random::<f64>() >= r).collect()))
                .collect()
        }
    };
    let cluster: Vec<usize> = pattern
        .iter()
        .map(|key| rng.random_range(0..spec.clusters_for(key)))
        .collect();

    let columns = exec::try_map_indexed(spec.columns.len(), |c| {
        let split_bit = split_cols.iter().position(|&s| s == c);
        generate_column(spec, c, split_bit, &pattern, &cluster)
    })?;
    let table = ColumnTable::new(spec.schema()?, columns)?;
    Ok(Corpus {
        table,
        pattern,
        cluster,
    })
}

/// Standardized centre of each cluster of each pattern for one column: evenly
/// spaced and shuffled per (column, pattern).
fn centres(spec: &GeneratorSpec, c: usize, key: &RegionKey) -> Vec<f64> {
    let k = spec.clusters_for(key);
    let mut slots: Vec<f64> = (0..k)
        .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * spec.separation)
        .collect();
    let mut rng = seed::rng_for(spec.seed, &[3, c as u64, key.value(), key.len() as u64]);
    slots.shuffle(&mut rng);
    slots
}

fn generate_column(
    spec: &GeneratorSpec,
    c: usize,
    split_bit: Option<usize>,
    pattern: &[RegionKey],
    cluster: &[usize],
) -> Result<Column> {
    let col = &spec.columns[c];
    let n = spec.n_rows;
    let mut miss_rng = seed::rng_for(spec.seed, &[2, c as u64]);
    let present: Vec<bool> = (0..n)
        .map(|r| match split_bit {
            Some(b) => pattern[r].bits()[b],
            None => miss_rng.random::<f64>() >= col.missing_rate,
        })
        .collect();

    let mut centre_cache: BTreeMap<RegionKey, Vec<f64>> = BTreeMap::new();
    if col.informative {
        for key in pattern {
            if !centre_cache.contains_key(key) {
                centre_cache.insert(key.clone(), centres(spec, c, key));
            }
        }
    }
    let offset = |r: usize| -> f64 {
        if col.informative {
            centre_cache[&pattern[r]][cluster[r]]
        } else {
            0.0
        }
    };
    let mut rng = seed::rng_for(spec.seed, &[1, c as u64]);
    match &col.distribution {
        ValueDistribution::HeavyTail { median, sigma } => {
            let cells = (0..n).map(|r| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let outlier = rng.random::<f64>() < col.outlier_rate;
                if !present[r] {
                    return None;
                }
                let mut v = median * (sigma * (offset(r) + z)).exp();
                if outlier {
                    v *= spec.outlier_factor;
                }
                Some(v)
            });
            Column::from_continuous(cells.collect::<Vec<_>>())
        }
        ValueDistribution::BoundedNormal { mean, std, lo, hi } => {
            let cells = (0..n).map(|r| {
                let z: f64 = StandardNormal.sample(&mut rng);
                present[r].then(|| (mean + std * (offset(r) + z)).clamp(*lo, *hi))
            });
            Column::from_continuous(cells.collect::<Vec<_>>())
        }
        ValueDistribution::Categorical { labels, frequencies } => {
            let base = WeightedIndex::new(frequencies)
                .map_err(|e| Error::config(format!("\"{}\": {e}", col.spec.name)))?;
            let cells: Vec<Option<String>> = (0..n)
                .map(|r| {
                    let u: f64 = rng.random();
                    let drawn = base.sample(&mut rng);
                    if !present[r] {
                        return None;
                    }
                    // Informative columns: 80% of a cluster's rows take the
                    // label its centre rank points at.
                    let idx = if col.informative && u < 0.8 {
                        let centres = &centre_cache[&pattern[r]];
                        let rank = centres.iter().filter(|&&x| x < centres[cluster[r]]).count();
                        rank % labels.len()
                    } else {
                        drawn
                    };
                    Some(labels[idx].clone())
                })
                .collect();
            Ok(Column::from_categorical(cells))
        }
    }
}

/// Demonstration schema built from the sports-centre variables with
/// published missing and outlier rates. The remaining variables of the
/// original corpus are not public and are not modelled.
pub fn demo_spec(n_rows: usize, seed: u64) -> GeneratorSpec {
    let heavy = |name: &str, median: f64, missing: f64, outliers: f64| GenColumn {
        spec: ColumnSpec::continuous(name),
        missing_rate: missing,
        distribution: ValueDistribution::HeavyTail { median, sigma: 0.35 },
        outlier_rate: outliers,
        informative: true,
    };
    let bounded = |name: &str, mean: f64, std: f64, lo: f64, hi: f64, missing: f64| GenColumn {
        spec: ColumnSpec::continuous(name),
        missing_rate: missing,
        distribution: ValueDistribution::BoundedNormal { mean, std, lo, hi },
        outlier_rate: 0.0,
        informative: true,
    };
    let activities = ["fitness", "swimming", "cycling", "yoga", "pilates", "boxing"];
    let columns = vec![
        GenColumn {
            spec: ColumnSpec::categorical("favorite_activity").split(),
            missing_rate: 0.0,
            distribution: ValueDistribution::Categorical {
                labels: activities.iter().map(|s| s.to_string()).collect(),
                frequencies: vec![0.30, 0.20, 0.15, 0.15, 0.10, 0.10],
            },
            outlier_rate: 0.0,
            informative: true,
        },
        heavy("avg_accesses", 6.0, 0.0, 0.0).split_var(),
        heavy("avg_app_accesses", 4.0, 0.0, 0.0).split_var(),
        bounded("age", 38.0, 6.0, 14.0, 90.0, 0.0),
        heavy("total_access_count", 60.0, 0.5721, 0.09),
        heavy("total_app_access_count", 40.0, 0.3078, 0.10),
        heavy("total_reserved_activities", 12.0, 0.6270, 0.11),
        heavy("booked_activity_reservations", 8.0, 0.6342, 0.0),
        heavy("assigned_trainings", 3.0, 0.5554, 0.04),
        heavy("validated_trainings", 2.0, 0.7126, 0.01),
        GenColumn {
            spec: ColumnSpec::categorical("fitness_target"),
            missing_rate: 0.5554,
            distribution: ValueDistribution::Categorical {
                labels: ["lose_weight", "gain_muscle", "health", "performance"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                frequencies: vec![0.4, 0.25, 0.25, 0.1],
            },
            outlier_rate: 0.0,
            informative: true,
        },
        bounded("weight", 74.0, 5.0, 35.0, 200.0, 0.6808),
        bounded("bmi", 25.0, 1.5, 14.0, 60.0, 0.0),
    ];
    // Region weights follow the per-region totals of the published cluster
    // table (region index = 8 − key value).
    let region_totals = [18.20, 2.14, 0.04, 16.23, 10.60, 11.85, 40.42, 0.57];
    let split_patterns = region_totals
        .iter()
        .enumerate()
        .map(|(i, &w)| PatternWeight {
            key: RegionKey::from_region_index(i + 1, 3).expect("3 split variables"),
            weight: w,
        })
        .collect();
    let planted = [6, 5, 4, 5, 6, 6, 5, 5];
    let planted_per_pattern = planted
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            (
                RegionKey::from_region_index(i + 1, 3)
                    .expect("3 split variables")
                    .to_string(),
                k,
            )
        })
        .collect();
    GeneratorSpec {
        n_rows,
        seed,
        columns,
        planted_clusters: 3,
        planted_per_pattern,
        split_patterns: Some(split_patterns),
        separation: default_separation(),
        outlier_factor: default_outlier_factor(),
    }
}

trait SplitVar {
    fn split_var(self) -> Self;
}

impl SplitVar for GenColumn {
    fn split_var(mut self) -> Self {
        self.spec.split_variable = true;
        self
    }
}
