//! End-to-end segmentation: EDA on the whole corpus, availability
//! partition, then per region imputation, transforms, k selection, weight
//! search and a final clustering.

mod emit;
mod report;

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::cluster::{
    kmeans_fit, select_k, DbscanConfig, FeatureMatrix, KMeansConfig, KSearch, WeightVector,
};
use crate::dataset::{ColumnTable, TableSchema};
use crate::eda::{run_eda, EdaConfig, EdaReport, ForestConfig};
use crate::error::{Error, Result};
use crate::gaopt::{run_ga, GaConfig, GaTrace};
use crate::partition::{partition_regions, RegionKey};
use crate::preprocess::{fit_transforms, impute_missing, TransformBundle};
use crate::synthgen::{generate_corpus, GeneratorSpec};
use crate::{exec, seed};

pub use emit::{emit_reports, Manifest, ManifestRegion};
pub use report::{prune_segments, PruneThresholds, SegmentReport, SegmentRow, SegmentTotals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Schema of `data`. Relative paths resolve against the config file.
    pub schema: Option<PathBuf>,
    pub data: Option<PathBuf>,
    /// Used when `data` is absent.
    pub generator: Option<GeneratorSpec>,
    /// Empty means the schema's split variables.
    pub split_variables: Vec<String>,
    pub central_mass: f64,
    pub k_sigma: f64,
    pub dbscan: DbscanConfig,
    /// Half-width of the k window around the DBSCAN estimate.
    pub k_radius: usize,
    pub k_max: usize,
    /// Row caps for the DBSCAN estimate and for the k scan.
    pub dbscan_sample: Option<usize>,
    pub k_select_sample: Option<usize>,
    pub kmeans: KMeansConfig,
    pub ga: GaConfig,
    /// Restarts of each k-means run inside the GA.
    pub ga_kmeans_n_init: usize,
    pub forest: ForestConfig,
    /// Targets of the importance problems; empty means every column.
    pub importance_targets: Vec<String>,
    /// Regions smaller than this are not clustered; `None` means `10 · k_max`.
    pub min_region_rows: Option<usize>,
    pub thresholds: PruneThresholds,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema: None,
            data: None,
            generator: None,
            split_variables: Vec::new(),
            central_mass: 0.98,
            k_sigma: 3.0,
            dbscan: DbscanConfig::default(),
            k_radius: 2,
            k_max: 8,
            dbscan_sample: Some(2000),
            k_select_sample: Some(4000),
            kmeans: KMeansConfig::default(),
            ga: GaConfig {
                fitness_sample: Some(1500),
                ..GaConfig::default()
            },
            ga_kmeans_n_init: 2,
            forest: ForestConfig {
                n_trees: 30,
                max_rows: Some(2000),
                ..ForestConfig::default()
            },
            importance_targets: Vec::new(),
            min_region_rows: None,
            thresholds: PruneThresholds::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.schema, &mut cfg.data, &mut cfg.output_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.ga.validate()?;
        if !(self.central_mass > 0.0 && self.central_mass <= 1.0) {
            return Err(Error::config("central_mass must lie in (0, 1]"));
        }
        if self.k_max < 2 {
            return Err(Error::config("k_max must be at least 2"));
        }
        if self.ga_kmeans_n_init == 0 {
            return Err(Error::config("ga_kmeans_n_init must be at least 1"));
        }
        if self.data.is_some() && self.schema.is_none() {
            return Err(Error::config("data needs a schema"));
        }
        Ok(())
    }

    pub fn min_region_rows(&self) -> usize {
        self.min_region_rows.unwrap_or(10 * self.k_max)
    }

    /// Loads `data` with `schema`, or generates the corpus from `generator`.
    pub fn load_table(&self) -> Result<ColumnTable> {
        match (&self.data, &self.generator) {
            (Some(data), _) => {
                let schema_path = self
                    .schema
                    .as_ref()
                    .ok_or_else(|| Error::config("data needs a schema"))?;
                let schema = TableSchema::load(schema_path)?;
                ColumnTable::load_csv(data, &schema)
            }
            (None, Some(spec)) => generate_corpus(spec),
            (None, None) => Err(Error::config("config names neither data nor generator")),
        }
    }

    fn eda_config(&self) -> EdaConfig {
        EdaConfig {
            k_sigma: self.k_sigma,
            central_mass: self.central_mass,
            importance_targets: self.importance_targets.clone(),
            forest: ForestConfig {
                seed: seed::derive(self.seed, &[0xEDA]),
                ..self.forest.clone()
            },
            skip_importance: false,
        }
    }
}

/// Why a region was not clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Empty,
    TooFewRows,
    NoFeatures,
    NotSelected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredRegion {
    pub k: usize,
    pub k_dbscan: usize,
    pub features: Vec<String>,
    pub transforms: TransformBundle,
    pub seed_weights: Option<WeightVector>,
    pub weights: WeightVector,
    pub trace: GaTrace,
    pub db_score: Option<f64>,
    /// 1-based cluster per region row, aligned with `RegionOutcome::rows`.
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegionStatus {
    Clustered(Box<ClusteredRegion>),
    Unclustered(SkipReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOutcome {
    pub index: usize,
    pub key: RegionKey,
    pub rows: Vec<usize>,
    pub share: f64,
    pub status: RegionStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRun {
    pub n_rows: usize,
    pub split_vars: Vec<String>,
    pub eda: EdaReport,
    pub regions: Vec<RegionOutcome>,
    /// Pruned with the configured thresholds.
    pub report: SegmentReport,
}

impl SegmentationRun {
    /// `(row, region, cluster)` for every row in row order; cluster 0 marks
    /// rows of unclustered regions.
    pub fn assignments(&self) -> Vec<(usize, usize, usize)> {
        let mut out = vec![(0, 0, 0); self.n_rows];
        for (r, slot) in out.iter_mut().enumerate() {
            slot.0 = r;
        }
        for region in &self.regions {
            for (i, &row) in region.rows.iter().enumerate() {
                let cluster = match &region.status {
                    RegionStatus::Clustered(c) => c.labels[i],
                    RegionStatus::Unclustered(_) => 0,
                };
                out[row] = (row, region.index, cluster);
            }
        }
        out
    }
}

/// Loads the corpus named by `cfg` and segments it.
pub fn run_segmentation(cfg: &PipelineConfig) -> Result<SegmentationRun> {
    let table = cfg.load_table()?;
    run_segmentation_on(&table, cfg, None)
}

/// Segments `table`. With `only`, every other region is reported as
/// `not_selected` and contributes no segments.
pub fn run_segmentation_on(
    table: &ColumnTable,
    cfg: &PipelineConfig,
    only: Option<&RegionKey>,
) -> Result<SegmentationRun> {
    cfg.validate()?;
    if table.n_rows() == 0 {
        return Err(Error::contract("cannot segment an empty table"));
    }
    let split_vars = if cfg.split_variables.is_empty() {
        table.schema().split_variables()
    } else {
        cfg.split_variables.clone()
    };
    if let Some(key) = only {
        if key.len() != split_vars.len() {
            return Err(Error::config(format!(
                "region key {key} does not match {} split variables",
                split_vars.len()
            )));
        }
    }

    let eda = run_eda(table, &cfg.eda_config())?;
    let partition = partition_regions(table, &split_vars)?;

    let regions = exec::try_map_indexed(partition.regions.len(), |i| {
        let region = &partition.regions[i];
        let status = if only.is_some_and(|k| *k != region.key) {
            RegionStatus::Unclustered(SkipReason::NotSelected)
        } else if region.rows.is_empty() {
            RegionStatus::Unclustered(SkipReason::Empty)
        } else if region.rows.len() < cfg.min_region_rows() {
            RegionStatus::Unclustered(SkipReason::TooFewRows)
        } else {
            let region_seed = seed::derive(cfg.seed, &[region.key.len() as u64, region.key.value()]);
            cluster_region(&table.take_rows(&region.rows), cfg, &eda, region_seed)?
        };
        Ok::<_, Error>(RegionOutcome {
            index: region.index,
            key: region.key.clone(),
            rows: region.rows.clone(),
            share: region.share,
            status,
        })
    })?;

    let report = prune_segments(&segment_rows(&regions, table.n_rows()), &cfg.thresholds)?;
    Ok(SegmentationRun {
        n_rows: table.n_rows(),
        split_vars,
        eda,
        regions,
        report,
    })
}

fn subsample(x: &FeatureMatrix, cap: Option<usize>, seed_: u64) -> Option<FeatureMatrix> {
    match cap {
        Some(m) if m < x.n_rows() => {
            let mut rng = seed::rng(seed_);
            let mut rows = sample(&mut rng, x.n_rows(), m).into_vec();
            rows.sort_unstable();
            Some(x.take_rows(&rows))
        }
        _ => None,
    }
}

fn cluster_region(
    region_table: &ColumnTable,
    cfg: &PipelineConfig,
    eda: &EdaReport,
    region_seed: u64,
) -> Result<RegionStatus> {
    let imputed = impute_missing(region_table)?;
    let transforms = fit_transforms(&imputed, cfg.central_mass)?;
    let features = transforms.feature_names();
    if features.is_empty() {
        return Ok(RegionStatus::Unclustered(SkipReason::NoFeatures));
    }
    let x = transforms.transform(&imputed.table)?;
    let d = x.dim();

    let search = KSearch {
        dbscan: cfg.dbscan.clone(),
        radius: cfg.k_radius,
        k_max: Some(cfg.k_max),
        dbscan_sample: cfg.dbscan_sample,
    };
    let scan_x = subsample(&x, cfg.k_select_sample, seed::derive(region_seed, &[1, 0]));
    let selection = select_k(
        scan_x.as_ref().unwrap_or(&x),
        &WeightVector::uniform(d),
        &search,
        &KMeansConfig {
            seed: seed::derive(region_seed, &[1]),
            ..cfg.kmeans.clone()
        },
    )?;
    let k = selection.k;

    let seed_weights = eda
        .importance
        .as_ref()
        .map(|imp| imp.vector.restricted_to(&features));
    let ga = run_ga(
        &x,
        k,
        seed_weights.as_ref(),
        &GaConfig {
            seed: seed::derive(region_seed, &[2]),
            ..cfg.ga.clone()
        },
        &KMeansConfig {
            n_init: cfg.ga_kmeans_n_init,
            ..cfg.kmeans.clone()
        },
    )?;

    let model = kmeans_fit(
        &x,
        &ga.best,
        &KMeansConfig {
            k,
            seed: seed::derive(region_seed, &[3]),
            ..cfg.kmeans.clone()
        },
    )?;
    Ok(RegionStatus::Clustered(Box::new(ClusteredRegion {
        k,
        k_dbscan: selection.k_dbscan,
        features,
        transforms,
        seed_weights,
        weights: ga.best,
        trace: ga.trace,
        db_score: model.db_score,
        labels: model.assignments.iter().map(|&a| a + 1).collect(),
    })))
}

fn segment_rows(regions: &[RegionOutcome], n_total: usize) -> SegmentReport {
    let mut rows = Vec::new();
    for region in regions {
        let n = region.rows.len();
        match &region.status {
            RegionStatus::Clustered(c) => {
                let mut sizes = vec![0usize; c.k];
                for &l in &c.labels {
                    sizes[l - 1] += 1;
                }
                for (j, &s) in sizes.iter().enumerate() {
                    rows.push(SegmentRow {
                        region: region.index,
                        cluster: j + 1,
                        region_share: s as f64 / n as f64,
                        global_share: s as f64 / n_total as f64,
                        relevant: true,
                    });
                }
            }
            RegionStatus::Unclustered(SkipReason::TooFewRows | SkipReason::NoFeatures) => {
                rows.push(SegmentRow {
                    region: region.index,
                    cluster: 0,
                    region_share: 1.0,
                    global_share: n as f64 / n_total as f64,
                    relevant: true,
                });
            }
            RegionStatus::Unclustered(_) => {}
        }
    }
    SegmentReport::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::demo_spec;

    fn quick_config(seed_: u64) -> PipelineConfig {
        PipelineConfig {
            ga: GaConfig {
                population: 8,
                generations: 3,
                fitness_sample: Some(300),
                ..GaConfig::default()
            },
            kmeans: KMeansConfig {
                n_init: 2,
                ..KMeansConfig::default()
            },
            ga_kmeans_n_init: 1,
            forest: ForestConfig {
                n_trees: 5,
                max_rows: Some(300),
                ..ForestConfig::default()
            },
            k_select_sample: Some(600),
            dbscan_sample: Some(600),
            seed: seed_,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn demo_corpus_segments_conserve_shares() {
        let table = generate_corpus(&demo_spec(3000, 5)).unwrap();
        let run = run_segmentation_on(&table, &quick_config(1), None).unwrap();
        assert_eq!(run.regions.len(), 8);
        run.report.check_conservation(0.005).unwrap();
        let assigned = run.assignments();
        assert_eq!(assigned.len(), 3000);
        for (row, region, _) in &assigned {
            assert!(run.regions[region - 1].rows.contains(row));
        }
        // Region 3 holds 0.04% of the rows: too small to cluster.
        assert_eq!(
            run.regions[2].status,
            RegionStatus::Unclustered(if run.regions[2].rows.is_empty() {
                SkipReason::Empty
            } else {
                SkipReason::TooFewRows
            })
        );
    }

    #[test]
    fn single_region_mode() {
        let table = generate_corpus(&demo_spec(2000, 2)).unwrap();
        let key: RegionKey = "001".parse().unwrap();
        let run = run_segmentation_on(&table, &quick_config(3), Some(&key)).unwrap();
        for r in &run.regions {
            if r.key != key {
                assert_eq!(r.status, RegionStatus::Unclustered(SkipReason::NotSelected));
            }
        }
        assert!(run.report.rows.iter().all(|s| s.region == key.region_index()));
        let bad: RegionKey = "01".parse().unwrap();
        assert!(run_segmentation_on(&table, &quick_config(3), Some(&bad)).is_err());
    }

    #[test]
    fn config_json_round_trip_and_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"schema": "s.json", "data": "d.csv", "seed": 9}"#).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.schema.unwrap(), dir.path().join("s.json"));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ga.population, 52);
        assert!(PipelineConfig::from_json(r#"{"data": "d.csv"}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"k_max": 1}"#).is_err());
        let text = serde_json::to_string(&PipelineConfig::default()).unwrap();
        assert_eq!(
            PipelineConfig::from_json(&text).unwrap(),
            PipelineConfig::default()
        );
    }
}
