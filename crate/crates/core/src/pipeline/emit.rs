//! Writes a segmentation run to disk and records a content-hashed manifest.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{PipelineConfig, RegionStatus, SegmentationRun, SkipReason};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRegion {
    pub index: usize,
    pub key: String,
    pub rows: usize,
    pub clustered: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<SkipReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_version: String,
    pub seed: u64,
    pub n_rows: usize,
    pub split_vars: Vec<String>,
    pub config: PipelineConfig,
    pub regions: Vec<ManifestRegion>,
    /// SHA-256 of every other output file, keyed by relative path.
    pub files: BTreeMap<String, String>,
}

struct Writer<'a> {
    root: &'a Path,
    files: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files
            .insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(rel, text.as_bytes())
    }
}

/// Writes `segments.csv`, `segments.json`, `assignments.csv`, `eda.json`,
/// per-region `weights/`, `ga_trace/` and `transforms/` files, and finally
/// `manifest.json`. Output is a pure function of the run and config.
pub fn emit_reports(run: &SegmentationRun, cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut w = Writer {
        root: out,
        files: BTreeMap::new(),
    };

    w.put("segments.csv", run.report.to_csv_string()?.as_bytes())?;
    w.put_json("segments.json", &run.report)?;

    let mut assignments = String::from("row,region,cluster\n");
    for (row, region, cluster) in run.assignments() {
        assignments.push_str(&format!("{row},{region},{cluster}\n"));
    }
    w.put("assignments.csv", assignments.as_bytes())?;
    w.put_json("eda.json", &run.eda)?;

    let mut regions = Vec::new();
    for region in &run.regions {
        let mut entry = ManifestRegion {
            index: region.index,
            key: region.key.to_string(),
            rows: region.rows.len(),
            clustered: false,
            reason: None,
            k: None,
        };
        match &region.status {
            RegionStatus::Clustered(c) => {
                entry.clustered = true;
                entry.k = Some(c.k);
                let named = |v: &[f64]| -> BTreeMap<String, f64> {
                    c.features.iter().cloned().zip(v.iter().copied()).collect()
                };
                let stem = format!("region_{}", region.index);
                w.put_json(
                    &format!("weights/{stem}.json"),
                    &json!({
                        "spec_version": crate::FORMAT_VERSION,
                        "region": region.index,
                        "key": region.key.to_string(),
                        "k": c.k,
                        "k_dbscan": c.k_dbscan,
                        "db_score": c.db_score,
                        "weights": named(c.weights.as_slice()),
                        "seed_weights": c.seed_weights.as_ref().map(|s| named(s.as_slice())),
                    }),
                )?;
                w.put(
                    &format!("ga_trace/{stem}.csv"),
                    c.trace.to_csv_string().as_bytes(),
                )?;
                w.put_json(&format!("transforms/{stem}.json"), &c.transforms)?;
            }
            RegionStatus::Unclustered(reason) => entry.reason = Some(*reason),
        }
        regions.push(entry);
    }

    let manifest = Manifest {
        spec_version: crate::FORMAT_VERSION.to_string(),
        seed: cfg.seed,
        n_rows: run.n_rows,
        split_vars: run.split_vars.clone(),
        config: cfg.clone(),
        regions,
        files: w.files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = out.join("manifest.json");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
