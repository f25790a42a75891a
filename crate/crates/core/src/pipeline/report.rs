//! Segment tables: one row per (region, cluster) with its share of the
//! region and of the whole population, plus relevance pruning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PruneThresholds {
    /// Regions below this share of the population are dropped whole.
    pub region_min_global_share: f64,
    /// Remaining clusters below this share of the population are dropped.
    pub cluster_min_global_share: f64,
}

impl Default for PruneThresholds {
    fn default() -> Self {
        Self {
            region_min_global_share: 0.01,
            cluster_min_global_share: 0.01,
        }
    }
}

impl PruneThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [
            ("region_min_global_share", self.region_min_global_share),
            ("cluster_min_global_share", self.cluster_min_global_share),
        ] {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Shares are fractions; the CSV form shows percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub region: usize,
    /// 1-based; 0 stands for a region that was not clustered.
    pub cluster: usize,
    pub region_share: f64,
    pub global_share: f64,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentTotals {
    pub n_segments: usize,
    pub n_relevant: usize,
    pub discarded_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub spec_version: String,
    pub rows: Vec<SegmentRow>,
    pub totals: SegmentTotals,
}

const CSV_HEADER: [&str; 5] = ["region", "cluster", "pct_region", "pct_global", "relevant"];

impl SegmentReport {
    /// Sorts rows by (region, cluster) and computes the totals.
    pub fn new(mut rows: Vec<SegmentRow>) -> Self {
        rows.sort_by_key(|r| (r.region, r.cluster));
        let mut report = Self {
            spec_version: crate::FORMAT_VERSION.to_string(),
            rows,
            totals: SegmentTotals::default(),
        };
        report.recompute_totals();
        report
    }

    fn recompute_totals(&mut self) {
        self.totals = SegmentTotals {
            n_segments: self.rows.len(),
            n_relevant: self.rows.iter().filter(|r| r.relevant).count(),
            discarded_share: self
                .rows
                .iter()
                .filter(|r| !r.relevant)
                .map(|r| r.global_share)
                .sum(),
        };
    }

    /// Global share of each region, summed over its rows.
    pub fn region_totals(&self) -> BTreeMap<usize, f64> {
        let mut totals = BTreeMap::new();
        for r in &self.rows {
            *totals.entry(r.region).or_insert(0.0) += r.global_share;
        }
        totals
    }

    /// Sum of region shares per region.
    pub fn region_share_sums(&self) -> BTreeMap<usize, f64> {
        let mut sums = BTreeMap::new();
        for r in &self.rows {
            *sums.entry(r.region).or_insert(0.0) += r.region_share;
        }
        sums
    }

    /// Checks that every region's shares and the global shares each sum to
    /// one within `tol`.
    pub fn check_conservation(&self, tol: f64) -> Result<()> {
        for (region, sum) in self.region_share_sums() {
            if (sum - 1.0).abs() > tol {
                return Err(Error::contract(format!("region {region} shares sum to {sum}")));
            }
        }
        let global: f64 = self.rows.iter().map(|r| r.global_share).sum();
        if (global - 1.0).abs() > tol {
            return Err(Error::contract(format!("global shares sum to {global}")));
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.region.to_string(),
                r.cluster.to_string(),
                format!("{:.6}", 100.0 * r.region_share),
                format!("{:.6}", 100.0 * r.global_share),
                r.relevant.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::contract(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Reads the CSV form back. The `relevant` column is optional.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let need = |name: &str| col(name).ok_or_else(|| Error::UnknownColumn(name.to_string()));
        let (ri, ci, pr, pg) = (
            need("region")?,
            need("cluster")?,
            need("pct_region")?,
            need("pct_global")?,
        );
        let rel = col("relevant");

        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let field = |j: usize, name: &str| -> Result<&str> {
                rec.get(j).ok_or_else(|| Error::Parse {
                    row: i + 1,
                    column: name.to_string(),
                    message: "missing field".into(),
                })
            };
            let parse_err = |name: &str, message: String| Error::Parse {
                row: i + 1,
                column: name.to_string(),
                message,
            };
            let int = |j: usize, name: &str| -> Result<usize> {
                field(j, name)?
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(name, format!("{e}")))
            };
            let pct = |j: usize, name: &str| -> Result<f64> {
                let v: f64 = field(j, name)?
                    .trim()
                    .parse()
                    .map_err(|e| parse_err(name, format!("{e}")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(parse_err(name, format!("invalid percentage {v}")));
                }
                Ok(v / 100.0)
            };
            let relevant = match rel {
                Some(j) => field(j, "relevant")?
                    .trim()
                    .parse()
                    .map_err(|e| parse_err("relevant", format!("{e}")))?,
                None => true,
            };
            rows.push(SegmentRow {
                region: int(ri, "region")?,
                cluster: int(ci, "cluster")?,
                region_share: pct(pr, "pct_region")?,
                global_share: pct(pg, "pct_global")?,
                relevant,
            });
        }
        Ok(Self::new(rows))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }
}

/// Marks segments as relevant or not. Whole regions below the region
/// threshold go first; surviving clusters below the cluster threshold go
/// next. Previous relevance flags are ignored.
pub fn prune_segments(report: &SegmentReport, thresholds: &PruneThresholds) -> Result<SegmentReport> {
    thresholds.validate()?;
    let region_totals = report.region_totals();
    let mut out = report.clone();
    for row in &mut out.rows {
        row.relevant = region_totals[&row.region] >= thresholds.region_min_global_share
            && row.global_share >= thresholds.cluster_min_global_share;
    }
    out.recompute_totals();
    Ok(out)
}
