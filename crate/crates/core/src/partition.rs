//! Splits a corpus into disjoint regions by the presence pattern of a few
//! split variables.
//!
//! With `m` split variables there are `2^m` region slots. Slots are numbered
//! by descending binary value of the key, reading the first split variable as
//! the most significant bit: all-present is region 1, all-absent is region
//! `2^m`. Empty slots are kept.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::ColumnTable;
use crate::error::{Error, Result};

/// Default cap on the number of split variables.
pub const DEFAULT_MAX_SPLIT_VARS: usize = 5;

/// One presence bit per split variable, in split-variable order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionKey(Vec<bool>);

impl RegionKey {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Binary value with the first bit most significant.
    pub fn value(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | u64::from(b))
    }

    /// 1-based region label: `2^m − value`.
    pub fn region_index(&self) -> usize {
        (1usize << self.0.len()) - self.value() as usize
    }

    pub fn from_region_index(index: usize, m: usize) -> Result<Self> {
        let slots = 1usize << m;
        if index == 0 || index > slots {
            return Err(Error::contract(format!(
                "region index {index} out of range 1..={slots}"
            )));
        }
        let value = slots - index;
        Ok(Self((0..m).map(|i| value >> (m - 1 - i) & 1 == 1).collect()))
    }
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for RegionKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                _ => Err(Error::contract(format!("bad region key \"{s}\""))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl Serialize for RegionKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RegionKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub index: usize,
    pub key: RegionKey,
    pub rows: Vec<usize>,
    /// Fraction of all rows.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub split_vars: Vec<String>,
    pub n_rows: usize,
    /// Every slot, ordered by region index.
    pub regions: Vec<Region>,
}

impl RegionPartition {
    pub fn region(&self, index: usize) -> Option<&Region> {
        self.regions.get(index.checked_sub(1)?)
    }

    /// JSON summary: key, row count and share per region.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Entry<'a> {
            region: usize,
            key: &'a RegionKey,
            rows: usize,
            share: f64,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            spec_version: &'a str,
            split_vars: &'a [String],
            n_rows: usize,
            regions: Vec<Entry<'a>>,
        }
        let doc = Doc {
            spec_version: crate::FORMAT_VERSION,
            split_vars: &self.split_vars,
            n_rows: self.n_rows,
            regions: self
                .regions
                .iter()
                .map(|r| Entry {
                    region: r.index,
                    key: &r.key,
                    rows: r.rows.len(),
                    share: r.share,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

fn column_indices(table: &ColumnTable, split_vars: &[String]) -> Result<Vec<usize>> {
    if split_vars.is_empty() {
        return Err(Error::contract("at least one split variable is required"));
    }
    split_vars.iter().map(|v| table.schema().index_of(v)).collect()
}

/// Presence pattern of `split_vars` in `row`.
pub fn region_key(table: &ColumnTable, row: usize, split_vars: &[String]) -> Result<RegionKey> {
    if row >= table.n_rows() {
        return Err(Error::contract(format!("row {row} out of range")));
    }
    let cols = column_indices(table, split_vars)?;
    Ok(RegionKey(
        cols.iter()
            .map(|&c| !table.column_at(c).is_missing(row))
            .collect(),
    ))
}

/// Groups rows by region key, with at most [`DEFAULT_MAX_SPLIT_VARS`] split variables.
pub fn partition_regions(table: &ColumnTable, split_vars: &[String]) -> Result<RegionPartition> {
    partition_regions_capped(table, split_vars, DEFAULT_MAX_SPLIT_VARS)
}

pub fn partition_regions_capped(
    table: &ColumnTable,
    split_vars: &[String],
    max_split_vars: usize,
) -> Result<RegionPartition> {
    let cols = column_indices(table, split_vars)?;
    let m = cols.len();
    if m > max_split_vars {
        return Err(Error::config(format!(
            "{m} split variables exceed the cap of {max_split_vars}"
        )));
    }
    let slots = 1usize << m;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); slots];
    for row in 0..table.n_rows() {
        let value = cols.iter().fold(0usize, |acc, &c| {
            (acc << 1) | usize::from(!table.column_at(c).is_missing(row))
        });
        buckets[slots - 1 - value].push(row);
    }
    let n = table.n_rows();
    let regions = buckets
        .into_iter()
        .enumerate()
        .map(|(i, rows)| Region {
            index: i + 1,
            key: RegionKey::from_region_index(i + 1, m).expect("index in range"),
            share: if n == 0 { 0.0 } else { rows.len() as f64 / n as f64 },
            rows,
        })
        .collect();
    Ok(RegionPartition {
        split_vars: split_vars.to_vec(),
        n_rows: n,
        regions,
    })
}
