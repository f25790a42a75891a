//! Per-region transforms into `[0, 1]`: a clamped midrank ECDF for
//! continuous columns, frequency-ordered label encoding for categorical
//! ones, and median/mode imputation of residual gaps.
//!
//! Label encoding places unordered categories on a line, so the Euclidean
//! distance sees an order between them that the data does not have.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};

use crate::cluster::FeatureMatrix;
use crate::dataset::{Column, ColumnKind, ColumnTable, TableSchema};
use crate::eda::DenseInterval;
use crate::error::{Error, Result};

/// Clamped midrank ECDF, re-anchored so the training extremes map to 0 and 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerModel {
    pub column: String,
    pub lo: f64,
    pub hi: f64,
    /// Distinct clamped training values, ascending.
    pub values: Vec<f64>,
    /// Number of training values strictly below `values[i]`, plus a final
    /// entry holding the sample size.
    pub below: Vec<usize>,
    pub y_min: f64,
    pub y_max: f64,
}

impl NormalizerModel {
    pub fn n(&self) -> usize {
        *self.below.last().unwrap_or(&0)
    }

    /// Raw midrank score `(L + E/2) / n` of `x` after clamping.
    fn score(&self, x: f64) -> f64 {
        let x = x.clamp(self.lo, self.hi);
        let pos = self.values.partition_point(|&v| v < x);
        let less = self.below[pos];
        let equal = if pos < self.values.len() && self.values[pos] == x {
            self.below[pos + 1] - less
        } else {
            0
        };
        (less as f64 + 0.5 * equal as f64) / self.n() as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.y_max <= self.y_min
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::contract(format!(
                "non-finite input {x} to normalizer for \"{}\"",
                self.column
            )));
        }
        if self.is_degenerate() {
            return Ok(0.5);
        }
        let t = (self.score(x) - self.y_min) / (self.y_max - self.y_min);
        Ok(t.clamp(0.0, 1.0))
    }
}

/// Fits the normalizer on non-missing training values.
pub fn fit_normalizer(column: &str, values: &[f64], interval: &DenseInterval) -> Result<NormalizerModel> {
    if values.len() < 2 {
        return Err(Error::contract(format!(
            "normalizer for \"{column}\" needs at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("normalizer training values must be finite"));
    }
    if !(interval.lo <= interval.hi) {
        return Err(Error::contract("clamp interval has lo > hi"));
    }
    let mut clamped: Vec<f64> = values.iter().map(|v| v.clamp(interval.lo, interval.hi)).collect();
    clamped.sort_by(f64::total_cmp);

    let mut distinct = Vec::new();
    let mut below = Vec::new();
    for (i, &v) in clamped.iter().enumerate() {
        if distinct.last() != Some(&v) {
            distinct.push(v);
            below.push(i);
        }
    }
    below.push(clamped.len());

    let mut model = NormalizerModel {
        column: column.to_string(),
        lo: interval.lo,
        hi: interval.hi,
        values: distinct,
        below,
        y_min: 0.0,
        y_max: 0.0,
    };
    model.y_min = model.score(clamped[0]);
    model.y_max = model.score(clamped[clamped.len() - 1]);
    Ok(model)
}

pub fn apply_normalizer(model: &NormalizerModel, x: f64) -> Result<f64> {
    model.apply(x)
}

/// Categories indexed by descending training frequency, ties broken
/// lexicographically, and embedded as `index / (C − 1)`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EncoderModel {
    pub column: String,
    pub categories: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    #[serde(skip)]
    unseen: AtomicUsize,
}

impl Clone for EncoderModel {
    fn clone(&self) -> Self {
        Self {
            column: self.column.clone(),
            categories: self.categories.clone(),
            index: self.index.clone(),
            unseen: AtomicUsize::new(self.unseen.load(AtomicOrdering::Relaxed)),
        }
    }
}

impl PartialEq for EncoderModel {
    fn eq(&self, other: &Self) -> bool {
        self.column == other.column && self.categories == other.categories
    }
}

impl EncoderModel {
    fn from_categories(column: &str, categories: Vec<String>) -> Self {
        let index = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self {
            column: column.to_string(),
            categories,
            index,
            unseen: AtomicUsize::new(0),
        }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_categories(&self.column, self.categories)
    }

    pub fn cardinality(&self) -> usize {
        self.categories.len()
    }

    fn embed(&self, idx: usize) -> f64 {
        let c = self.cardinality();
        if c <= 1 {
            0.0
        } else {
            idx as f64 / (c - 1) as f64
        }
    }

    /// Embedding of `label`; unseen labels map to 1.0 and are counted.
    pub fn encode(&self, label: &str) -> f64 {
        match self.index.get(label) {
            Some(&i) => self.embed(i),
            None => {
                self.unseen.fetch_add(1, AtomicOrdering::Relaxed);
                1.0
            }
        }
    }

    pub fn unseen_count(&self) -> usize {
        self.unseen.load(AtomicOrdering::Relaxed)
    }
}

pub fn fit_label_encoding<'a>(
    column: &str,
    labels: impl IntoIterator<Item = &'a str>,
) -> Result<EncoderModel> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::contract(format!(
            "label encoder for \"{column}\" needs at least one value"
        )));
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(EncoderModel::from_categories(
        column,
        ranked.into_iter().map(|(l, _)| l.to_string()).collect(),
    ))
}

pub fn encode_categorical(model: &EncoderModel, label: &str) -> f64 {
    model.encode(label)
}

/// A region table with its residual gaps filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub table: ColumnTable,
    /// Columns with no values at all in the region, excluded from its features.
    pub dropped: Vec<String>,
}

/// Fills missing continuous cells with the column median and categorical
/// cells with the mode (lexicographic tiebreak). Entirely missing columns
/// are left as they are and listed in `dropped`.
pub fn impute_missing(region_table: &ColumnTable) -> Result<Imputed> {
    let schema = region_table.schema().clone();
    let mut dropped = Vec::new();
    let mut columns = Vec::with_capacity(schema.len());
    for (spec, col) in schema.columns().iter().zip(region_table.columns()) {
        if col.missing_count() == col.len() {
            dropped.push(spec.name.clone());
            columns.push(col.clone());
            continue;
        }
        if col.missing_count() == 0 {
            columns.push(col.clone());
            continue;
        }
        let filled = match spec.kind {
            ColumnKind::Continuous => {
                let fill = median(&col.present_f64());
                Column::from_continuous((0..col.len()).map(|r| Some(col.f64_at(r).unwrap_or(fill))))?
            }
            ColumnKind::Categorical => {
                let fill = mode(col.present_labels()).to_string();
                Column::from_categorical(
                    (0..col.len()).map(|r| Some(col.label_at(r).unwrap_or(&fill).to_string())),
                )
            }
        };
        columns.push(filled);
    }
    Ok(Imputed {
        table: ColumnTable::new(schema, columns)?,
        dropped,
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub(crate) fn mode<'a>(labels: impl IntoIterator<Item = &'a str>) -> &'a str {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(l, _)| l)
        .unwrap_or("")
}

/// Fitted transform for one feature column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeatureTransform {
    Normalizer(NormalizerModel),
    Encoder(EncoderModel),
}

impl FeatureTransform {
    pub fn column(&self) -> &str {
        match self {
            FeatureTransform::Normalizer(m) => &m.column,
            FeatureTransform::Encoder(m) => &m.column,
        }
    }
}

/// Everything needed to score new rows of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformBundle {
    pub spec_version: String,
    pub features: Vec<FeatureTransform>,
    pub dropped: Vec<String>,
}

impl TransformBundle {
    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.column().to_string()).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut b: Self = serde_json::from_str(text)?;
        for f in &mut b.features {
            if let FeatureTransform::Encoder(e) = f {
                *e = e.clone().reindex();
            }
        }
        Ok(b)
    }

    /// Maps an imputed table into the feature space. Every referenced
    /// column must be fully populated.
    pub fn transform(&self, table: &ColumnTable) -> Result<FeatureMatrix> {
        let schema: &TableSchema = table.schema();
        let cols: Vec<&Column> = self
            .features
            .iter()
            .map(|f| Ok(table.column_at(schema.index_of(f.column())?)))
            .collect::<Result<_>>()?;
        let d = cols.len();
        let mut data = Vec::with_capacity(table.n_rows() * d);
        for r in 0..table.n_rows() {
            for (f, col) in self.features.iter().zip(&cols) {
                let v = match f {
                    FeatureTransform::Normalizer(m) => m.apply(col.f64_at(r).ok_or_else(|| {
                        Error::contract(format!("missing value in \"{}\" row {r}", m.column))
                    })?)?,
                    FeatureTransform::Encoder(m) => m.encode(col.label_at(r).ok_or_else(|| {
                        Error::contract(format!("missing value in \"{}\" row {r}", m.column))
                    })?),
                };
                data.push(v);
            }
        }
        FeatureMatrix::new(table.n_rows(), d, data)
    }
}

/// Fits per-column transforms on an imputed region table. Continuous
/// columns are clamped to their central `central_mass` quantile interval
/// (or their full range when there are fewer than 10 values).
pub fn fit_transforms(imputed: &Imputed, central_mass: f64) -> Result<TransformBundle> {
    let table = &imputed.table;
    let mut features = Vec::new();
    for (spec, col) in table.schema().columns().iter().zip(table.columns()) {
        if imputed.dropped.contains(&spec.name) {
            continue;
        }
        match spec.kind {
            ColumnKind::Continuous => {
                let values = col.present_f64();
                if values.len() < 2 {
                    let only = values.first().copied().unwrap_or(0.0);
                    let interval = DenseInterval {
                        column: spec.name.clone(),
                        lo: only,
                        hi: only,
                    };
                    features.push(FeatureTransform::Normalizer(fit_normalizer(
                        &spec.name,
                        &[only, only],
                        &interval,
                    )?));
                    continue;
                }
                let interval = if values.len() >= crate::eda::MIN_DENSE_VALUES {
                    crate::eda::dense_interval_of(&spec.name, &values, central_mass)?
                } else {
                    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    DenseInterval {
                        column: spec.name.clone(),
                        lo,
                        hi,
                    }
                };
                features.push(FeatureTransform::Normalizer(fit_normalizer(
                    &spec.name, &values, &interval,
                )?));
            }
            ColumnKind::Categorical => {
                features.push(FeatureTransform::Encoder(fit_label_encoding(
                    &spec.name,
                    col.present_labels(),
                )?));
            }
        }
    }
    Ok(TransformBundle {
        spec_version: crate::FORMAT_VERSION.to_string(),
        features,
        dropped: imputed.dropped.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_table, ColumnSpec};
    use proptest::prelude::*;

    fn whole(values: &[f64]) -> DenseInterval {
        DenseInterval {
            column: "x".into(),
            lo: values.iter().copied().fold(f64::INFINITY, f64::min),
            hi: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    #[test]
    fn midrank_hand_values() {
        let train = [10.0, 20.0, 30.0, 40.0];
        let m = fit_normalizer("x", &train, &whole(&train)).unwrap();
        // y(20) = 1.5/4, y_min = 0.5/4, y_max = 3.5/4
        assert!((m.y_min - 0.125).abs() < 1e-15);
        assert!((m.y_max - 0.875).abs() < 1e-15);
        assert!((m.apply(20.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.apply(10.0).unwrap(), 0.0);
        assert_eq!(m.apply(40.0).unwrap(), 1.0);
    }

    #[test]
    fn clamp_then_midrank() {
        let train = [1.0, 2.0, 2.0, 3.0];
        let iv = DenseInterval {
            column: "x".into(),
            lo: 1.0,
            hi: 3.0,
        };
        let m = fit_normalizer("x", &train, &iv).unwrap();
        assert_eq!(m.apply(100.0).unwrap(), 1.0);
        assert_eq!(m.apply(-100.0).unwrap(), 0.0);
        assert_eq!(m.apply(2.0).unwrap(), 0.5);
    }

    #[test]
    fn odd_median_maps_to_half() {
        let train = [3.0, -1.0, 7.5, 0.2, 9.0, 4.4, 100.0];
        let m = fit_normalizer("x", &train, &whole(&train)).unwrap();
        assert_eq!(m.apply(4.4).unwrap(), 0.5);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let m = fit_normalizer("x", &[5.0, 5.0, 5.0], &whole(&[5.0])).unwrap();
        assert!(m.is_degenerate());
        assert_eq!(m.apply(-3.0).unwrap(), 0.5);
        assert_eq!(m.apply(5.0).unwrap(), 0.5);
    }

    #[test]
    fn normalizer_errors() {
        assert!(fit_normalizer("x", &[1.0], &whole(&[1.0])).is_err());
        let m = fit_normalizer("x", &[1.0, 2.0], &whole(&[1.0, 2.0])).unwrap();
        assert!(m.apply(f64::NAN).is_err());
        assert!(m.apply(f64::INFINITY).is_err());
    }

    #[test]
    fn encoder_rules() {
        let labels: Vec<&str> = std::iter::repeat_n("yoga", 50)
            .chain(std::iter::repeat_n("spin", 30))
            .chain(std::iter::repeat_n("swim", 20))
            .collect();
        let e = fit_label_encoding("act", labels).unwrap();
        assert_eq!(e.encode("yoga"), 0.0);
        assert_eq!(e.encode("spin"), 0.5);
        assert_eq!(e.encode("swim"), 1.0);
        assert_eq!(e.unseen_count(), 0);
        assert_eq!(e.encode("pilates"), 1.0);
        assert_eq!(e.unseen_count(), 1);

        let single = fit_label_encoding("act", ["only"]).unwrap();
        assert_eq!(single.encode("only"), 0.0);

        let tie = fit_label_encoding("act", ["b", "a", "b", "a"]).unwrap();
        assert_eq!(tie.encode("a"), 0.0);
        assert_eq!(tie.encode("b"), 1.0);
        assert!(fit_label_encoding("act", std::iter::empty()).is_err());
    }

    #[test]
    fn imputation_rules() {
        let schema = TableSchema::new(vec![
            ColumnSpec::continuous("x"),
            ColumnSpec::categorical("c"),
            ColumnSpec::continuous("gone"),
        ])
        .unwrap();
        let t = parse_table("x,c,gone\n1,a,\n,a,\n3,b,\n4,,", &schema).unwrap();
        let imp = impute_missing(&t).unwrap();
        // median of {1, 3, 4} is 3
        assert_eq!(
            imp.table.column("x").unwrap().present_f64(),
            vec![1.0, 3.0, 3.0, 4.0]
        );
        assert_eq!(imp.table.column("c").unwrap().label_at(3), Some("a"));
        assert_eq!(imp.dropped, vec!["gone".to_string()]);

        let t = parse_table("x,c,gone\n1,a,1\n,b,1\n3,b,1", &schema).unwrap();
        let imp = impute_missing(&t).unwrap();
        assert_eq!(imp.table.column("x").unwrap().f64_at(1), Some(2.0));
        assert!(imp.dropped.is_empty());

        let bundle = fit_transforms(&imp, 0.98).unwrap();
        assert_eq!(bundle.feature_names(), vec!["x", "c", "gone"]);
        let fm = bundle.transform(&imp.table).unwrap();
        assert_eq!(fm.n_rows(), 3);
        assert!(fm.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn mode_tiebreak_is_lexicographic() {
        assert_eq!(mode(["b", "a", "b", "a"]), "a");
        assert_eq!(mode(["a", "a", "b"]), "a");
    }

    #[test]
    fn bundle_json_round_trip() {
        let schema =
            TableSchema::new(vec![ColumnSpec::continuous("x"), ColumnSpec::categorical("c")]).unwrap();
        let t = parse_table("x,c\n1,a\n2,b\n3,b\n7,c", &schema).unwrap();
        let imp = impute_missing(&t).unwrap();
        let bundle = fit_transforms(&imp, 0.98).unwrap();
        let text = serde_json::to_string(&bundle).unwrap();
        let back = TransformBundle::from_json(&text).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.transform(&t).unwrap(), bundle.transform(&t).unwrap());
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            train in proptest::collection::vec(-1e3f64..1e3, 2..60),
            a in -2e3f64..2e3,
            b in -2e3f64..2e3,
        ) {
            let m = fit_normalizer("x", &train, &whole(&train)).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (tl, th) = (m.apply(lo).unwrap(), m.apply(hi).unwrap());
            prop_assert!((0.0..=1.0).contains(&tl) && (0.0..=1.0).contains(&th));
            prop_assert!(tl <= th);
        }

        #[test]
        fn invariant_under_monotone_maps(
            train in proptest::collection::vec(-20i32..20, 2..40),
            q in -25i32..25,
        ) {
            let xs: Vec<f64> = train.iter().map(|&v| v as f64).collect();
            let cubed: Vec<f64> = xs.iter().map(|v| v * v * v + 1.0).collect();
            let iv = whole(&xs);
            let iv3 = DenseInterval { column: "x".into(), lo: iv.lo.powi(3) + 1.0, hi: iv.hi.powi(3) + 1.0 };
            let m = fit_normalizer("x", &xs, &iv).unwrap();
            let m3 = fit_normalizer("x", &cubed, &iv3).unwrap();
            let qf = q as f64;
            prop_assert_eq!(m.apply(qf).unwrap(), m3.apply(qf * qf * qf + 1.0).unwrap());
        }
    }
}
