//! Typed columnar tables with an explicit per-cell missing mask.
//!
//! Cells flagged missing hold a placeholder (`0.0` or the empty string) that
//! is never exposed: accessors return `None` for them.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinels that mark a missing cell in CSV input. Case-sensitive.
pub const MISSING_SENTINELS: [&str; 2] = ["", "NA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Participates in region partitioning.
    #[serde(default)]
    pub split_variable: bool,
}

impl ColumnSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            split_variable: false,
        }
    }

    pub fn categorical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            split_variable: false,
        }
    }

    pub fn split(mut self) -> Self {
        self.split_variable = true;
        self
    }
}

/// Ordered column list. Column order defines feature indexing downstream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableSchema {
    columns: Vec<ColumnSpec>,
}

#[derive(Deserialize)]
struct SchemaDoc {
    #[serde(default)]
    #[allow(dead_code)]
    spec_version: Option<String>,
    columns: Vec<ColumnSpec>,
}

impl<'de> Deserialize<'de> for TableSchema {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let doc = SchemaDoc::deserialize(de)?;
        TableSchema::new(doc.columns).map_err(serde::de::Error::custom)
    }
}

impl TableSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::Schema("empty column name".into()));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column \"{}\"", c.name)));
            }
        }
        if !columns.iter().any(|c| !c.split_variable) {
            return Err(Error::Schema(
                "schema needs at least one non-split variable".into(),
            ));
        }
        Ok(Self { columns })
    }

    /// Reads a schema JSON document: `{"columns": [{name, kind, split_variable}, ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            spec_version: &'a str,
            columns: &'a [ColumnSpec],
        }
        Ok(serde_json::to_string_pretty(&Out {
            spec_version: crate::FORMAT_VERSION,
            columns: &self.columns,
        })?)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn split_variables(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.split_variable)
            .map(|c| c.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Continuous(Vec<f64>),
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    values: ColumnValues,
    missing: Vec<bool>,
}

impl Column {
    /// Builds a continuous column; `None` marks a missing cell.
    pub fn from_continuous(cells: impl IntoIterator<Item = Option<f64>>) -> Result<Self> {
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for cell in cells {
            match cell {
                Some(v) if !v.is_finite() => return Err(Error::contract("continuous cells must be finite")),
                Some(v) => {
                    values.push(v);
                    missing.push(false);
                }
                None => {
                    values.push(0.0);
                    missing.push(true);
                }
            }
        }
        Ok(Self {
            values: ColumnValues::Continuous(values),
            missing,
        })
    }

    pub fn from_categorical<S: Into<String>>(cells: impl IntoIterator<Item = Option<S>>) -> Self {
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for cell in cells {
            match cell {
                Some(v) => {
                    values.push(v.into());
                    missing.push(false);
                }
                None => {
                    values.push(String::new());
                    missing.push(true);
                }
            }
        }
        Self {
            values: ColumnValues::Categorical(values),
            missing,
        }
    }

    pub fn len(&self) -> usize {
        self.missing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn kind(&self) -> ColumnKind {
        match self.values {
            ColumnValues::Continuous(_) => ColumnKind::Continuous,
            ColumnValues::Categorical(_) => ColumnKind::Categorical,
        }
    }

    pub fn missing(&self) -> &[bool] {
        &self.missing
    }

    pub fn is_missing(&self, row: usize) -> bool {
        self.missing[row]
    }

    pub fn n_present(&self) -> usize {
        self.len() - self.missing_count()
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn f64_at(&self, row: usize) -> Option<f64> {
        match &self.values {
            ColumnValues::Continuous(v) if !self.missing[row] => Some(v[row]),
            _ => None,
        }
    }

    pub fn label_at(&self, row: usize) -> Option<&str> {
        match &self.values {
            ColumnValues::Categorical(v) if !self.missing[row] => Some(v[row].as_str()),
            _ => None,
        }
    }

    /// Non-missing continuous values in row order. Empty for categorical columns.
    pub fn present_f64(&self) -> Vec<f64> {
        match &self.values {
            ColumnValues::Continuous(v) => v
                .iter()
                .zip(&self.missing)
                .filter(|(_, &m)| !m)
                .map(|(&x, _)| x)
                .collect(),
            ColumnValues::Categorical(_) => Vec::new(),
        }
    }

    /// Non-missing labels in row order. Empty for continuous columns.
    pub fn present_labels(&self) -> Vec<&str> {
        match &self.values {
            ColumnValues::Categorical(v) => v
                .iter()
                .zip(&self.missing)
                .filter(|(_, &m)| !m)
                .map(|(x, _)| x.as_str())
                .collect(),
            ColumnValues::Continuous(_) => Vec::new(),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        let missing = rows.iter().map(|&r| self.missing[r]).collect();
        let values = match &self.values {
            ColumnValues::Continuous(v) => ColumnValues::Continuous(rows.iter().map(|&r| v[r]).collect()),
            ColumnValues::Categorical(v) => {
                ColumnValues::Categorical(rows.iter().map(|&r| v[r].clone()).collect())
            }
        };
        Self { values, missing }
    }

    fn render(&self, row: usize) -> String {
        if self.missing[row] {
            return String::new();
        }
        match &self.values {
            ColumnValues::Continuous(v) => format!("{}", v[row]),
            ColumnValues::Categorical(v) => v[row].clone(),
        }
    }
}

/// Immutable columnar table.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnTable {
    schema: TableSchema,
    n_rows: usize,
    columns: Vec<Column>,
}

impl ColumnTable {
    pub fn new(schema: TableSchema, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::contract(format!(
                "schema has {} columns, got {}",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.columns().iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::contract(format!(
                    "column \"{}\" has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            if col.kind() != spec.kind {
                return Err(Error::Schema(format!(
                    "column \"{}\" declared {:?} but holds {:?} values",
                    spec.name,
                    spec.kind,
                    col.kind()
                )));
            }
        }
        Ok(Self {
            schema,
            n_rows,
            columns,
        })
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        Ok(&self.columns[self.schema.index_of(name)?])
    }

    pub fn column_at(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    /// `true` at row i iff the column has a value there.
    pub fn availability_mask(&self, column: &str) -> Result<Vec<bool>> {
        Ok(self.column(column)?.missing.iter().map(|&m| !m).collect())
    }

    /// Keeps the rows where `keep` is true, in order.
    pub fn select_rows(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.n_rows {
            return Err(Error::contract(format!(
                "row mask has length {}, table has {} rows",
                keep.len(),
                self.n_rows
            )));
        }
        let rows: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|(_, &k)| k)
            .map(|(i, _)| i)
            .collect();
        Ok(self.take_rows(&rows))
    }

    /// Gathers the given row indices in order. Indices must be in range.
    pub fn take_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            n_rows: rows.len(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
        }
    }

    /// Parses CSV with a mandatory header. Columns are matched by header
    /// name; extra CSV columns are ignored. Row numbers in errors are
    /// 1-based data rows.
    pub fn parse_csv<R: Read>(reader: R, schema: &TableSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        let positions: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
        let mut source = Vec::with_capacity(schema.len());
        for spec in schema.columns() {
            match positions.get(spec.name.as_str()) {
                Some(&p) => source.push(p),
                None => {
                    return Err(Error::Schema(format!(
                        "CSV header lacks column \"{}\"",
                        spec.name
                    )))
                }
            }
        }

        let mut continuous: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.len()];
        let mut categorical: Vec<Vec<Option<String>>> = vec![Vec::new(); schema.len()];
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            for (c, spec) in schema.columns().iter().enumerate() {
                let raw = record.get(source[c]).unwrap_or("");
                let is_missing = MISSING_SENTINELS.contains(&raw);
                match spec.kind {
                    ColumnKind::Continuous => {
                        let cell = if is_missing {
                            None
                        } else {
                            let v: f64 = raw.trim().parse().map_err(|_| Error::Parse {
                                row,
                                column: spec.name.clone(),
                                message: format!("\"{raw}\" is not a number"),
                            })?;
                            if !v.is_finite() {
                                return Err(Error::Parse {
                                    row,
                                    column: spec.name.clone(),
                                    message: format!("\"{raw}\" is not finite"),
                                });
                            }
                            Some(v)
                        };
                        continuous[c].push(cell);
                    }
                    ColumnKind::Categorical => {
                        categorical[c].push((!is_missing).then(|| raw.to_string()));
                    }
                }
            }
        }

        let columns = schema
            .columns()
            .iter()
            .enumerate()
            .map(|(c, spec)| match spec.kind {
                ColumnKind::Continuous => Column::from_continuous(std::mem::take(&mut continuous[c])),
                ColumnKind::Categorical => Ok(Column::from_categorical(std::mem::take(&mut categorical[c]))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema.clone(), columns)
    }

    pub fn parse_str(text: &str, schema: &TableSchema) -> Result<Self> {
        Self::parse_csv(text.as_bytes(), schema)
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(std::io::BufReader::new(file), schema)
    }

    /// Writes the table as CSV; missing cells become empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.schema.columns().iter().map(|c| c.name.as_str()))?;
        for row in 0..self.n_rows {
            wtr.write_record(self.columns.iter().map(|c| c.render(row)))?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Parses `csv_text` against `schema`.
pub fn parse_table(csv_text: &str, schema: &TableSchema) -> Result<ColumnTable> {
    ColumnTable::parse_str(csv_text, schema)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn age_sex() -> TableSchema {
        TableSchema::new(vec![
            ColumnSpec::continuous("age"),
            ColumnSpec::categorical("sex"),
        ])
        .unwrap()
    }

    #[test]
    fn empty_field_is_missing() {
        let t = parse_table("age,sex\n30,M\n,F", &age_sex()).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column("age").unwrap().missing(), &[false, true]);
        assert_eq!(t.column("age").unwrap().f64_at(0), Some(30.0));
        assert_eq!(t.column("age").unwrap().f64_at(1), None);
    }

    #[test]
    fn na_sentinel_in_categorical() {
        let t = parse_table("age,sex\n30,NA\n31,na", &age_sex()).unwrap();
        let sex = t.column("sex").unwrap();
        assert_eq!(sex.missing(), &[true, false]);
        assert_eq!(sex.label_at(1), Some("na"));
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let err = parse_table("age,sex\nabc,M", &age_sex()).unwrap_err();
        match err {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_must_cover_schema() {
        let err = parse_table("age\n30", &age_sex()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn header_order_and_extras_ignored() {
        let t = parse_table("extra,sex,age\nx,F,4\ny,M,5", &age_sex()).unwrap();
        assert_eq!(t.column("age").unwrap().present_f64(), vec![4.0, 5.0]);
        assert_eq!(t.column("sex").unwrap().present_labels(), vec!["F", "M"]);
    }

    #[test]
    fn schema_rejects_duplicates_and_all_split() {
        let dup = TableSchema::new(vec![ColumnSpec::continuous("a"), ColumnSpec::continuous("a")]);
        assert!(dup.is_err());
        let all_split = TableSchema::new(vec![ColumnSpec::continuous("a").split()]);
        assert!(all_split.is_err());
    }

    #[test]
    fn schema_json() {
        let s = TableSchema::from_json(
            r#"{"columns":[{"name":"a","kind":"continuous","split_variable":true},
                           {"name":"b","kind":"categorical"}]}"#,
        )
        .unwrap();
        assert_eq!(s.split_variables(), vec!["a".to_string()]);
        assert_eq!(TableSchema::from_json(&s.to_json().unwrap()).unwrap(), s);
    }

    #[test]
    fn availability_masks() {
        let t = parse_table("age,sex\n,M\n2,F\n,F", &age_sex()).unwrap();
        assert_eq!(t.availability_mask("age").unwrap(), vec![false, true, false]);
        assert_eq!(t.availability_mask("sex").unwrap(), vec![true; 3]);
        let t = parse_table("age,sex\n,M\n,F", &age_sex()).unwrap();
        assert_eq!(t.availability_mask("age").unwrap(), vec![false; 2]);
        assert!(matches!(
            t.availability_mask("nope"),
            Err(Error::UnknownColumn(_))
        ));
    }

    #[test]
    fn select_rows_cases() {
        let t = parse_table("age,sex\n1,a\n,b\n3,NA", &age_sex()).unwrap();
        assert_eq!(t.select_rows(&[true; 3]).unwrap(), t);
        let none = t.select_rows(&[false; 3]).unwrap();
        assert_eq!(none.n_rows(), 0);
        assert_eq!(none.schema(), t.schema());
        let sub = t.select_rows(&[true, false, true]).unwrap();
        assert_eq!(sub.column("age").unwrap().present_f64(), vec![1.0, 3.0]);
        assert_eq!(sub.column("sex").unwrap().missing(), &[false, true]);
        assert!(t.select_rows(&[true]).is_err());
    }

    fn arb_table() -> impl Strategy<Value = ColumnTable> {
        let row = (
            proptest::option::of(-1e6f64..1e6),
            proptest::option::of("[a-z ,\"]{1,6}"),
        );
        proptest::collection::vec(row, 0..40).prop_map(|rows| {
            let age = Column::from_continuous(rows.iter().map(|r| r.0)).unwrap();
            let sex = Column::from_categorical(rows.iter().map(|r| r.1.clone()));
            ColumnTable::new(age_sex(), vec![age, sex]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(t in arb_table()) {
            let text = t.to_csv_string().unwrap();
            let back = parse_table(&text, &age_sex()).unwrap();
            prop_assert_eq!(back, t);
        }

        #[test]
        fn select_count_and_mask_negation(
            t in arb_table(),
            bits in proptest::collection::vec(any::<bool>(), 40),
        ) {
            let keep = &bits[..t.n_rows()];
            let sub = t.select_rows(keep).unwrap();
            prop_assert_eq!(sub.n_rows(), keep.iter().filter(|&&b| b).count());
            let avail = t.availability_mask("age").unwrap();
            let missing = t.column("age").unwrap().missing();
            prop_assert!(avail.iter().zip(missing).all(|(a, m)| *a != *m));
        }
    }
}
