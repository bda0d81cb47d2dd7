//! Tabular dataset loading and vertical-split preprocessing.
//!
//! Input is a CSV file with a header row plus a schema file assigning every
//! column to the label, the task party or the data party. String-valued
//! columns expand to one indicator column per distinct value; the indicator
//! group of an original feature always stays on that feature's party.
//! Missing numeric cells are imputed with the column mean, missing
//! categorical cells encode as an all-zero indicator row.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema: {0}")]
    Schema(String),
    #[error("label column {0:?} is not binary")]
    LabelNotBinary(String),
    #[error("column {0:?} has no usable values")]
    EmptyColumn(String),
    #[error("dataset has no rows")]
    NoRows,
}

/// Column-role assignment read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub label: String,
    pub task: Vec<String>,
    pub data: Vec<String>,
    /// Columns to drop (row ids and such).
    #[serde(default)]
    pub ignore: Vec<String>,
}

impl DatasetSchema {
    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| DatasetError::Schema(e.to_string()))
    }
}

/// One original feature and the preprocessed columns it expanded into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGroup {
    pub name: String,
    pub cols: Range<usize>,
}

/// One party's preprocessed feature matrix, row-major.
#[derive(Debug, Clone)]
pub struct FeatureBlock {
    pub column_names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    values: Vec<f64>,
}

impl FeatureBlock {
    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.width();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn group(&self, name: &str) -> Option<&FeatureGroup> {
        self.groups.iter().find(|g| g.name == name)
    }
}

/// Vertically split binary-label dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n_rows: usize,
    pub task: FeatureBlock,
    pub data: FeatureBlock,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn load(csv_path: &Path, schema: &DatasetSchema) -> Result<Self, DatasetError> {
        let reader = csv::ReaderBuilder::new().flexible(false).from_path(csv_path)?;
        Self::from_reader(reader, schema)
    }

    pub fn from_csv_str(text: &str, schema: &DatasetSchema) -> Result<Self, DatasetError> {
        let reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
        Self::from_reader(reader, schema)
    }

    fn from_reader<R: std::io::Read>(
        mut reader: csv::Reader<R>,
        schema: &DatasetSchema,
    ) -> Result<Self, DatasetError> {
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut columns: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record?;
            for (i, field) in record.iter().enumerate() {
                columns[i].push(field.trim().to_string());
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if n_rows == 0 {
            return Err(DatasetError::NoRows);
        }
        Self::from_columns(&headers, &columns, schema)
    }

    fn from_columns(
        headers: &[String],
        columns: &[Vec<String>],
        schema: &DatasetSchema,
    ) -> Result<Self, DatasetError> {
        let find = |name: &String| -> Result<usize, DatasetError> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| DatasetError::Schema(format!("column {name:?} not in CSV header")))
        };

        // every header column must have exactly one role
        let mut assigned = BTreeSet::new();
        for name in std::iter::once(&schema.label)
            .chain(&schema.task)
            .chain(&schema.data)
            .chain(&schema.ignore)
        {
            find(name)?;
            if !assigned.insert(name.as_str()) {
                return Err(DatasetError::Schema(format!("column {name:?} assigned twice")));
            }
        }
        if let Some(unassigned) = headers.iter().find(|h| !assigned.contains(h.as_str())) {
            return Err(DatasetError::Schema(format!(
                "column {unassigned:?} has no role (label/task/data/ignore)"
            )));
        }

        let labels = parse_labels(&schema.label, &columns[find(&schema.label)?])?;
        let task = build_block(&schema.task, headers, columns)?;
        let data = build_block(&schema.data, headers, columns)?;
        Ok(Self { n_rows: labels.len(), task, data, labels })
    }
}

fn is_missing(raw: &str) -> bool {
    raw.is_empty() || raw == "?" || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("null")
}

fn parse_labels(name: &str, raw: &[String]) -> Result<Vec<u8>, DatasetError> {
    // numeric 0/1 first; otherwise any two distinct values map by sort order
    let as_num: Option<Vec<u8>> = raw
        .iter()
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x == 0.0 => Some(0),
            Ok(x) if x == 1.0 => Some(1),
            _ => None,
        })
        .collect();
    if let Some(v) = as_num {
        return Ok(v);
    }
    let distinct: BTreeSet<&String> = raw.iter().collect();
    if distinct.len() != 2 {
        return Err(DatasetError::LabelNotBinary(name.to_string()));
    }
    let zero = distinct.iter().next().unwrap().as_str();
    Ok(raw.iter().map(|v| u8::from(v != zero)).collect())
}

fn build_block(
    names: &[String],
    headers: &[String],
    columns: &[Vec<String>],
) -> Result<FeatureBlock, DatasetError> {
    let mut column_names = Vec::new();
    let mut groups = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();

    for name in names {
        let idx = headers.iter().position(|h| h == name).unwrap();
        let raw = &columns[idx];
        let start = column_names.len();

        let numeric: Option<Vec<Option<f64>>> = raw
            .iter()
            .map(|v| {
                if is_missing(v) {
                    Some(None)
                } else {
                    v.parse::<f64>().ok().map(Some)
                }
            })
            .collect();

        match numeric {
            Some(vals) => {
                let present: Vec<f64> = vals.iter().flatten().copied().collect();
                if present.is_empty() {
                    return Err(DatasetError::EmptyColumn(name.clone()));
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                cols.push(vals.into_iter().map(|v| v.unwrap_or(mean)).collect());
                column_names.push(name.clone());
            }
            None => {
                let distinct: BTreeSet<&str> = raw
                    .iter()
                    .filter(|v| !is_missing(v))
                    .map(String::as_str)
                    .collect();
                if distinct.is_empty() {
                    return Err(DatasetError::EmptyColumn(name.clone()));
                }
                for value in &distinct {
                    cols.push(raw.iter().map(|v| f64::from(v == value)).collect());
                    column_names.push(format!("{name}={value}"));
                }
            }
        }
        groups.push(FeatureGroup { name: name.clone(), cols: start..column_names.len() });
    }

    // transpose to row-major
    let n = columns.first().map_or(0, Vec::len);
    let d = cols.len();
    let mut values = vec![0.0; n * d];
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[i * d + j] = v;
        }
    }
    Ok(FeatureBlock { column_names, groups, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(label: &str, task: &[&str], data: &[&str]) -> DatasetSchema {
        DatasetSchema {
            label: label.into(),
            task: task.iter().map(|s| s.to_string()).collect(),
            data: data.iter().map(|s| s.to_string()).collect(),
            ignore: vec![],
        }
    }

    fn load_str(csv: &str, schema: &DatasetSchema) -> Result<Dataset, DatasetError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, csv).unwrap();
        Dataset::load(&path, schema)
    }

    #[test]
    fn expands_categoricals_and_imputes_means() {
        let csv = "y,age,color,city\n1,10,red,a\n0,,blue,b\n1,30,red,a\n";
        let ds = load_str(csv, &schema("y", &["age"], &["color", "city"])).unwrap();
        assert_eq!(ds.n_rows, 3);
        assert_eq!(ds.labels, vec![1, 0, 1]);
        assert_eq!(ds.task.column_names, vec!["age"]);
        // missing age imputed with (10+30)/2
        assert_eq!(ds.task.row(1), &[20.0]);
        assert_eq!(
            ds.data.column_names,
            vec!["color=blue", "color=red", "city=a", "city=b"]
        );
        assert_eq!(ds.data.row(0), &[0.0, 1.0, 1.0, 0.0]);
        let color = ds.data.group("color").unwrap();
        assert_eq!(color.cols, 0..2);
    }

    #[test]
    fn missing_categorical_encodes_as_zero_row() {
        let csv = "y,c\n1,x\n0,\n1,z\n";
        let ds = load_str(csv, &schema("y", &["c"], &["c"])).err();
        assert!(ds.is_some()); // column assigned twice

        let csv2 = "y,a,c\n1,1,x\n0,2,\n1,3,z\n";
        let ds = load_str(csv2, &schema("y", &["a"], &["c"])).unwrap();
        assert_eq!(ds.data.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn string_labels_map_by_sort_order() {
        let csv = "inc,a\n>50K,1\n<=50K,2\n>50K,3\n";
        let ds = load_str(csv, &schema("inc", &["a"], &["a"])).err();
        assert!(ds.is_some());
        let csv = "inc,a,b\n>50K,1,1\n<=50K,2,0\n>50K,3,1\n";
        let ds = load_str(csv, &schema("inc", &["a"], &["b"])).unwrap();
        // "<=50K" sorts before ">50K"
        assert_eq!(ds.labels, vec![1, 0, 1]);
    }

    #[test]
    fn schema_validation_errors() {
        let csv = "y,a,b\n1,1,2\n0,2,1\n";
        assert!(load_str(csv, &schema("y", &["a", "missing"], &["b"])).is_err());
        // unassigned column
        assert!(load_str(csv, &schema("y", &["a"], &[])).is_err());
        // non-binary label
        let csv3 = "y,a,b\nx,1,2\nz,2,1\nw,3,3\n";
        assert!(matches!(
            load_str(csv3, &schema("y", &["a"], &["b"])),
            Err(DatasetError::LabelNotBinary(_))
        ));
    }

    #[test]
    fn single_column_constant_label_is_valid() {
        let csv = "y,a,b\n1,1,2\n1,2,1\n1,3,3\n";
        let ds = load_str(csv, &schema("y", &["a"], &["b"])).unwrap();
        assert!(ds.labels.iter().all(|&l| l == 1));
        assert_eq!(ds.task.width(), 1);
    }

    #[test]
    fn ignore_list_drops_columns() {
        let csv = "id,y,a,b\n7,1,1,2\n8,0,2,1\n";
        let mut s = schema("y", &["a"], &["b"]);
        s.ignore = vec!["id".into()];
        let ds = load_str(csv, &s).unwrap();
        assert_eq!(ds.task.column_names, vec!["a"]);
    }
}
