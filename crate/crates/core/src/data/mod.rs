//! Discrete datasets: validation, CSV ingestion, splitting, discretization
//! and ancestral sampling from a model.

mod discretize;
mod split;
mod synthetic;

pub use discretize::{quantile_discretize, DiscretizeReport};
pub use split::{split, split_indices, FoldKind, FoldSpec};
pub use synthetic::{random_bank, random_ordering, sample_from_model};

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// N samples of D category-valued features plus a class label.
///
/// Immutable after construction. Arity 1 is accepted so that constant
/// features survive discretization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteDataset {
    features: Vec<usize>,
    labels: Vec<usize>,
    arities: Vec<usize>,
    num_classes: usize,
    feature_names: Option<Vec<String>>,
}

impl DiscreteDataset {
    pub fn new(rows: Vec<Vec<usize>>, labels: Vec<usize>, arities: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = arities.len();
        if let Some(n) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "row {n} has {} features, expected {d}",
                rows[n].len()
            )));
        }
        let features = rows.into_iter().flatten().collect();
        DiscreteDataset::from_flat(features, labels, arities, num_classes)
    }

    /// `features` is row-major N×D.
    pub fn from_flat(features: Vec<usize>, labels: Vec<usize>, arities: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = arities.len();
        let n = labels.len();
        if n == 0 {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if d == 0 {
            return Err(Error::InvalidDataset("dataset has no features".into()));
        }
        if features.len() != n * d {
            return Err(Error::InvalidDataset(format!(
                "{} feature values for {n} samples of {d} features",
                features.len()
            )));
        }
        if arities.contains(&0) || num_classes == 0 {
            return Err(Error::InvalidDataset("arities and class count must be positive".into()));
        }
        for (idx, &v) in features.iter().enumerate() {
            let (row, col) = (idx / d, idx % d);
            if v >= arities[col] {
                return Err(Error::ValueOutOfRange {
                    row,
                    column: col,
                    value: v,
                    arity: arities[col],
                });
            }
        }
        if let Some(row) = labels.iter().position(|&c| c >= num_classes) {
            return Err(Error::ValueOutOfRange {
                row,
                column: d,
                value: labels[row],
                arity: num_classes,
            });
        }
        Ok(DiscreteDataset {
            features,
            labels,
            arities,
            num_classes,
            feature_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_features() {
            return Err(Error::InvalidDataset(format!(
                "{} names for {} features",
                names.len(),
                self.num_features()
            )));
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.arities.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn row(&self, n: usize) -> &[usize] {
        let d = self.arities.len();
        &self.features[n * d..(n + 1) * d]
    }

    pub fn label(&self, n: usize) -> usize {
        self.labels[n]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// New dataset with the given rows (repeats allowed), same metadata.
    pub fn subset(&self, indices: &[usize]) -> DiscreteDataset {
        let d = self.num_features();
        let mut features = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        DiscreteDataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            arities: self.arities.clone(),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
        }
    }

    /// Raises arities and class count to at least the given values, so that
    /// datasets from the same source agree on their shapes.
    pub fn widen(mut self, arities: &[usize], num_classes: usize) -> Result<Self> {
        if arities.len() != self.num_features() {
            return Err(Error::ShapeMismatch("arity vector length mismatch".into()));
        }
        for (a, &b) in self.arities.iter_mut().zip(arities) {
            *a = (*a).max(b);
        }
        self.num_classes = self.num_classes.max(num_classes);
        Ok(self)
    }

    /// Widens both datasets to the elementwise maximum of their shapes.
    pub fn harmonize(a: DiscreteDataset, b: DiscreteDataset) -> Result<(DiscreteDataset, DiscreteDataset)> {
        if a.num_features() != b.num_features() {
            return Err(Error::ShapeMismatch(format!(
                "datasets have {} and {} features",
                a.num_features(),
                b.num_features()
            )));
        }
        let arities: Vec<usize> = a.arities.iter().zip(&b.arities).map(|(x, y)| *x.max(y)).collect();
        let c = a.num_classes.max(b.num_classes);
        Ok((a.widen(&arities, c)?, b.widen(&arities, c)?))
    }
}

/// Which CSV column holds the label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

/// Sidecar describing how to read a CSV file. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    /// Defaults to the last column.
    #[serde(default)]
    pub label_column: Option<LabelColumn>,
    /// Detected from the first row when unset: a header has a non-numeric
    /// cell.
    #[serde(default)]
    pub has_header: Option<bool>,
    /// Declared arities per feature column; each must cover the observed values.
    #[serde(default)]
    pub arities: Option<Vec<usize>>,
    #[serde(default)]
    pub num_classes: Option<usize>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))
    }
}

/// Reads a CSV of non-negative integers.
///
/// Arities are inferred as `max + 1` unless the schema declares them; a
/// declared arity smaller than an observed value is an error.
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<DiscreteDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &Schema) -> Result<DiscreteDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let first = records.next().transpose().map_err(|e| Error::Parse {
        row: 1,
        column: 0,
        message: e.to_string(),
    })?;
    let has_header = schema
        .has_header
        .unwrap_or_else(|| first.as_ref().is_some_and(|r| r.iter().any(|c| c.parse::<f64>().is_err())));
    let header: Option<Vec<String>> = match (&first, has_header) {
        (Some(r), true) => Some(r.iter().map(str::to_owned).collect()),
        _ => None,
    };
    let body = first.filter(|_| !has_header).map(Ok).into_iter().chain(records);

    let mut cells: Vec<Vec<usize>> = Vec::new();
    for (i, record) in body.enumerate() {
        let line = i + 1 + usize::from(has_header);
        let record = record.map_err(|e| Error::Parse {
            row: line,
            column: 0,
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, cell)| {
                cell.parse::<usize>().map_err(|_| Error::Parse {
                    row: line,
                    column: col,
                    message: format!("expected a non-negative integer, found {cell:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(Error::Empty("CSV file has no data rows".into()));
    }
    let width = cells[0].len();
    if width < 2 {
        return Err(Error::InvalidDataset("need at least one feature column and a label column".into()));
    }

    let label_col = match &schema.label_column {
        None => width - 1,
        Some(LabelColumn::Index(i)) if *i < width => *i,
        Some(LabelColumn::Index(i)) => {
            return Err(Error::InvalidArgument(format!("label column {i} out of range")))
        }
        Some(LabelColumn::Name(name)) => header
            .as_ref()
            .and_then(|h| h.iter().position(|c| c == name))
            .ok_or_else(|| Error::InvalidArgument(format!("no column named {name:?}")))?,
    };
    let feature_cols: Vec<usize> = (0..width).filter(|&c| c != label_col).collect();
    let d = feature_cols.len();

    let mut observed = vec![0usize; d];
    let mut max_label = 0usize;
    let mut features = Vec::with_capacity(cells.len() * d);
    let mut labels = Vec::with_capacity(cells.len());
    for row in &cells {
        for (k, &col) in feature_cols.iter().enumerate() {
            observed[k] = observed[k].max(row[col] + 1);
            features.push(row[col]);
        }
        max_label = max_label.max(row[label_col]);
        labels.push(row[label_col]);
    }

    let arities = match &schema.arities {
        None => observed,
        Some(declared) if declared.len() == d => {
            for (k, (&dec, &obs)) in declared.iter().zip(&observed).enumerate() {
                if obs > dec {
                    let (n, value) = cells
                        .iter()
                        .enumerate()
                        .find(|(_, r)| r[feature_cols[k]] >= dec)
                        .map(|(n, r)| (n, r[feature_cols[k]]))
                        .expect("observed max exceeds declaration");
                    return Err(Error::ValueOutOfRange {
                        row: n + 1 + usize::from(has_header),
                        column: feature_cols[k],
                        value,
                        arity: dec,
                    });
                }
            }
            declared.clone()
        }
        Some(declared) => {
            return Err(Error::ShapeMismatch(format!(
                "schema declares {} arities for {d} feature columns",
                declared.len()
            )))
        }
    };
    let num_classes = match schema.num_classes {
        None => max_label + 1,
        Some(c) if c > max_label => c,
        Some(c) => {
            let n = labels.iter().position(|&l| l >= c).unwrap_or(0);
            return Err(Error::ValueOutOfRange {
                row: n + 1 + usize::from(has_header),
                column: label_col,
                value: labels[n],
                arity: c,
            });
        }
    };

    let ds = DiscreteDataset::from_flat(features, labels, arities, num_classes)?;
    match header {
        Some(h) => ds.with_feature_names(feature_cols.iter().map(|&c| h[c].clone()).collect()),
        None => Ok(ds),
    }
}

/// Writes features then the label as the last column, with a header.
pub fn write_csv(ds: &DiscreteDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(ds, file).map_err(|e| match e {
        Error::Serialization(m) => Error::Serialization(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_csv_to<W: std::io::Write>(ds: &DiscreteDataset, writer: W) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = match ds.feature_names() {
        Some(names) => names.to_vec(),
        None => (0..ds.num_features()).map(|i| format!("x{i}")).collect(),
    };
    header.push("label".into());
    w.write_record(&header).map_err(ser)?;
    let mut record = Vec::with_capacity(ds.num_features() + 1);
    for n in 0..ds.len() {
        record.clear();
        record.extend(ds.row(n).iter().map(|v| v.to_string()));
        record.push(ds.label(n).to_string());
        w.write_record(&record).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialization(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_arity_as_max_plus_one() {
        let ds = read_csv("0,0\n1,1\n0,1\n".as_bytes(), &Schema::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.arities(), &[2]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn declared_arity_too_small_names_the_cell() {
        let schema = Schema {
            arities: Some(vec![4, 2]),
            ..Schema::default()
        };
        let err = read_csv("0,1,0\n5,0,1\n".as_bytes(), &schema).unwrap_err();
        match err {
            Error::ValueOutOfRange {
                row,
                column,
                value,
                arity,
            } => assert_eq!((row, column, value, arity), (2, 0, 5, 4)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn declared_arity_may_exceed_observed() {
        let schema = Schema {
            arities: Some(vec![5]),
            num_classes: Some(3),
            ..Schema::default()
        };
        let ds = read_csv("0,0\n1,1\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.arities(), &[5]);
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn malformed_cell_reports_position() {
        let err = read_csv("0,1\n1,x\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, column: 1, .. }), "{err}");
        let err = read_csv("0,-1\n".as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 1, .. }));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(read_csv("".as_bytes(), &Schema::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn label_by_name_with_header() {
        let schema = Schema {
            label_column: Some(LabelColumn::Name("cls".into())),
            has_header: Some(true),
            ..Schema::default()
        };
        let ds = read_csv("cls,a,b\n2,0,1\n0,1,0\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.labels(), &[2, 0]);
        assert_eq!(ds.feature_names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.row(0), &[0, 1]);
    }

    #[test]
    fn header_is_detected_when_unset() {
        let with = read_csv("x0,label\n1,0\n0,1\n".as_bytes(), &Schema::default()).unwrap();
        let without = read_csv("1,0\n0,1\n".as_bytes(), &Schema::default()).unwrap();
        assert_eq!(with.len(), 2);
        assert_eq!(with.labels(), without.labels());
        let forced = Schema {
            has_header: Some(false),
            ..Schema::default()
        };
        assert!(matches!(read_csv("x0,label\n1,0\n".as_bytes(), &forced), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn schema_parses_from_toml() {
        let s: Schema = toml::from_str("label_column = 0\nhas_header = true\narities = [3, 4]\nnum_classes = 2\n").unwrap();
        assert_eq!(s.label_column, Some(LabelColumn::Index(0)));
        let s: Schema = toml::from_str("label_column = \"y\"").unwrap();
        assert_eq!(s.label_column, Some(LabelColumn::Name("y".into())));
    }

    #[test]
    fn dataset_validation() {
        assert!(DiscreteDataset::new(vec![vec![2]], vec![0], vec![2], 2).is_err());
        assert!(DiscreteDataset::new(vec![vec![1]], vec![2], vec![2], 2).is_err());
        assert!(DiscreteDataset::new(vec![], vec![], vec![2], 2).is_err());
    }
}
