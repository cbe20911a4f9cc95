//! One-way layout: observations with group labels, CSV ingestion and
//! per-group summaries.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};

/// A validated one-way dataset.
///
/// Observations keep their file order. Groups are indexed by their position
/// in `group_order`; the first group acts as the control for many-to-one
/// comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    groups: Vec<usize>,
    group_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// Unbiased (n - 1 divisor).
    pub variance: f64,
}

impl Dataset {
    /// Builds a dataset from parallel value/label slices, ordering groups by
    /// first appearance.
    pub fn new<S: AsRef<str>>(values: Vec<f64>, labels: &[S]) -> Result<Self> {
        Self::with_order(values, labels, None)
    }

    /// Like [`Dataset::new`], but with an explicit group order. The order must
    /// list every label present in `labels` exactly once.
    pub fn with_order<S: AsRef<str>>(values: Vec<f64>, labels: &[S], order: Option<&[String]>) -> Result<Self> {
        if values.len() != labels.len() {
            return Err(Error::Validation(format!(
                "{} values but {} group labels",
                values.len(),
                labels.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "observation {} is not a finite number",
                i + 1
            )));
        }

        let mut seen: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for label in labels {
            let label = label.as_ref();
            if !index.contains_key(label) {
                index.insert(label.to_owned(), seen.len());
                seen.push(label.to_owned());
            }
        }

        let group_order = match order {
            None => seen,
            Some(order) => {
                let mut dedup = order.to_vec();
                dedup.sort();
                dedup.dedup();
                if dedup.len() != order.len() {
                    return Err(Error::Validation("group order lists a label twice".into()));
                }
                if order.len() != seen.len() || order.iter().any(|l| !index.contains_key(l)) {
                    return Err(Error::Validation(format!(
                        "group order {:?} does not match the labels present {:?}",
                        order, seen
                    )));
                }
                index = order.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
                order.to_vec()
            }
        };

        let groups: Vec<usize> = labels.iter().map(|l| index[l.as_ref()]).collect();
        let ds = Self {
            values,
            groups,
            group_order,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        if self.group_order.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 groups, found {}",
                self.group_order.len()
            )));
        }
        for (label, n) in self.group_order.iter().zip(self.group_sizes()) {
            if n < 2 {
                return Err(Error::Validation(format!(
                    "group {label:?} has {n} observation(s), need at least 2"
                )));
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Group index (into `group_order`) of every observation.
    pub fn group_indices(&self) -> &[usize] {
        &self.groups
    }

    pub fn group_order(&self) -> &[String] {
        &self.group_order
    }

    /// Total number of observations, N.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of groups, k.
    pub fn n_groups(&self) -> usize {
        self.group_order.len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.group_order.len()];
        for &g in &self.groups {
            n[g] += 1;
        }
        n
    }

    /// Values of group `g`, in observation order.
    pub fn group_values(&self, g: usize) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.groups)
            .filter(|(_, &gi)| gi == g)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Same layout with new response values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Validation("replacement values differ in length".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("replacement values must be finite".into()));
        }
        Ok(Self {
            values,
            groups: self.groups.clone(),
            group_order: self.group_order.clone(),
        })
    }

    /// Builds a dataset directly from per-group samples, labelled by position
    /// ("0", "1", ...).
    pub fn from_groups(samples: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (g, s) in samples.iter().enumerate() {
            values.extend_from_slice(s);
            labels.extend(std::iter::repeat_n(g.to_string(), s.len()));
        }
        Self::new(values, &labels)
    }

    pub fn summarize(&self) -> Vec<GroupSummary> {
        summarize(self)
    }

    /// Writes the dataset as two-column CSV with the given header names.
    pub fn write_csv<W: Write>(&self, out: W, value_column: &str, group_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([value_column, group_column])?;
        for (v, &g) in self.values.iter().zip(&self.groups) {
            w.write_record([format_value(*v), self.group_order[g].clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn format_value(v: f64) -> String {
    // Debug formatting of f64 is the shortest string that round-trips.
    format!("{v:?}")
}

/// Reads a dataset from comma-delimited text with a header row.
///
/// Rows are numbered from 1 for the first data row (the header is row 0).
pub fn load_dataset<R: Read>(source: R, value_column: &str, group_column: &str) -> Result<Dataset> {
    load_dataset_ordered(source, value_column, group_column, None)
}

pub fn load_dataset_ordered<R: Read>(
    source: R,
    value_column: &str,
    group_column: &str,
    order: Option<&[String]>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header {headers:?}")))
    };
    let vi = find(value_column)?;
    let gi = find(group_column)?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let cell = record.get(vi).unwrap_or("");
        if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
            return Err(Error::Parse {
                row,
                message: format!("missing value in column {value_column:?}"),
            });
        }
        let v: f64 = cell.parse().map_err(|_| Error::Parse {
            row,
            message: format!("{cell:?} is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                message: format!("{cell:?} is not a finite number"),
            });
        }
        let label = record.get(gi).unwrap_or("");
        if label.is_empty() {
            return Err(Error::Parse {
                row,
                message: format!("missing label in column {group_column:?}"),
            });
        }
        values.push(v);
        labels.push(label.to_owned());
    }
    Dataset::with_order(values, &labels, order)
}

/// Count, mean and unbiased variance of every group, in group order.
pub fn summarize(ds: &Dataset) -> Vec<GroupSummary> {
    (0..ds.n_groups())
        .map(|g| {
            let v = ds.group_values(g);
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
            GroupSummary {
                label: ds.group_order[g].clone(),
                n,
                mean,
                variance: ss / (n - 1) as f64,
            }
        })
        .collect()
}
