//! Per-embedding metric tables and their correlation matrix.
//!
//! Tables are tab-separated with a header row `id<TAB>col1<TAB>...`;
//! missing values are written `NA`.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::stats::pearson;

const EXACT_COLUMNS: &[&str] = &[
    "DB", "MIDB", "Rec:LR", "Rec:MLP", "SB_def", "SB_stereo", "SB_other", "E",
];
const PREFIX_COLUMNS: &[&str] = &["Clus:v_", "Clus:acc_", "GIPE:", "Sim:", "Analogy:"];

/// Whether `name` belongs to the registered metric set.
pub fn is_registered_column(name: &str) -> bool {
    EXACT_COLUMNS.contains(&name)
        || PREFIX_COLUMNS
            .iter()
            .any(|p| name.len() > p.len() && name.starts_with(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    columns: Vec<String>,
    rows: Vec<(String, Vec<Option<f64>>)>,
}

fn parse_cell(s: &str) -> Option<Option<f64>> {
    let s = s.trim();
    if s == "NA" {
        return Some(None);
    }
    s.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

impl MetricsTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Result<Self> {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        for (i, c) in columns.iter().enumerate() {
            if !is_registered_column(c) {
                return Err(Error::InvalidArgument(format!("unregistered metric column '{c}'")));
            }
            if columns[..i].contains(c) {
                return Err(Error::InvalidArgument(format!("duplicate column '{c}'")));
            }
        }
        Ok(MetricsTable {
            columns,
            rows: Vec::new(),
        })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(id, _)| id.as_str())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Appends a row; non-finite values are stored as NA.
    pub fn push_row(&mut self, id: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        let id = id.into();
        if values.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                found: values.len(),
            });
        }
        if self.rows.iter().any(|(r, _)| *r == id) {
            return Err(Error::InvalidArgument(format!("duplicate row id '{id}'")));
        }
        let values = values.into_iter().map(|v| v.filter(|x| x.is_finite())).collect();
        self.rows.push((id, values));
        Ok(())
    }

    pub fn get(&self, id: &str, column: &str) -> Option<f64> {
        let c = self.column_index(column)?;
        self.rows.iter().find(|(r, _)| r == id).and_then(|(_, v)| v[c])
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.column_index(name)?;
        Some(self.rows.iter().map(|(_, v)| v[c]).collect())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id");
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (id, vals) in &self.rows {
            out.push_str(id);
            for v in vals {
                match v {
                    Some(x) => {
                        let _ = write!(out, "\t{x}");
                    }
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(name: &str, text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (_, header) = lines.next().ok_or_else(|| Error::Empty(format!("{name}: no header")))?;
        let mut cols = header.split('\t');
        cols.next();
        let mut table = MetricsTable::new(cols.map(str::trim))?;
        for (k, line) in lines {
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().trim();
            let vals = fields
                .map(|f| parse_cell(f).ok_or_else(|| Error::parse(name, k + 1, format!("bad value '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            table
                .push_row(id, vals)
                .map_err(|e| Error::parse(name, k + 1, e.to_string()))?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        MetricsTable::parse(&path.display().to_string(), &text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Symmetric matrix of pairwise correlations between table columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub columns: Vec<String>,
    /// `None` where the pair had fewer than 3 joint rows or a constant column.
    pub values: Vec<Vec<Option<f64>>>,
    /// Number of rows used for each pair.
    pub counts: Vec<Vec<usize>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == a)?;
        let j = self.columns.iter().position(|c| c == b)?;
        self.values[i][j]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.columns {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (c, row) in self.columns.iter().zip(&self.values) {
            out.push_str(c);
            for v in row {
                match v {
                    Some(x) => {
                        let _ = write!(out, "\t{x:.3}");
                    }
                    None => out.push_str("\tNA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Minimum number of jointly present rows for a correlation.
pub const MIN_JOINT_ROWS: usize = 3;

/// Pearson correlation of every column pair, dropping rows where either
/// value is NA. The diagonal is 1 for any column with at least
/// [`MIN_JOINT_ROWS`] non-constant values.
pub fn pearson_matrix(table: &MetricsTable) -> CorrelationMatrix {
    let k = table.columns.len();
    let cols: Vec<Vec<Option<f64>>> = (0..k).map(|c| table.rows.iter().map(|(_, v)| v[c]).collect()).collect();
    let mut values = vec![vec![None; k]; k];
    let mut counts = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (x, y): (Vec<f64>, Vec<f64>) = cols[i]
                .iter()
                .zip(&cols[j])
                .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                .unzip();
            counts[i][j] = x.len();
            counts[j][i] = x.len();
            let r = if x.len() < MIN_JOINT_ROWS {
                None
            } else if i == j {
                pearson(&x, &y).map(|_| 1.0)
            } else {
                pearson(&x, &y)
            };
            if r.is_none() && x.len() >= MIN_JOINT_ROWS {
                warn!(
                    "correlation {} / {} undefined: constant column",
                    table.columns[i], table.columns[j]
                );
            }
            values[i][j] = r;
            values[j][i] = r;
        }
    }
    CorrelationMatrix {
        columns: table.columns.clone(),
        values,
        counts,
    }
}
