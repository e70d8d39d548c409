//! CSV ingestion and export.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hsic::JointSample;
use crate::matrix::SampleMatrix;

/// Header handling for [`read_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Header {
    /// Treat the first record as a header when any of its cells is not a number.
    #[default]
    Detect,
    Present,
    Absent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("no column named {name:?}")))
    }

    fn matrix_of(&self, rows: &[&Vec<f64>], cols: &[usize]) -> Result<SampleMatrix> {
        let values = DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]]);
        SampleMatrix::with_names(values, cols.iter().map(|&c| self.names[c].clone()).collect())
    }

    pub fn to_matrix(&self) -> Result<SampleMatrix> {
        let rows: Vec<&Vec<f64>> = self.rows.iter().collect();
        self.matrix_of(&rows, &(0..self.ncols()).collect::<Vec<_>>())
    }

    /// Features from every column except `response`, which becomes Y.
    pub fn to_joint(&self, response: &str) -> Result<JointSample> {
        let r = self.column_index(response)?;
        if self.ncols() < 2 {
            return Err(Error::Data("no feature columns besides the response".into()));
        }
        let rows: Vec<&Vec<f64>> = self.rows.iter().collect();
        let feats: Vec<usize> = (0..self.ncols()).filter(|&c| c != r).collect();
        JointSample::new(self.matrix_of(&rows, &feats)?, self.matrix_of(&rows, &[r])?)
    }

    /// Splits rows by the two distinct values of `class`; the group with the
    /// smaller label becomes X. The class column is dropped.
    pub fn split_by_class(&self, class: &str) -> Result<(SampleMatrix, SampleMatrix)> {
        let c = self.column_index(class)?;
        let mut labels: Vec<f64> = self.rows.iter().map(|r| r[c]).collect();
        labels.sort_by(f64::total_cmp);
        labels.dedup();
        if labels.len() != 2 {
            return Err(Error::Data(format!(
                "class column {class:?} has {} distinct values; need exactly 2",
                labels.len()
            )));
        }
        if self.ncols() < 2 {
            return Err(Error::Data("no feature columns besides the class".into()));
        }
        let feats: Vec<usize> = (0..self.ncols()).filter(|&j| j != c).collect();
        let group = |label: f64| -> Result<SampleMatrix> {
            let rows: Vec<&Vec<f64>> = self.rows.iter().filter(|r| r[c] == label).collect();
            self.matrix_of(&rows, &feats)
        };
        Ok((group(labels[0])?, group(labels[1])?))
    }
}

fn parse_cell(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

pub fn read_table<R: Read>(reader: R, header: Header) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records().enumerate();
    let (_, first) = records.next().ok_or_else(|| Error::Data("empty CSV input".into()))?;
    let first = first.map_err(|e| Error::Data(format!("line 1: {e}")))?;
    let width = first.len();
    let first_numeric: Option<Vec<f64>> = first.iter().map(parse_cell).collect();
    let has_header = match header {
        Header::Present => true,
        Header::Absent => false,
        Header::Detect => first_numeric.is_none(),
    };
    let mut rows = Vec::new();
    let names = if has_header {
        first.iter().map(|s| s.trim().to_string()).collect()
    } else {
        let row = first_numeric.ok_or_else(|| Error::Data("line 1: non-numeric cell".into()))?;
        rows.push(row);
        (0..width).map(|j| format!("f{j}")).collect()
    };
    for (idx, rec) in records {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != width {
            return Err(Error::Data(format!(
                "line {line}: ragged row with {} fields, expected {width}",
                rec.len()
            )));
        }
        let row: Vec<f64> = rec
            .iter()
            .enumerate()
            .map(|(j, s)| parse_cell(s).ok_or_else(|| Error::Data(format!("line {line}, column {}: non-numeric cell {s:?}", j + 1))))
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    Ok(Table { names, rows })
}

pub fn load_table(path: &Path, header: Header) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    read_table(std::io::BufReader::new(file), header).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn load_matrix(path: &Path, header: Header) -> Result<SampleMatrix> {
    load_table(path, header)?.to_matrix()
}

pub fn load_joint(path: &Path, header: Header, response: &str) -> Result<JointSample> {
    load_table(path, header)?.to_joint(response)
}

/// Writes `m` with a header row and 17 significant digits per value.
pub fn write_matrix<W: Write>(writer: W, m: &SampleMatrix) -> Result<()> {
    let io = |e: csv::Error| Error::Data(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(m.names()).map_err(io)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| format!("{:.16e}", m.get(i, j)))).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Data(e.to_string()))
}
