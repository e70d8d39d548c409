use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An n×d matrix of observations with one name per column.
///
/// Storage is column-major, so a single feature is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        Self { values, names }
    }

    pub fn with_names(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        Ok(Self { values, names })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Shape(format!("row {i} has a different width")));
        }
        Ok(Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j])))
    }

    /// Builds an n×d matrix from column vectors of equal length.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let d = cols.len();
        let n = cols.first().map_or(0, Vec::len);
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("columns of unequal length".into()));
        }
        Ok(Self::new(DMatrix::from_fn(n, d, |i, j| cols[j][i])))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.nrows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows()).map(|i| self.row(i)).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Keeps only the first `n` rows.
    pub fn truncate_rows(&self, n: usize) -> Self {
        Self {
            values: self.values.rows(0, n.min(self.nrows())).into_owned(),
            names: self.names.clone(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let values = DMatrix::from_fn(idx.len(), self.ncols(), |i, j| self.values[(idx[i], j)]);
        Self {
            values,
            names: self.names.clone(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.nrows(), idx.len(), |i, j| self.values[(i, idx[j])]);
        Self {
            values,
            names: idx.iter().map(|&j| self.names[j].clone()).collect(),
        }
    }

    /// Stacks `other` below `self`; column counts must agree.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.ncols() {
            return Err(Error::Shape(format!(
                "cannot stack {} and {} columns",
                self.ncols(),
                other.ncols()
            )));
        }
        let n1 = self.nrows();
        let values = DMatrix::from_fn(n1 + other.nrows(), self.ncols(), |i, j| {
            if i < n1 {
                self.values[(i, j)]
            } else {
                other.values[(i - n1, j)]
            }
        });
        Ok(Self {
            values,
            names: self.names.clone(),
        })
    }

    /// Appends the columns of `other` to the right of `self`.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.nrows() != other.nrows() {
            return Err(Error::Shape(format!(
                "cannot join {} and {} rows",
                self.nrows(),
                other.nrows()
            )));
        }
        let d1 = self.ncols();
        let values = DMatrix::from_fn(self.nrows(), d1 + other.ncols(), |i, j| {
            if j < d1 {
                self.values[(i, j)]
            } else {
                other.values[(i, j - d1)]
            }
        });
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(Self { values, names })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.map(f),
            names: self.names.clone(),
        }
    }
}
