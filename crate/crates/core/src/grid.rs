//! Dense complex matrix indexed by (subcarrier row, symbol column).

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex values laid out row-major: one row per subcarrier, one column per
/// OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, Complex64::new(0.0, 0.0))
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        Self {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self { rows, cols, values }
    }

    /// Builds a grid from row-major values.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} grid",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a grid whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<Complex64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("columns have unequal lengths".into()));
        }
        Ok(Self::from_fn(rows, cols, |r, c| columns[c][r]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Complex64> {
        (row < self.rows && col < self.cols).then(|| self.values[row * self.cols + col])
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn row(&self, row: usize) -> &[Complex64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, col)]).collect()
    }

    pub fn set_column(&mut self, col: usize, values: &[Complex64]) {
        assert_eq!(values.len(), self.rows, "column length must equal row count");
        for (r, v) in values.iter().enumerate() {
            self[(r, col)] = *v;
        }
    }

    /// Copies the half-open column range `[start, end)` into a new grid.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.cols, "column range out of bounds");
        Self::from_fn(self.rows, end - start, |r, c| self[(r, start + c)])
    }

    /// Copies the listed rows, in the given order, into a new grid.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols, |r, c| self[(rows[r], c)])
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.shape() != (rows, cols) {
            return Err(Error::Shape(format!(
                "{what}: expected {rows}x{cols}, got {}x{}",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexGrid {
    type Output = Complex64;

    fn index(&self, (row, col): (usize, usize)) -> &Complex64 {
        assert!(row < self.rows && col < self.cols, "grid index out of bounds");
        &self.values[row * self.cols + col]
    }
}

impl IndexMut<(usize, usize)> for ComplexGrid {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut Complex64 {
        assert!(row < self.rows && col < self.cols, "grid index out of bounds");
        &mut self.values[row * self.cols + col]
    }
}
