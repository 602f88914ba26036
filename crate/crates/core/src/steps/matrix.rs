use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MatrixError {
    #[error("{rows}x{cols} matrix needs {} values, got {got}", rows * cols)]
    Shape { rows: usize, cols: usize, got: usize },
    #[error("matrix values must be finite")]
    NonFinite,
    #[error("matrix file: {0}")]
    Parse(String),
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::Shape { rows, cols, got: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(MatrixError::Shape { rows: rows.len(), cols, got: bad.len() });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Header `rows cols`, then one line of space-separated values per row.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(" ")).expect("writing to a String");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, MatrixError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| MatrixError::Parse("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| MatrixError::Parse(format!("bad header {header:?}"))))
            .collect::<Result<_, _>>()?;
        let [rows, cols] = dims[..] else {
            return Err(MatrixError::Parse(format!("header needs `N D`, got {header:?}")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let before = data.len();
            for t in line.split_whitespace() {
                data.push(
                    t.parse::<f64>().map_err(|_| MatrixError::Parse(format!("line {}: bad number {t:?}", i + 2)))?,
                );
            }
            if data.len() - before != cols {
                return Err(MatrixError::Parse(format!("line {}: expected {cols} values", i + 2)));
            }
            seen += 1;
        }
        if seen != rows {
            return Err(MatrixError::Parse(format!("expected {rows} rows, found {seen}")));
        }
        Self::new(rows, cols, data)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}
