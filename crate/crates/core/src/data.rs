//! Sample matrices.

use crate::error::{Error, Result};
use crate::matrix::{Mat, SymMatrix};

/// `n × d` sample matrix, one observation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Mat,
    /// Seed the rows were generated from, when synthetic.
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(x: Mat) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset must be non-empty".into()));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset has non-finite entries".into()));
        }
        Ok(Self { x, seed: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Mat::from_rows(rows)?)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n()).map(move |i| self.x.row(i))
    }

    /// Second moment about zero, `(1/n) Σ x xᵀ`.
    pub fn second_moment(&self) -> SymMatrix {
        let d = self.d();
        let mut acc = vec![0.0; d * d];
        for row in self.rows() {
            for i in 0..d {
                let xi = row[i];
                if xi == 0.0 {
                    continue;
                }
                let acc_row = &mut acc[i * d..i * d + i + 1];
                for (a, xj) in acc_row.iter_mut().zip(&row[..=i]) {
                    *a += xi * xj;
                }
            }
        }
        let inv_n = 1.0 / self.n() as f64;
        SymMatrix::from_fn(d, |i, j| acc[j * d + i] * inv_n)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d()];
        for row in self.rows() {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Sample standard deviation per column (mean removed, `n - 1` divisor).
    pub fn column_std(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut ss = vec![0.0; self.d()];
        for row in self.rows() {
            for ((a, v), m) in ss.iter_mut().zip(row).zip(&means) {
                *a += (v - m) * (v - m);
            }
        }
        let denom = (self.n().max(2) - 1) as f64;
        ss.iter().map(|s| (s / denom).sqrt()).collect()
    }

    /// Empirical mean of `|x_k|` per column.
    pub fn abs_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d()];
        for row in self.rows() {
            for (a, v) in m.iter_mut().zip(row) {
                *a += v.abs();
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Applies `x_ik ← (x_ik - shift_k) * scale_k`.
    pub fn affine_columns(&self, shift: &[f64], scale: &[f64]) -> Dataset {
        let mut x = self.x.clone();
        for i in 0..x.nrows() {
            for (k, v) in x.row_mut(i).iter_mut().enumerate() {
                *v = (*v - shift[k]) * scale[k];
            }
        }
        Dataset { x, seed: self.seed }
    }

    pub fn scale_columns(&self, scale: &[f64]) -> Dataset {
        self.affine_columns(&vec![0.0; self.d()], scale)
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let d = self.d();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
        }
        Dataset {
            x: Mat::from_vec(idx.len(), d, data).expect("consistent shape"),
            seed: self.seed,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(self.n() * cols.len());
        for row in self.rows() {
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Dataset {
            x: Mat::from_vec(self.n(), cols.len(), data).expect("consistent shape"),
            seed: self.seed,
        }
    }

    /// `X Qᵀ`: every sample `x` becomes `Q x`.
    pub fn rotate(&self, q: &Mat) -> Dataset {
        Dataset {
            x: self.x.matmul(&q.transpose()).expect("conformant rotation"),
            seed: self.seed,
        }
    }

    /// Reads a numeric CSV, one sample per row. A first row with any
    /// non-numeric cell is taken as a header and returned separately.
    pub fn parse_csv<R: std::io::Read>(reader: R) -> Result<(Dataset, Option<Vec<String>>)> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut header = None;
        let mut values = Vec::new();
        let mut width = None;
        let mut rows = 0;
        for (k, record) in rdr.records().enumerate() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(k + 1);
            let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
            if k == 0 && parsed.iter().any(Option::is_none) {
                header = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
                width = Some(record.len());
                continue;
            }
            let w = *width.get_or_insert(record.len());
            if record.len() != w {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                });
            }
            for (cell, v) in record.iter().zip(parsed) {
                match v {
                    Some(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::Parse {
                            line,
                            message: format!("invalid number '{cell}'"),
                        })
                    }
                }
            }
            rows += 1;
        }
        let d = width.unwrap_or(0);
        if rows == 0 || d == 0 {
            return Err(Error::Parse { line: 1, message: "no samples".into() });
        }
        Ok((Dataset::new(Mat::from_vec(rows, d, values)?)?, header))
    }

    pub fn load_csv(path: &std::path::Path) -> Result<(Dataset, Option<Vec<String>>)> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(file)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}
