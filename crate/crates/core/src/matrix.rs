//! Dense matrix kernel.
//!
//! Row-major dense storage throughout. [`SymMatrix`] keeps both triangles and
//! every mutator writes `(i, j)` and `(j, i)` together, so symmetry holds by
//! construction. [`SymPd`] pairs a symmetric matrix with its Cholesky factor
//! and is the only way to reach `logdet` and the inverse.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Relative pivot floor used by [`cholesky`]: a pivot must exceed
/// `PD_TOLERANCE * max_i |M_ii|`.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Asymmetry accepted by the text parser, relative to the largest entry.
pub const PARSE_SYMMETRY_TOLERANCE: f64 = 1e-9;

/// General row-major matrix. Used for data matrices, eigenvector bases and
/// products that are not symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Dimension(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Result<Mat> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "vector length mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * m.dim + i] = v;
        }
        m
    }

    /// Builds a matrix by evaluating `f(i, j)` on the upper triangle (`i <= j`).
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Accepts a full square matrix whose asymmetry is at most `rel_tol` times
    /// its largest entry; the result is the symmetric part.
    pub fn from_mat(m: &Mat, rel_tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        let d = m.nrows();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (m.get(i, j) - m.get(j, i)).abs();
                if gap > rel_tol * scale {
                    return Err(Error::InvalidArgument(format!(
                        "matrix is not symmetric: entries ({i},{j}) and ({j},{i}) differ by {gap:e}"
                    )));
                }
            }
        }
        for v in m.as_slice() {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
            }
        }
        Ok(Self::from_fn(d, |i, j| 0.5 * (m.get(i, j) + m.get(j, i))))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_mat(&Mat::from_rows(rows)?, PARSE_SYMMETRY_TOLERANCE)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] += v;
        if i != j {
            self.data[j * self.dim + i] += v;
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_mat(&self) -> Mat {
        Mat {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "vector length mismatch");
        (0..self.dim).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// General product `self * other` (not symmetric in general).
    pub fn matmul(&self, other: &SymMatrix) -> Mat {
        let a = self.to_mat();
        a.matmul(&other.to_mat())
            .expect("square matrices of equal dimension")
    }

    /// `self * other * self`, symmetric whenever `other` is.
    pub fn sandwich(&self, other: &SymMatrix) -> SymMatrix {
        let left = self.matmul(other);
        let full = left.matmul(&self.to_mat()).expect("conformant");
        SymMatrix::from_fn(self.dim, |i, j| 0.5 * (full.get(i, j) + full.get(j, i)))
    }

    /// `tr(self * other)` for symmetric operands.
    pub fn trace_product(&self, other: &SymMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> SymMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self + alpha * (other - self)`.
    pub fn lerp(&self, other: &SymMatrix, alpha: f64) -> SymMatrix {
        self.zip_with(other, |a, b| a + alpha * (b - a))
    }

    pub fn add_identity(&self, s: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += s;
        }
        m
    }

    /// `diag(s) * self * diag(s)`.
    pub fn congruence_diag(&self, s: &[f64]) -> SymMatrix {
        assert_eq!(s.len(), self.dim, "scale length mismatch");
        SymMatrix::from_fn(self.dim, |i, j| s[i] * self.get(i, j) * s[j])
    }

    /// Largest entry in absolute value.
    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Induced infinity norm (largest absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Entrywise l1 norm.
    pub fn l11_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Text form: one comma-separated row per line, full storage.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.dim {
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                write!(s, "{v:?}").expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<SymMatrix> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        message: format!("bad number {cell:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty matrix".into(),
            });
        }
        SymMatrix::from_rows(&rows)
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = M`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerFactor {
    dim: usize,
    data: Vec<f64>,
}

impl LowerFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim).map(|k| self.get(k, k).ln()).sum::<f64>()
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let row = &self.data[i * n..i * n + i];
            let s = y[i] - dot(row, &y[..i]);
            y[i] = s / self.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.get(k, i) * y[k];
            }
            y[i] = s / self.get(i, i);
        }
        y
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim;
        // invert L in place (lower triangular), then M^-1 = L^-T L^-1
        let mut linv = vec![0.0; n * n];
        for i in 0..n {
            linv[i * n + i] = 1.0 / self.get(i, i);
            for j in 0..i {
                let mut s = 0.0;
                for k in j..i {
                    s += self.get(i, k) * linv[k * n + j];
                }
                linv[i * n + j] = -s / self.get(i, i);
            }
        }
        let mut inv = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for k in i..n {
                    s += linv[k * n + i] * linv[k * n + j];
                }
                inv.set(i, j, s);
            }
        }
        inv
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.dim;
        SymMatrix::from_fn(n, |i, j| {
            let m = i.min(j);
            (0..=m).map(|k| self.get(i, k) * self.get(j, k)).sum()
        })
    }
}

/// Cholesky factorization with a pivot floor relative to the largest diagonal.
pub fn cholesky(m: &SymMatrix) -> Result<LowerFactor> {
    let n = m.dim();
    if !m.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let max_diag = m.diag().iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let floor = PD_TOLERANCE * max_diag;
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(LowerFactor { dim: n, data: l })
}

/// Symmetric positive-definite matrix with its Cholesky factor cached.
#[derive(Clone, Debug)]
pub struct SymPd {
    matrix: SymMatrix,
    factor: LowerFactor,
}

impl SymPd {
    pub fn new(matrix: SymMatrix) -> Result<Self> {
        let factor = cholesky(&matrix)?;
        Ok(Self { matrix, factor })
    }

    pub(crate) fn from_parts(matrix: SymMatrix, factor: LowerFactor) -> Self {
        Self { matrix, factor }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(SymMatrix::identity(dim)).expect("identity is positive definite")
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn factor(&self) -> &LowerFactor {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn into_inner(self) -> SymMatrix {
        self.matrix
    }

    pub fn logdet(&self) -> f64 {
        self.factor.logdet()
    }

    pub fn inverse(&self) -> Result<SymPd> {
        SymPd::new(self.factor.inverse())
    }
}

impl std::ops::Deref for SymPd {
    type Target = SymMatrix;

    fn deref(&self) -> &SymMatrix {
        &self.matrix
    }
}

pub fn logdet_pd(m: &SymPd) -> f64 {
    m.logdet()
}

pub fn inverse_pd(m: &SymPd) -> Result<SymPd> {
    m.inverse()
}

/// Eigenvalues in ascending order; column `k` of `vectors` pairs with `values[k]`.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl EigenDecomposition {
    /// `V diag(f) Vᵀ`.
    pub fn compose(&self, f: &[f64]) -> SymMatrix {
        let d = self.values.len();
        assert_eq!(f.len(), d, "spectrum length mismatch");
        let v = &self.vectors;
        SymMatrix::from_fn(d, |i, j| (0..d).map(|k| v.get(i, k) * f[k] * v.get(j, k)).sum())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.compose(&self.values)
    }

    /// Coordinates of `x` in the eigenbasis, `Vᵀ x`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let d = self.values.len();
        (0..d)
            .map(|k| (0..d).map(|i| self.vectors.get(i, k) * x[i]).sum())
            .collect()
    }

    pub fn max_value(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }
}

/// Cyclic Jacobi eigendecomposition.
pub fn symeig(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    if !m.is_finite() {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let mut a = m.to_mat();
    let mut v = Mat::identity(n);
    let frob: f64 = m.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = (1e-3 * f64::EPSILON * frob).powi(2);
    let max_sweeps = 100 * n.max(1);
    let mut converged = n <= 1;
    for sweep in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if off <= target || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a.get(r, p);
                        let arq = a.get(r, q);
                        let nrp = c * arp - s * arq;
                        let nrq = s * arp + c * arq;
                        a.set(r, p, nrp);
                        a.set(p, r, nrp);
                        a.set(r, q, nrq);
                        a.set(q, r, nrq);
                    }
                }
                for r in 0..n {
                    let vrp = v.get(r, p);
                    let vrq = v.get(r, q);
                    v.set(r, p, c * vrp - s * vrq);
                    v.set(r, q, s * vrp + c * vrq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigendecomposition",
            iterations: max_sweeps,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&k| a.get(k, k)).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_k, &old_k) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new_k, v.get(r, old_k));
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_p(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        dot(x, x).sqrt()
    } else {
        x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}
