//! Ground-truth precision models, heteroskedastic rescaling and seeded
//! Gaussian sampling.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{symeig, Mat, SymMatrix, SymPd};

/// Smallest eigenvalue a model must keep to count as positive definite.
pub const PD_MARGIN: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ar2,
    Ar3,
    Ar4,
    Star,
    Circle,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Ar2,
        ModelKind::Ar3,
        ModelKind::Ar4,
        ModelKind::Star,
        ModelKind::Circle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ar2 => "ar2",
            ModelKind::Ar3 => "ar3",
            ModelKind::Ar4 => "ar4",
            ModelKind::Star => "star",
            ModelKind::Circle => "circle",
        }
    }

    /// Band coefficients `c_{i,i-k}` for `k = 1, 2, ...` of the banded models.
    fn band(&self) -> &'static [f64] {
        match self {
            ModelKind::Ar2 => &[0.5, 0.25],
            ModelKind::Ar3 => &[0.4, 0.2, 0.2],
            ModelKind::Ar4 => &[0.4, 0.2, 0.2, 0.1],
            ModelKind::Circle => &[0.5],
            ModelKind::Star => &[],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ar2" => Ok(ModelKind::Ar2),
            "ar3" => Ok(ModelKind::Ar3),
            "ar4" => Ok(ModelKind::Ar4),
            "star" => Ok(ModelKind::Star),
            "circle" => Ok(ModelKind::Circle),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected ar2, ar3, ar4, star or circle)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub precision: SymMatrix,
    pub covariance: SymPd,
    /// Upper-triangular pairs `(i, j)`, `i < j`, with nonzero precision entry.
    pub support: Vec<(usize, usize)>,
    pub pd_adjusted: bool,
}

impl GroundTruth {
    pub fn from_precision(precision: SymMatrix, pd_adjusted: bool) -> Result<Self> {
        let covariance = SymPd::new(precision.clone())?.inverse()?;
        let support = off_diagonal_support(&precision);
        Ok(Self {
            precision,
            covariance,
            support,
            pd_adjusted,
        })
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }
}

pub fn off_diagonal_support(m: &SymMatrix) -> Vec<(usize, usize)> {
    let d = m.dim();
    let mut s = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if m.get(i, j) != 0.0 {
                s.push((i, j));
            }
        }
    }
    s
}

fn raw_precision(kind: ModelKind, d: usize) -> SymMatrix {
    let mut c = SymMatrix::identity(d);
    match kind {
        ModelKind::Star => {
            for i in 1..d {
                c.set(0, i, 0.2);
            }
        }
        _ => {
            for (k, &v) in kind.band().iter().enumerate() {
                let lag = k + 1;
                for i in lag..d {
                    c.set(i, i - lag, v);
                }
            }
            if kind == ModelKind::Circle {
                c.set(0, d - 1, 0.4);
            }
        }
    }
    c
}

/// Precision matrix of the named model. The star model is not positive
/// definite for large `d`; its `c_{1,1}` is raised to 1.2 (and further in
/// steps of 0.2 if needed) and the result flagged.
pub fn make_model(kind: ModelKind, d: usize) -> Result<GroundTruth> {
    if d < 3 {
        return Err(Error::InvalidArgument(format!("model dimension must be at least 3, got {d}")));
    }
    let mut c = raw_precision(kind, d);
    let mut adjusted = false;
    while symeig(&c)?.min_value() <= PD_MARGIN {
        if kind != ModelKind::Star {
            return Err(Error::NotPositiveDefinite {
                pivot: 0,
                value: symeig(&c)?.min_value(),
            });
        }
        let next = if adjusted { c.get(0, 0) + 0.2 } else { 1.2 };
        c.set(0, 0, next);
        adjusted = true;
    }
    GroundTruth::from_precision(c, adjusted)
}

/// The default scale vector: 10 for the first five variables, 1 after.
pub fn default_scales(d: usize) -> Vec<f64> {
    (0..d).map(|i| if i < 5 { 10.0 } else { 1.0 }).collect()
}

/// `Σ ← SΣS`, `Σ⁻¹ ← S⁻¹Σ⁻¹S⁻¹`.
pub fn heteroskedastic_scale(gt: &GroundTruth, scales: &[f64]) -> Result<GroundTruth> {
    if scales.len() != gt.dim() {
        return Err(Error::Dimension(format!(
            "{} scales for a {}-dimensional model",
            scales.len(),
            gt.dim()
        )));
    }
    if let Some(k) = scales.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale {k} = {} is not positive", scales[k])));
    }
    let inv: Vec<f64> = scales.iter().map(|s| 1.0 / s).collect();
    let precision = gt.precision.congruence_diag(&inv);
    let covariance = SymPd::new(gt.covariance.congruence_diag(scales))?;
    Ok(GroundTruth {
        support: off_diagonal_support(&precision),
        precision,
        covariance,
        pd_adjusted: gt.pd_adjusted,
    })
}

/// `n` draws from `N(0, cov)`: rows `L z` with `z` standard normal from a
/// ChaCha8 stream keyed by `(seed, stream)`.
pub fn sample_gaussian_stream(cov: &SymPd, n: usize, seed: u64, stream: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let d = cov.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let l = cov.factor();
    let mut data = vec![0.0; n * d];
    let mut z = vec![0.0; d];
    for row in data.chunks_exact_mut(d) {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        for (i, out) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += l.get(i, k) * zk;
            }
            *out = s;
        }
    }
    Ok(Dataset::new(Mat::from_vec(n, d, data)?)?.with_seed(seed))
}

pub fn sample_gaussian(cov: &SymPd, n: usize, seed: u64) -> Result<Dataset> {
    sample_gaussian_stream(cov, n, seed, 0)
}
