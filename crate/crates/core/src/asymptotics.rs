//! Monte-Carlo study of the rescaled estimation error under a vanishing
//! radius `δ_n = η n^{−γ}`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glasso::{fit_linf, SolverConfig};
use crate::matrix::{SymMatrix, SymPd};
use crate::shrinkage::fit_l2;
use crate::synth::{sample_gaussian_stream, GroundTruth};

/// Largest fraction of replicates a run may skip.
pub const FAILURE_CAP: f64 = 0.01;
pub const MIN_BIAS_SAMPLES: usize = 10_000;
const BIAS_CHUNK: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    /// `fit_l2` for `p = 2`.
    #[serde(rename = "exact")]
    ExactP,
    /// `fit_linf`.
    #[serde(rename = "surrogate")]
    Surrogate,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::ExactP => "exact",
            Estimator::Surrogate => "surrogate",
        })
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" | "exact_p" => Ok(Estimator::ExactP),
            "surrogate" => Ok(Estimator::Surrogate),
            other => Err(Error::InvalidArgument(format!(
                "unknown estimator '{other}' (expected exact or surrogate)"
            ))),
        }
    }
}

/// Parses `2`, `inf` or `infinity`.
pub fn parse_norm(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .ok()
            .filter(|p| *p > 1.0)
            .ok_or_else(|| Error::InvalidArgument(format!("invalid norm exponent '{s}'"))),
    }
}

#[derive(Clone, Debug)]
pub struct AsymptoticsConfig {
    pub gamma: f64,
    pub eta: f64,
    pub n_values: Vec<usize>,
    pub reps: usize,
    pub p: f64,
    pub estimator: Estimator,
    pub seed: u64,
    /// Surrogate only.
    pub penalize_diagonal: bool,
    pub solver: SolverConfig,
}

impl AsymptoticsConfig {
    pub fn new(gamma: f64, eta: f64, n_values: Vec<usize>, reps: usize, p: f64, estimator: Estimator, seed: u64) -> Self {
        Self {
            gamma,
            eta,
            n_values,
            reps,
            p,
            estimator,
            seed,
            penalize_diagonal: true,
            solver: SolverConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !(self.eta > 0.0) || !self.gamma.is_finite() || !self.eta.is_finite() {
            return Err(Error::InvalidArgument("gamma and eta must be positive".into()));
        }
        if self.reps < 2 {
            return Err(Error::InvalidArgument("need at least 2 replicates".into()));
        }
        if self.n_values.is_empty() || self.n_values.windows(2).any(|w| w[0] >= w[1]) || self.n_values[0] < 2 {
            return Err(Error::InvalidArgument("n values must be strictly ascending and at least 2".into()));
        }
        match (self.estimator, self.p) {
            (Estimator::ExactP, p) if p == 2.0 => Ok(()),
            (Estimator::Surrogate, p) if p.is_infinite() => Ok(()),
            (e, p) => Err(Error::InvalidArgument(format!("estimator {e} is not available for p = {p}"))),
        }
    }

    pub fn delta(&self, n: usize) -> f64 {
        self.eta * (n as f64).powf(-self.gamma)
    }

    /// `n^γ` below γ = 1/2, `√n` otherwise.
    pub fn scaling(&self, n: usize) -> f64 {
        (n as f64).powf(self.gamma.min(0.5))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub replicate: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl ErrorRow {
    pub const COLUMNS: [&'static str; 5] = ["n", "replicate", "i", "j", "value"];
}

#[derive(Clone, Debug)]
pub struct RescaledErrorSample {
    pub n: usize,
    pub delta: f64,
    pub scaling: f64,
    pub estimator: Estimator,
    /// Replicate indices that produced a fit, ascending.
    pub replicate_ids: Vec<usize>,
    /// `scaling · (Ĉ − Σ⁻¹)` per kept replicate.
    pub errors: Vec<SymMatrix>,
    pub failures: usize,
    pub mean: SymMatrix,
    pub variance: SymMatrix,
}

impl RescaledErrorSample {
    fn from_errors(n: usize, delta: f64, scaling: f64, estimator: Estimator, kept: Vec<(usize, SymMatrix)>, failures: usize) -> Self {
        let d = kept[0].1.dim();
        let k = kept.len() as f64;
        let mut mean = SymMatrix::zeros(d);
        for (_, e) in &kept {
            mean = mean.add(e);
        }
        mean = mean.scaled(1.0 / k);
        let variance = SymMatrix::from_fn(d, |i, j| {
            let ss: f64 = kept.iter().map(|(_, e)| (e.get(i, j) - mean.get(i, j)).powi(2)).sum();
            ss / (k - 1.0).max(1.0)
        });
        let (replicate_ids, errors) = kept.into_iter().unzip();
        Self {
            n,
            delta,
            scaling,
            estimator,
            replicate_ids,
            errors,
            failures,
            mean,
            variance,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    /// Entrywise standard error of the mean.
    pub fn stderr(&self) -> SymMatrix {
        let k = self.errors.len() as f64;
        SymMatrix::from_fn(self.dim(), |i, j| (self.variance.get(i, j) / k).sqrt())
    }

    /// Entrywise sample skewness.
    pub fn skewness(&self) -> SymMatrix {
        let k = self.errors.len() as f64;
        SymMatrix::from_fn(self.dim(), |i, j| {
            let m = self.mean.get(i, j);
            let m2: f64 = self.errors.iter().map(|e| (e.get(i, j) - m).powi(2)).sum::<f64>() / k;
            let m3: f64 = self.errors.iter().map(|e| (e.get(i, j) - m).powi(3)).sum::<f64>() / k;
            if m2 > 0.0 {
                m3 / m2.powf(1.5)
            } else {
                0.0
            }
        })
    }

    /// Upper-triangle rows, diagonal included.
    pub fn rows(&self) -> Vec<ErrorRow> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.errors.len() * d * (d + 1) / 2);
        for (&replicate, e) in self.replicate_ids.iter().zip(&self.errors) {
            for i in 0..d {
                for j in i..d {
                    out.push(ErrorRow {
                        n: self.n,
                        replicate,
                        i,
                        j,
                        value: e.get(i, j),
                    });
                }
            }
        }
        out
    }

    pub fn summary(&self, cfg: &AsymptoticsConfig) -> AsymptoticsSummary {
        let rows = |m: &SymMatrix| (0..m.dim()).map(|i| m.row(i).to_vec()).collect();
        AsymptoticsSummary {
            n: self.n,
            gamma: cfg.gamma,
            eta: cfg.eta,
            p: if cfg.p.is_infinite() { "inf".into() } else { cfg.p.to_string() },
            estimator: self.estimator,
            delta: self.delta,
            scaling: self.scaling,
            replicates: self.errors.len(),
            failures: self.failures,
            mean: rows(&self.mean),
            variance: rows(&self.variance),
            stderr: rows(&self.stderr()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AsymptoticsSummary {
    pub n: usize,
    pub gamma: f64,
    pub eta: f64,
    pub p: String,
    pub estimator: Estimator,
    pub delta: f64,
    pub scaling: f64,
    pub replicates: usize,
    pub failures: usize,
    pub mean: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

fn fit_once(truth: &GroundTruth, cfg: &AsymptoticsConfig, n: usize, rep: usize) -> Result<SymMatrix> {
    let stream = ((n as u64) << 32) | rep as u64;
    let x = sample_gaussian_stream(&truth.covariance, n, cfg.seed, stream)?;
    let delta = cfg.delta(n);
    let est = match cfg.estimator {
        Estimator::ExactP => fit_l2(&x, delta, &cfg.solver)?.estimate.into_inner(),
        Estimator::Surrogate => fit_linf(&x, delta, &cfg.solver, cfg.penalize_diagonal)?.estimate.into_inner(),
    };
    Ok(est.sub(&truth.precision).scaled(cfg.scaling(n)))
}

/// One sample per `n` in `cfg.n_values`.
pub fn rescaled_errors(truth: &GroundTruth, cfg: &AsymptoticsConfig) -> Result<Vec<RescaledErrorSample>> {
    cfg.validate()?;
    cfg.n_values.iter().map(|&n| rescaled_errors_at(truth, cfg, n)).collect()
}

pub fn rescaled_errors_at(truth: &GroundTruth, cfg: &AsymptoticsConfig, n: usize) -> Result<RescaledErrorSample> {
    cfg.validate()?;
    let results: Vec<Option<SymMatrix>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| fit_once(truth, cfg, n, rep).ok())
        .collect();
    let kept: Vec<(usize, SymMatrix)> = results
        .into_iter()
        .enumerate()
        .filter_map(|(r, e)| e.map(|e| (r, e)))
        .collect();
    let failures = cfg.reps - kept.len();
    if failures as f64 > FAILURE_CAP * cfg.reps as f64 || kept.len() < 2 {
        return Err(Error::NoConvergence {
            what: "asymptotic replicates (failure budget exceeded)",
            iterations: failures,
        });
    }
    Ok(RescaledErrorSample::from_errors(n, cfg.delta(n), cfg.scaling(n), cfg.estimator, kept, failures))
}

#[derive(Clone, Debug)]
pub struct BiasEstimate {
    pub bias: SymMatrix,
    pub stderr: SymMatrix,
    pub samples: usize,
}

/// Monte-Carlo estimate of
/// `−2η Σ⁻¹ E[ sym( sign(Σ⁻¹x)|Σ⁻¹x|^{q−1} xᵀ ) / ‖Σ⁻¹x‖_q^{q−1} ] Σ⁻¹`.
pub fn bias_matrix(cov: &SymPd, p: f64, eta: f64, mc_samples: usize, seed: u64) -> Result<BiasEstimate> {
    if mc_samples < MIN_BIAS_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_BIAS_SAMPLES} Monte-Carlo samples, got {mc_samples}"
        )));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("norm exponent p must exceed 1, got {p}")));
    }
    let q = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let d = cov.dim();
    let theta = cov.inverse()?.into_inner();
    let chunks = mc_samples.div_ceil(BIAS_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let m = BIAS_CHUNK.min(mc_samples - c * BIAS_CHUNK);
            let x = sample_gaussian_stream(cov, m, seed, c as u64)?;
            let mut sum = vec![0.0; d * d];
            let mut sq = vec![0.0; d * d];
            let mut v = vec![0.0; d];
            for row in x.rows() {
                let y = theta.mul_vec(row);
                let norm = crate::matrix::norm_p(&y, q);
                if norm == 0.0 {
                    continue;
                }
                let scale = norm.powf(q - 1.0);
                for (vi, yi) in v.iter_mut().zip(&y) {
                    *vi = yi.signum() * yi.abs().powf(q - 1.0) / scale;
                }
                let s = SymMatrix::from_fn(d, |i, j| 0.5 * (v[i] * row[j] + row[i] * v[j]));
                let b = theta.sandwich(&s).scaled(-2.0 * eta);
                for (k, val) in b.as_slice().iter().enumerate() {
                    sum[k] += val;
                    sq[k] += val * val;
                }
            }
            Ok((sum, sq))
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; d * d];
    let mut sq = vec![0.0; d * d];
    for (s, q2) in partial {
        for k in 0..d * d {
            sum[k] += s[k];
            sq[k] += q2[k];
        }
    }
    let n = mc_samples as f64;
    let bias = SymMatrix::from_fn(d, |i, j| sum[i * d + j] / n);
    let stderr = SymMatrix::from_fn(d, |i, j| {
        let m = sum[i * d + j] / n;
        let var = (sq[i * d + j] / n - m * m).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    });
    Ok(BiasEstimate {
        bias,
        stderr,
        samples: mc_samples,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZeroMass {
    /// `(i, j, frequency)` for every `i < j`.
    pub entries: Vec<(usize, usize, f64)>,
    pub min_null: Option<f64>,
    pub max_edge: Option<f64>,
}

/// Fraction of replicates with an exact zero at each off-diagonal entry.
pub fn zero_mass_frequency(sample: &RescaledErrorSample, truth: &GroundTruth) -> ZeroMass {
    let d = sample.dim();
    let k = sample.errors.len() as f64;
    let mut entries = Vec::new();
    let mut min_null: Option<f64> = None;
    let mut max_edge: Option<f64> = None;
    for i in 0..d {
        for j in i + 1..d {
            // an exact zero in Ĉ leaves −scaling·Σ⁻¹_ij in the error
            let target = -truth.precision.get(i, j) * sample.scaling;
            let exact = sample.errors.iter().filter(|e| e.get(i, j) == target).count() as f64 / k;
            entries.push((i, j, exact));
            if truth.precision.get(i, j) == 0.0 {
                min_null = Some(min_null.map_or(exact, |m| m.min(exact)));
            } else {
                max_edge = Some(max_edge.map_or(exact, |m| m.max(exact)));
            }
        }
    }
    ZeroMass {
        entries,
        min_null,
        max_edge,
    }
}
