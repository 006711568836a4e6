//! Support-recovery metrics, BIC and grid selection of δ or λ.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glasso::{build_penalty, sample_moments, weighted_glasso, EstimateResult, PenaltyMatrix, SolverConfig};
use crate::matrix::{SymMatrix, SymPd};

/// Edge-recovery counts over the `d(d−1)/2` unordered off-diagonal pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub mcc: f64,
    pub tnr: f64,
    pub tpr: f64,
    pub confusion: Confusion,
}

fn pair_mask(pairs: &[(usize, usize)], d: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; d * d];
    for &(i, j) in pairs {
        if i >= d || j >= d || i == j {
            return Err(Error::InvalidArgument(format!(
                "pair ({i},{j}) is not an off-diagonal pair of a {d}x{d} matrix"
            )));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        mask[a * d + b] = true;
    }
    Ok(mask)
}

/// Counts over upper-triangular pairs; either orientation is accepted.
pub fn confusion(est: &[(usize, usize)], truth: &[(usize, usize)], d: usize) -> Result<Confusion> {
    let e = pair_mask(est, d)?;
    let t = pair_mask(truth, d)?;
    let mut c = Confusion::default();
    for i in 0..d {
        for j in i + 1..d {
            match (e[i * d + j], t[i * d + j]) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// ACC, MCC, TNR, TPR; a ratio with a zero denominator is reported as 0.
pub fn classification_metrics(c: Confusion) -> MetricsReport {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 {
        0.0
    } else {
        (tp * tn - fp * fn_) / den.sqrt()
    };
    MetricsReport {
        acc: ratio(c.tp + c.tn, c.total()),
        mcc,
        tnr: ratio(c.tn, c.tn + c.fp),
        tpr: ratio(c.tp, c.tp + c.fn_),
        confusion: c,
    }
}

/// `n(−log det C + tr(ĀC)) + log(n)·k`.
pub fn bic(a_bar: &SymMatrix, c: &SymPd, n: usize, support_size: usize) -> f64 {
    let n_f = n as f64;
    n_f * (-c.logdet() + a_bar.trace_product(c)) + n_f.ln() * support_size as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "perturbed")]
    Perturbed,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l1_std")]
    L1Std,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Perturbed => "perturbed",
            Method::L1 => "l1",
            Method::L1Std => "l1_std",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "perturbed" => Ok(Method::Perturbed),
            "l1" => Ok(Method::L1),
            "l1_std" => Ok(Method::L1Std),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected perturbed, l1 or l1_std)"
            ))),
        }
    }
}

/// `points` equally spaced values on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn default_grid(points: usize) -> Vec<f64> {
    linear_grid(0.01, 1.0, points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub parameter: f64,
    pub bic: f64,
    pub support_size: usize,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct Selection {
    pub best: f64,
    pub fit: EstimateResult,
    /// Rows for the grid values whose fit succeeded, in grid order.
    pub table: Vec<GridRow>,
    pub failures: usize,
}

/// Fits one grid value with the given method; returns the fit and the
/// moment matrix it was computed from.
pub fn fit_method(
    x: &Dataset,
    parameter: f64,
    method: Method,
    config: &SolverConfig,
) -> Result<(EstimateResult, SymMatrix)> {
    let prepared;
    let data = if method == Method::L1Std {
        let inv_sd: Vec<f64> = x
            .column_std()
            .iter()
            .map(|s| if *s > 0.0 { 1.0 / s } else { 1.0 })
            .collect();
        prepared = x.scale_columns(&inv_sd);
        &prepared
    } else {
        x
    };
    let (a_bar, omega) = sample_moments(data, config);
    let penalty = match method {
        Method::Perturbed => build_penalty(&omega, parameter, false)?,
        Method::L1 | Method::L1Std => PenaltyMatrix::uniform(x.d(), parameter, false)?,
    };
    let fit = weighted_glasso(&a_bar, &penalty, config)?;
    Ok((fit, a_bar))
}

/// Minimizes BIC over the grid; ties go to the smaller parameter.
pub fn select_parameter(
    x: &Dataset,
    grid: &[f64],
    method: Method,
    config: &SolverConfig,
) -> Result<Selection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("parameter grid is empty".into()));
    }
    let fits: Vec<Result<(EstimateResult, f64)>> = grid
        .par_iter()
        .map(|&parameter| {
            let (fit, a_bar) = fit_method(x, parameter, method, config)?;
            let score = bic(&a_bar, &fit.estimate, x.n(), fit.support.len());
            Ok((fit, score))
        })
        .collect();
    let mut table = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, EstimateResult)> = None;
    let mut failures = 0;
    let mut last_error = None;
    for (&parameter, outcome) in grid.iter().zip(fits) {
        match outcome {
            Ok((fit, score)) => {
                table.push(GridRow {
                    parameter,
                    bic: score,
                    support_size: fit.support.len(),
                    objective: fit.objective,
                });
                let better = match &best {
                    None => true,
                    Some((bp, bs, _)) => score < *bs || (score == *bs && parameter < *bp),
                };
                if better {
                    best = Some((parameter, score, fit));
                }
            }
            Err(e) => {
                failures += 1;
                last_error = Some(e);
            }
        }
    }
    match best {
        Some((best, _, fit)) => Ok(Selection {
            best,
            fit,
            table,
            failures,
        }),
        None => Err(last_error.expect("non-empty grid with no success records an error")),
    }
}
