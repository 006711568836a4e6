//! Weighted graphical lasso with scale-adaptive penalties.
//!
//! Minimizes `-log det C + tr(ĀC) + Σ_{k,j} λ_kj |C_kj|` by proximal Newton:
//! coordinate descent on the local quadratic model over a free set, then an
//! Armijo line search restricted to positive-definite steps.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{cholesky, SymMatrix, SymPd};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tol_kkt: f64,
    pub max_newton_iters: usize,
    pub max_cd_sweeps: usize,
    pub armijo_sigma: f64,
    pub armijo_beta: f64,
    /// Subtract column means before forming Ā and ω̂.
    pub center: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-6,
            max_newton_iters: 100,
            max_cd_sweeps: 20,
            armijo_sigma: 0.25,
            armijo_beta: 0.5,
            center: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_kkt > 0.0) || self.max_newton_iters == 0 || self.max_cd_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "tolerance and iteration caps must be positive".into(),
            ));
        }
        if !(self.armijo_sigma > 0.0 && self.armijo_sigma < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "armijo_sigma must lie in (0, 0.5), got {}",
                self.armijo_sigma
            )));
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "armijo_beta must lie in (0, 1), got {}",
                self.armijo_beta
            )));
        }
        Ok(())
    }
}

/// Symmetric nonnegative entrywise penalty.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyMatrix {
    entries: SymMatrix,
    penalize_diagonal: bool,
}

impl PenaltyMatrix {
    pub fn new(entries: SymMatrix, penalize_diagonal: bool) -> Result<Self> {
        let d = entries.dim();
        for i in 0..d {
            for j in 0..d {
                let v = entries.get(i, j);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "penalty entry ({i},{j}) = {v} is not a finite nonnegative number"
                    )));
                }
            }
            if !penalize_diagonal && entries.get(i, i) != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal penalty ({i},{i}) must be zero when the diagonal is unpenalized"
                )));
            }
        }
        Ok(Self {
            entries,
            penalize_diagonal,
        })
    }

    /// Same value `lambda` on every off-diagonal entry.
    pub fn uniform(d: usize, lambda: f64, penalize_diagonal: bool) -> Result<Self> {
        let entries = SymMatrix::from_fn(d, |i, j| {
            if i != j || penalize_diagonal {
                lambda
            } else {
                0.0
            }
        });
        Self::new(entries, penalize_diagonal)
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn entries(&self) -> &SymMatrix {
        &self.entries
    }

    pub fn penalize_diagonal(&self) -> bool {
        self.penalize_diagonal
    }

    /// `Σ_{k,j} λ_kj |C_kj|` over all ordered pairs.
    pub fn weighted_l1(&self, c: &SymMatrix) -> f64 {
        self.entries
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .map(|(l, v)| l * v.abs())
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct EstimateResult {
    pub estimate: SymPd,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Upper-triangular pairs `(i, j)`, `i < j`, with a nonzero estimate entry.
    pub support: Vec<(usize, usize)>,
    /// Objective after initialization and after every accepted Newton step.
    pub objective_trace: Vec<f64>,
}

pub fn empirical_abs_means(x: &Dataset) -> Vec<f64> {
    x.abs_means()
}

/// `λ_kj = δ(ω_k + ω_j) + δ²` off the diagonal; the diagonal is `2δω_k + δ²`
/// when penalized and zero otherwise.
pub fn build_penalty(omega: &[f64], delta: f64, penalize_diagonal: bool) -> Result<PenaltyMatrix> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("radius must be finite and >= 0, got {delta}")));
    }
    if let Some(k) = omega.iter().position(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument(format!("omega[{k}] = {} is negative", omega[k])));
    }
    let entries = SymMatrix::from_fn(omega.len(), |i, j| {
        if i == j && !penalize_diagonal {
            0.0
        } else {
            delta * (omega[i] + omega[j]) + delta * delta
        }
    });
    PenaltyMatrix::new(entries, penalize_diagonal)
}

/// `-log det C + tr(ĀC) + Σ λ_kj |C_kj|`.
pub fn glasso_objective(a_bar: &SymMatrix, penalty: &PenaltyMatrix, c: &SymPd) -> f64 {
    -c.logdet() + a_bar.trace_product(c) + penalty.weighted_l1(c)
}

/// Largest violation of `Ā − C⁻¹ + Λ ⊙ Z = 0` over `Z ∈ ∂|C|`.
pub fn kkt_residual(a_bar: &SymMatrix, penalty: &PenaltyMatrix, c: &SymPd) -> Result<f64> {
    check_shapes(a_bar, penalty)?;
    if c.dim() != a_bar.dim() {
        return Err(Error::Dimension(format!(
            "estimate is {0}x{0}, sample moment is {1}x{1}",
            c.dim(),
            a_bar.dim()
        )));
    }
    let w = c.inverse()?;
    Ok(kkt_from_inverse(a_bar, penalty, c, &w))
}

fn kkt_from_inverse(a_bar: &SymMatrix, penalty: &PenaltyMatrix, c: &SymMatrix, w: &SymMatrix) -> f64 {
    let d = a_bar.dim();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            let g = a_bar.get(i, j) - w.get(i, j);
            let l = penalty.get(i, j);
            let cij = c.get(i, j);
            let r = if cij == 0.0 {
                (g.abs() - l).max(0.0)
            } else {
                (g + l * cij.signum()).abs()
            };
            worst = worst.max(r);
        }
    }
    worst
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn check_shapes(a_bar: &SymMatrix, penalty: &PenaltyMatrix) -> Result<()> {
    if a_bar.dim() != penalty.dim() {
        return Err(Error::Dimension(format!(
            "sample moment is {0}x{0}, penalty is {1}x{1}",
            a_bar.dim(),
            penalty.dim()
        )));
    }
    Ok(())
}

pub fn weighted_glasso(
    a_bar: &SymMatrix,
    penalty: &PenaltyMatrix,
    config: &SolverConfig,
) -> Result<EstimateResult> {
    config.validate()?;
    check_shapes(a_bar, penalty)?;
    let d = a_bar.dim();
    if let Some(k) = (0..d).find(|&k| !(a_bar.get(k, k) > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "sample second moment has non-positive diagonal entry {k}"
        )));
    }
    if !a_bar.is_finite() {
        return Err(Error::InvalidArgument("sample second moment is not finite".into()));
    }

    let diag0: Vec<f64> = (0..d).map(|k| 1.0 / a_bar.get(k, k)).collect();
    let mut x = SymPd::new(SymMatrix::from_diag(&diag0))?;
    let mut w = x.inverse()?.into_inner();
    let mut f = glasso_objective(a_bar, penalty, &x);
    let mut trace = vec![f];
    let divergence_cap: Vec<f64> = (0..d).map(|k| 1e12 / a_bar.get(k, k)).collect();

    let mut t = SymMatrix::zeros(d);
    let mut u = vec![0.0; d * d];
    let mut free: Vec<(usize, usize)> = Vec::new();

    for iter in 0..=config.max_newton_iters {
        let kkt = kkt_from_inverse(a_bar, penalty, &x, &w);
        if kkt <= config.tol_kkt {
            let support = support_of(&x);
            return Ok(EstimateResult {
                estimate: x,
                objective: f,
                iterations: iter,
                kkt_residual: kkt,
                support,
                objective_trace: trace,
            });
        }
        if iter == config.max_newton_iters {
            break;
        }

        free.clear();
        for i in 0..d {
            for j in i..d {
                let g = a_bar.get(i, j) - w.get(i, j);
                if i == j || x.get(i, j) != 0.0 || g.abs() > penalty.get(i, j) {
                    free.push((i, j));
                }
            }
        }

        // Newton direction D = T - X by coordinate descent, U = D W.
        t.clone_from(x.matrix());
        u.iter_mut().for_each(|v| *v = 0.0);
        let sweeps = (1 + iter / 3).min(config.max_cd_sweeps);
        for _ in 0..sweeps {
            for &(i, j) in &free {
                let wij = w.get(i, j);
                let (a, wdw_ij) = if i == j {
                    let wii = wij;
                    (wii * wii, col_dot(&w, &u, d, i, j))
                } else {
                    (
                        wij * wij + w.get(i, i) * w.get(j, j),
                        col_dot(&w, &u, d, i, j),
                    )
                };
                let b = a_bar.get(i, j) - wij + wdw_ij;
                let c = t.get(i, j);
                let target = soft_threshold(c - b / a, penalty.get(i, j) / a);
                let mu = target - c;
                if mu == 0.0 {
                    continue;
                }
                t.set(i, j, target);
                let row_j: Vec<f64> = w.row(j).to_vec();
                for (uk, wk) in u[i * d..(i + 1) * d].iter_mut().zip(&row_j) {
                    *uk += mu * wk;
                }
                if i != j {
                    let row_i: Vec<f64> = w.row(i).to_vec();
                    for (uk, wk) in u[j * d..(j + 1) * d].iter_mut().zip(&row_i) {
                        *uk += mu * wk;
                    }
                }
            }
        }

        // Armijo decrement tr(G D) + ‖Λ⊙T‖₁ − ‖Λ⊙X‖₁.
        let mut decrement = penalty.weighted_l1(&t) - penalty.weighted_l1(&x);
        for i in 0..d {
            for j in 0..d {
                decrement += (a_bar.get(i, j) - w.get(i, j)) * (t.get(i, j) - x.get(i, j));
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        let rounding = 8.0 * f64::EPSILON * f.abs().max(1.0);
        for _ in 0..60 {
            let candidate = if alpha == 1.0 {
                t.clone()
            } else {
                x.lerp(&t, alpha)
            };
            if let Ok(factor) = cholesky(&candidate) {
                let cand = SymPd::from_parts(candidate, factor);
                let fc = glasso_objective(a_bar, penalty, &cand);
                if fc.is_finite() && fc <= f + config.armijo_sigma * alpha * decrement + rounding {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            alpha *= config.armijo_beta;
        }
        let (cand, fc) = match accepted {
            Some(v) => v,
            None => {
                if decrement.abs() <= 1e-15 * f.abs().max(1.0) {
                    // Model says no progress possible at working precision.
                    let support = support_of(&x);
                    return Ok(EstimateResult {
                        estimate: x,
                        objective: f,
                        iterations: iter,
                        kkt_residual: kkt,
                        support,
                        objective_trace: trace,
                    });
                }
                return Err(Error::LineSearch { iteration: iter });
            }
        };
        if let Some(k) = (0..d).find(|&k| cand.get(k, k) > divergence_cap[k]) {
            return Err(Error::Unbounded {
                index: k,
                value: cand.get(k, k),
            });
        }
        x = cand;
        w = x.inverse()?.into_inner();
        f = fc;
        trace.push(f);
    }
    Err(Error::NoConvergence {
        what: "proximal Newton",
        iterations: config.max_newton_iters,
    })
}

/// `(W D W)_ij = Σ_k U_ki W_kj` with `U = D W`.
fn col_dot(w: &SymMatrix, u: &[f64], d: usize, i: usize, j: usize) -> f64 {
    let wj = w.row(j);
    let mut s = 0.0;
    for k in 0..d {
        s += u[k * d + i] * wj[k];
    }
    s
}

fn support_of(c: &SymMatrix) -> Vec<(usize, usize)> {
    let d = c.dim();
    let mut s = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if c.get(i, j) != 0.0 {
                s.push((i, j));
            }
        }
    }
    s
}

/// Ā and ω̂ for the estimator, centered first when `config.center` is set.
pub fn sample_moments(x: &Dataset, config: &SolverConfig) -> (SymMatrix, Vec<f64>) {
    if config.center {
        let means = x.column_means();
        let centered = x.affine_columns(&means, &vec![1.0; x.d()]);
        (centered.second_moment(), centered.abs_means())
    } else {
        (x.second_moment(), x.abs_means())
    }
}

/// The ℓ∞-surrogate estimator: ω̂ → Λ̂ → weighted graphical lasso on Ā.
pub fn fit_linf(
    x: &Dataset,
    delta: f64,
    config: &SolverConfig,
    penalize_diagonal: bool,
) -> Result<EstimateResult> {
    if x.d() < 2 || x.n() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 2 and d >= 2, got n = {}, d = {}",
            x.n(),
            x.d()
        )));
    }
    let (a_bar, omega) = sample_moments(x, config);
    let penalty = build_penalty(&omega, delta, penalize_diagonal)?;
    weighted_glasso(&a_bar, &penalty, config)
}
