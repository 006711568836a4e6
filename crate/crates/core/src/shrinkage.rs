//! The ℓ2-perturbed estimator (Wasserstein shrinkage).
//!
//! For fixed `λ`, the dual objective
//! `-log det C + tr(ĀC) + λδ² + tr(C(λI − C)⁻¹CĀ)` is rotation equivariant,
//! so the minimizer shares eigenvectors with `Ā` and each eigenvalue solves
//! `min_{0<c<λ} -log c + aλc/(λ − c)`. Writing `c = λt`, the stationarity
//! condition is `t² − (2 + aλ)t + 1 = 0`. The outer condition in `λ` reduces
//! to `λδ² = Σ_i t_i(λ)`, whose left side increases and right side decreases.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glasso::{sample_moments, SolverConfig};
use crate::matrix::{cholesky, symeig, Mat, SymMatrix, SymPd};

/// Ratio `c/λ` used for directions with zero sample variance.
pub const BOUNDARY_RATIO: f64 = 1.0 - 1e-8;

const OUTER_MAX_ITERS: usize = 400;
const REFERENCE_MAX_ITERS: usize = 50_000;

#[derive(Clone, Debug)]
pub struct L2FitResult {
    pub estimate: SymPd,
    pub lambda_star: f64,
    pub objective: f64,
    /// `(a_i, c_i)` pairs, ascending in the sample eigenvalue `a_i`.
    pub eigen_path: Vec<(f64, f64)>,
    /// Some eigenvalue sat at the `c → λ` boundary.
    pub boundary: bool,
}

fn resolvent(c: &SymMatrix, lambda: f64) -> Result<SymMatrix> {
    let shifted = c.scaled(-1.0).add_identity(lambda);
    cholesky(&shifted)
        .map_err(|_| Error::InvalidArgument(format!("λI − C is not positive definite at λ = {lambda}")))
        .map(|f| f.inverse())
}

/// `-log det C + tr(ĀC) + λδ² + tr(C(λI − C)⁻¹CĀ)`.
pub fn objective_l2(c: &SymPd, lambda: f64, a_bar: &SymMatrix, delta: f64) -> Result<f64> {
    let r = resolvent(c, lambda)?;
    let crc = c.sandwich(&r);
    Ok(-c.logdet() + a_bar.trace_product(c) + lambda * delta * delta + crc.trace_product(a_bar))
}

/// `|tr(C(λI−C)⁻¹CĀ) − (λ² tr((λI−C)⁻¹Ā) − tr((λI+C)Ā))|`.
pub fn trace_identity_check(c: &SymPd, lambda: f64, a_bar: &SymMatrix) -> Result<f64> {
    let r = resolvent(c, lambda)?;
    let lhs = c.sandwich(&r).trace_product(a_bar);
    let rhs = lambda * lambda * r.trace_product(a_bar)
        - c.add_identity(lambda).trace_product(a_bar);
    Ok((lhs - rhs).abs())
}

/// `-log det C + λ(ρ² − (1/n)Σ xᵀx) + λ² (1/n)Σ xᵀ(λI − C)⁻¹x`.
pub fn wasserstein_objective(c: &SymPd, lambda: f64, x: &Dataset, rho: f64) -> Result<f64> {
    if x.d() != c.dim() {
        return Err(Error::Dimension(format!(
            "data has {} columns, matrix is {}x{}",
            x.d(),
            c.dim(),
            c.dim()
        )));
    }
    let r = resolvent(c, lambda)?;
    let n = x.n() as f64;
    let mut energy = 0.0;
    let mut quad = 0.0;
    for row in x.rows() {
        energy += row.iter().map(|v| v * v).sum::<f64>();
        quad += r.quad_form(row);
    }
    Ok(-c.logdet() + lambda * (rho * rho - energy / n) + lambda * lambda * quad / n)
}

/// Minimizer ratio `t = c/λ` of `-log c + aλc/(λ − c)`.
fn shrink_ratio(a: f64, lambda: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let x = a * lambda;
    1.0 / (1.0 + 0.5 * x + (x + 0.25 * x * x).sqrt())
}

fn eigen_objective(a: &[f64], c: &[f64], lambda: f64, delta: f64) -> f64 {
    let mut f = lambda * delta * delta;
    for (&ai, &ci) in a.iter().zip(c) {
        f += -ci.ln() + ai * lambda * ci / (lambda - ci);
    }
    f
}

/// Fits from a precomputed second-moment matrix.
pub fn fit_l2_moment(a_bar: &SymMatrix, delta: f64) -> Result<L2FitResult> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive (use the unpenalized inverse for δ = 0), got {delta}"
        )));
    }
    let d = a_bar.dim();
    let eig = symeig(a_bar)?;
    let a: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let delta2 = delta * delta;
    let h = |lambda: f64| lambda * delta2 - a.iter().map(|&ai| shrink_ratio(ai, lambda)).sum::<f64>();

    let mut hi = d as f64 / delta2;
    let mut lo = 0.5 * hi;
    let mut guard = 0;
    while h(lo) >= 0.0 {
        hi = lo;
        lo *= 0.5;
        guard += 1;
        if guard > 2000 || lo == 0.0 {
            return Err(Error::NoConvergence {
                what: "outer bracket for the dual variable",
                iterations: guard,
            });
        }
    }
    let mut iters = 0;
    while hi - lo > 4.0 * f64::EPSILON * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > OUTER_MAX_ITERS {
            return Err(Error::NoConvergence {
                what: "outer bisection for the dual variable",
                iterations: OUTER_MAX_ITERS,
            });
        }
    }
    let lambda = 0.5 * (lo + hi);

    let mut boundary = false;
    let c: Vec<f64> = a
        .iter()
        .map(|&ai| {
            let t = shrink_ratio(ai, lambda);
            if t > BOUNDARY_RATIO {
                boundary = true;
                lambda * BOUNDARY_RATIO
            } else {
                lambda * t
            }
        })
        .collect();
    let objective = eigen_objective(&a, &c, lambda, delta);
    let estimate = SymPd::new(eig.compose(&c))?;
    Ok(L2FitResult {
        estimate,
        lambda_star: lambda,
        objective,
        eigen_path: a.iter().copied().zip(c.iter().copied()).collect(),
        boundary,
    })
}

/// The ℓ2-perturbed estimator on a sample.
pub fn fit_l2(x: &Dataset, delta: f64, config: &SolverConfig) -> Result<L2FitResult> {
    let (a_bar, _) = sample_moments(x, config);
    fit_l2_moment(&a_bar, delta)
}

/// Dual objective through its identity form `-log det C + λδ² + λ²tr(RĀ) − λtrĀ`
/// with its gradient in `C` and `λ`; `None` outside the feasible region.
fn reference_eval(c: &SymMatrix, lambda: f64, a_bar: &SymMatrix, delta: f64) -> Option<(f64, SymMatrix, f64)> {
    let fc = cholesky(c).ok()?;
    let shifted = c.scaled(-1.0).add_identity(lambda);
    let fr = cholesky(&shifted).ok()?;
    let r = fr.inverse();
    let ra = r.matmul(a_bar);
    let tr_ra: f64 = (0..c.dim()).map(|i| ra.get(i, i)).sum();
    let rar = r.sandwich(a_bar);
    let f = -fc.logdet() + lambda * delta * delta + lambda * lambda * tr_ra - lambda * a_bar.trace();
    if !f.is_finite() {
        return None;
    }
    let grad_c = fc.inverse().scaled(-1.0).add(&rar.scaled(lambda * lambda));
    let tr_rar = rar.trace();
    let grad_l = delta * delta + 2.0 * lambda * tr_ra - lambda * lambda * tr_rar - a_bar.trace();
    Some((f, grad_c, grad_l))
}

/// Slow cross-check: quasi-Newton over the full symmetric `C` and scalar `λ`,
/// with backtracking that keeps `C ≻ 0` and `λI − C ≻ 0`.
pub fn reference_solver_l2(x: &Dataset, delta: f64) -> Result<L2FitResult> {
    reference_solver_l2_moment(&x.second_moment(), delta)
}

pub fn reference_solver_l2_moment(a_bar: &SymMatrix, delta: f64) -> Result<L2FitResult> {
    let d = a_bar.dim();
    if d > 8 {
        return Err(Error::DimensionGuard { d, max: 8 });
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {delta}")));
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let m = pairs.len() + 1;
    let unpack = |theta: &[f64]| -> (SymMatrix, f64) {
        let mut c = SymMatrix::zeros(d);
        for (k, &(i, j)) in pairs.iter().enumerate() {
            c.set(i, j, theta[k]);
        }
        (c, theta[m - 1])
    };
    let flatten = |gc: &SymMatrix, gl: f64| -> Vec<f64> {
        let mut g: Vec<f64> = pairs
            .iter()
            .map(|&(i, j)| if i == j { gc.get(i, i) } else { 2.0 * gc.get(i, j) })
            .collect();
        g.push(gl);
        g
    };

    let mut theta = vec![0.0; m];
    let mut c0_max: f64 = 0.0;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i == j {
            theta[k] = 1.0 / (a_bar.get(i, i) + delta * delta);
            c0_max = c0_max.max(theta[k]);
        }
    }
    theta[m - 1] = 2.0 * c0_max;
    let (c, l) = unpack(&theta);
    let (mut f, gc, gl) = reference_eval(&c, l, a_bar, delta).ok_or_else(|| {
        Error::InvalidArgument("reference solver started outside the feasible region".into())
    })?;
    let mut g = flatten(&gc, gl);
    let mut h = Mat::identity(m);
    let mut first = true;
    let mut history = vec![f];

    for iter in 0..REFERENCE_MAX_ITERS {
        let gmax = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let stalled = history.len() > 50 && history[history.len() - 51] - f <= 1e-14 * (1.0 + f.abs());
        if gmax <= 1e-11 || stalled {
            break;
        }
        let mut p: Vec<f64> = h.mul_vec(&g).iter().map(|v| -v).collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = Mat::identity(m);
            first = true;
            p = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut alpha = if first { 1e-2 / gmax.max(1e-300) } else { 1.0 };
        let mut next = None;
        for _ in 0..200 {
            let trial: Vec<f64> = theta.iter().zip(&p).map(|(t, pi)| t + alpha * pi).collect();
            let (c, l) = unpack(&trial);
            if let Some((ft, gct, glt)) = reference_eval(&c, l, a_bar, delta) {
                if ft <= f + 1e-4 * alpha * slope {
                    next = Some((trial, ft, flatten(&gct, glt)));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, ft, gt)) = next else {
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            if first {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                h = Mat::identity(m);
                for i in 0..m {
                    h.set(i, i, sy / yy);
                }
                first = false;
            }
            let hy = h.mul_vec(&y);
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..m {
                for j in 0..m {
                    let v = h.get(i, j) - rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                    h.set(i, j, v);
                }
            }
        }
        theta = trial;
        f = ft;
        g = gt;
        history.push(f);
        if iter + 1 == REFERENCE_MAX_ITERS {
            return Err(Error::NoConvergence {
                what: "reference quasi-Newton solver",
                iterations: REFERENCE_MAX_ITERS,
            });
        }
    }

    let (c, lambda) = unpack(&theta);
    let estimate = SymPd::new(c)?;
    let eig_a = symeig(a_bar)?;
    let eig_c = symeig(estimate.matrix())?;
    let mut cs = eig_c.values.clone();
    cs.reverse();
    let boundary = cs.iter().any(|&ci| ci > lambda * BOUNDARY_RATIO);
    Ok(L2FitResult {
        estimate,
        lambda_star: lambda,
        objective: f,
        eigen_path: eig_a.values.iter().copied().zip(cs).collect(),
        boundary,
    })
}
