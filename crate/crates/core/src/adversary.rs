//! Worst-case perturbation oracles for `max_{‖Δ‖_p ≤ δ} (x + Δ)ᵀ C (x + Δ)`.
//!
//! * ℓ2: exact, through the one-dimensional dual (a trust-region subproblem
//!   solved on its secular equation, hard case included).
//! * ℓ∞: exact by vertex enumeration for `d ≤ 20`; the inner problem is a
//!   convex maximization over a box, so some vertex is optimal.
//! * [`surrogate_linf`]: the convex upper bound used by the ℓ∞ estimator.
//! * [`expansion_terms`]: zeroth, first and second order terms of the
//!   small-δ expansion for any `p ∈ (1, ∞]`.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm_p, symeig, SymMatrix, SymPd};

/// Largest dimension accepted by [`worst_case_linf_exact`].
pub const LINF_EXACT_MAX_DIM: usize = 20;

const SECULAR_MAX_ITERS: usize = 200;

/// Perturbation geometry: an `ℓ_p` ball of radius `delta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationSpec {
    p: f64,
    delta: f64,
}

impl PerturbationSpec {
    pub fn new(p: f64, delta: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidArgument(format!("norm exponent p must exceed 1, got {p}")));
        }
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("radius must be finite and >= 0, got {delta}")));
        }
        Ok(Self { p, delta })
    }

    pub fn l2(delta: f64) -> Result<Self> {
        Self::new(2.0, delta)
    }

    pub fn linf(delta: f64) -> Result<Self> {
        Self::new(f64::INFINITY, delta)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Hölder conjugate exponent.
    pub fn q(&self) -> f64 {
        if self.p.is_infinite() {
            1.0
        } else {
            self.p / (self.p - 1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorstCaseResult {
    pub value: f64,
    pub maximizer: Option<Vec<f64>>,
    /// Optimal dual multiplier (ℓ2 only); `None` when no dual solve was needed.
    pub dual_lambda: Option<f64>,
    /// The maximizer needed an eigenvector completion (ℓ2 hard case).
    pub hard_case: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionTerms {
    pub zeroth: f64,
    pub first: f64,
    pub second: f64,
    pub total: f64,
}

/// Exact ℓ2 worst case via the dual `xᵀCx + min_{λ ≥ λ_max} λδ² + xᵀC(λI − C)⁻¹Cx`.
pub fn worst_case_l2(x: &[f64], c: &SymPd, delta: f64) -> Result<WorstCaseResult> {
    check_dims(x, c)?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {delta}")));
    }
    let base = c.quad_form(x);
    if delta == 0.0 {
        return Ok(WorstCaseResult {
            value: base,
            maximizer: Some(vec![0.0; x.len()]),
            dual_lambda: None,
            hard_case: false,
        });
    }

    let eig = symeig(c.matrix())?;
    let d = x.len();
    let y = eig.project(x);
    let g: Vec<f64> = (0..d).map(|i| eig.values[i] * y[i]).collect();
    let c_max = eig.max_value();
    let eig_tol = 1e-12 * c_max.abs().max(f64::MIN_POSITIVE);
    let is_top: Vec<bool> = eig.values.iter().map(|&v| c_max - v <= eig_tol).collect();
    let g_norm2: f64 = g.iter().map(|v| v * v).sum();
    let g_top2: f64 = g.iter().zip(&is_top).filter(|(_, &t)| t).map(|(v, _)| v * v).sum();

    let delta2 = delta * delta;
    let mut coords = vec![0.0; d];
    let (lambda, hard_case) = if g_top2 <= 1e-28 * g_norm2 || g_norm2 == 0.0 {
        let phi_rest: f64 = (0..d)
            .filter(|&i| !is_top[i])
            .map(|i| (g[i] / (c_max - eig.values[i])).powi(2))
            .sum();
        if phi_rest <= delta2 {
            (c_max, true)
        } else {
            (solve_secular(&g, &eig.values, c_max, delta)?, false)
        }
    } else {
        (solve_secular(&g, &eig.values, c_max, delta)?, false)
    };

    let value = if hard_case {
        let mut resolvent = 0.0;
        let mut used = 0.0;
        for i in 0..d {
            if !is_top[i] {
                let gap = lambda - eig.values[i];
                coords[i] = g[i] / gap;
                used += coords[i] * coords[i];
                resolvent += g[i] * g[i] / gap;
            }
        }
        let top = is_top.iter().position(|&t| t).expect("non-empty top eigenspace");
        coords[top] = (delta2 - used).max(0.0).sqrt();
        base + lambda * delta2 + resolvent
    } else {
        let mut resolvent = 0.0;
        for i in 0..d {
            let gap = lambda - eig.values[i];
            coords[i] = g[i] / gap;
            resolvent += g[i] * g[i] / gap;
        }
        base + lambda * delta2 + resolvent
    };

    let maximizer: Vec<f64> = (0..d)
        .map(|r| (0..d).map(|k| eig.vectors.get(r, k) * coords[k]).sum())
        .collect();
    Ok(WorstCaseResult {
        value,
        maximizer: Some(maximizer),
        dual_lambda: Some(lambda),
        hard_case,
    })
}

/// Root of `Σ g_i² / (λ − c_i)² = δ²` on `λ > c_max`, by Newton on
/// `1/√φ(λ) − 1/δ` inside a bisection bracket.
fn solve_secular(g: &[f64], c: &[f64], c_max: f64, delta: f64) -> Result<f64> {
    let phi = |lambda: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for (gi, ci) in g.iter().zip(c) {
            let gap = lambda - ci;
            let t = gi * gi / (gap * gap);
            f += t;
            df -= 2.0 * t / gap;
        }
        (f, df)
    };
    let g_norm = dot(g, g).sqrt();
    let g_top = g
        .iter()
        .zip(c)
        .filter(|(_, &ci)| ci == c_max)
        .map(|(gi, _)| gi.abs())
        .fold(0.0, f64::max);
    let mut lo = c_max + g_top / delta;
    let mut hi = c_max + g_norm / delta;
    if lo >= hi {
        return Ok(hi);
    }
    if lo <= c_max {
        lo = c_max + (hi - c_max) * 1e-300_f64.max(f64::EPSILON * f64::EPSILON);
    }
    let target = 1.0 / delta;
    let mut lambda = hi;
    for _ in 0..SECULAR_MAX_ITERS {
        let (f, df) = phi(lambda);
        let psi = 1.0 / f.sqrt() - target;
        if psi.abs() <= 1e-15 * target || (hi - lo) <= 4.0 * f64::EPSILON * hi {
            return Ok(lambda);
        }
        if psi < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let dpsi = -0.5 * df / (f * f.sqrt());
        let mut next = lambda - psi / dpsi;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        lambda = next;
    }
    Err(Error::NoConvergence {
        what: "secular equation",
        iterations: SECULAR_MAX_ITERS,
    })
}

/// Exact ℓ∞ worst case by enumerating the `2^d` vertices of the box.
///
/// Ties (within `1e-11` relative) go to the lexicographically smallest sign
/// vector, with `-1 < +1`.
pub fn worst_case_linf_exact(x: &[f64], c: &SymPd, delta: f64) -> Result<WorstCaseResult> {
    check_dims(x, c)?;
    let d = x.len();
    if d > LINF_EXACT_MAX_DIM {
        return Err(Error::DimensionGuard {
            d,
            max: LINF_EXACT_MAX_DIM,
        });
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {delta}")));
    }
    let m = c.matrix();
    let eval = |s: &[f64]| -> f64 {
        let z: Vec<f64> = x.iter().zip(s).map(|(xi, si)| xi + delta * si).collect();
        m.quad_form(&z)
    };

    let mut signs = vec![-1.0; d];
    let mut z: Vec<f64> = x.iter().map(|xi| xi - delta).collect();
    let mut u = m.mul_vec(&z);
    let mut val = dot(&z, &u);
    let mut best_val = val;
    let mut best_signs = signs.clone();
    let scale = val.abs().max(delta * delta * m.l11_norm()).max(f64::MIN_POSITIVE);
    let tie_tol = 1e-11 * scale;

    let total: u64 = 1 << d;
    for k in 1..total {
        let j = k.trailing_zeros() as usize;
        let dz = -2.0 * signs[j] * delta;
        signs[j] = -signs[j];
        z[j] += dz;
        if k % 256 == 0 {
            u = m.mul_vec(&z);
            val = dot(&z, &u);
        } else {
            val += 2.0 * dz * u[j] + dz * dz * m.get(j, j);
            for (ui, cij) in u.iter_mut().zip(m.row(j)) {
                *ui += dz * cij;
            }
        }
        if val > best_val + tie_tol
            || ((val - best_val).abs() <= tie_tol && lex_less(&signs, &best_signs))
        {
            best_val = val;
            best_signs.copy_from_slice(&signs);
        }
    }
    let value = eval(&best_signs);
    Ok(WorstCaseResult {
        value,
        maximizer: Some(best_signs.iter().map(|s| s * delta).collect()),
        dual_lambda: None,
        hard_case: false,
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// `xᵀCx + 2δ‖Cx‖₁ + δ²‖C‖₁,₁`, an upper bound on the exact ℓ∞ worst case.
pub fn surrogate_linf(x: &[f64], c: &SymPd, delta: f64) -> f64 {
    let cx = c.mul_vec(x);
    dot(x, &cx) + 2.0 * delta * norm_p(&cx, 1.0) + delta * delta * c.l11_norm()
}

/// Terms of the small-δ expansion `xᵀCx + 2δ‖Cx‖_q + δ² vᵀCv`, with `v` the
/// unit-ℓp vector attaining the Hölder pairing with `Cx`.
pub fn expansion_terms(x: &[f64], c: &SymPd, spec: PerturbationSpec) -> Result<ExpansionTerms> {
    check_dims(x, c)?;
    let cx = c.mul_vec(x);
    let q = spec.q();
    let delta = spec.delta();
    let v: Vec<f64> = if q == 1.0 {
        if let Some(index) = cx.iter().position(|&v| v == 0.0) {
            return Err(Error::ZeroComponent { index });
        }
        cx.iter().map(|v| v.signum()).collect()
    } else {
        let norm = norm_p(&cx, q);
        if norm == 0.0 {
            return Err(Error::InvalidArgument(
                "Cx = 0: the Hölder pairing vector is undefined".into(),
            ));
        }
        let denom = norm.powf(q - 1.0);
        cx.iter()
            .map(|&g| if g == 0.0 { 0.0 } else { g.signum() * g.abs().powf(q - 1.0) / denom })
            .collect()
    };
    let zeroth = dot(x, &cx);
    let first = 2.0 * delta * norm_p(&cx, q);
    let second = delta * delta * c.quad_form(&v);
    Ok(ExpansionTerms {
        zeroth,
        first,
        second,
        total: zeroth + first + second,
    })
}

/// Exact worst case for the geometries that have an exact oracle (ℓ2, ℓ∞).
pub fn worst_case(x: &[f64], c: &SymPd, spec: PerturbationSpec) -> Result<WorstCaseResult> {
    if spec.p() == 2.0 {
        worst_case_l2(x, c, spec.delta())
    } else if spec.p().is_infinite() {
        worst_case_linf_exact(x, c, spec.delta())
    } else {
        Err(Error::InvalidArgument(format!(
            "no exact worst-case oracle for p = {}",
            spec.p()
        )))
    }
}

/// `-log det C + (1/n) Σ_i max_{‖Δ‖ ≤ δ} (x_i + Δ)ᵀ C (x_i + Δ)`.
pub fn adversarial_loss(data: &Dataset, c: &SymPd, spec: PerturbationSpec) -> Result<f64> {
    let mut acc = 0.0;
    for row in data.rows() {
        acc += worst_case(row, c, spec)?.value;
    }
    Ok(-c.logdet() + acc / data.n() as f64)
}

/// `-log det C + (1/n) Σ_i surrogate_linf(x_i, C, δ)`.
pub fn surrogate_loss(data: &Dataset, c: &SymPd, delta: f64) -> f64 {
    let total: f64 = data.rows().map(|row| surrogate_linf(row, c, delta)).sum();
    -c.logdet() + total / data.n() as f64
}

fn check_dims(x: &[f64], c: &SymMatrix) -> Result<()> {
    if x.len() != c.dim() {
        return Err(Error::Dimension(format!(
            "vector has length {}, matrix is {}x{}",
            x.len(),
            c.dim(),
            c.dim()
        )));
    }
    Ok(())
}
