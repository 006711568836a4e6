//! Incoherence constants, sample-size bounds and primal–dual witness
//! certificates for the scale-adaptive estimator.
//!
//! The Hessian `Γ = Σ ⊗ Σ` is indexed by ordered pairs, `(i, j) ↦ i·d + j`,
//! with both orientations of every support edge in `S`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glasso::{build_penalty, sample_moments, weighted_glasso, PenaltyMatrix, SolverConfig};
use crate::matrix::{cholesky, SymMatrix, SymPd};

/// Largest `d` for which the dense `d² × d²` Hessian is built.
pub const KRONECKER_MAX_DIM: usize = 44;

/// Penalty standing in for `+∞` off the support in the restricted problem.
pub const RESTRICTED_PENALTY: f64 = 1e12;

const TWO_OVER_PI: f64 = 2.0 / std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct SupportIndex {
    pub d: usize,
    /// Unordered off-diagonal edges `(i, j)`, `i < j`.
    pub e: Vec<(usize, usize)>,
    /// `E` in both orientations plus the diagonal, sorted by `i·d + j`.
    pub s_pairs: Vec<(usize, usize)>,
    /// Largest row count of nonzeros, diagonal included.
    pub s: usize,
}

impl SupportIndex {
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut in_s = vec![false; d * d];
        for k in 0..d {
            in_s[k * d + k] = true;
        }
        let mut e = Vec::new();
        for &(i, j) in edges {
            if i >= d || j >= d || i == j {
                return Err(Error::InvalidArgument(format!("({i},{j}) is not an off-diagonal pair")));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if !in_s[a * d + b] {
                e.push((a, b));
            }
            in_s[a * d + b] = true;
            in_s[b * d + a] = true;
        }
        e.sort_unstable();
        let s_pairs: Vec<(usize, usize)> = (0..d * d).filter(|&k| in_s[k]).map(|k| (k / d, k % d)).collect();
        let s = (0..d).map(|i| (0..d).filter(|&j| in_s[i * d + j]).count()).max().unwrap_or(1);
        Ok(Self { d, e, s_pairs, s })
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i == j || self.e.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Ordered off-diagonal pairs outside `S`.
    pub fn complement(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in 0..self.d {
                if !self.contains(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

pub fn support_sets(precision: &SymMatrix, tol: f64) -> SupportIndex {
    let d = precision.dim();
    let mut edges = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            if precision.get(i, j).abs() > tol {
                edges.push((i, j));
            }
        }
    }
    SupportIndex::from_edges(d, &edges).expect("edges come from the matrix itself")
}

/// `Γ_SS⁻¹` row sums and the rows of `A = Γ_{S^cS}Γ_SS⁻¹`.
struct KroneckerParts {
    kappa_gamma: f64,
    complement: Vec<(usize, usize)>,
    a_rows: Vec<Vec<f64>>,
}

fn kronecker_parts(cov: &SymMatrix, support: &SupportIndex) -> Result<KroneckerParts> {
    let d = cov.dim();
    if d != support.d {
        return Err(Error::Dimension(format!("covariance is {d}x{d}, support is for d = {}", support.d)));
    }
    if d > KRONECKER_MAX_DIM {
        return Err(Error::DimensionGuard {
            d,
            max: KRONECKER_MAX_DIM,
        });
    }
    let sp = &support.s_pairs;
    let gamma = |a: (usize, usize), b: (usize, usize)| cov.get(a.0, b.0) * cov.get(a.1, b.1);
    let g_ss = SymMatrix::from_fn(sp.len(), |u, v| gamma(sp[u], sp[v]));
    let factor = cholesky(&g_ss)?;
    let inv = factor.inverse();
    let kappa_gamma = inv.inf_norm();
    let complement = support.complement();
    let a_rows = complement
        .iter()
        .map(|&e| {
            let g: Vec<f64> = sp.iter().map(|&s| gamma(e, s)).collect();
            factor.solve(&g)
        })
        .collect();
    Ok(KroneckerParts {
        kappa_gamma,
        complement,
        a_rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incoherence {
    pub mu_star: f64,
    pub psi_star: f64,
    pub kappa_gamma: f64,
    pub kappa_sigma: f64,
    pub kappa_a: f64,
}

/// `ω*_i = √(2Σ_ii/π)`.
pub fn omega_star(cov: &SymMatrix) -> Vec<f64> {
    cov.diag().iter().map(|v| (TWO_OVER_PI * v).sqrt()).collect()
}

/// `(σ_max, σ_min)` over the marginal standard deviations.
pub fn sigma_range(cov: &SymMatrix) -> (f64, f64) {
    let sd: Vec<f64> = cov.diag().iter().map(|v| v.sqrt()).collect();
    (
        sd.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        sd.iter().copied().fold(f64::INFINITY, f64::min),
    )
}

fn incoherence_from_parts(parts: &KroneckerParts, support: &SupportIndex, omega: &[f64], delta: f64) -> (f64, f64, f64) {
    let lambda = |i: usize, j: usize| {
        if i == j {
            0.0
        } else {
            delta * (omega[i] + omega[j]) + delta * delta
        }
    };
    let mut mu: f64 = 0.0;
    let mut psi: f64 = 0.0;
    for (&(ei, ej), row) in parts.complement.iter().zip(&parts.a_rows) {
        let le = lambda(ei, ej);
        let mut plain = 0.0;
        let mut weighted = 0.0;
        for (&(si, sj), a) in support.s_pairs.iter().zip(row) {
            plain += a.abs();
            weighted += a.abs() * lambda(si, sj);
        }
        mu = mu.max(plain);
        psi = psi.max(weighted / le);
    }
    (mu, psi, mu)
}

pub fn incoherence(cov: &SymPd, support: &SupportIndex, delta: f64) -> Result<Incoherence> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {delta}")));
    }
    let parts = kronecker_parts(cov, support)?;
    let (mu_star, psi_star, kappa_a) = incoherence_from_parts(&parts, support, &omega_star(cov), delta);
    Ok(Incoherence {
        mu_star,
        psi_star,
        kappa_gamma: parts.kappa_gamma,
        kappa_sigma: cov.inf_norm(),
        kappa_a,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem5Constants {
    pub c_delta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub n_min: f64,
    pub error_bound_coeff: f64,
}

/// Constants evaluated from the `κ`'s, `σ`'s and the user constants `C1`, `C2`.
#[allow(clippy::too_many_arguments)]
pub fn theorem5_from_parts(
    kappa_gamma: f64,
    kappa_sigma: f64,
    kappa_a: f64,
    sigma_max: f64,
    sigma_min: f64,
    s: usize,
    d: usize,
    tau: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
) -> Result<Theorem5Constants> {
    if !(tau > 2.0) {
        return Err(Error::InvalidArgument(format!("tau must exceed 2, got {tau}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let c_delta = tau.sqrt() / alpha
        * f64::max(
            16.0 * c2 * sigma_max,
            2.0 * sqrt_2pi * (1.0 + kappa_a) * c1 * sigma_max * sigma_max / sigma_min,
        );
    let b = c1 * sigma_max * sigma_max * tau.sqrt() + 3.0 * TWO_OVER_PI.sqrt() * sigma_max * c_delta + c_delta * c_delta;
    let s = s as f64;
    let ratio = sigma_max / sigma_min;
    let third = 12.0 * sqrt_2pi * (1.0 + kappa_a) * kappa_sigma.powi(3) * kappa_gamma.powi(2) * b * b
        / (alpha * sigma_min * c_delta);
    let n_min = [
        2.0 * std::f64::consts::PI * c2 * c2 * ratio * ratio * tau,
        36.0 * kappa_gamma.powi(4) * kappa_sigma.powi(6) * b * b * s * s,
        third * third * s * s,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max)
        * (d as f64).ln();
    Ok(Theorem5Constants {
        c_delta,
        b,
        n_min,
        error_bound_coeff: 2.0 * kappa_gamma * b,
    })
}

pub fn theorem5_constants(
    cov: &SymPd,
    support: &SupportIndex,
    tau: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
) -> Result<Theorem5Constants> {
    let parts = kronecker_parts(cov, support)?;
    let (_, _, kappa_a) = incoherence_from_parts(&parts, support, &omega_star(cov), 1.0);
    let (sigma_max, sigma_min) = sigma_range(cov);
    theorem5_from_parts(
        parts.kappa_gamma,
        cov.inf_norm(),
        kappa_a,
        sigma_max,
        sigma_min,
        support.s,
        support.d,
        tau,
        alpha,
        c1,
        c2,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub d: usize,
    pub s: usize,
    pub delta: f64,
    pub kappa_gamma: f64,
    pub kappa_sigma: f64,
    pub kappa_a: f64,
    pub mu_star: f64,
    pub psi_star: f64,
    pub omega_star: Vec<f64>,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub c_delta: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub n_min: f64,
    pub error_bound_coeff: f64,
    pub tau: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn diagnostics_report(
    cov: &SymPd,
    support: &SupportIndex,
    delta: f64,
    tau: f64,
    alpha: f64,
    c1: f64,
    c2: f64,
) -> Result<DiagnosticsReport> {
    let inc = incoherence(cov, support, delta)?;
    let (sigma_max, sigma_min) = sigma_range(cov);
    let t5 = theorem5_from_parts(
        inc.kappa_gamma,
        inc.kappa_sigma,
        inc.kappa_a,
        sigma_max,
        sigma_min,
        support.s,
        support.d,
        tau,
        alpha,
        c1,
        c2,
    )?;
    Ok(DiagnosticsReport {
        d: support.d,
        s: support.s,
        delta,
        kappa_gamma: inc.kappa_gamma,
        kappa_sigma: inc.kappa_sigma,
        kappa_a: inc.kappa_a,
        mu_star: inc.mu_star,
        psi_star: inc.psi_star,
        omega_star: omega_star(cov),
        sigma_max,
        sigma_min,
        c_delta: t5.c_delta,
        b: t5.b,
        n_min: t5.n_min,
        error_bound_coeff: t5.error_bound_coeff,
        tau,
        alpha,
        c1,
        c2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleBoundCheck {
    pub lhs_mu: f64,
    pub rhs_mu: f64,
    pub lhs_psi: f64,
    pub rhs_psi: f64,
    pub hypothesis_ok: bool,
}

impl ScaleBoundCheck {
    pub fn holds(&self) -> bool {
        self.lhs_mu <= self.rhs_mu && self.lhs_psi <= self.rhs_psi
    }
}

/// Both sides of the correlation-scale incoherence bounds, with `A†` built
/// from the correlation matrix `R = D⁻¹ΣD⁻¹`.
pub fn scale_adaptive_bound_check(cov: &SymPd, support: &SupportIndex, delta: f64) -> Result<ScaleBoundCheck> {
    let inc = incoherence(cov, support, delta)?;
    let inv_sd: Vec<f64> = cov.diag().iter().map(|v| 1.0 / v.sqrt()).collect();
    let corr = cov.congruence_diag(&inv_sd);
    let parts = kronecker_parts(&corr, support)?;
    let a_dagger = parts
        .a_rows
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let (sigma_max, sigma_min) = sigma_range(cov);
    let ratio = sigma_max / sigma_min;
    Ok(ScaleBoundCheck {
        lhs_mu: inc.mu_star,
        rhs_mu: ratio * ratio * a_dagger,
        lhs_psi: inc.psi_star,
        rhs_psi: 21.0 / 20.0 * ratio * a_dagger,
        hypothesis_ok: 10.0 * delta < TWO_OVER_PI.sqrt() * sigma_min,
    })
}

#[derive(Clone, Debug)]
pub struct PdwCertificate {
    pub restricted_estimate: SymPd,
    /// `max_{e ∈ S^c} |Ż_e|`.
    pub dual_offsupport_max: f64,
    pub strictly_feasible: bool,
    /// `‖Ā − Σ‖_max`.
    pub w_max: f64,
    /// `2κ_Γ(‖W‖_max + max_{E} λ̂)`.
    pub r: f64,
    /// `‖Ċ⁻¹ − Σ + Σ(Ċ − Σ⁻¹)Σ‖_max`.
    pub remainder_max: f64,
    /// `max_k |ω̂_k − ω*_k|`.
    pub t_omega: f64,
    /// `2 t_ω / δ`.
    pub eps_n: f64,
    /// Support of the unrestricted fit, computed when strictly feasible.
    pub unrestricted_support: Option<Vec<(usize, usize)>>,
}

impl PdwCertificate {
    /// The unrestricted fit lies inside `E` (only meaningful when strictly feasible).
    pub fn unrestricted_within(&self, support: &SupportIndex) -> Option<bool> {
        self.unrestricted_support
            .as_ref()
            .map(|s| s.iter().all(|&(i, j)| support.contains(i, j)))
    }

    /// The unrestricted fit recovers `E` exactly.
    pub fn exact_recovery(&self, support: &SupportIndex) -> bool {
        self.unrestricted_support.as_deref() == Some(support.e.as_slice())
    }
}

pub fn pdw_certificate(
    x: &Dataset,
    cov_truth: &SymPd,
    support: &SupportIndex,
    delta: f64,
    config: &SolverConfig,
) -> Result<PdwCertificate> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {delta}")));
    }
    let d = x.d();
    if cov_truth.dim() != d || support.d != d {
        return Err(Error::Dimension("data, covariance and support disagree in dimension".into()));
    }
    let (a_bar, omega_hat) = sample_moments(x, config);
    let penalty = build_penalty(&omega_hat, delta, false)?;
    let restricted_entries = SymMatrix::from_fn(d, |i, j| {
        if support.contains(i, j) {
            penalty.get(i, j)
        } else {
            RESTRICTED_PENALTY
        }
    });
    let restricted_penalty = PenaltyMatrix::new(restricted_entries, false)?;
    let restricted = weighted_glasso(&a_bar, &restricted_penalty, config)?;
    let c_dot = restricted.estimate;
    let w = c_dot.inverse()?;

    let mut dual_max: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if !support.contains(i, j) {
                let z = (-a_bar.get(i, j) + w.get(i, j)) / penalty.get(i, j);
                dual_max = dual_max.max(z.abs());
            }
        }
    }
    let strictly_feasible = dual_max < 1.0;

    let w_max = a_bar.max_abs_diff(cov_truth);
    let lambda_max_s = support.e.iter().map(|&(i, j)| penalty.get(i, j)).fold(0.0_f64, f64::max);
    let kappa_gamma = kronecker_parts(cov_truth, support)?.kappa_gamma;
    let r = 2.0 * kappa_gamma * (w_max + lambda_max_s);

    let precision_truth = cov_truth.inverse()?;
    let delta_c = c_dot.sub(&precision_truth);
    let remainder = w.sub(cov_truth).add(&cov_truth.sandwich(&delta_c));
    let remainder_max = remainder.max_norm();

    let t_omega = omega_hat
        .iter()
        .zip(omega_star(cov_truth))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0_f64, f64::max);

    let unrestricted_support = if strictly_feasible {
        Some(weighted_glasso(&a_bar, &penalty, config)?.support)
    } else {
        None
    };

    Ok(PdwCertificate {
        restricted_estimate: c_dot,
        dual_offsupport_max: dual_max,
        strictly_feasible,
        w_max,
        r,
        remainder_max,
        t_omega,
        eps_n: 2.0 * t_omega / delta,
        unrestricted_support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_model, ModelKind};

    #[test]
    fn support_examples() {
        let s = support_sets(&SymMatrix::identity(4), 0.0);
        assert!(s.e.is_empty());
        assert_eq!(s.s, 1);
        assert_eq!(s.s_pairs.len(), 4);

        let ar2 = make_model(ModelKind::Ar2, 5).unwrap();
        let s = support_sets(&ar2.precision, 0.0);
        assert_eq!(s.s, 5);

        let star = make_model(ModelKind::Star, 6).unwrap();
        let s = support_sets(&star.precision, 0.0);
        assert_eq!(s.s, 6);
        assert_eq!(s.e.len(), 5);
        assert_eq!(s.s_pairs.len(), 6 + 10);
    }

    #[test]
    fn identity_covariance_is_incoherent() {
        let cov = SymPd::identity(5);
        let ar2 = make_model(ModelKind::Ar2, 5).unwrap();
        let s = support_sets(&ar2.precision, 0.0);
        let inc = incoherence(&cov, &s, 0.1).unwrap();
        assert_eq!(inc.mu_star, 0.0);
        assert_eq!(inc.psi_star, 0.0);
        assert!((inc.kappa_gamma - 1.0).abs() < 1e-14);
        assert!((inc.kappa_sigma - 1.0).abs() < 1e-14);

        let diag = SymPd::new(SymMatrix::from_diag(&[1.0, 4.0, 9.0])).unwrap();
        let s = support_sets(&SymMatrix::identity(3), 0.0);
        let inc = incoherence(&diag, &s, 0.3).unwrap();
        assert_eq!(inc.mu_star, 0.0);
        assert_eq!(inc.psi_star, 0.0);
    }

    #[test]
    fn theorem5_identity_arithmetic() {
        let cov = SymPd::identity(4);
        let s = support_sets(&SymMatrix::identity(4), 0.0);
        let t = theorem5_constants(&cov, &s, 3.0, 0.5, 1.0, 1.0).unwrap();
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
        // κ_A = 0 for Σ = I
        let c_delta = 3f64.sqrt() / 0.5 * f64::max(16.0, 2.0 * sqrt_2pi);
        assert!((t.c_delta - c_delta).abs() < 1e-12);
        let b = 3f64.sqrt() + 3.0 * (2.0 / std::f64::consts::PI).sqrt() * c_delta + c_delta * c_delta;
        assert!((t.b - b).abs() < 1e-9);
        assert!((t.error_bound_coeff - 2.0 * b).abs() < 1e-9);
        assert!(theorem5_constants(&cov, &s, 2.0, 0.5, 1.0, 1.0).is_err());
        assert!(theorem5_constants(&cov, &s, 3.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn homoscedastic_branch() {
        // σ_max = σ_min: second argument is 2√(2π)(1+κ_A)C1σ_max
        let t = theorem5_from_parts(1.0, 1.0, 0.3, 2.0, 2.0, 2, 5, 3.0, 0.5, 10.0, 0.01).unwrap();
        let expected = 3f64.sqrt() / 0.5 * 2.0 * (2.0 * std::f64::consts::PI).sqrt() * 1.3 * 10.0 * 2.0;
        assert!((t.c_delta - expected).abs() < 1e-9);
    }

    #[test]
    fn report_field_names() {
        let cov = SymPd::identity(3);
        let s = support_sets(&SymMatrix::identity(3), 0.0);
        let r = diagnostics_report(&cov, &s, 0.1, 3.0, 0.5, 0.5, 0.5).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "kappa_gamma", "kappa_sigma", "kappa_a", "mu_star", "psi_star", "omega_star", "sigma_max", "sigma_min",
            "c_delta", "B", "n_min", "tau", "alpha",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn identity_bounds_are_zero() {
        let cov = SymPd::identity(4);
        let s = support_sets(&make_model(ModelKind::Ar2, 4).unwrap().precision, 0.0);
        let c = scale_adaptive_bound_check(&cov, &s, 0.01).unwrap();
        assert_eq!((c.lhs_mu, c.rhs_mu, c.lhs_psi, c.rhs_psi), (0.0, 0.0, 0.0, 0.0));
        assert!(c.hypothesis_ok);
        let c = scale_adaptive_bound_check(&cov, &s, 1.0).unwrap();
        assert!(!c.hypothesis_ok);
    }
}
