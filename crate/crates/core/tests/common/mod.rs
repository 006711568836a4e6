#![allow(dead_code)]

use pertprec::adversary::{expansion_terms, worst_case, PerturbationSpec};
use pertprec::diagnostics::{support_sets, SupportIndex};
use pertprec::glasso::{glasso_objective, PenaltyMatrix};
use pertprec::matrix::cholesky;
use pertprec::synth::sample_gaussian;
use pertprec::{Dataset, Mat, SymMatrix, SymPd};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// `BBᵀ/d + floor·I` with standard normal `B`.
pub fn random_pd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> SymPd {
    let b: Vec<Vec<f64>> = (0..d).map(|_| normal_vec(rng, d)).collect();
    let m = SymMatrix::from_fn(d, |i, j| {
        b[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>() / d as f64 + if i == j { floor } else { 0.0 }
    });
    SymPd::new(m).unwrap()
}

/// Orthogonal matrix from Gram–Schmidt on a normal matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < d {
        let mut v = normal_vec(rng, d);
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            cols.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    let mut q = Mat::zeros(d, d);
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            q.set(i, j, *v);
        }
    }
    q
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn quad(x: &[f64], c: &SymMatrix, delta: &[f64]) -> f64 {
    let y: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
    c.quad_form(&y)
}

/// Maximum of `(x+Δ)ᵀC(x+Δ)` over `‖Δ‖₂ = δ`: a dense angular grid, then
/// monotone ascent `Δ ← δ·C(x+Δ)/‖C(x+Δ)‖` from the best grid points.
pub fn l2_sphere_max(x: &[f64], c: &SymMatrix, delta: f64) -> f64 {
    let d = x.len();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    match d {
        2 => {
            for k in 0..4000 {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 4000.0;
                starts.push(vec![delta * t.cos(), delta * t.sin()]);
            }
        }
        3 => {
            for a in 0..200 {
                let th = std::f64::consts::PI * (a as f64 + 0.5) / 200.0;
                for b in 0..400 {
                    let ph = 2.0 * std::f64::consts::PI * b as f64 / 400.0;
                    starts.push(vec![
                        delta * th.sin() * ph.cos(),
                        delta * th.sin() * ph.sin(),
                        delta * th.cos(),
                    ]);
                }
            }
        }
        _ => panic!("grid oracle supports d = 2, 3"),
    }
    let mut scored: Vec<(f64, Vec<f64>)> = starts.into_iter().map(|s| (quad(x, c, &s), s)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored[0].0;
    for (_, mut dl) in scored.into_iter().take(10) {
        for _ in 0..5000 {
            let y: Vec<f64> = x.iter().zip(&dl).map(|(a, b)| a + b).collect();
            let g = c.mul_vec(&y);
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                break;
            }
            dl = g.iter().map(|v| delta * v / n).collect();
        }
        best = best.max(quad(x, c, &dl));
    }
    best
}

pub fn random_data(r: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let cov = random_pd(r, d, 0.3);
    let seed = (uniform(r, 0.0, 1e9)) as u64;
    sample_gaussian(&cov, n, seed).unwrap()
}

pub fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Proximal gradient with backtracking, kept inside the PD cone.
pub fn proximal_gradient(a: &SymMatrix, pen: &PenaltyMatrix) -> SymMatrix {
    let d = a.dim();
    let obj = |c: &SymMatrix| -> f64 {
        match SymPd::new(c.clone()) {
            Ok(pd) => glasso_objective(a, pen, &pd),
            Err(_) => f64::INFINITY,
        }
    };
    let smooth = |c: &SymMatrix| -> f64 {
        let pd = SymPd::new(c.clone()).unwrap();
        -pd.logdet() + a.trace_product(c)
    };
    let mut c = SymMatrix::from_diag(&a.diag().iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let mut step = 1.0;
    for _ in 0..200_000 {
        let w = SymPd::new(c.clone()).unwrap().inverse().unwrap();
        let g = a.sub(&w);
        let f0 = smooth(&c);
        let mut t = step * 2.0;
        let next = loop {
            let cand = SymMatrix::from_fn(d, |i, j| soft(c.get(i, j) - t * g.get(i, j), t * pen.get(i, j)));
            if cholesky(&cand).is_ok() {
                let diff = cand.sub(&c);
                let quad = f0 + g.trace_product(&diff) + diff.as_slice().iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
                if smooth(&cand) <= quad + 1e-15 {
                    break cand;
                }
            }
            t *= 0.5;
        };
        step = t;
        let change = next.max_abs_diff(&c);
        c = next;
        if change < 1e-13 {
            break;
        }
    }
    assert!(obj(&c).is_finite());
    c
}

/// `r(δ)/δ²` for the remainder `r = worst case − expansion`.
pub fn scaled_remainders(x: &[f64], c: &SymPd, p: f64) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    let mut delta = 0.1;
    while delta >= 1e-4 * 0.99 {
        let spec = PerturbationSpec::new(p, delta).unwrap();
        let w = worst_case(x, c, spec).unwrap().value;
        let e = expansion_terms(x, c, spec).unwrap().total;
        out.push((delta, (w - e) / (delta * delta), w));
        delta /= 2.0;
    }
    out
}

/// Each halving of δ shrinks `r/δ²` by at least 0.6, and it never goes
/// negative.
pub fn little_o(rem: &[(f64, f64, f64)]) -> bool {
    rem.windows(2).all(|pair| {
        let (_, prev, _) = pair[0];
        let (delta, next, w) = pair[1];
        // below the rounding floor the remainder is indistinguishable from zero
        let floor = 64.0 * f64::EPSILON * w.abs() / (delta * delta);
        next <= 0.6 * prev + floor && next >= -floor
    })
}

/// `x = C⁻¹g` with every `|g_i| ≥ 1` and `0.1·‖C‖_∞ < 1`, so no sign of
/// `C(x + Δ)` flips anywhere on the cube of radius 0.1.
pub fn sign_separated(r: &mut ChaCha8Rng, d: usize) -> (Vec<f64>, SymPd) {
    loop {
        let c = random_pd(r, d, 0.2);
        if c.inf_norm() * 0.1 >= 0.9 {
            continue;
        }
        let g: Vec<f64> = normal_vec(r, d).iter().map(|v| v.signum() * (1.0 + v.abs())).collect();
        let x = c.inverse().unwrap().mul_vec(&g);
        return (x, c);
    }
}

/// Random sparse precision: each pair present with probability 0.35,
/// made PD by diagonal dominance, then scaled.
pub fn random_instance(r: &mut ChaCha8Rng, d: usize) -> (SymPd, SupportIndex) {
    let mut m = SymMatrix::zeros(d);
    for i in 0..d {
        for j in i + 1..d {
            if r.random_bool(0.35) {
                let v = uniform(r, 0.1, 0.5) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
                m.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        let row: f64 = (0..d).filter(|&j| j != i).map(|j| m.get(i, j).abs()).sum();
        m.set(i, i, row + uniform(r, 0.2, 1.0));
    }
    let scales: Vec<f64> = (0..d).map(|_| uniform(r, 0.3, 4.0)).collect();
    let inv: Vec<f64> = scales.iter().map(|s| 1.0 / s).collect();
    let precision = m.congruence_diag(&inv);
    let support = support_sets(&precision, 0.0);
    let cov = SymPd::new(precision).unwrap().inverse().unwrap();
    (cov, support)
}

