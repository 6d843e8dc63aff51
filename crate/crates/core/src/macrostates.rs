//! Equilibrium macrostates of the Curie–Weiss–Potts model and the local
//! contraction constants of the softmax update around them.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::spin::{softmax_gbeta, ProbVector};

/// `|β − β_c|` below which both phases are returned.
pub const CRITICAL_TOL: f64 = 1e-9;
/// How far a candidate may sit from an exact fixed point and still be analysed.
pub const MACROSTATE_TOL: f64 = 1e-8;

const SCAN_POINTS: usize = 10_000;

fn check_q(q: usize) -> Result<()> {
    if q < 3 {
        return usage("q must be ≥ 3");
    }
    Ok(())
}

/// `(q−1) ln(q−1) / (q−2)`.
pub fn beta_c(q: usize) -> Result<f64> {
    check_q(q)?;
    let m = (q - 1) as f64;
    Ok(m * m.ln() / (q as f64 - 2.0))
}

fn phi_prime(s: f64, beta: f64, q: usize) -> f64 {
    let e = (-2.0 * beta * s).exp();
    let d = 1.0 + (q as f64 - 1.0) * e;
    2.0 * beta * q as f64 * e / (d * d)
}

/// `s − φ(s)`, arranged to avoid cancellation near `s = 1`.
fn fixed_point_gap(s: f64, beta: f64, q: usize) -> f64 {
    let e = (-2.0 * beta * s).exp();
    let m = q as f64 - 1.0;
    ((s - 1.0) + e * (1.0 + m * s)) / (1.0 + m * e)
}

/// Bisects `f` on `[lo, hi]` given `f(lo) ≤ 0 < f(hi)` (or the mirror), until
/// the bracket stops shrinking.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let lo_neg = f(lo) <= 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) <= 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Largest root in `[0, 1)` of `s = (1 − e^{−2βs}) / (1 + (q−1)e^{−2βs})`.
///
/// Scans from `s = 1` downward for the first sign change of `s − φ(s)` and
/// bisects inside that cell; returns 0 when no positive root exists.
pub fn solve_s_largest(beta: f64, q: usize) -> f64 {
    let f = |s: f64| fixed_point_gap(s, beta, q);
    let h = 1.0 / SCAN_POINTS as f64;
    let mut hi = 1.0;
    let mut f_hi = f(hi);
    for i in (1..SCAN_POINTS).rev() {
        let lo = i as f64 * h;
        let f_lo = f(lo);
        if f_lo <= 0.0 && f_hi > 0.0 {
            if f_lo == 0.0 {
                return lo;
            }
            return bisect(lo, hi, f);
        }
        hi = lo;
        f_hi = f_lo;
    }
    // Root below the first grid cell: only possible when F'(0) < 0.
    if f_hi > 0.0 && f(0.5 * h) <= 0.0 {
        return bisect(0.5 * h, h, f);
    }
    0.0
}

/// `s* = (1 + (q−1) s) / q`.
pub fn s_star(beta: f64, q: usize) -> f64 {
    (1.0 + (q as f64 - 1.0) * solve_s_largest(beta, q)) / q as f64
}

pub fn uniform(q: usize) -> ProbVector {
    ProbVector::uniform(q)
}

/// `T^j š`: dominant color `j` carries `s*`, the rest share `1 − s*`.
pub fn ordered_point(s_star: f64, q: usize, j: usize) -> ProbVector {
    let rest = (1.0 - s_star) / (q as f64 - 1.0);
    let mut x = vec![rest; q];
    x[j] = s_star;
    ProbVector::from_raw(x)
}

/// The equilibrium set: `[ê]` below β_c, the `q` ordered points above, both at β_c.
pub fn macrostate_set(beta: f64, q: usize) -> Result<Vec<ProbVector>> {
    let bc = beta_c(q)?;
    if !(beta > 0.0) || !beta.is_finite() {
        return usage("beta must be > 0");
    }
    let mut out = Vec::with_capacity(q + 1);
    if beta < bc + CRITICAL_TOL {
        out.push(uniform(q));
    }
    if beta > bc - CRITICAL_TOL {
        let ss = s_star(beta, q);
        out.extend((0..q).map(|j| ordered_point(ss, q, j)));
    }
    Ok(out)
}

/// Local minimum of `F(s) = s − φ(s)` in `(0, ∞)`, if `F` has one.
fn interior_min(beta: f64, q: usize) -> Option<(f64, f64)> {
    let m = q as f64 - 1.0;
    // φ' peaks at e^{−2βs} = 1/(q−1) with value βq/(2(q−1)).
    if beta * q as f64 / (2.0 * m) <= 1.0 {
        return None;
    }
    let peak = m.ln() / (2.0 * beta);
    let mut hi = peak.max(1e-6) * 2.0 + 1.0;
    while phi_prime(hi, beta, q) >= 1.0 {
        hi *= 2.0;
    }
    let s = bisect(peak, hi, |s| 1.0 - phi_prime(s, beta, q));
    Some((s, fixed_point_gap(s, beta, q)))
}

/// Spinodal inverse temperature: the smallest β at which the mean-field
/// equation acquires a non-trivial root (tangency of `F` with zero).
pub fn beta_s(q: usize) -> Result<f64> {
    let bc = beta_c(q)?;
    let depth = |beta: f64| interior_min(beta, q).map_or(f64::INFINITY, |(_, v)| v);
    let mut lo = 1.0f64.max(2.0 * (q as f64 - 1.0) / q as f64);
    let mut hi = bc;
    if !(depth(lo) > 0.0 && depth(hi) <= 0.0) {
        return Err(Error::Internal(format!(
            "no tangency bracket for q = {q} on [{lo}, {hi}]"
        )));
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if depth(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `β_c` and `β_s` together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalTemps {
    pub beta_c: f64,
    pub beta_s: f64,
}

pub fn critical_temps(q: usize) -> Result<CriticalTemps> {
    Ok(CriticalTemps {
        beta_c: beta_c(q)?,
        beta_s: beta_s(q)?,
    })
}

/// `G_β(s) = β‖s‖² − ln Σ_i e^{2β s_i}`; stationary exactly at fixed points of `g_β`.
pub fn g_potential(s: &[f64], beta: f64) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = 2.0 * beta * max
        + s.iter()
            .map(|&x| (2.0 * beta * (x - max)).exp())
            .sum::<f64>()
            .ln();
    beta * s.iter().map(|x| x * x).sum::<f64>() - lse
}

/// `∇G_β(s) = 2β (s − g_β(s))`.
pub fn g_potential_grad(s: &[f64], beta: f64) -> Vec<f64> {
    let g = softmax_gbeta(s, beta);
    s.iter()
        .zip(g.as_slice())
        .map(|(x, gx)| 2.0 * beta * (x - gx))
        .collect()
}

/// Which symmetric fixed point a vector is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Uniform,
    Ordered(usize),
}

fn classify(x: &ProbVector, beta: f64, q: usize) -> Result<(Kind, f64)> {
    check_q(q)?;
    let xs = x.as_slice();
    if xs.len() != q {
        return usage(format!("macrostate has length {}, expected q = {q}", xs.len()));
    }
    let e = 1.0 / q as f64;
    if xs.iter().all(|&v| (v - e).abs() < MACROSTATE_TOL) {
        return Ok((Kind::Uniform, e));
    }
    let ss = s_star(beta, q);
    let j = (0..q)
        .max_by(|&a, &b| xs[a].total_cmp(&xs[b]))
        .expect("q ≥ 3");
    let target = ordered_point(ss, q, j);
    let close = xs
        .iter()
        .zip(target.as_slice())
        .all(|(a, b)| (a - b).abs() < MACROSTATE_TOL);
    if ss > e && close {
        return Ok((Kind::Ordered(j), ss));
    }
    usage(format!(
        "{xs:?} is not a symmetric mean-field fixed point at beta = {beta}, q = {q}"
    ))
}

/// A macrostate with its Jacobian-derived contraction constants.
#[derive(Debug, Clone)]
pub struct MacrostateAnalysis {
    pub x: ProbVector,
    pub s_star: f64,
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub theta: f64,
    pub lambda: f64,
    pub matrix_a: DMatrix<f64>,
    pub dominant_color: Option<usize>,
}

impl MacrostateAnalysis {
    pub fn new(x: &ProbVector, beta: f64, q: usize) -> Result<Self> {
        let (kind, ss) = classify(x, beta, q)?;
        let qf = q as f64;
        match kind {
            Kind::Uniform => {
                let c = 2.0 * beta / qf;
                Ok(Self {
                    x: uniform(q),
                    s_star: ss,
                    a: c,
                    a_prime: c,
                    b: 0.0,
                    theta: c,
                    lambda: c,
                    matrix_a: DMatrix::from_diagonal_element(q, q, c),
                    dominant_color: None,
                })
            }
            Kind::Ordered(j) => {
                let a = 2.0 * beta * qf * ss * (1.0 - ss) / (qf - 1.0);
                let a_prime = 2.0 * beta * (1.0 - ss) / (qf - 1.0);
                let b = a_prime * (ss - (1.0 - ss) / (qf - 1.0));
                let mut m = DMatrix::from_diagonal_element(q, q, a_prime);
                m[(j, j)] = a;
                for k in (0..q).filter(|&k| k != j) {
                    m[(k, j)] = -b;
                }
                let lambda =
                    0.5 * (a + a_prime + ((a - a_prime).powi(2) + (qf - 1.0) * b * b).sqrt());
                Ok(Self {
                    x: ordered_point(ss, q, j),
                    s_star: ss,
                    a,
                    a_prime,
                    b,
                    theta: a,
                    lambda,
                    matrix_a: m,
                    dominant_color: Some(j),
                })
            }
        }
    }

    /// Spectrum of `(A + Aᵀ)/2`, ascending.
    pub fn symmetric_spectrum(&self) -> Vec<f64> {
        let sym = (&self.matrix_a + self.matrix_a.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Largest absolute eigenvalue of `(A + Aᵀ)/2`.
    pub fn lambda_numeric(&self) -> f64 {
        self.symmetric_spectrum()
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }

    pub fn condition_holds(&self) -> bool {
        self.theta < 1.0 && self.lambda < 1.0
    }
}

pub fn jacobian_a(x: &ProbVector, beta: f64, q: usize) -> Result<DMatrix<f64>> {
    Ok(MacrostateAnalysis::new(x, beta, q)?.matrix_a)
}

pub fn theta(x: &ProbVector, beta: f64, q: usize) -> Result<f64> {
    Ok(MacrostateAnalysis::new(x, beta, q)?.theta)
}

pub fn lambda(x: &ProbVector, beta: f64, q: usize) -> Result<f64> {
    Ok(MacrostateAnalysis::new(x, beta, q)?.lambda)
}

pub fn condition_holds(x: &ProbVector, beta: f64, q: usize) -> Result<bool> {
    Ok(MacrostateAnalysis::new(x, beta, q)?.condition_holds())
}

/// Parses `e` or `ordered:K` (1-based `K`) into a macrostate at `(β, q)`.
pub fn select_macrostate(spec: &str, beta: f64, q: usize) -> Result<ProbVector> {
    check_q(q)?;
    let spec = spec.trim();
    if spec == "e" {
        return Ok(uniform(q));
    }
    let k = spec
        .strip_prefix("ordered:")
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|&k| (1..=q).contains(&k))
        .ok_or_else(|| Error::Usage(format!("macrostate must be `e` or `ordered:K` with 1 ≤ K ≤ {q}, got {spec:?}")))?;
    let ss = s_star(beta, q);
    if ss <= 1.0 / q as f64 {
        return usage(format!("no ordered fixed point at beta = {beta}, q = {q}"));
    }
    Ok(ordered_point(ss, q, k - 1))
}
