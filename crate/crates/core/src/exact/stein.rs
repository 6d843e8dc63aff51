//! Solutions of the Stein–Poisson equation on a lumped chain.

use nalgebra::{DMatrix, DVector};

use super::lumped::LumpedChain;
use crate::error::{usage, Error, Result};

/// Largest state count handled by the dense solve.
pub const MAX_STEIN_STATES: usize = 4000;

#[derive(Debug, Clone)]
pub struct SteinSolution {
    pub f: Vec<f64>,
    pub mean_h: f64,
    /// `‖(P − I)f − (h − E_π h)‖∞`.
    pub residual: f64,
}

fn centered(chain: &LumpedChain, h: &[f64]) -> (Vec<f64>, f64) {
    let mean: f64 = h.iter().zip(&chain.stationary).map(|(a, b)| a * b).sum();
    (h.iter().map(|v| v - mean).collect(), mean)
}

/// `‖(P − I)f − hc‖∞`.
pub fn stein_residual(chain: &LumpedChain, f: &[f64], hc: &[f64]) -> f64 {
    let mut pf = vec![0.0; f.len()];
    chain.transition.right_mul(f, &mut pf);
    pf.iter()
        .zip(f)
        .zip(hc)
        .map(|((a, b), c)| (a - b - c).abs())
        .fold(0.0, f64::max)
}

/// Solves `(P − I) f = h − E_π h` with `Σ π f = 0`, i.e.
/// `f = −Σ_t P^t (h − E_π h)`.
///
/// Dense LU on `I − P + 1πᵀ` followed by iterative refinement.
pub fn solve_stein_poisson(chain: &LumpedChain, h: &[f64]) -> Result<SteinSolution> {
    let m = chain.len();
    if h.len() != m {
        return usage("h has the wrong length");
    }
    if m > MAX_STEIN_STATES {
        return Err(Error::Resource(format!(
            "Stein solve on {m} states exceeds the dense limit {MAX_STEIN_STATES}"
        )));
    }
    let (hc, mean_h) = centered(chain, h);
    let pi = DVector::from_column_slice(&chain.stationary);
    let a = DMatrix::identity(m, m) - chain.transition.to_dense() + DVector::from_element(m, 1.0) * pi.transpose();
    let rhs = -DVector::from_column_slice(&hc);
    let lu = a.clone().lu();
    let mut f = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular Stein–Poisson system".into()))?;
    for _ in 0..5 {
        let r = &rhs - &a * &f;
        if r.amax() < 1e-15 {
            break;
        }
        if let Some(d) = lu.solve(&r) {
            f += d;
        }
    }
    let f: Vec<f64> = f.iter().copied().collect();
    let residual = stein_residual(chain, &f, &hc);
    if residual > 1e-9 {
        return Err(Error::Internal(format!("Stein residual {residual:e} above 1e-9")));
    }
    Ok(SteinSolution { f, mean_h, residual })
}

/// Truncated series `−Σ_{t<terms} P^t (h − E_π h)`.
pub fn stein_series(chain: &LumpedChain, h: &[f64], terms: u64) -> Vec<f64> {
    let (hc, _) = centered(chain, h);
    let mut term = hc;
    let mut next = vec![0.0; term.len()];
    let mut acc = vec![0.0; term.len()];
    for _ in 0..terms {
        for (a, t) in acc.iter_mut().zip(&term) {
            *a -= t;
        }
        chain.transition.right_mul(&term, &mut next);
        std::mem::swap(&mut term, &mut next);
    }
    acc
}

/// `max |f(n) − f(n′)|` over pairs joined by a single recoloring.
pub fn max_neighbor_difference(chain: &LumpedChain, f: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..chain.len() {
        let (cols, _) = chain.transition.row(i);
        for &j in cols {
            if j != i {
                best = best.max((f[i] - f[j]).abs());
            }
        }
    }
    best
}
