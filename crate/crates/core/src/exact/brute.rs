//! Full enumeration of `[q]^N` for tiny graphs.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spin::{conditional_spin_dist, log_gibbs_weight, Color, Configuration, Graph, ModelParams};

pub const MAX_CONFIGURATIONS: u64 = 1_000_000;
pub const MAX_DENSE_CONFIGURATIONS: u64 = 4096;

fn space_size(q: usize, n: usize, limit: u64) -> Result<usize> {
    let total = (q as u64).checked_pow(n as u32).filter(|&t| t <= limit);
    total.map(|t| t as usize).ok_or_else(|| {
        Error::Resource(format!("q^N = {q}^{n} configurations exceeds the limit {limit}"))
    })
}

/// Configuration with index `idx`; vertex `v` has color `(idx / q^v) mod q`.
pub fn decode(mut idx: usize, n: usize, q: usize) -> Configuration {
    let colors = (0..n)
        .map(|_| {
            let c = (idx % q) as Color;
            idx /= q;
            c
        })
        .collect();
    Configuration::new(colors, q).expect("decoded colors are in range")
}

pub fn encode(c: &Configuration, q: usize) -> usize {
    c.colors().iter().rev().fold(0, |acc, &k| acc * q + k as usize)
}

/// Exact Gibbs measure over every configuration.
#[derive(Debug, Clone)]
pub struct BruteGibbs {
    pub n: usize,
    pub q: usize,
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl BruteGibbs {
    /// `μ(σ(v) = · | σ off v)`.
    pub fn conditional(&self, c: &Configuration, v: usize) -> Vec<f64> {
        let base = encode(c, self.q) - c.get(v) as usize * self.q.pow(v as u32);
        let w: Vec<f64> = (0..self.q)
            .map(|k| self.probs[base + k * self.q.pow(v as u32)])
            .collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    }
}

pub fn brute_force_gibbs(g: &Graph, p: &ModelParams) -> Result<BruteGibbs> {
    let n = g.n_vertices();
    let total = space_size(p.q, n, MAX_CONFIGURATIONS)?;
    let logw: Vec<f64> = (0..total)
        .map(|i| log_gibbs_weight(g, &decode(i, n, p.q), p))
        .collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(BruteGibbs {
        n,
        q: p.q,
        probs: w.into_iter().map(|x| x / z).collect(),
        log_z: max + z.ln(),
    })
}

/// Dense transition matrix of single-site Glauber dynamics on `[q]^N`.
pub fn configuration_transition_matrix(g: &Graph, p: &ModelParams) -> Result<DMatrix<f64>> {
    let n = g.n_vertices();
    let total = space_size(p.q, n, MAX_DENSE_CONFIGURATIONS)?;
    let mut m = DMatrix::zeros(total, total);
    for i in 0..total {
        let c = decode(i, n, p.q);
        for v in 0..n {
            let law = conditional_spin_dist(g, &c, v, p);
            let stride = p.q.pow(v as u32);
            let base = i - c.get(v) as usize * stride;
            for (k, &pk) in law.as_slice().iter().enumerate() {
                m[(i, base + k * stride)] += pk / n as f64;
            }
        }
    }
    Ok(m)
}
