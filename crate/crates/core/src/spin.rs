//! Configurations, graphs, proportion vectors and the softmax update kernel.
//!
//! Colors are stored 0-based (`0..q`); text I/O is 1-based.
//!
//! The Hamiltonian used throughout is `H(σ) = -(2/N) · #{monochromatic edges}`,
//! so the Gibbs weight of a configuration is `exp((2β/N) · mono(σ))` and the
//! single-site conditional law at `v` is exactly `g_β(S_v(σ))`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

pub type Color = u8;

/// Potts model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: usize,
    pub beta: f64,
    pub n_vertices: usize,
}

impl ModelParams {
    pub fn new(q: usize, beta: f64, n_vertices: usize) -> Result<Self> {
        if q < 3 {
            return usage("q must be ≥ 3");
        }
        if q > Color::MAX as usize {
            return usage(format!("q must be ≤ {}", Color::MAX));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return usage("beta must be a finite value ≥ 0");
        }
        if n_vertices == 0 {
            return usage("n_vertices must be ≥ 1");
        }
        Ok(Self { q, beta, n_vertices })
    }
}

/// Simple undirected graph stored as neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    max_degree: usize,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph from an edge list (0-based). Self-loops and repeated
    /// edges are rejected.
    pub fn from_edges(n_vertices: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n_vertices];
        for &(u, v) in edges {
            if u >= n_vertices || v >= n_vertices {
                return usage(format!("edge ({u}, {v}) out of range for N = {n_vertices}"));
            }
            if u == v {
                return usage(format!("self-loop at vertex {u}"));
            }
            if adjacency[u].contains(&v) {
                return usage(format!("repeated edge ({u}, {v})"));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        Ok(Self::from_adjacency_unchecked(adjacency))
    }

    fn from_adjacency_unchecked(mut adjacency: Vec<Vec<usize>>) -> Self {
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let max_degree = adjacency.iter().map(Vec::len).max().unwrap_or(0);
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Self {
            adjacency,
            max_degree,
            edge_count,
        }
    }

    pub fn empty(n: usize) -> Self {
        Self::from_adjacency_unchecked(vec![Vec::new(); n])
    }

    pub fn complete(n: usize) -> Self {
        let adjacency = (0..n)
            .map(|v| (0..n).filter(|&u| u != v).collect())
            .collect();
        Self::from_adjacency_unchecked(adjacency)
    }

    pub fn cycle(n: usize) -> Self {
        if n < 3 {
            return Self::path(n);
        }
        let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        Self::from_edges(n, &edges).expect("cycle edges are valid")
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    /// Erdős–Rényi `G(n, p)`.
    pub fn erdos_renyi<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Self {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Self::from_edges(n, &edges).expect("G(n,p) edges are valid")
    }

    /// Uniform-ish random `d`-regular graph via the pairing model with restarts.
    pub fn random_regular<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        if d >= n || (n * d) % 2 != 0 {
            return usage(format!("no {d}-regular simple graph on {n} vertices"));
        }
        'attempt: for _ in 0..1000 {
            let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
            stubs.shuffle(rng);
            let mut adjacency = vec![Vec::with_capacity(d); n];
            for pair in stubs.chunks_exact(2) {
                let (u, v) = (pair[0], pair[1]);
                if u == v || adjacency[u].contains(&v) {
                    continue 'attempt;
                }
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
            return Ok(Self::from_adjacency_unchecked(adjacency));
        }
        Err(Error::Internal(format!(
            "pairing model failed to produce a simple {d}-regular graph on {n} vertices"
        )))
    }

    /// Parses `N M` followed by `M` lines `u v` (1-based).
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Usage(format!("graph file: bad integer {t:?}")))
        });
        let mut next = |what: &str| {
            tokens
                .next()
                .unwrap_or_else(|| Err(Error::Usage(format!("graph file: missing {what}"))))
        };
        let n = next("N")?;
        let m = next("M")?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let u = next("edge endpoint")?;
            let v = next("edge endpoint")?;
            if u == 0 || v == 0 {
                return usage("graph file: vertices are 1-based");
            }
            edges.push((u - 1, v - 1));
        }
        Self::from_edges(n, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_vertices(), self.edge_count);
        for (u, list) in self.adjacency.iter().enumerate() {
            for &v in list.iter().filter(|&&v| v > u) {
                out.push_str(&format!("{} {}\n", u + 1, v + 1));
            }
        }
        out
    }

    pub fn n_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }
}

/// A coloring of the vertices, 0-based colors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    colors: Vec<Color>,
}

impl Configuration {
    pub fn new(colors: Vec<Color>, q: usize) -> Result<Self> {
        if let Some(bad) = colors.iter().find(|&&c| c as usize >= q) {
            return usage(format!("color {} out of range for q = {q}", *bad as usize + 1));
        }
        Ok(Self { colors })
    }

    pub fn monochrome(n: usize, color: Color) -> Self {
        Self {
            colors: vec![color; n],
        }
    }

    pub fn random<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Self {
        Self {
            colors: (0..n).map(|_| rng.random_range(0..q) as Color).collect(),
        }
    }

    /// Deterministic configuration with the given counts, colors laid out in
    /// ascending blocks.
    pub fn from_counts(counts: &[usize]) -> Self {
        Self::from_counts_ordered(counts, &(0..counts.len()).collect::<Vec<_>>())
    }

    /// Blocks laid out in the given color order.
    pub fn from_counts_ordered(counts: &[usize], order: &[usize]) -> Self {
        let mut colors = Vec::with_capacity(counts.iter().sum());
        for &k in order {
            colors.extend(std::iter::repeat_n(k as Color, counts[k]));
        }
        Self { colors }
    }

    /// Parses one line of 1-based colors.
    pub fn parse(text: &str, q: usize) -> Result<Self> {
        let colors = text
            .split_whitespace()
            .map(|t| match t.parse::<usize>() {
                Ok(c) if c >= 1 && c <= q => Ok((c - 1) as Color),
                _ => Err(Error::Usage(format!("configuration: bad color {t:?} for q = {q}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { colors })
    }

    pub fn to_text(&self) -> String {
        let body: Vec<String> = self.colors.iter().map(|&c| (c as usize + 1).to_string()).collect();
        body.join(" ") + "\n"
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn get(&self, v: usize) -> Color {
        self.colors[v]
    }

    pub fn set(&mut self, v: usize, c: Color) {
        self.colors[v] = c;
    }
}

/// Occupation counts; `Σ counts = N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<usize>,
}

impl CountVector {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn proportions(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub(crate) fn move_unit(&mut self, from: usize, to: usize) {
        self.counts[from] -= 1;
        self.counts[to] += 1;
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    probs: Vec<f64>,
}

impl ProbVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return usage("probability vector has a negative or non-finite entry");
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return usage(format!("probability vector sums to {sum}, not 1"));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn uniform(q: usize) -> Self {
        Self {
            probs: vec![1.0 / q as f64; q],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        sample_index(&self.probs, u)
    }
}

/// Inverse-CDF lookup on (possibly unnormalized) weights scaled to sum 1.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

pub fn hamming(a: &Configuration, b: &Configuration) -> Result<usize> {
    if a.len() != b.len() {
        return usage(format!("hamming: lengths differ ({} vs {})", a.len(), b.len()));
    }
    Ok(a.colors.iter().zip(&b.colors).filter(|(x, y)| x != y).count())
}

pub fn proportions(c: &Configuration, q: usize) -> CountVector {
    let mut counts = vec![0; q];
    for &col in &c.colors {
        counts[col as usize] += 1;
    }
    CountVector { counts }
}

/// `S_v(σ)`: neighbor color counts of `v` scaled by `1/N`.
pub fn neighbor_proportions(g: &Graph, c: &Configuration, v: usize, q: usize) -> Vec<f64> {
    let n = g.n_vertices() as f64;
    let mut s = vec![0.0; q];
    for &u in g.neighbors(v) {
        s[c.colors[u] as usize] += 1.0;
    }
    for x in &mut s {
        *x /= n;
    }
    s
}

/// `g_β(s)_k = exp(2β s_k) / Σ_j exp(2β s_j)`, evaluated with max-subtraction.
pub fn softmax_gbeta(s: &[f64], beta: f64) -> ProbVector {
    let mut out = vec![0.0; s.len()];
    softmax_into(s, beta, &mut out);
    ProbVector { probs: out }
}

pub(crate) fn softmax_into(s: &[f64], beta: f64, out: &mut [f64]) {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &x) in out.iter_mut().zip(s) {
        *o = (2.0 * beta * (x - max)).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// `μ_v(· | σ) = g_β(S_v(σ))`.
pub fn conditional_spin_dist(g: &Graph, c: &Configuration, v: usize, p: &ModelParams) -> ProbVector {
    softmax_gbeta(&neighbor_proportions(g, c, v, p.q), p.beta)
}

/// Number of monochromatic edges.
pub fn edge_energy(g: &Graph, c: &Configuration) -> usize {
    g.edges().filter(|&(u, v)| c.colors[u] == c.colors[v]).count()
}

/// `-β H(σ)` under the edge convention.
pub fn log_gibbs_weight(g: &Graph, c: &Configuration, p: &ModelParams) -> f64 {
    2.0 * p.beta / g.n_vertices() as f64 * edge_energy(g, c) as f64
}

pub fn tv_distance(p: &ProbVector, r: &ProbVector) -> f64 {
    tv_slices(&p.probs, &r.probs)
}

pub(crate) fn tv_slices(p: &[f64], r: &[f64]) -> f64 {
    0.5 * p.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
