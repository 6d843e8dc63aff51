//! The Curie–Weiss–Potts chain lumped onto count vectors, and measures on
//! count vectors.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::states::{enumerate_states, StateSpace};
use crate::dynamics::{cwp_update_law, RestrictedRegion};
use crate::error::{usage, Error, Result};
use crate::spin::ProbVector;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    /// `out = xᵀ P`.
    pub fn left_mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                out[j] += xi * p;
            }
        }
    }

    /// `out = P f`.
    pub fn right_mul(&self, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *o = c.iter().zip(v).map(|(&j, &p)| p * f[j]).sum();
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.n_rows();
        let mut d = DMatrix::zeros(m, m);
        for i in 0..m {
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                d[(i, j)] = p;
            }
        }
        d
    }

    /// Coordinate-format text, one `row col value` triple per line (0-based).
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows() {
            let (c, v) = self.row(i);
            for (&j, &p) in c.iter().zip(v) {
                out.push_str(&format!("{i} {j} {p:.17e}\n"));
            }
        }
        out
    }
}

/// Exact lumped chain over a (possibly restricted) count-vector space.
#[derive(Debug, Clone)]
pub struct LumpedChain {
    pub space: Arc<StateSpace>,
    pub beta: f64,
    pub region: Option<RestrictedRegion>,
    pub transition: SparseMatrix,
    pub stationary: Vec<f64>,
    /// `‖πP − π‖∞` of the stored stationary vector.
    pub stationary_residual: f64,
}

impl LumpedChain {
    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn stationary_measure(&self) -> LumpedMeasure {
        LumpedMeasure {
            space: Arc::clone(&self.space),
            weights: self.stationary.clone(),
        }
    }
}

/// Probability weights over the states of a [`StateSpace`].
#[derive(Debug, Clone)]
pub struct LumpedMeasure {
    pub space: Arc<StateSpace>,
    pub weights: Vec<f64>,
}

impl LumpedMeasure {
    pub fn new(space: Arc<StateSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return usage("weight vector length differs from the state count");
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return usage("weights must be nonnegative");
        }
        let total = weights.iter().sum::<f64>();
        if !(total > 0.0) {
            return usage("weights have zero total mass");
        }
        Ok(Self {
            space,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Point mass at `counts`.
    pub fn point(space: Arc<StateSpace>, counts: &[usize]) -> Result<Self> {
        let i = space
            .index_of(counts)
            .ok_or_else(|| Error::Usage(format!("{counts:?} is not a state of the space")))?;
        let mut weights = vec![0.0; space.len()];
        weights[i] = 1.0;
        Ok(Self { space, weights })
    }

    pub fn expectation(&self, f: impl Fn(&[usize]) -> f64) -> f64 {
        self.space.iter().zip(&self.weights).map(|(c, &w)| w * f(c)).sum()
    }

    pub fn tv(&self, other: &LumpedMeasure) -> f64 {
        0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// `ln k!` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    t.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        t.push(acc);
    }
    t
}

fn normalize_log(logw: Vec<f64>) -> Vec<f64> {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn space_for(n: usize, q: usize, region: Option<&RestrictedRegion>) -> Result<Arc<StateSpace>> {
    if n == 0 {
        return usage("N must be ≥ 1");
    }
    Ok(Arc::new(enumerate_states(n, q, region)?))
}

/// Unnormalized log Gibbs weight `ln multinomial(N; n) + (β/N) Σ n_k(n_k − 1)`.
pub fn log_gibbs_weight(counts: &[usize], beta: f64, lnf: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let mono: usize = counts.iter().map(|&c| c * c.saturating_sub(1)).sum();
    lnf[n] - counts.iter().map(|&c| lnf[c]).sum::<f64>() + beta / n as f64 * mono as f64
}

/// Gibbs measure pushed to count vectors, conditioned on `region` if given.
pub fn lumped_gibbs(n: usize, q: usize, beta: f64, region: Option<&RestrictedRegion>) -> Result<LumpedMeasure> {
    let space = space_for(n, q, region)?;
    Ok(gibbs_on(space, beta))
}

pub(crate) fn gibbs_on(space: Arc<StateSpace>, beta: f64) -> LumpedMeasure {
    let lnf = ln_factorials(space.n());
    let logw = space.iter().map(|c| log_gibbs_weight(c, beta, &lnf)).collect();
    LumpedMeasure {
        weights: normalize_log(logw),
        space,
    }
}

/// Law of the counts of `N` i.i.d. draws from `x`, conditioned on `region` if given.
pub fn conditional_multinomial(
    n: usize,
    q: usize,
    x: &ProbVector,
    region: Option<&RestrictedRegion>,
) -> Result<LumpedMeasure> {
    if x.len() != q {
        return usage("x has the wrong length");
    }
    let space = space_for(n, q, region)?;
    multinomial_on(space, x)
}

pub(crate) fn multinomial_on(space: Arc<StateSpace>, x: &ProbVector) -> Result<LumpedMeasure> {
    let lnf = ln_factorials(space.n());
    let logw: Vec<f64> = space
        .iter()
        .map(|c| {
            let mut l = lnf[space.n()];
            for (&ck, &xk) in c.iter().zip(x.as_slice()) {
                l -= lnf[ck];
                if ck > 0 {
                    l += ck as f64 * xk.ln();
                }
            }
            l
        })
        .collect();
    if logw.iter().all(|&l| l == f64::NEG_INFINITY) {
        return usage("the measure puts no mass on the region");
    }
    Ok(LumpedMeasure {
        weights: normalize_log(logw),
        space,
    })
}

/// Exact transition matrix of the lumped chain; rejected moves stay put.
pub fn lumped_transition_matrix(
    n: usize,
    q: usize,
    beta: f64,
    region: Option<&RestrictedRegion>,
) -> Result<LumpedChain> {
    let space = space_for(n, q, region)?;
    chain_on(space, beta, region.cloned())
}

pub(crate) fn chain_on(space: Arc<StateSpace>, beta: f64, region: Option<RestrictedRegion>) -> Result<LumpedChain> {
    let q = space.q();
    let nf = space.n() as f64;
    let m = space.len();
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut law = vec![0.0; q];
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(q * q);
    let mut target = vec![0usize; q];
    row_ptr.push(0);
    for (i, c) in space.iter().enumerate() {
        entries.clear();
        let mut stay = 0.0;
        for k in 0..q {
            if c[k] == 0 {
                continue;
            }
            let sk = c[k] as f64 / nf;
            cwp_update_law(c, k, beta, &mut law);
            for l in 0..q {
                let pr = sk * law[l];
                if l == k {
                    stay += pr;
                    continue;
                }
                target.copy_from_slice(c);
                target[k] -= 1;
                target[l] += 1;
                match space.index_of(&target) {
                    Some(j) => entries.push((j, pr)),
                    None => stay += pr,
                }
            }
        }
        entries.push((i, stay));
        entries.sort_by_key(|e| e.0);
        for &(j, p) in entries.iter() {
            cols.push(j);
            vals.push(p);
        }
        row_ptr.push(cols.len());
    }
    let transition = SparseMatrix { row_ptr, cols, vals };
    let stationary = stationary_by_tree(&space, &transition)?;
    let stationary_residual = stationary_residual(&transition, &stationary);
    Ok(LumpedChain {
        space,
        beta,
        region,
        transition,
        stationary,
        stationary_residual,
    })
}

/// Stationary law of a reversible chain from transition ratios along a BFS
/// spanning tree: `ln π(j) = ln π(i) + ln P(i,j) − ln P(j,i)`.
fn stationary_by_tree(space: &StateSpace, p: &SparseMatrix) -> Result<Vec<f64>> {
    let m = space.len();
    let mut logp = vec![f64::NAN; m];
    let mut queue = std::collections::VecDeque::new();
    logp[0] = 0.0;
    queue.push_back(0);
    while let Some(i) = queue.pop_front() {
        let (c, v) = p.row(i);
        for (&j, &pij) in c.iter().zip(v) {
            if j == i || !logp[j].is_nan() || pij == 0.0 {
                continue;
            }
            let pji = p.get(j, i);
            if pji == 0.0 {
                return Err(Error::Internal("transition without a reverse move".into()));
            }
            logp[j] = logp[i] + pij.ln() - pji.ln();
            queue.push_back(j);
        }
    }
    if logp.iter().any(|l| l.is_nan()) {
        return usage("lumped chain is not irreducible on its state set");
    }
    Ok(normalize_log(logp))
}

/// `‖πP − π‖∞`.
pub fn stationary_residual(p: &SparseMatrix, pi: &[f64]) -> f64 {
    let mut out = vec![0.0; pi.len()];
    p.left_mul(pi, &mut out);
    out.iter().zip(pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Stationary vector by a dense LU solve of `πᵀ(P − I) = 0`, `Σπ = 1`.
pub fn stationary_by_solve(p: &SparseMatrix) -> Result<Vec<f64>> {
    let m = p.n_rows();
    let mut a = p.to_dense().transpose();
    for i in 0..m {
        a[(i, i)] -= 1.0;
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular stationary system".into()))?;
    Ok(x.iter().copied().collect())
}
