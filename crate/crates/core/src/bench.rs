//! Approximation bounds and desk-scale scaling experiments.

use rand::Rng;
use serde::Serialize;

use crate::dynamics::RestrictedRegion;
use crate::error::{usage, Error, Result};
use crate::exact::lumped::{chain_on, conditional_multinomial, lumped_gibbs, LumpedMeasure};
use crate::exact::ot::exact_wasserstein_exchangeable;
use crate::exact::states::enumerate_states;
use crate::exact::stein::{max_neighbor_difference, solve_stein_poisson};
use crate::macrostates::{beta_s, uniform, MacrostateAnalysis};
use crate::spin::{softmax_gbeta, softmax_into, tv_slices, Configuration, Graph, ModelParams, ProbVector};

/// Per-vertex Lipschitz constants of a test function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzSpec {
    pub name: String,
    pub constants: Vec<f64>,
}

impl LipschitzSpec {
    pub fn new(name: impl Into<String>, constants: Vec<f64>) -> Result<Self> {
        if constants.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return usage("Lipschitz constants must be finite and ≥ 0");
        }
        Ok(Self {
            name: name.into(),
            constants,
        })
    }

    /// Every vertex has constant `c`.
    pub fn uniform(name: impl Into<String>, n: usize, c: f64) -> Result<Self> {
        Self::new(name, vec![c; n])
    }

    pub fn max_constant(&self) -> f64 {
        self.constants.iter().copied().fold(0.0, f64::max)
    }
}

/// `κ = 1 − (1 − Δ tanh(β/N))/N`.
pub fn contraction_rate_bounded_degree(g: &Graph, p: &ModelParams) -> Result<f64> {
    let n = g.n_vertices() as f64;
    let load = g.max_degree() as f64 * (p.beta / n).tanh();
    if load >= 1.0 {
        return Err(Error::Domain(format!(
            "contraction needs Δ·tanh(β/N) < 1, got {load}"
        )));
    }
    Ok(1.0 - (1.0 - load) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// `‖L‖∞ β√(q−1)/(1 − Δ tanh(β/N)) · √(2|E|/N)`.
    pub bound_value: f64,
    /// Same prefactor times `(1/N) Σ_v √deg(v)`.
    pub refined_value: f64,
    pub beta: f64,
    pub q: usize,
    pub n: usize,
    pub max_degree: usize,
    pub edges: usize,
    pub kappa: f64,
    pub lipschitz: f64,
    pub terms: Vec<(String, f64)>,
}

pub fn bounded_degree_bound(g: &Graph, p: &ModelParams, l: &LipschitzSpec) -> Result<BoundReport> {
    let kappa = contraction_rate_bounded_degree(g, p)?;
    let n = g.n_vertices();
    let nf = n as f64;
    let lip = l.max_constant();
    let temp = p.beta * ((p.q - 1) as f64).sqrt();
    let denom = 1.0 - g.max_degree() as f64 * (p.beta / nf).tanh();
    let coarse_deg = (2.0 * g.edge_count() as f64 / nf).sqrt();
    let fine_deg = (0..n).map(|v| (g.degree(v) as f64).sqrt()).sum::<f64>() / nf;
    Ok(BoundReport {
        bound_value: lip * temp / denom * coarse_deg,
        refined_value: lip * temp / denom * fine_deg,
        beta: p.beta,
        q: p.q,
        n,
        max_degree: g.max_degree(),
        edges: g.edge_count(),
        kappa,
        lipschitz: lip,
        terms: vec![
            ("beta_sqrt_q_minus_1".into(), temp),
            ("contraction_denominator".into(), denom),
            ("sqrt_2E_over_N".into(), coarse_deg),
            ("mean_sqrt_degree".into(), fine_deg),
        ],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TNormEstimate {
    /// Monte Carlo mean of `‖T(Y)‖₁`.
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `β√q Σ_v √(deg(v)/N² · Σ_k x_k(1 − x_k))`.
    pub analytic_bound: f64,
}

/// Analytic upper bound on `E‖T(Y)‖₁` for i.i.d. spins with law `x`.
pub fn t_norm_bound(g: &Graph, beta: f64, x: &ProbVector) -> f64 {
    let n = g.n_vertices() as f64;
    let var: f64 = x.as_slice().iter().map(|p| p * (1.0 - p)).sum();
    let q = x.len() as f64;
    beta * q.sqrt() * (0..g.n_vertices()).map(|v| (g.degree(v) as f64 / (n * n) * var).sqrt()).sum::<f64>()
}

/// `‖T(σ)‖₁ = Σ_v TV(g_β(S_v(σ)), x)`.
pub fn t_norm(g: &Graph, c: &Configuration, beta: f64, x: &ProbVector) -> f64 {
    let q = x.len();
    let n = g.n_vertices() as f64;
    let mut s = vec![0.0; q];
    let mut law = vec![0.0; q];
    let mut total = 0.0;
    for v in 0..g.n_vertices() {
        s.fill(0.0);
        for &u in g.neighbors(v) {
            s[c.get(u) as usize] += 1.0 / n;
        }
        softmax_into(&s, beta, &mut law);
        total += tv_slices(&law, x.as_slice());
    }
    total
}

/// Monte Carlo estimate of `E‖T(Y)‖₁` with `Y` i.i.d. from `x`, alongside
/// the analytic bound.
pub fn mean_t_norm<R: Rng + ?Sized>(
    g: &Graph,
    p: &ModelParams,
    x: &ProbVector,
    samples: usize,
    rng: &mut R,
) -> Result<TNormEstimate> {
    if x.len() != p.q {
        return usage("x has the wrong length");
    }
    if samples < 2 {
        return usage("samples must be ≥ 2");
    }
    let n = g.n_vertices();
    let mut colors = vec![0u8; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for c in colors.iter_mut() {
            *c = x.sample_with(rng.random()) as u8;
        }
        let cfg = Configuration::new(colors.clone(), p.q)?;
        let t = t_norm(g, &cfg, p.beta, x);
        sum += t;
        sum_sq += t * t;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok(TNormEstimate {
        mean,
        std_error: (var / k).sqrt(),
        samples,
        analytic_bound: t_norm_bound(g, p.beta, x),
    })
}

/// Whether a vertex counts itself in its own field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldConvention {
    Neighbors,
    SelfInclusive,
}

/// `max_{v,k} |p_v(k) − g_β(E S_v(Y))_k|` for a product measure with
/// marginals `pv`.
pub fn meanfield_residual(g: &Graph, beta: f64, pv: &[ProbVector], conv: FieldConvention) -> Result<f64> {
    let n = g.n_vertices();
    if pv.len() != n {
        return usage("need one marginal per vertex");
    }
    let q = pv[0].len();
    let mut worst = 0.0f64;
    for v in 0..n {
        let mut es = vec![0.0; q];
        let mut add = |u: usize| {
            for (e, &p) in es.iter_mut().zip(pv[u].as_slice()) {
                *e += p / n as f64;
            }
        };
        for &u in g.neighbors(v) {
            add(u);
        }
        if conv == FieldConvention::SelfInclusive {
            add(v);
        }
        let law = softmax_gbeta(&es, beta);
        for (a, b) in law.as_slice().iter().zip(pv[v].as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub n: usize,
    pub q: usize,
    pub beta: f64,
    /// `N E[(S − ê)(S − ê)ᵀ]` under the lumped Gibbs measure.
    pub gibbs_cov: Vec<Vec<f64>>,
    /// The same under i.i.d. uniform spins.
    pub product_cov: Vec<Vec<f64>>,
    pub limit_diag_x: f64,
    /// Off-diagonal limit `−1/(q² − 2β)`.
    pub limit_offdiag_x: f64,
    /// Off-diagonal forced by the zero row sums of a covariance on the
    /// simplex tangent space, `−diag/(q − 1)`.
    pub row_sum_offdiag_x: f64,
    pub limit_diag_y: f64,
    pub limit_offdiag_y: f64,
}

impl CltReport {
    pub fn gibbs_diag(&self) -> f64 {
        mean_diag(&self.gibbs_cov)
    }
    pub fn gibbs_offdiag(&self) -> f64 {
        mean_offdiag(&self.gibbs_cov)
    }
    pub fn product_diag(&self) -> f64 {
        mean_diag(&self.product_cov)
    }
    pub fn product_offdiag(&self) -> f64 {
        mean_offdiag(&self.product_cov)
    }
}

fn mean_diag(m: &[Vec<f64>]) -> f64 {
    (0..m.len()).map(|k| m[k][k]).sum::<f64>() / m.len() as f64
}

fn mean_offdiag(m: &[Vec<f64>]) -> f64 {
    let q = m.len();
    let mut s = 0.0;
    for k in 0..q {
        for l in 0..q {
            if k != l {
                s += m[k][l];
            }
        }
    }
    s / (q * (q - 1)) as f64
}

fn scaled_covariance(m: &LumpedMeasure) -> Vec<Vec<f64>> {
    let q = m.space.q();
    let n = m.space.n() as f64;
    let mut cov = vec![vec![0.0; q]; q];
    for (c, &w) in m.space.iter().zip(&m.weights) {
        let d: Vec<f64> = c.iter().map(|&x| x as f64 / n - 1.0 / q as f64).collect();
        for k in 0..q {
            for l in 0..q {
                cov[k][l] += w * n * d[k] * d[l];
            }
        }
    }
    cov
}

/// Exact `Cov(√N(S − ê))` under the lumped Gibbs and product measures,
/// alongside the limiting values.
pub fn clt_covariance_check(n: usize, q: usize, beta: f64) -> Result<CltReport> {
    let bs = beta_s(q)?;
    if !(beta < bs) {
        return Err(Error::Domain(format!("need β < β_s = {bs}, got {beta}")));
    }
    let gibbs = lumped_gibbs(n, q, beta, None)?;
    let product = conditional_multinomial(n, q, &uniform(q), None)?;
    let qf = q as f64;
    let diag = (qf - 1.0) / (qf * qf - 2.0 * qf * beta);
    Ok(CltReport {
        n,
        q,
        beta,
        gibbs_cov: scaled_covariance(&gibbs),
        product_cov: scaled_covariance(&product),
        limit_diag_x: diag,
        limit_offdiag_x: -1.0 / (qf * qf - 2.0 * beta),
        row_sum_offdiag_x: -diag / (qf - 1.0),
        limit_diag_y: (qf - 1.0) / (qf * qf),
        limit_offdiag_y: -1.0 / (qf * qf),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WassersteinRow {
    pub n: usize,
    pub states: usize,
    pub distance: f64,
    pub ratio: f64,
    pub duality_gap: f64,
}

/// Exact `d_W` between the Gibbs measure and the product measure with
/// marginal `x` for each `N`. With a radius both measures are conditioned on
/// the ball of that radius around `x`.
pub fn wasserstein_scaling(
    q: usize,
    beta: f64,
    x: &ProbVector,
    radius: Option<f64>,
    ns: &[usize],
) -> Result<Vec<WassersteinRow>> {
    let region = radius.map(|r| RestrictedRegion::new(x.clone(), r)).transpose()?;
    ns.iter()
        .map(|&n| {
            let gibbs = lumped_gibbs(n, q, beta, region.as_ref())?;
            let product = conditional_multinomial(n, q, x, region.as_ref())?;
            let r = exact_wasserstein_exchangeable(&gibbs, &product)?;
            Ok(WassersteinRow {
                n,
                states: gibbs.space.len(),
                distance: r.distance,
                ratio: r.distance / (n as f64).sqrt(),
                duality_gap: r.duality_gap,
            })
        })
        .collect()
}

/// Max over min of a positive sequence.
pub fn band_ratio(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaRow {
    pub beta: f64,
    pub theta: f64,
    /// `4qθ/(1 − θ)`.
    pub proxy: f64,
}

/// The prefactor proxy `4qθ/(1 − θ)` along `betas` for the macrostate
/// selected by `xspec` (`e` or `ordered:K`).
pub fn theta_star_trend(q: usize, xspec: &str, betas: &[f64]) -> Result<Vec<ThetaRow>> {
    betas
        .iter()
        .map(|&beta| {
            let x = crate::macrostates::select_macrostate(xspec, beta, q)?;
            let theta = MacrostateAnalysis::new(&x, beta, q)?.theta;
            if theta >= 1.0 {
                return Err(Error::Domain(format!("θ = {theta} ≥ 1 at β = {beta}")));
            }
            Ok(ThetaRow {
                beta,
                theta,
                proxy: 4.0 * q as f64 * theta / (1.0 - theta),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteinLipschitzReport {
    /// `max |f(σ) − f(τ)|` over neighbouring states.
    pub lipschitz_f: f64,
    /// `‖L(h)‖∞/(1 − κ)`.
    pub bound: f64,
    pub kappa: f64,
    pub residual: f64,
}

/// Solves the Stein equation for `h(σ) = #{v : σ(v) = color}` on the CWP
/// chain and compares the Lipschitz constant of the solution with the
/// contraction bound for `K_N`.
pub fn stein_lipschitz_check(n: usize, q: usize, beta: f64, color: usize) -> Result<SteinLipschitzReport> {
    if color >= q {
        return usage("color out of range");
    }
    let p = ModelParams::new(q, beta, n)?;
    let kappa = contraction_rate_bounded_degree(&Graph::complete(n), &p)?;
    let space = std::sync::Arc::new(enumerate_states(n, q, None)?);
    let chain = chain_on(space, beta, None)?;
    let h: Vec<f64> = chain.space.iter().map(|c| c[color] as f64).collect();
    let sol = solve_stein_poisson(&chain, &h)?;
    Ok(SteinLipschitzReport {
        lipschitz_f: max_neighbor_difference(&chain, &sol.f),
        bound: 1.0 / (1.0 - kappa),
        kappa,
        residual: sol.residual,
    })
}
