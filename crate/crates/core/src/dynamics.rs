//! Glauber dynamics on graphs, the O(q) Curie–Weiss–Potts step, and the
//! restricted chain that rejects moves leaving an ℓ₂ ball around a macrostate.

use rand::Rng;
use serde::Serialize;

use crate::error::{usage, Result};
use crate::spin::{
    conditional_spin_dist, proportions, sample_index, softmax_into, Color, Configuration,
    CountVector, Graph, ModelParams, ProbVector,
};

/// Slack added to the radius in the floating-point membership test.
pub const BALL_SLACK: f64 = 1e-12;

/// Closed ℓ₂ ball `{s : ‖s − x‖₂ ≤ r}` on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestrictedRegion {
    center: ProbVector,
    radius: f64,
    uniform_center: bool,
}

impl RestrictedRegion {
    pub fn new(center: ProbVector, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return usage("radius must be > 0");
        }
        let q = center.len() as f64;
        let uniform_center = center.as_slice().iter().all(|&v| v == 1.0 / q);
        Ok(Self {
            center,
            radius,
            uniform_center,
        })
    }

    pub fn center(&self) -> &ProbVector {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same centre, radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            radius: self.radius * factor,
            ..self.clone()
        }
    }

    /// `‖n/N − x‖₂`.
    pub fn distance(&self, counts: &[usize]) -> f64 {
        let n: usize = counts.iter().sum();
        let n = n as f64;
        counts
            .iter()
            .zip(self.center.as_slice())
            .map(|(&c, &x)| (c as f64 / n - x).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Membership of the count vector `n`. Around `ê` the left side of
    /// `Σ (q n_k − N)² ≤ (q N r)²` is exact in integers and the right side
    /// absorbs the rounding of `r`; elsewhere it is a float comparison with
    /// slack toward acceptance.
    pub fn contains_counts(&self, counts: &[usize]) -> bool {
        if self.uniform_center {
            let n: usize = counts.iter().sum();
            let q = counts.len() as i128;
            let lhs: i128 = counts
                .iter()
                .map(|&c| {
                    let d = q * c as i128 - n as i128;
                    d * d
                })
                .sum();
            let rhs = q as f64 * n as f64 * self.radius;
            return (lhs as f64) <= rhs * rhs * (1.0 + 4.0 * f64::EPSILON);
        }
        self.distance(counts) <= self.radius + BALL_SLACK
    }
}

/// A configuration together with its incrementally maintained counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    config: Configuration,
    counts: CountVector,
    step: u64,
}

impl ChainState {
    pub fn new(config: Configuration, q: usize) -> Self {
        let counts = proportions(&config, q);
        Self {
            config,
            counts,
            step: 0,
        }
    }

    pub fn config(&self) -> &Configuration {
        &self.config
    }

    pub fn counts(&self) -> &[usize] {
        self.counts.as_slice()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn n(&self) -> usize {
        self.config.len()
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.counts.proportions()
    }

    pub(crate) fn recolor(&mut self, v: usize, to: Color) {
        let from = self.config.get(v);
        if from != to {
            self.config.set(v, to);
            self.counts.move_unit(from as usize, to as usize);
        }
    }

    pub(crate) fn tick(&mut self) {
        self.step += 1;
    }
}

/// Which interaction structure drives the update.
#[derive(Debug, Clone, Copy)]
pub enum Model<'a> {
    /// Complete graph, driven from the count vector in O(q).
    Cwp,
    Graph(&'a Graph),
}

/// Single-site proposal: a uniform vertex and a heat-bath color for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub vertex: usize,
    pub from: Color,
    pub to: Color,
}

/// Heat-bath law at `v` under the CWP convention: `g_β((n − e_c)/N)`.
pub(crate) fn cwp_update_law(counts: &[usize], c: usize, beta: f64, out: &mut [f64]) {
    let n: usize = counts.iter().sum();
    let s: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(k, &m)| (m as f64 - if k == c { 1.0 } else { 0.0 }) / n as f64)
        .collect();
    softmax_into(&s, beta, out);
}

/// Draws one proposal. Consumes exactly one `usize` and one `f64` from `rng`.
pub fn propose<R: Rng + ?Sized>(
    model: Model<'_>,
    state: &ChainState,
    p: &ModelParams,
    rng: &mut R,
) -> Proposal {
    let v = rng.random_range(0..state.n());
    let u: f64 = rng.random();
    let from = state.config.get(v);
    let to = match model {
        Model::Cwp => {
            let mut law = vec![0.0; p.q];
            cwp_update_law(state.counts(), from as usize, p.beta, &mut law);
            sample_index(&law, u)
        }
        Model::Graph(g) => conditional_spin_dist(g, &state.config, v, p).sample_with(u),
    };
    Proposal {
        vertex: v,
        from,
        to: to as Color,
    }
}

/// Count vector after applying a proposal.
pub(crate) fn counts_after(counts: &[usize], prop: &Proposal) -> Vec<usize> {
    let mut n = counts.to_vec();
    n[prop.from as usize] -= 1;
    n[prop.to as usize] += 1;
    n
}

pub fn glauber_step<R: Rng + ?Sized>(g: &Graph, state: &mut ChainState, p: &ModelParams, rng: &mut R) {
    let prop = propose(Model::Graph(g), state, p, rng);
    state.recolor(prop.vertex, prop.to);
    state.tick();
}

pub fn cwp_glauber_step<R: Rng + ?Sized>(state: &mut ChainState, p: &ModelParams, rng: &mut R) {
    let prop = propose(Model::Cwp, state, p, rng);
    state.recolor(prop.vertex, prop.to);
    state.tick();
}

/// One step of the chain for `model`, optionally restricted. Returns whether
/// a proposal was rejected by the region.
pub fn model_step<R: Rng + ?Sized>(
    model: Model<'_>,
    state: &mut ChainState,
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    rng: &mut R,
) -> bool {
    let prop = propose(model, state, p, rng);
    let rejected = prop.from != prop.to
        && region.is_some_and(|r| !r.contains_counts(&counts_after(state.counts(), &prop)));
    if !rejected {
        state.recolor(prop.vertex, prop.to);
    }
    state.tick();
    rejected
}

/// Restricted CWP step. Errors if the state is outside the region.
pub fn restricted_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    region: &RestrictedRegion,
    p: &ModelParams,
    rng: &mut R,
) -> Result<bool> {
    if !region.contains_counts(state.counts()) {
        return usage("state is outside the restricted region");
    }
    Ok(model_step(Model::Cwp, state, Some(region), p, rng))
}

/// First exit from the `4r/5` ball and first entry into the `r/5` ball.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoppingTimes {
    pub tau_out: Option<u64>,
    pub tau_in: Option<u64>,
}

struct StopWatch {
    outer: RestrictedRegion,
    inner: RestrictedRegion,
    times: StoppingTimes,
}

impl StopWatch {
    fn new(region: &RestrictedRegion) -> Self {
        Self {
            outer: region.scaled(0.8),
            inner: region.scaled(0.2),
            times: StoppingTimes::default(),
        }
    }

    fn observe(&mut self, t: u64, counts: &[usize]) {
        if self.times.tau_out.is_none() && !self.outer.contains_counts(counts) {
            self.times.tau_out = Some(t);
        }
        if self.times.tau_in.is_none() && self.inner.contains_counts(counts) {
            self.times.tau_in = Some(t);
        }
    }
}

/// Options for [`run_trajectory`].
#[derive(Debug, Clone, Default)]
pub struct TrajectoryOptions<'a> {
    /// Ball whose `4r/5` and `r/5` shrinkings define τ_out and τ_in. Defaults to
    /// the restriction region.
    pub stopping_ball: Option<&'a RestrictedRegion>,
    /// Record the count path every `stride` steps; `Some(0)` picks
    /// `max(1, steps / 10⁶)`.
    pub record_stride: Option<u64>,
}

/// One recorded point of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathPoint {
    pub step: u64,
    pub counts: Vec<usize>,
    pub rejected_cum: u64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: ChainState,
    pub rejections: u64,
    pub stopping: StoppingTimes,
    pub path: Vec<PathPoint>,
}

/// Runs `steps` updates from `initial`.
pub fn run_trajectory<R: Rng + ?Sized>(
    model: Model<'_>,
    initial: ChainState,
    steps: u64,
    region: Option<&RestrictedRegion>,
    options: &TrajectoryOptions<'_>,
    p: &ModelParams,
    rng: &mut R,
) -> Result<Trajectory> {
    if let Some(r) = region {
        if !r.contains_counts(initial.counts()) {
            return usage("initial state is outside the restricted region");
        }
    }
    let mut watch = options.stopping_ball.or(region).map(StopWatch::new);
    let stride = options
        .record_stride
        .map(|s| if s == 0 { (steps / 1_000_000).max(1) } else { s });
    let mut state = initial;
    let mut rejections = 0u64;
    let mut path = Vec::new();
    let t0 = state.step();
    if let Some(w) = watch.as_mut() {
        w.observe(0, state.counts());
    }
    if stride.is_some() {
        path.push(PathPoint {
            step: 0,
            counts: state.counts().to_vec(),
            rejected_cum: 0,
        });
    }
    for t in 1..=steps {
        if model_step(model, &mut state, region, p, rng) {
            rejections += 1;
        }
        if let Some(w) = watch.as_mut() {
            w.observe(t, state.counts());
        }
        if let Some(k) = stride {
            if t % k == 0 || t == steps {
                path.push(PathPoint {
                    step: t,
                    counts: state.counts().to_vec(),
                    rejected_cum: rejections,
                });
            }
        }
    }
    debug_assert_eq!(state.step(), t0 + steps);
    Ok(Trajectory {
        final_state: state,
        rejections,
        stopping: watch.map(|w| w.times).unwrap_or_default(),
        path,
    })
}

/// Count vector summing to `n` closest to `n·x`: floors topped up by
/// largest remainder, ties to the lower colour.
pub fn nearest_lattice_point(x: &ProbVector, n: usize) -> Vec<usize> {
    let target: Vec<f64> = x.as_slice().iter().map(|&v| v * n as f64).collect();
    let mut counts: Vec<usize> = target.iter().map(|t| t.floor() as usize).collect();
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (target[a] - target[a].floor(), target[b] - target[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let missing = n.saturating_sub(counts.iter().sum());
    for &k in order.iter().cycle().take(missing) {
        counts[k] += 1;
    }
    counts
}

/// Exact `E[S_{t+1} − S_t | S_t = n/N]` for the unrestricted CWP chain.
pub fn expected_increment(counts: &[usize], beta: f64) -> Vec<f64> {
    let q = counts.len();
    let n: usize = counts.iter().sum();
    let nf = n as f64;
    let mut out = vec![0.0; q];
    let mut law = vec![0.0; q];
    for (k, &nk) in counts.iter().enumerate() {
        if nk == 0 {
            continue;
        }
        let sk = nk as f64 / nf;
        cwp_update_law(counts, k, beta, &mut law);
        for (l, &gl) in law.iter().enumerate() {
            if l != k {
                out[l] += sk * gl / nf;
                out[k] -= sk * gl / nf;
            }
        }
    }
    out
}
