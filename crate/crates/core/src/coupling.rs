//! Couplings of two CWP chains: the maximal coupling of heat-bath updates,
//! the contracting pair step, two-phase coalescence and a coupling-based
//! mixing-time estimate.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dynamics::{counts_after, cwp_update_law, propose, ChainState, Model, Proposal, RestrictedRegion};
use crate::error::{usage, Result};
use crate::exact::states::enumerate_states;
use crate::rng::{stream, Lane};
use crate::spin::{hamming, sample_index, Color, Configuration, ModelParams, ProbVector};

/// Default constant in the event-B window `γ N (ln N)²`.
pub const DEFAULT_GAMMA: f64 = 10.0;

/// Draws `(i, j)` with marginals `p` and `r` and `P(i ≠ j) = TV(p, r)`.
/// Consumes exactly three `f64` draws.
pub fn maximal_coupling_sample<R: Rng + ?Sized>(p: &ProbVector, r: &ProbVector, rng: &mut R) -> (usize, usize) {
    let mut overlap = vec![0.0; p.len()];
    let (i, j) = coupled_indices(p.as_slice(), r.as_slice(), &mut overlap, rng);
    (i, j)
}

fn coupled_indices<R: Rng + ?Sized>(p: &[f64], r: &[f64], overlap: &mut [f64], rng: &mut R) -> (usize, usize) {
    let u0: f64 = rng.random();
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let mut mass = 0.0;
    for k in 0..p.len() {
        overlap[k] = p[k].min(r[k]);
        mass += overlap[k];
    }
    if u0 < mass {
        let k = sample_index(overlap, u1 * mass);
        return (k, k);
    }
    let rest = 1.0 - mass;
    let res_p: Vec<f64> = (0..p.len()).map(|k| (p[k] - overlap[k]).max(0.0)).collect();
    let res_r: Vec<f64> = (0..p.len()).map(|k| (r[k] - overlap[k]).max(0.0)).collect();
    let tot_p: f64 = res_p.iter().sum();
    let tot_r: f64 = res_r.iter().sum();
    debug_assert!(rest >= -1e-12);
    (sample_index(&res_p, u1 * tot_p), sample_index(&res_r, u2 * tot_r))
}

/// Two chains on the same vertex set with their Hamming distance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledState {
    pub w: ChainState,
    pub z: ChainState,
    hamming_dist: usize,
}

impl CoupledState {
    pub fn new(w: Configuration, z: Configuration, q: usize) -> Result<Self> {
        let d = hamming(&w, &z)?;
        Ok(Self {
            w: ChainState::new(w, q),
            z: ChainState::new(z, q),
            hamming_dist: d,
        })
    }

    pub fn hamming_dist(&self) -> usize {
        self.hamming_dist
    }

    pub fn coalesced(&self) -> bool {
        self.hamming_dist == 0
    }

    fn inside(&self, region: &RestrictedRegion) -> bool {
        region.contains_counts(self.w.counts()) && region.contains_counts(self.z.counts())
    }

    fn move_w(&mut self, v: usize, to: Color) {
        let other = self.z.config().get(v);
        let before = self.w.config().get(v) != other;
        self.w.recolor(v, to);
        let after = to != other;
        self.hamming_dist = self.hamming_dist + after as usize - before as usize;
    }

    fn move_z(&mut self, v: usize, to: Color) {
        let other = self.w.config().get(v);
        let before = self.z.config().get(v) != other;
        self.z.recolor(v, to);
        let after = to != other;
        self.hamming_dist = self.hamming_dist + after as usize - before as usize;
    }
}

fn accepts(region: Option<&RestrictedRegion>, counts: &[usize], prop: &Proposal) -> bool {
    prop.from == prop.to || region.is_none_or(|r| r.contains_counts(&counts_after(counts, prop)))
}

/// One step of the contracting coupling: a shared uniform vertex, colours
/// from the maximal coupling of the two heat-bath laws, and a separate
/// rejection test in each chain.
pub fn contracting_pair_step<R: Rng + ?Sized>(
    cs: &mut CoupledState,
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    rng: &mut R,
) -> Result<()> {
    if let Some(r) = region {
        if !cs.inside(r) {
            return usage("coupled chains must start inside the restricted region");
        }
    }
    coupled_step_unchecked(cs, region, p, rng);
    Ok(())
}

fn coupled_step_unchecked<R: Rng + ?Sized>(
    cs: &mut CoupledState,
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    rng: &mut R,
) {
    let q = p.q;
    let v = rng.random_range(0..cs.w.n());
    let (cw, cz) = (cs.w.config().get(v), cs.z.config().get(v));
    let mut law_w = vec![0.0; q];
    let mut law_z = vec![0.0; q];
    let mut overlap = vec![0.0; q];
    cwp_update_law(cs.w.counts(), cw as usize, p.beta, &mut law_w);
    cwp_update_law(cs.z.counts(), cz as usize, p.beta, &mut law_z);
    let (i, j) = if cs.coalesced() {
        let (i, _) = coupled_indices(&law_w, &law_w, &mut overlap, rng);
        (i, i)
    } else {
        coupled_indices(&law_w, &law_z, &mut overlap, rng)
    };
    let pw = Proposal { vertex: v, from: cw, to: i as Color };
    let pz = Proposal { vertex: v, from: cz, to: j as Color };
    if accepts(region, cs.w.counts(), &pw) {
        cs.move_w(v, pw.to);
    }
    if accepts(region, cs.z.counts(), &pz) {
        cs.move_z(v, pz.to);
    }
    cs.w.tick();
    cs.z.tick();
}

/// Independent step of both chains on separate streams.
fn independent_step<R: Rng + ?Sized>(
    cs: &mut CoupledState,
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    rng_w: &mut R,
    rng_z: &mut R,
) {
    let pw = propose(Model::Cwp, &cs.w, p, rng_w);
    if accepts(region, cs.w.counts(), &pw) {
        cs.move_w(pw.vertex, pw.to);
    }
    let pz = propose(Model::Cwp, &cs.z, p, rng_z);
    if accepts(region, cs.z.counts(), &pz) {
        cs.move_z(pz.vertex, pz.to);
    }
    cs.w.tick();
    cs.z.tick();
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingOptions {
    pub max_steps: u64,
    /// Constant in the event-B window `γ N (ln N)²`.
    pub gamma: f64,
    /// Keep the per-step Hamming distances.
    pub record: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self {
            max_steps: 10_000_000,
            gamma: DEFAULT_GAMMA,
            record: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTrace {
    /// Distance after each step, starting with the initial one. Empty unless
    /// recording was requested.
    pub hamming: Vec<u32>,
    pub tau_couple: Option<u64>,
    pub phase1_len: u64,
    pub max_hamming: usize,
    /// First step inside the event-B window at which a chain is outside the
    /// `4r/5` ball.
    pub event_b_violated_at: Option<u64>,
}

/// Runs the two-phase scheme: independent moves until both chains are in
/// the `r/5` ball, then the contracting coupling until they meet.
///
/// Phase one uses the `First` and `Second` lanes of `(seed, replica)`, phase
/// two the `Main` lane. Without a region the first phase is empty.
pub fn two_phase_coalescence(
    sigma: &Configuration,
    tau: &Configuration,
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    seed: u64,
    replica: u64,
    opts: &CouplingOptions,
) -> Result<CouplingTrace> {
    let mut cs = CoupledState::new(sigma.clone(), tau.clone(), p.q)?;
    if let Some(r) = region {
        if !cs.inside(r) {
            return usage("start configurations must lie inside the restricted region");
        }
    }
    let inner = region.map(|r| r.scaled(0.2));
    let guard = region.map(|r| r.scaled(0.8));
    let n = sigma.len() as f64;
    let window = (opts.gamma * n * n.ln().powi(2)).floor() as u64;

    let mut trace = CouplingTrace {
        hamming: Vec::new(),
        tau_couple: None,
        phase1_len: 0,
        max_hamming: cs.hamming_dist(),
        event_b_violated_at: None,
    };
    let observe = |cs: &CoupledState, t: u64, trace: &mut CouplingTrace| {
        if opts.record {
            trace.hamming.push(cs.hamming_dist() as u32);
        }
        trace.max_hamming = trace.max_hamming.max(cs.hamming_dist());
        if trace.event_b_violated_at.is_none() && t <= window {
            if let Some(g) = &guard {
                if !cs.inside(g) {
                    trace.event_b_violated_at = Some(t);
                }
            }
        }
        if cs.coalesced() && trace.tau_couple.is_none() {
            trace.tau_couple = Some(t);
        }
    };

    let mut t = 0u64;
    observe(&cs, t, &mut trace);
    let mut rng_w = stream(seed, replica, Lane::First);
    let mut rng_z = stream(seed, replica, Lane::Second);
    let mut rng = stream(seed, replica, Lane::Main);
    if let Some(inner) = &inner {
        while !cs.coalesced() && !cs.inside(inner) && t < opts.max_steps {
            independent_step(&mut cs, region, p, &mut rng_w, &mut rng_z);
            t += 1;
            observe(&cs, t, &mut trace);
        }
    }
    trace.phase1_len = t;
    while trace.tau_couple.is_none() && t < opts.max_steps {
        coupled_step_unchecked(&mut cs, region, p, &mut rng);
        t += 1;
        observe(&cs, t, &mut trace);
    }
    Ok(trace)
}

/// Outcome of [`coupling_tmix_upper`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingTmix {
    /// Estimated `t` with `max P(τ_couple > t) ≤ 1/4`; absent when the step
    /// budget ran out before the tail dropped below the threshold.
    pub t: Option<u64>,
    /// Count vectors of the start pair attaining the maximum.
    pub worst_pair: (Vec<usize>, Vec<usize>),
    /// Tail estimate at `t` for the worst pair.
    pub worst_tail: f64,
    pub pairs: usize,
    pub replicas: usize,
    /// Runs that hit the step budget without coalescing.
    pub censored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmixOptions {
    pub replicas: usize,
    pub random_pairs: usize,
    /// One-sided level of the upper confidence bound on the tail.
    pub confidence: f64,
    pub max_steps: u64,
}

impl Default for TmixOptions {
    fn default() -> Self {
        Self {
            replicas: 400,
            random_pairs: 4,
            confidence: 0.5,
            max_steps: 10_000_000,
        }
    }
}

/// Start pairs: the extreme lattice points of the region along each colour
/// axis paired with each other, plus uniformly drawn pairs. Configurations
/// are laid out in opposite colour orders to make their Hamming distance
/// large.
pub fn adversarial_start_pairs<R: Rng + ?Sized>(
    n: usize,
    q: usize,
    region: Option<&RestrictedRegion>,
    random_pairs: usize,
    rng: &mut R,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let space = enumerate_states(n, q, region)?;
    if space.len() == 0 {
        return usage("the region contains no lattice point");
    }
    let mut extremes: Vec<usize> = Vec::new();
    for k in 0..q {
        let by_k = |i: &usize| space.state(*i)[k];
        let idx = 0..space.len();
        let hi = idx.clone().max_by_key(by_k).expect("nonempty");
        let lo = idx.min_by_key(by_k).expect("nonempty");
        for e in [hi, lo] {
            if !extremes.contains(&e) {
                extremes.push(e);
            }
        }
    }
    let mut pairs = Vec::new();
    for (a, &i) in extremes.iter().enumerate() {
        for &j in &extremes[a..] {
            pairs.push((space.state(i).to_vec(), space.state(j).to_vec()));
        }
    }
    for _ in 0..random_pairs {
        let i = rng.random_range(0..space.len());
        let j = rng.random_range(0..space.len());
        pairs.push((space.state(i).to_vec(), space.state(j).to_vec()));
    }
    Ok(pairs)
}

/// Configurations for a start pair: ascending colour blocks for the first,
/// descending for the second.
pub fn pair_configurations(a: &[usize], b: &[usize]) -> (Configuration, Configuration) {
    let rev: Vec<usize> = (0..b.len()).rev().collect();
    (Configuration::from_counts(a), Configuration::from_counts_ordered(b, &rev))
}

/// Smallest `t` whose upper confidence bound on `P(τ > t)` is at most 1/4.
/// `taus` holds coalescence times, `None` for censored runs.
pub fn tail_quantile(taus: &[Option<u64>], confidence: f64) -> Option<(u64, f64)> {
    let z = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(confidence).max(0.0);
    let r = taus.len() as f64;
    let mut sorted: Vec<u64> = taus.iter().map(|t| t.unwrap_or(u64::MAX)).collect();
    sorted.sort_unstable();
    let ucb = |exceed: usize| {
        let ph = exceed as f64 / r;
        ph + z * (ph * (1.0 - ph) / r).sqrt()
    };
    // Candidate thresholds are the observed times (and 0).
    let mut candidates = vec![0u64];
    candidates.extend(sorted.iter().copied().filter(|&t| t != u64::MAX));
    for t in candidates {
        let exceed = sorted.len() - sorted.partition_point(|&x| x <= t);
        let u = ucb(exceed);
        if u <= 0.25 {
            return Some((t, exceed as f64 / r));
        }
    }
    None
}

/// Coupling-based estimate of the mixing time, maximised over a set of
/// adversarial start pairs. The maximum over a finite set of pairs is a
/// lower estimate of the true worst case.
pub fn coupling_tmix_upper(
    region: Option<&RestrictedRegion>,
    p: &ModelParams,
    seed: u64,
    opts: &TmixOptions,
) -> Result<CouplingTmix> {
    if !(0.5..1.0).contains(&opts.confidence) {
        return usage("confidence must be in [0.5, 1)");
    }
    if opts.replicas == 0 {
        return usage("replicas must be ≥ 1");
    }
    let mut rng = stream(seed, u64::MAX / 4, Lane::Aux);
    let pairs = adversarial_start_pairs(p.n_vertices, p.q, region, opts.random_pairs, &mut rng)?;
    let copts = CouplingOptions {
        max_steps: opts.max_steps,
        gamma: DEFAULT_GAMMA,
        record: false,
    };
    let mut best: Option<(Option<u64>, f64, usize)> = None;
    let mut censored = 0;
    for (pi, (a, b)) in pairs.iter().enumerate() {
        let (s, t) = pair_configurations(a, b);
        let taus: Vec<Option<u64>> = (0..opts.replicas)
            .into_par_iter()
            .map(|rep| {
                let replica = (pi * opts.replicas + rep) as u64;
                two_phase_coalescence(&s, &t, region, p, seed, replica, &copts).map(|tr| tr.tau_couple)
            })
            .collect::<Result<_>>()?;
        censored += taus.iter().filter(|t| t.is_none()).count();
        let est = tail_quantile(&taus, opts.confidence);
        let key = est.map(|e| e.0);
        let worse = match &best {
            None => true,
            Some((None, _, _)) => false,
            Some((Some(cur), _, _)) => key.is_none_or(|k| k > *cur),
        };
        if worse {
            best = Some((key, est.map_or(1.0, |e| e.1), pi));
        }
    }
    let (t, tail, pi) = best.expect("at least one pair");
    Ok(CouplingTmix {
        t,
        worst_pair: pairs[pi].clone(),
        worst_tail: tail,
        pairs: pairs.len(),
        replicas: opts.replicas,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macrostates::{select_macrostate, uniform};
    use crate::spin::tv_distance;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_laws_always_agree() {
        let p = ProbVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let (i, j) = maximal_coupling_sample(&p, &p, &mut rng);
            assert_eq!(i, j);
        }
    }

    #[test]
    fn disjoint_supports_never_agree() {
        let p = ProbVector::new(vec![0.5, 0.5, 0.0]).unwrap();
        let r = ProbVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hits = [0usize; 2];
        for _ in 0..10_000 {
            let (i, j) = maximal_coupling_sample(&p, &r, &mut rng);
            assert_eq!(j, 2);
            assert_ne!(i, j);
            hits[i] += 1;
        }
        assert!((hits[0] as f64 - 5000.0).abs() < 3.0 * 50.0);
    }

    #[test]
    fn disagreement_rate_and_marginals() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let r = ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        let (mut diff, mut mi, mut mj) = (0usize, [0usize; 3], [0usize; 3]);
        for _ in 0..n {
            let (i, j) = maximal_coupling_sample(&p, &r, &mut rng);
            diff += (i != j) as usize;
            mi[i] += 1;
            mj[j] += 1;
        }
        let rate = diff as f64 / n as f64;
        assert!((rate - tv_distance(&p, &r)).abs() < 0.002, "{rate}");
        for k in 0..3 {
            for (m, law) in [(mi[k], &p), (mj[k], &r)] {
                let pk = law.as_slice()[k];
                let sd = (pk * (1.0 - pk) / n as f64).sqrt();
                assert!((m as f64 / n as f64 - pk).abs() < 3.0 * sd);
            }
        }
    }

    fn arb_prob(q: usize) -> impl Strategy<Value = ProbVector> {
        prop::collection::vec(0.0f64..1.0, q).prop_filter_map("positive mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-3).then(|| ProbVector::new(w.iter().map(|x| x / s).collect()).unwrap())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn coupling_is_optimal(p in arb_prob(3), r in arb_prob(3), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20_000;
            let diff = (0..n).filter(|_| { let (i, j) = maximal_coupling_sample(&p, &r, &mut rng); i != j }).count();
            let tv = tv_distance(&p, &r);
            let sd = (tv * (1.0 - tv) / n as f64).sqrt().max(1.0 / n as f64);
            prop_assert!((diff as f64 / n as f64 - tv).abs() <= 4.0 * sd);
        }
    }

    #[test]
    fn coalesced_pair_stays_together() {
        let p = ModelParams::new(3, 1.6, 60).unwrap();
        let c = Configuration::from_counts(&[40, 10, 10]);
        let mut cs = CoupledState::new(c.clone(), c, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5000 {
            contracting_pair_step(&mut cs, None, &p, &mut rng).unwrap();
            assert_eq!(cs.w.config(), cs.z.config());
            assert!(cs.coalesced());
        }
    }

    #[test]
    fn one_disagreement_at_beta_zero() {
        let n = 20;
        let p = ModelParams::new(3, 0.0, n).unwrap();
        let w = Configuration::from_counts(&[10, 5, 5]);
        let mut z = w.clone();
        z.set(0, 2);
        let runs = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut met = 0;
        for _ in 0..runs {
            let mut cs = CoupledState::new(w.clone(), z.clone(), 3).unwrap();
            contracting_pair_step(&mut cs, None, &p, &mut rng).unwrap();
            assert!(cs.hamming_dist() <= 1);
            met += cs.coalesced() as usize;
        }
        let pr = 1.0 / n as f64;
        let sd = (pr * (1.0 - pr) / runs as f64).sqrt();
        assert!((met as f64 / runs as f64 - pr).abs() < 3.0 * sd);
    }

    #[test]
    fn hamming_is_tracked_and_moves_by_one() {
        let n = 90;
        let p = ModelParams::new(3, 1.6, n).unwrap();
        let x = select_macrostate("ordered:1", 1.6, 3).unwrap();
        let region = RestrictedRegion::new(x, 0.1).unwrap();
        let a = [71, 10, 9];
        let (w, z) = pair_configurations(&a, &a);
        let mut cs = CoupledState::new(w, z, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut prev = cs.hamming_dist();
        for _ in 0..20_000 {
            contracting_pair_step(&mut cs, Some(&region), &p, &mut rng).unwrap();
            assert_eq!(cs.hamming_dist(), hamming(cs.w.config(), cs.z.config()).unwrap());
            assert!(cs.hamming_dist().abs_diff(prev) <= 1);
            assert!(region.contains_counts(cs.w.counts()) && region.contains_counts(cs.z.counts()));
            prev = cs.hamming_dist();
        }
    }

    #[test]
    fn outside_region_is_rejected() {
        let p = ModelParams::new(3, 1.0, 30).unwrap();
        let region = RestrictedRegion::new(uniform(3), 0.05).unwrap();
        let c = Configuration::monochrome(30, 0);
        let mut cs = CoupledState::new(c.clone(), c.clone(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(contracting_pair_step(&mut cs, Some(&region), &p, &mut rng).is_err());
        let opts = CouplingOptions::default();
        assert!(two_phase_coalescence(&c, &c, Some(&region), &p, 0, 0, &opts).is_err());
    }

    #[test]
    fn equal_starts_meet_at_zero() {
        let p = ModelParams::new(3, 1.0, 30).unwrap();
        let c = Configuration::from_counts(&[10, 10, 10]);
        let tr = two_phase_coalescence(&c, &c, None, &p, 0, 0, &CouplingOptions::default()).unwrap();
        assert_eq!(tr.tau_couple, Some(0));
    }

    #[test]
    fn two_phase_is_reproducible_and_coalesces() {
        let n = 120;
        let p = ModelParams::new(3, 1.6, n).unwrap();
        let x = select_macrostate("ordered:1", 1.6, 3).unwrap();
        let region = RestrictedRegion::new(x, 0.05).unwrap();
        let pairs = adversarial_start_pairs(n, 3, Some(&region), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (a, b) = &pairs[1];
        let (s, t) = pair_configurations(a, b);
        let opts = CouplingOptions {
            record: true,
            ..Default::default()
        };
        let one = two_phase_coalescence(&s, &t, Some(&region), &p, 9, 3, &opts).unwrap();
        let two = two_phase_coalescence(&s, &t, Some(&region), &p, 9, 3, &opts).unwrap();
        assert_eq!(one, two);
        let tau = one.tau_couple.unwrap();
        assert_eq!(one.hamming.len() as u64, tau + 1);
        assert_eq!(*one.hamming.last().unwrap(), 0);
        assert!(one.phase1_len <= tau);
    }

    #[test]
    fn quantile_is_monotone_in_confidence() {
        let taus: Vec<Option<u64>> = (1..=200).map(|t| Some(t * 3)).collect();
        let mut prev = 0;
        for c in [0.5, 0.8, 0.9, 0.99] {
            let (t, _) = tail_quantile(&taus, c).unwrap();
            assert!(t >= prev);
            prev = t;
        }
        assert_eq!(tail_quantile(&taus, 0.5).unwrap().0, 450);
        let censored: Vec<Option<u64>> = vec![None; 10];
        assert!(tail_quantile(&censored, 0.5).is_none());
    }
}
