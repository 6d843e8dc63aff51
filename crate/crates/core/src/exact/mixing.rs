//! Worst-case total-variation curves and exact mixing times.

use super::lumped::LumpedChain;
use super::neumaier_sum;
use crate::error::{usage, Error, Result};

/// Hard cap on the number of steps examined per start.
pub const MAX_MIXING_STEPS: u64 = 50_000_000;

/// Largest state count for which final per-start vectors are kept in memory.
const KEEP_VECTORS: usize = 8_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingCurve {
    /// `(t, d(t))` for every `t = 0..=t_mix`, with
    /// `d(t) = max_x ‖P^t(x, ·) − π‖_TV`.
    pub curve: Vec<(u64, f64)>,
    pub t_mix: u64,
    /// Start achieving `d(t_mix − 1)` (index into the state space).
    pub worst_start: usize,
}

impl MixingCurve {
    /// Curve at `t = 0, 1, 2, 4, …` together with `t_mix − 1` and `t_mix`.
    pub fn doubling_points(&self) -> Vec<(u64, f64)> {
        let mut keep: Vec<u64> = std::iter::successors(Some(1u64), |t| t.checked_mul(2))
            .take_while(|&t| t < self.t_mix)
            .collect();
        keep.insert(0, 0);
        keep.extend([self.t_mix.saturating_sub(1), self.t_mix]);
        keep.dedup();
        keep.into_iter().map(|t| self.curve[t as usize]).collect()
    }
}

fn tv_to(x: &[f64], pi: &[f64], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(x.iter().zip(pi).map(|(a, b)| (a - b).abs()));
    0.5 * neumaier_sum(scratch.iter().copied())
}

struct StartRun {
    t_x: u64,
    history: Vec<f64>,
    last: Option<Vec<f64>>,
}

fn run_start(chain: &LumpedChain, start: usize, eps: f64, keep: bool) -> Result<StartRun> {
    let m = chain.len();
    let pi = &chain.stationary;
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut scratch = Vec::with_capacity(m);
    x[start] = 1.0;
    let mut history = Vec::new();
    let mut t = 0u64;
    loop {
        let d = tv_to(&x, pi, &mut scratch);
        history.push(d);
        if d <= eps {
            break;
        }
        if t >= MAX_MIXING_STEPS {
            return Err(Error::Resource(format!(
                "no mixing within {MAX_MIXING_STEPS} steps from state {start}"
            )));
        }
        chain.transition.left_mul(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
        t += 1;
    }
    Ok(StartRun {
        t_x: t,
        history,
        last: keep.then_some(x),
    })
}

fn continue_start(chain: &LumpedChain, mut x: Vec<f64>, steps: u64) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for _ in 0..steps {
        chain.transition.left_mul(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
    }
    x
}

/// Exact `t_mix(ε)` of the chain by evolving every start state.
///
/// The distance from a fixed start is nonincreasing in `t`, so `t_mix` is the
/// largest first-passage time over starts.
pub fn tv_curve_and_tmix(chain: &LumpedChain, eps: f64) -> Result<MixingCurve> {
    if !(eps > 0.0 && eps < 1.0) {
        return usage("epsilon must lie in (0, 1)");
    }
    let m = chain.len();
    let keep = m <= KEEP_VECTORS;
    let runs = (0..m)
        .map(|s| run_start(chain, s, eps, keep))
        .collect::<Result<Vec<_>>>()?;
    let t_mix = runs.iter().map(|r| r.t_x).max().unwrap_or(0);
    let mut curve: Vec<(u64, f64)> = (0..t_mix).map(|t| (t, 0.0)).collect();
    let mut worst_start = 0;
    for (s, r) in runs.iter().enumerate() {
        for (t, &d) in r.history.iter().enumerate().take(t_mix as usize) {
            if d > curve[t].1 {
                curve[t].1 = d;
                if t as u64 + 1 == t_mix {
                    worst_start = s;
                }
            }
        }
    }
    // Distance at t_mix itself needs every start, including those done earlier.
    let mut scratch = Vec::with_capacity(m);
    let mut at_tmix = 0.0f64;
    for (s, r) in runs.into_iter().enumerate() {
        let x = match r.last {
            Some(v) => continue_start(chain, v, t_mix - r.t_x),
            None => {
                let mut v = vec![0.0; m];
                v[s] = 1.0;
                continue_start(chain, v, t_mix)
            }
        };
        at_tmix = at_tmix.max(tv_to(&x, &chain.stationary, &mut scratch));
    }
    curve.push((t_mix, at_tmix));
    Ok(MixingCurve {
        curve,
        t_mix,
        worst_start,
    })
}
