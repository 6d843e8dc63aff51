//! Count-vector state spaces in colexicographic order.

use std::collections::HashMap;

use crate::dynamics::RestrictedRegion;
use crate::error::{usage, Error, Result};

/// Largest state space any exact routine will build.
pub const MAX_STATES: u128 = 10_000_000;

/// `C(N + q − 1, q − 1)`, saturating.
pub fn simplex_size(n: usize, q: usize) -> u128 {
    let k = (q - 1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = match acc.checked_mul(n as u128 + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Feasible count vectors, optionally filtered to a ball.
#[derive(Debug, Clone)]
pub struct StateSpace {
    n: usize,
    q: usize,
    flat: Vec<usize>,
    index: HashMap<Vec<usize>, usize>,
}

impl StateSpace {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn state(&self, i: usize) -> &[usize] {
        &self.flat[i * self.q..(i + 1) * self.q]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.flat.chunks_exact(self.q)
    }

    pub fn index_of(&self, counts: &[usize]) -> Option<usize> {
        self.index.get(counts).copied()
    }
}

fn guard(n: usize, q: usize) -> Result<()> {
    if q < 2 {
        return usage("q must be ≥ 2");
    }
    let m = simplex_size(n, q);
    if m > MAX_STATES {
        let shown = if m == u128::MAX {
            "more than 2^128".to_string()
        } else {
            m.to_string()
        };
        return Err(Error::Resource(format!(
            "state space for N = {n}, q = {q} has {shown} states (limit {MAX_STATES})"
        )));
    }
    Ok(())
}

/// All `n ∈ ℕ^q` with `Σ n = N`, colexicographic (last coordinate most
/// significant), optionally restricted to `region`.
pub fn enumerate_states(n: usize, q: usize, region: Option<&RestrictedRegion>) -> Result<StateSpace> {
    guard(n, q)?;
    if let Some(r) = region {
        if r.center().len() != q {
            return usage("region centre length differs from q");
        }
    }
    let mut flat = Vec::new();
    let mut cur = vec![0usize; q];
    fill(q - 1, n, &mut cur, &mut |c| {
        if region.is_none_or(|r| r.contains_counts(c)) {
            flat.extend_from_slice(c);
        }
    });
    let index = flat
        .chunks_exact(q)
        .enumerate()
        .map(|(i, c)| (c.to_vec(), i))
        .collect();
    Ok(StateSpace { n, q, flat, index })
}

fn fill(pos: usize, remaining: usize, cur: &mut [usize], emit: &mut impl FnMut(&[usize])) {
    if pos == 0 {
        cur[0] = remaining;
        emit(cur);
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v;
        fill(pos - 1, remaining - v, cur, emit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::macrostates::uniform;

    #[test]
    fn sizes() {
        assert_eq!(enumerate_states(30, 3, None).unwrap().len(), 496);
        assert_eq!(enumerate_states(2, 3, None).unwrap().len(), 6);
        assert_eq!(simplex_size(5000, 3), 12_507_501);
        assert!(matches!(enumerate_states(5000, 3, None), Err(Error::Resource(m)) if m.contains("12507501")));
    }

    #[test]
    fn colex_order() {
        let s = enumerate_states(2, 3, None).unwrap();
        let got: Vec<Vec<usize>> = s.iter().map(|c| c.to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![2, 0, 0], vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 1], vec![0, 1, 1], vec![0, 0, 2]]
        );
        for (i, c) in s.iter().enumerate() {
            assert_eq!(s.index_of(c), Some(i));
        }
    }

    #[test]
    fn restricted_matches_filter() {
        let region = RestrictedRegion::new(uniform(3), 0.05).unwrap();
        let full = enumerate_states(60, 3, None).unwrap();
        let ball = enumerate_states(60, 3, Some(&region)).unwrap();
        let expect: Vec<&[usize]> = full
            .iter()
            .filter(|c| {
                let d2: f64 = c.iter().map(|&v| (v as f64 / 60.0 - 1.0 / 3.0).powi(2)).sum();
                d2.sqrt() <= 0.05 + 1e-12
            })
            .collect();
        assert_eq!(ball.len(), expect.len());
        assert!(ball.iter().zip(expect).all(|(a, b)| a == b));
    }
}
