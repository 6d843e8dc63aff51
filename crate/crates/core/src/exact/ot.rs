//! Exact Wasserstein distance between exchangeable measures.
//!
//! Under the Hamming metric the optimal coupling of two exchangeable laws
//! reduces to transport of their count vectors with cost `½‖n − n′‖₁`. That
//! cost is the shortest-path metric of the lattice graph whose edges are
//! single recolorings `n → n − e_k + e_ℓ`, so the transport problem is solved
//! as an uncapacitated transshipment on that graph (restricted to the bounding
//! box of both supports, which contains a shortest path for every pair) with
//! an integer network simplex.

use super::lumped::LumpedMeasure;
use crate::error::{usage, Error, Result};

/// Total integer mass each measure is rounded to.
pub const MASS_SCALE: i64 = 1 << 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtReport {
    /// Primal optimum, in Hamming units.
    pub distance: f64,
    /// Dual objective from the final potentials.
    pub dual: f64,
    pub duality_gap: f64,
    pub nodes: usize,
    pub arcs: usize,
    pub pivots: u64,
}

/// Rounds a probability vector to integers summing to `MASS_SCALE`
/// (largest remainder, ties to the lower index).
pub fn scale_masses(w: &[f64]) -> Vec<i64> {
    let s = MASS_SCALE as f64;
    let mut out: Vec<i64> = w.iter().map(|&x| (x * s).floor() as i64).collect();
    let mut rem: i64 = MASS_SCALE - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = w[a] * s - (w[a] * s).floor();
        let fb = w[b] * s - (w[b] * s).floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut i = 0;
    while rem > 0 {
        out[order[i % order.len()]] += 1;
        rem -= 1;
        i += 1;
    }
    while rem < 0 {
        let j = order[order.len() - 1 - (i % order.len())];
        if out[j] > 0 {
            out[j] -= 1;
            rem += 1;
        }
        i += 1;
    }
    out
}

/// `W₁(μ, ν)` under the Hamming ground metric for two measures on the same
/// state space.
pub fn exact_wasserstein_exchangeable(mu: &LumpedMeasure, nu: &LumpedMeasure) -> Result<OtReport> {
    let same = std::sync::Arc::ptr_eq(&mu.space, &nu.space)
        || (mu.space.len() == nu.space.len()
            && mu.space.q() == nu.space.q()
            && mu.space.iter().zip(nu.space.iter()).all(|(a, b)| a == b));
    if !same {
        return usage("measures live on different state spaces");
    }
    let space = &mu.space;
    let q = space.q();
    let a = scale_masses(&mu.weights);
    let b = scale_masses(&nu.weights);

    // Bounding box of both supports.
    let mut lo = vec![usize::MAX; q];
    let mut hi = vec![0usize; q];
    for (i, c) in space.iter().enumerate() {
        if a[i] != 0 || b[i] != 0 {
            for k in 0..q {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
    }
    let lattice = BoxLattice::new(space.n(), lo, hi);
    let mut supply = vec![0i64; lattice.len()];
    for (i, c) in space.iter().enumerate() {
        if a[i] != 0 || b[i] != 0 {
            let v = lattice.index(c).expect("support lies in its bounding box");
            supply[v] += a[i] - b[i];
        }
    }
    let mut arcs = Vec::with_capacity(lattice.len() * q * (q - 1));
    let mut t = vec![0usize; q];
    for v in 0..lattice.len() {
        let c = lattice.point(v);
        for k in 0..q {
            for l in 0..q {
                if k == l {
                    continue;
                }
                t.copy_from_slice(c);
                if t[k] == 0 {
                    continue;
                }
                t[k] -= 1;
                t[l] += 1;
                if let Some(w) = lattice.index(&t) {
                    arcs.push((v, w, 1i64));
                }
            }
        }
    }
    let n_arcs = arcs.len();
    let sol = NetworkSimplex::new(lattice.len(), &supply, arcs).solve()?;
    let scale = MASS_SCALE as f64;
    Ok(OtReport {
        distance: sol.primal as f64 / scale,
        dual: sol.dual as f64 / scale,
        duality_gap: (sol.primal - sol.dual) as f64 / scale,
        nodes: lattice.len(),
        arcs: n_arcs,
        pivots: sol.pivots,
    })
}

/// Lattice points with `Σ n = N` inside a coordinate box, with O(1) indexing
/// through a mixed-radix table.
struct BoxLattice {
    q: usize,
    lo: Vec<usize>,
    hi: Vec<usize>,
    stride: Vec<usize>,
    lookup: Vec<u32>,
    points: Vec<usize>,
}

impl BoxLattice {
    fn new(n: usize, lo: Vec<usize>, hi: Vec<usize>) -> Self {
        let q = lo.len();
        // The last coordinate is implied by the sum, so index on the first q − 1.
        let mut stride = vec![1usize; q];
        for k in 1..q {
            stride[k] = stride[k - 1] * (hi[k - 1] - lo[k - 1] + 1);
        }
        let table = stride[q - 1];
        let mut lookup = vec![u32::MAX; table];
        let mut points = Vec::new();
        let mut cur = vec![0usize; q];
        let mut count = 0u32;
        Self::fill(0, n, &lo, &hi, &mut cur, &mut |c| {
            let key: usize = (0..q - 1).map(|k| (c[k] - lo[k]) * stride[k]).sum();
            lookup[key] = count;
            points.extend_from_slice(c);
            count += 1;
        });
        Self {
            q,
            lo,
            hi,
            stride,
            lookup,
            points,
        }
    }

    fn fill(k: usize, rem: usize, lo: &[usize], hi: &[usize], cur: &mut [usize], emit: &mut impl FnMut(&[usize])) {
        let q = lo.len();
        if k == q - 1 {
            if rem >= lo[k] && rem <= hi[k] {
                cur[k] = rem;
                emit(cur);
            }
            return;
        }
        for v in lo[k]..=hi[k].min(rem) {
            cur[k] = v;
            Self::fill(k + 1, rem - v, lo, hi, cur, emit);
        }
    }

    fn len(&self) -> usize {
        self.points.len() / self.q
    }

    fn point(&self, v: usize) -> &[usize] {
        &self.points[v * self.q..(v + 1) * self.q]
    }

    fn index(&self, c: &[usize]) -> Option<usize> {
        let mut key = 0;
        for k in 0..self.q {
            if c[k] < self.lo[k] || c[k] > self.hi[k] {
                return None;
            }
            if k < self.q - 1 {
                key += (c[k] - self.lo[k]) * self.stride[k];
            }
        }
        match self.lookup[key] {
            u32::MAX => None,
            v => Some(v as usize),
        }
    }
}

struct FlowSolution {
    primal: i128,
    dual: i128,
    pivots: u64,
}

const UP: i8 = 1;
const DOWN: i8 = -1;
const NONE: usize = usize::MAX;

/// Primal network simplex for uncapacitated min-cost flow with an artificial
/// root, strongly feasible spanning trees and block-search pricing.
struct NetworkSimplex {
    n: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    cost: Vec<i64>,
    flow: Vec<i64>,
    in_tree: Vec<bool>,
    supply: Vec<i64>,
    pi: Vec<i64>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    dir: Vec<i8>,
    depth: Vec<usize>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
    n_real: usize,
}

impl NetworkSimplex {
    fn new(n: usize, supply: &[i64], arcs: Vec<(usize, usize, i64)>) -> Self {
        let n_real = arcs.len();
        let max_cost = arcs.iter().map(|a| a.2.abs()).max().unwrap_or(0);
        let art = (max_cost + 1) * (n as i64 + 1);
        let root = n;
        let total = n + 1;
        let mut src = Vec::with_capacity(n_real + n);
        let mut dst = Vec::with_capacity(n_real + n);
        let mut cost = Vec::with_capacity(n_real + n);
        for (u, v, c) in arcs {
            src.push(u);
            dst.push(v);
            cost.push(c);
        }
        let mut flow = vec![0i64; n_real];
        let mut in_tree = vec![false; n_real];
        let mut pi = vec![0i64; total];
        let mut parent = vec![NONE; total];
        let mut pred = vec![NONE; total];
        let mut dir = vec![0i8; total];
        let mut depth = vec![0usize; total];
        for v in 0..n {
            let e = src.len();
            if supply[v] >= 0 {
                src.push(v);
                dst.push(root);
                flow.push(supply[v]);
                pi[v] = -art;
                dir[v] = UP;
            } else {
                src.push(root);
                dst.push(v);
                flow.push(-supply[v]);
                pi[v] = art;
                dir[v] = DOWN;
            }
            cost.push(art);
            in_tree.push(true);
            parent[v] = root;
            pred[v] = e;
            depth[v] = 1;
        }
        let mut first_child = vec![NONE; total];
        let mut next_sib = vec![NONE; total];
        let mut prev_sib = vec![NONE; total];
        for v in 0..n {
            next_sib[v] = first_child[root];
            if first_child[root] != NONE {
                prev_sib[first_child[root]] = v;
            }
            first_child[root] = v;
        }
        let mut sup = supply.to_vec();
        sup.push(0);
        Self {
            n,
            src,
            dst,
            cost,
            flow,
            in_tree,
            supply: sup,
            pi,
            parent,
            pred,
            dir,
            depth,
            first_child,
            next_sib,
            prev_sib,
            n_real,
        }
    }

    #[inline]
    fn reduced(&self, e: usize) -> i64 {
        self.cost[e] + self.pi[self.src[e]] - self.pi[self.dst[e]]
    }

    fn remove_child(&mut self, p: usize, c: usize) {
        let (pr, nx) = (self.prev_sib[c], self.next_sib[c]);
        if pr == NONE {
            self.first_child[p] = nx;
        } else {
            self.next_sib[pr] = nx;
        }
        if nx != NONE {
            self.prev_sib[nx] = pr;
        }
        self.prev_sib[c] = NONE;
        self.next_sib[c] = NONE;
    }

    fn add_child(&mut self, p: usize, c: usize) {
        let f = self.first_child[p];
        self.next_sib[c] = f;
        self.prev_sib[c] = NONE;
        if f != NONE {
            self.prev_sib[f] = c;
        }
        self.first_child[p] = c;
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while self.depth[u] > self.depth[v] {
            u = self.parent[u];
        }
        while self.depth[v] > self.depth[u] {
            v = self.parent[v];
        }
        while u != v {
            u = self.parent[u];
            v = self.parent[v];
        }
        u
    }

    fn solve(mut self) -> Result<FlowSolution> {
        let m = self.src.len();
        let block = ((m as f64).sqrt() as usize).max(10);
        let mut next_arc = 0usize;
        let mut pivots = 0u64;
        loop {
            // Block search pricing.
            let mut best = NONE;
            let mut best_rc = 0i64;
            let mut scanned = 0usize;
            let mut in_block = 0usize;
            let mut e = next_arc;
            while scanned < m {
                if !self.in_tree[e] {
                    let rc = self.reduced(e);
                    if rc < best_rc {
                        best_rc = rc;
                        best = e;
                    }
                }
                scanned += 1;
                in_block += 1;
                e += 1;
                if e == m {
                    e = 0;
                }
                if in_block == block {
                    if best != NONE {
                        break;
                    }
                    in_block = 0;
                }
            }
            if best == NONE {
                break;
            }
            next_arc = e;
            self.pivot(best)?;
            pivots += 1;
        }
        for e in self.n_real..m {
            if self.flow[e] != 0 {
                return Err(Error::Internal("transport problem is infeasible".into()));
            }
        }
        let primal: i128 = (0..self.n_real)
            .map(|e| self.cost[e] as i128 * self.flow[e] as i128)
            .sum();
        let dual: i128 = (0..=self.n)
            .map(|v| -(self.supply[v] as i128) * self.pi[v] as i128)
            .sum();
        Ok(FlowSolution { primal, dual, pivots })
    }

    fn pivot(&mut self, in_arc: usize) -> Result<()> {
        let first = self.src[in_arc];
        let second = self.dst[in_arc];
        let join = self.find_join(first, second);

        // Leaving arc: strongly feasible tie-breaking.
        let mut delta = i64::MAX;
        let mut u_out = NONE;
        let mut side = 0;
        let mut u = first;
        while u != join {
            if self.dir[u] == UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    u_out = u;
                    side = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != join {
            if self.dir[u] == DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    u_out = u;
                    side = 2;
                }
            }
            u = self.parent[u];
        }
        if u_out == NONE {
            return Err(Error::Internal("unbounded transshipment".into()));
        }

        // Augment.
        self.flow[in_arc] += delta;
        u = first;
        while u != join {
            let e = self.pred[u];
            self.flow[e] -= self.dir[u] as i64 * delta;
            u = self.parent[u];
        }
        u = second;
        while u != join {
            let e = self.pred[u];
            self.flow[e] += self.dir[u] as i64 * delta;
            u = self.parent[u];
        }

        let (u_in, v_in) = if side == 1 { (first, second) } else { (second, first) };
        let out_arc = self.pred[u_out];
        self.in_tree[out_arc] = false;
        self.in_tree[in_arc] = true;

        // Reverse the path u_in → … → u_out and hang it under v_in.
        let mut path = vec![u_in];
        while *path.last().expect("nonempty") != u_out {
            let p = self.parent[*path.last().expect("nonempty")];
            path.push(p);
        }
        let old_pred: Vec<usize> = path.iter().map(|&w| self.pred[w]).collect();
        let old_dir: Vec<i8> = path.iter().map(|&w| self.dir[w]).collect();
        let out_parent = self.parent[u_out];
        self.remove_child(out_parent, u_out);
        for i in (1..path.len()).rev() {
            let (w, par) = (path[i - 1], path[i]);
            self.remove_child(par, w);
            self.parent[par] = w;
            self.pred[par] = old_pred[i - 1];
            self.dir[par] = -old_dir[i - 1];
            self.add_child(w, par);
        }
        self.parent[u_in] = v_in;
        self.pred[u_in] = in_arc;
        self.dir[u_in] = if u_in == self.src[in_arc] { UP } else { DOWN };
        self.add_child(v_in, u_in);

        // Potentials and depths of the moved subtree.
        let target_pi = if u_in == self.src[in_arc] {
            self.pi[v_in] - self.cost[in_arc]
        } else {
            self.pi[v_in] + self.cost[in_arc]
        };
        let shift = target_pi - self.pi[u_in];
        let mut stack = vec![u_in];
        self.depth[u_in] = self.depth[v_in] + 1;
        while let Some(w) = stack.pop() {
            self.pi[w] += shift;
            let mut c = self.first_child[w];
            while c != NONE {
                self.depth[c] = self.depth[w] + 1;
                stack.push(c);
                c = self.next_sib[c];
            }
        }
        Ok(())
    }
}
