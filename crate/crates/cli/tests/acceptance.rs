//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::Rng;
use spinstein::bench::{
    band_ratio, bounded_degree_bound, clt_covariance_check, stein_lipschitz_check, wasserstein_scaling,
    LipschitzSpec,
};
use spinstein::coupling::{contracting_pair_step, coupling_tmix_upper, CoupledState, TmixOptions};
use spinstein::dynamics::{nearest_lattice_point, propose, ChainState, Model, RestrictedRegion};
use spinstein::exact::{
    brute_force_gibbs, conditional_multinomial, configuration_transition_matrix, enumerate_states,
    exact_wasserstein_exchangeable, lumped_gibbs, lumped_transition_matrix, solve_stein_poisson, stein_series,
    tv_curve_and_tmix,
};
use spinstein::macrostates::{
    beta_c, beta_s, jacobian_a, macrostate_set, ordered_point, s_star, select_macrostate, solve_s_largest,
    uniform, MacrostateAnalysis,
};
use spinstein::rng::{stream, Lane};
use spinstein::{softmax_gbeta, Configuration, Graph, ModelParams, ProbVector};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn ln_multinomial(counts: &[usize]) -> f64 {
    let lnf = |k: usize| (1..=k).map(|i| (i as f64).ln()).sum::<f64>();
    lnf(counts.iter().sum()) - counts.iter().map(|&c| lnf(c)).sum::<f64>()
}

fn sup_fixed_point_error(x: &ProbVector, beta: f64) -> f64 {
    let g = softmax_gbeta(x.as_slice(), beta);
    g.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn c1_fixed_points() -> Verdict {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for q in 3..=5 {
        for k in 0..=98 {
            let beta = 0.1 + 0.05 * k as f64;
            for x in macrostate_set(beta, q).unwrap() {
                worst = worst.max(sup_fixed_point_error(&x, beta));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict(worst < 1e-10 && secs < 5.0, format!("max ‖g(x) − x‖∞ = {worst:.2e}, {secs:.2} s"))
}

fn c2_critical_values() -> Verdict {
    let bc = beta_c(3).unwrap();
    let s = solve_s_largest(bc, 3);
    let check = ordered_point(s_star(bc, 3), 3, 0);
    let target = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
    let check_err = check.as_slice().iter().zip(target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let set = macrostate_set(bc, 3).unwrap();
    let mut ordered_ok = true;
    for q in 3..=8 {
        let (bs, bc) = (beta_s(q).unwrap(), beta_c(q).unwrap());
        ordered_ok &= 1.0 < bs && bs < bc && bc < q as f64 / 2.0;
    }
    verdict(
        (s - 0.5).abs() < 1e-10 && check_err < 1e-10 && set.len() == 4 && ordered_ok,
        format!("|s − 1/2| = {:.1e}, |š − (2/3,1/6,1/6)| = {check_err:.1e}, |set| = {}, ordering {ordered_ok}", (s - 0.5).abs(), set.len()),
    )
}

fn c3_jacobian() -> Verdict {
    let h = 1e-6;
    let (mut fd, mut ident, mut lam, mut order_ok) = (0.0f64, 0.0f64, 0.0f64, true);
    for q in 3..=5 {
        let bc = beta_c(q).unwrap();
        let mut points = vec![(uniform(q), 0.7), (uniform(q), 1.2)];
        for k in 0..=20 {
            let beta = bc + (5.0 - bc) * k as f64 / 20.0;
            points.push((ordered_point(s_star(beta, q), q, k % q), beta));
        }
        for (x, beta) in points {
            let a = jacobian_a(&x, beta, q).unwrap();
            for j in 0..q {
                // Tangent direction e_j − e_{j+1}.
                let mut d = vec![0.0; q];
                d[j] = 1.0;
                d[(j + 1) % q] = -1.0;
                let shift = |t: f64| {
                    let y: Vec<f64> = x.as_slice().iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    softmax_gbeta(&y, beta)
                };
                let (up, down) = (shift(h), shift(-h));
                for i in 0..q {
                    let numeric = (up.as_slice()[i] - down.as_slice()[i]) / (2.0 * h);
                    let analytic: f64 = (0..q).map(|k| a[(i, k)] * d[k]).sum();
                    fd = fd.max((numeric - analytic).abs());
                }
            }
            let m = MacrostateAnalysis::new(&x, beta, q).unwrap();
            if m.dominant_color.is_some() {
                ident = ident.max((m.a - m.a_prime - (q as f64 - 1.0) * m.b).abs());
                order_ok &= 0.0 < m.b && m.b < m.a_prime && m.a_prime < m.a && m.a == m.theta && m.theta < m.lambda && m.lambda < 1.0;
            }
            let sym = (&a + a.transpose()) / 2.0;
            let numeric = sym.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max);
            lam = lam.max((m.lambda - numeric).abs());
        }
    }
    verdict(
        fd < 1e-6 && ident < 1e-12 && lam < 1e-10 && order_ok,
        format!("fd {fd:.1e}, a − a′ − (q−1)b {ident:.1e}, λ {lam:.1e}, ordering {order_ok}"),
    )
}

fn c4_exact_dynamics() -> Verdict {
    let mut rng = stream(4, 0, Lane::Aux);
    let graphs = vec![
        Graph::cycle(6),
        Graph::path(5),
        Graph::complete(5),
        Graph::erdos_renyi(6, 0.5, &mut rng),
        Graph::from_edges(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap(),
    ];
    let mut balance = 0.0f64;
    for (k, g) in graphs.iter().enumerate() {
        let q = 3 + k % 2;
        let p = ModelParams::new(q, 0.9 + 0.3 * k as f64, g.n_vertices()).unwrap();
        let mu = brute_force_gibbs(g, &p).unwrap();
        // Independent Gibbs weights from the edge count.
        let m = mu.probs.len();
        let mut w: Vec<f64> = (0..m)
            .map(|i| {
                let mut idx = i;
                let colors: Vec<usize> = (0..g.n_vertices())
                    .map(|_| {
                        let c = idx % q;
                        idx /= q;
                        c
                    })
                    .collect();
                let mono = g.edges().filter(|&(u, v)| colors[u] == colors[v]).count();
                (2.0 * p.beta * mono as f64 / g.n_vertices() as f64).exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= z);
        let weight_err = w.iter().zip(&mu.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let t = configuration_transition_matrix(g, &p).unwrap();
        for i in 0..m {
            for j in 0..m {
                balance = balance.max((w[i] * t[(i, j)] - w[j] * t[(j, i)]).abs()).max(weight_err);
            }
        }
    }

    // Lumped rows against simulated CWP steps.
    let (n, q, beta, samples) = (10usize, 3usize, 1.3, 1_000_000u32);
    let chain = lumped_transition_matrix(n, q, beta, None).unwrap();
    let p = ModelParams::new(q, beta, n).unwrap();
    let mut worst_z = 0.0f64;
    for (row, counts) in [[10, 0, 0], [4, 3, 3], [6, 2, 2], [1, 5, 4], [0, 7, 3]].iter().enumerate() {
        let state = ChainState::new(Configuration::from_counts(counts), q);
        let i = chain.space.index_of(counts).unwrap();
        let mut hits = vec![0u32; chain.len()];
        let mut rng = stream(40, row as u64, Lane::Main);
        for _ in 0..samples {
            let prop = propose(Model::Cwp, &state, &p, &mut rng);
            let mut next = counts.to_vec();
            next[prop.from as usize] -= 1;
            next[prop.to as usize] += 1;
            hits[chain.space.index_of(&next).unwrap()] += 1;
        }
        for (j, &h) in hits.iter().enumerate() {
            let pij = chain.transition.get(i, j);
            let freq = h as f64 / samples as f64;
            if pij == 0.0 {
                worst_z = worst_z.max(if h > 0 { f64::INFINITY } else { 0.0 });
                continue;
            }
            let sigma = (pij * (1.0 - pij) / samples as f64).sqrt();
            worst_z = worst_z.max((freq - pij).abs() / sigma.max(1e-300));
        }
    }
    verdict(
        balance < 1e-12 && worst_z < 3.0,
        format!("detailed balance {balance:.1e}, worst row deviation {worst_z:.2}σ"),
    )
}

fn c5_restricted_stationary() -> Verdict {
    let t0 = Instant::now();
    let (n, q, beta) = (30, 3, 1.6);
    let x = select_macrostate("ordered:1", beta, q).unwrap();
    let region = RestrictedRegion::new(x, 0.05).unwrap();
    let chain = lumped_transition_matrix(n, q, beta, Some(&region)).unwrap();
    let w: Vec<f64> = chain
        .space
        .iter()
        .map(|c| {
            let mono: f64 = c.iter().map(|&k| (k * k.saturating_sub(1) / 2) as f64).sum();
            ln_multinomial(c) + 2.0 * beta * mono / n as f64
        })
        .collect();
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = w.iter().map(|v| (v - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let tv = 0.5 * w.iter().zip(&chain.stationary).map(|(a, b)| (a / z - b).abs()).sum::<f64>();
    let secs = t0.elapsed().as_secs_f64();
    verdict(tv < 1e-8 && secs < 10.0, format!("{} states, TV = {tv:.1e}, {secs:.2} s", chain.len()))
}

fn c6_restricted_tmix() -> Verdict {
    let t0 = Instant::now();
    let x = select_macrostate("ordered:1", 1.6, 3).unwrap();
    let region = RestrictedRegion::new(x, 0.05).unwrap();
    let mut ratios = vec![];
    let mut detail = String::new();
    for n in [30usize, 60, 120, 240] {
        let chain = lumped_transition_matrix(n, 3, 1.6, Some(&region)).unwrap();
        let t = tv_curve_and_tmix(&chain, 0.25).unwrap().t_mix;
        let r = t as f64 / (n as f64 * (n as f64).ln());
        detail += &format!("N={n}: t_mix={t} ({r:.3}); ");
        ratios.push(r);
    }
    let band = band_ratio(&ratios);
    let secs = t0.elapsed().as_secs_f64();
    verdict(band < 2.0 && secs < 600.0, format!("{detail}band {band:.2}, {secs:.1} s"))
}

fn c7_contraction() -> Verdict {
    let (n, q, beta, r) = (500usize, 3usize, 1.6, 0.05);
    let x = select_macrostate("ordered:1", beta, q).unwrap();
    let theta = MacrostateAnalysis::new(&x, beta, q).unwrap().theta;
    let region = RestrictedRegion::new(x.clone(), r).unwrap();
    let inner = region.scaled(0.2);
    let b_ball = region.scaled(0.8);
    let start = nearest_lattice_point(&x, n);
    assert!(inner.contains_counts(&start));
    let w = Configuration::from_counts(&start);
    let mut z = w.clone();
    // Swap 25 vertices of colour 1 with 25 of colour 2.
    let ones: Vec<usize> = (0..n).filter(|&v| w.get(v) == 0).take(25).collect();
    let twos: Vec<usize> = (0..n).filter(|&v| w.get(v) == 1).take(25).collect();
    for (&a, &b) in ones.iter().zip(&twos) {
        z.set(a, 1);
        z.set(b, 0);
    }
    let p = ModelParams::new(q, beta, n).unwrap();
    let horizon = 5 * n;
    let mut sum = vec![0.0f64; horizon + 1];
    let mut alive = vec![0u32; horizon + 1];
    let mut violations = 0;
    for seed in 0..500u64 {
        let mut cs = CoupledState::new(w.clone(), z.clone(), q).unwrap();
        let mut rng = stream(seed, 0, Lane::Main);
        for t in 0..=horizon {
            if t > 0 {
                contracting_pair_step(&mut cs, Some(&region), &p, &mut rng).unwrap();
            }
            if !(b_ball.contains_counts(cs.w.counts()) && b_ball.contains_counts(cs.z.counts())) {
                violations += 1;
                break;
            }
            sum[t] += cs.hamming_dist() as f64;
            alive[t] += 1;
        }
    }
    let rate = 1.0 - (1.0 - theta) / (2.0 * n as f64);
    let mut worst = 0.0f64;
    for t in 0..=horizon {
        let mean = sum[t] / alive[t] as f64;
        worst = worst.max(mean / (50.0 * rate.powi(t as i32)));
    }
    verdict(
        worst <= 1.1,
        format!("θ = {theta:.4}, max mean/envelope = {worst:.3}, event-B exits {violations}"),
    )
}

fn c8_coupling_vs_exact() -> Verdict {
    let n = 60;
    let opts = TmixOptions { replicas: 400, ..TmixOptions::default() };
    let mut pass = true;
    let mut detail = String::new();
    let x = select_macrostate("ordered:1", 1.6, 3).unwrap();
    let region = RestrictedRegion::new(x, 0.05).unwrap();
    for (label, beta, reg) in [("β=0", 0.0, None), ("β=1.6 restricted", 1.6, Some(&region))] {
        let exact = tv_curve_and_tmix(&lumped_transition_matrix(n, 3, beta, reg).unwrap(), 0.25).unwrap().t_mix;
        let p = ModelParams::new(3, beta, n).unwrap();
        let est = coupling_tmix_upper(reg, &p, 8, &opts).unwrap();
        let ratio = est.t.map_or(f64::INFINITY, |t| (t as f64 / exact as f64).max(exact as f64 / t as f64));
        pass &= ratio <= 3.0;
        detail += &format!("{label}: coupling {:?} vs exact {exact} (×{ratio:.1}); ", est.t);
    }
    verdict(pass, detail.trim_end_matches("; "))
}

/// Full configuration-space transport LP with Hamming cost.
fn configuration_lp(n: usize, q: usize, mu: &[f64], nu: &[f64]) -> f64 {
    let m = q.pow(n as u32);
    let colors = |mut i: usize| -> Vec<usize> {
        (0..n)
            .map(|_| {
                let c = i % q;
                i /= q;
                c
            })
            .collect()
    };
    let configs: Vec<Vec<usize>> = (0..m).map(colors).collect();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let mut vars = Vec::with_capacity(m * m);
    for a in &configs {
        for b in &configs {
            let d = a.iter().zip(b).filter(|(x, y)| x != y).count();
            vars.push(lp.add_var(d as f64, (0.0, f64::INFINITY)));
        }
    }
    for i in 0..m {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        lp.add_constraint(&row, ComparisonOp::Eq, mu[i]);
    }
    for j in 0..m {
        let col: Vec<_> = (0..m).map(|i| (vars[i * m + j], 1.0)).collect();
        lp.add_constraint(&col, ComparisonOp::Eq, nu[j]);
    }
    lp.solve().unwrap().objective()
}

fn c9_wasserstein() -> Verdict {
    let hi = wasserstein_scaling(3, 1.0, &uniform(3), None, &[40, 80, 160, 320]).unwrap();
    let hi_band = band_ratio(&hi.iter().map(|r| r.ratio).collect::<Vec<_>>());
    let x = select_macrostate("ordered:1", 1.6, 3).unwrap();
    let lo = wasserstein_scaling(3, 1.6, &x, Some(0.05), &[40, 80, 160]).unwrap();
    let lo_band = band_ratio(&lo.iter().map(|r| r.ratio).collect::<Vec<_>>());

    // Exchangeable reduction against the full 81-configuration problem.
    let (n, q) = (4usize, 3usize);
    let mut lp_err = 0.0f64;
    let space = Arc::new(enumerate_states(n, q, None).unwrap());
    for (beta, xv) in [(1.0, uniform(q)), (1.6, ProbVector::new(vec![0.6, 0.3, 0.1]).unwrap())] {
        let gibbs = lumped_gibbs(n, q, beta, None).unwrap();
        let prod = conditional_multinomial(n, q, &xv, None).unwrap();
        let lumped = exact_wasserstein_exchangeable(&gibbs, &prod).unwrap().distance;
        let spread = |lm: &spinstein::exact::LumpedMeasure| -> Vec<f64> {
            (0..q.pow(n as u32))
                .map(|mut i| {
                    let mut counts = vec![0usize; q];
                    for _ in 0..n {
                        counts[i % q] += 1;
                        i /= q;
                    }
                    let k = space.index_of(&counts).unwrap();
                    lm.weights[k] / ln_multinomial(&counts).exp()
                })
                .collect()
        };
        lp_err = lp_err.max((configuration_lp(n, q, &spread(&gibbs), &spread(&prod)) - lumped).abs());
    }
    let fmt = |rows: &[spinstein::bench::WassersteinRow]| {
        rows.iter().map(|r| format!("{:.4}", r.ratio)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        hi_band < 1.5 && lo_band < 1.5 && lp_err < 1e-9,
        format!(
            "β=1.0 d/√N [{}] band {hi_band:.2}; β=1.6 conditioned [{}] band {lo_band:.2}; N=4 LP gap {lp_err:.1e}",
            fmt(&hi),
            fmt(&lo)
        ),
    )
}

fn c10_bound_arithmetic() -> Verdict {
    let n = 100;
    let lip = LipschitzSpec::uniform("unit", n, 1.0).unwrap();
    let bound = |g: &Graph, beta: f64| bounded_degree_bound(g, &ModelParams::new(3, beta, g.n_vertices()).unwrap(), &lip);
    let c = bound(&Graph::cycle(n), 0.5).unwrap();
    let zero = bound(&Graph::cycle(n), 0.0).unwrap().bound_value;
    let mut rng = stream(10, 0, Lane::Aux);
    let mut refined_ok = true;
    for _ in 0..50 {
        let g = Graph::erdos_renyi(n, rng.random_range(0.005..0.05), &mut rng);
        let beta = rng.random_range(0.0..0.9);
        match bound(&g, beta) {
            Ok(r) => refined_ok &= r.refined_value <= r.bound_value + 1e-15,
            Err(_) => refined_ok = false,
        }
    }
    verdict(
        (c.bound_value - 1.01010).abs() < 1e-4 && zero == 0.0 && refined_ok,
        format!("C₁₀₀ bound {:.6}, β=0 bound {zero}, refined ≤ coarse on 50 graphs: {refined_ok}", c.bound_value),
    )
}

fn c11_stein() -> Verdict {
    let (n, q, beta) = (30usize, 3usize, 0.8);
    let chain = lumped_transition_matrix(n, q, beta, None).unwrap();
    let h: Vec<f64> = chain.space.iter().map(|c| c[0] as f64).collect();
    let sol = solve_stein_poisson(&chain, &h).unwrap();
    let t_mix = tv_curve_and_tmix(&chain, 0.25).unwrap().t_mix;
    let series = stein_series(&chain, &h, 10 * t_mix);
    let series_err = sol.f.iter().zip(&series).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let lip = stein_lipschitz_check(40, 3, 0.5, 0).unwrap();
    let lip_ok = lip.lipschitz_f <= 1.05 * lip.bound;
    verdict(
        sol.residual < 1e-9 && series_err < 1e-6 && lip_ok && lip.residual < 1e-9,
        format!(
            "residual {:.1e}, series ({} terms) {series_err:.1e}, ‖f‖_Lip {:.4} vs bound {:.4} (κ {:.6})",
            sol.residual,
            10 * t_mix,
            lip.lipschitz_f,
            lip.bound,
            lip.kappa
        ),
    )
}

fn c12_clt() -> Verdict {
    let r = clt_covariance_check(400, 3, 1.0).unwrap();
    let product_err = (r.product_diag() - 2.0 / 9.0).abs().max((r.product_offdiag() + 1.0 / 9.0).abs());
    let diag_err = (r.gibbs_diag() - 2.0 / 3.0).abs();
    let off_err = (r.gibbs_offdiag() + 1.0 / 7.0).abs();
    verdict(
        product_err < 1e-12 && diag_err < 0.05 && off_err < 0.05,
        format!(
            "multinomial err {product_err:.1e}; Gibbs diag {:.4} vs 2/3; off-diag {:.4} vs target −1/7 (zero-row-sum value {:.4})",
            r.gibbs_diag(),
            r.gibbs_offdiag(),
            r.row_sum_offdiag_x
        ),
    )
}

fn c13_determinism() -> Verdict {
    let dir = std::env::temp_dir().join(format!("spinstein-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let runs: [&[&str]; 3] = [
        &["simulate", "--n", "300", "--beta", "1.6", "--steps", "50000", "--seed", "3", "--restrict", "ordered:1:0.05"],
        &["couple", "--n", "80", "--beta", "1.6", "--replicas", "16", "--seed", "3"],
        &["bench", "tnorm", "--beta", "0.4", "--topology", "er:0.1", "--n", "60", "--samples", "500", "--seed", "3"],
    ];
    let mut ok = true;
    let mut detail = vec![];
    for (k, args) in runs.iter().enumerate() {
        let out = dir.join(format!("run{k}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_spinstein"))
            .args(*args)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        let replay = Command::new(env!("CARGO_BIN_EXE_spinstein"))
            .arg("replay")
            .arg(dir.join(format!("run{k}.csv.manifest.json")))
            .output()
            .unwrap();
        let same = status.success() && replay.status.success() && String::from_utf8_lossy(&replay.stdout).starts_with("identical");
        ok &= same;
        detail.push(format!("{}: {}", args[0], if same { "identical" } else { "differs" }));
    }
    let _ = std::fs::remove_dir_all(&dir);
    verdict(ok, detail.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("mean-field fixed points", c1_fixed_points),
        ("critical values", c2_critical_values),
        ("Jacobian structure", c3_jacobian),
        ("exact dynamics", c4_exact_dynamics),
        ("restricted stationary law", c5_restricted_stationary),
        ("restricted t_mix scaling", c6_restricted_tmix),
        ("coupling contraction", c7_contraction),
        ("coupling vs exact t_mix", c8_coupling_vs_exact),
        ("Wasserstein √N scaling", c9_wasserstein),
        ("bounded-degree bound", c10_bound_arithmetic),
        ("Stein equation", c11_stein),
        ("CLT covariances", c12_clt),
        ("determinism", c13_determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let v = run();
        failed += usize::from(!v.pass);
        println!(
            "criterion {:>2} {name}: {} ({}) [{:.1} s]",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
