use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use spinstein::bench::{
    band_ratio, bounded_degree_bound, clt_covariance_check, mean_t_norm, theta_star_trend, wasserstein_scaling,
    LipschitzSpec,
};
use spinstein::coupling::{adversarial_start_pairs, pair_configurations, two_phase_coalescence, CouplingOptions};
use spinstein::dynamics::{nearest_lattice_point, run_trajectory, ChainState, Model, RestrictedRegion, TrajectoryOptions};
use spinstein::exact::lumped::LumpedChain;
use spinstein::exact::stein::max_neighbor_difference;
use spinstein::exact::{
    conditional_multinomial, exact_wasserstein_exchangeable, lumped_gibbs, lumped_transition_matrix,
    solve_stein_poisson, tv_curve_and_tmix,
};
use spinstein::macrostates::{critical_temps, macrostate_set, select_macrostate, MacrostateAnalysis};
use spinstein::rng::{stream, Lane};
use spinstein::{Configuration, Graph, ModelParams, ProbVector};

use crate::args::*;
use crate::output::{svg_line_plot, Artifacts, Cell, Table};
use crate::{io_error, usage_error};

pub const OUTPUT_DIR_ENV: &str = "SPINSTEIN_OUTPUT_DIR";

pub fn run(cmd: &Command) -> Result<Artifacts> {
    match cmd {
        Command::Macrostates(a) => macrostates(a),
        Command::Simulate(a) => simulate(a),
        Command::Couple(a) => couple(a),
        Command::Exact(e) => exact(e),
        Command::Bench(b) => bench(b),
        Command::Replay(_) => unreachable!("replay is handled by the caller"),
    }
}

fn check_model(q: usize, beta: f64) -> Result<()> {
    if q < 3 {
        return Err(usage_error("--q: q must be ≥ 3"));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(usage_error("--beta: β must be finite and ≥ 0"));
    }
    Ok(())
}

fn params(q: usize, beta: f64, n: usize) -> Result<ModelParams> {
    check_model(q, beta)?;
    if n == 0 {
        return Err(usage_error("--n: N must be ≥ 1"));
    }
    Ok(ModelParams::new(q, beta, n)?)
}

fn check_radius(r: f64, flag: &str) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(usage_error(format!("{flag}: r must satisfy 0 < r < 1")));
    }
    Ok(())
}

fn macrostate(spec: &str, beta: f64, q: usize, flag: &str) -> Result<ProbVector> {
    select_macrostate(spec, beta, q).with_context(|| format!("{flag} {spec}"))
}

/// Parses `X:R` into the ball of radius `R` around the macrostate `X`.
fn restriction(spec: &str, beta: f64, q: usize) -> Result<RestrictedRegion> {
    let (x, r) = spec
        .rsplit_once(':')
        .ok_or_else(|| usage_error(format!("--restrict: expected X:R, got {spec}")))?;
    let r: f64 = r
        .parse()
        .map_err(|_| usage_error(format!("--restrict: bad radius {r}")))?;
    check_radius(r, "--restrict")?;
    Ok(RestrictedRegion::new(macrostate(x, beta, q, "--restrict")?, r)?)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(format!("{}: {e}", path.display())))
}

fn build_graph(g: &GraphArgs) -> Result<Graph> {
    if let Some(path) = &g.graph {
        let graph = Graph::parse(&read_text(path)?).with_context(|| format!("--graph {}", path.display()))?;
        if g.n.is_some_and(|n| n != graph.n_vertices()) {
            return Err(usage_error("--n disagrees with the graph file"));
        }
        return Ok(graph);
    }
    let n = g.n.ok_or_else(|| usage_error("--n is required without --graph"))?;
    let mut rng = stream(g.seed, 0, Lane::Aux);
    let topo = g.topology.as_str();
    let parsed = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| usage_error(format!("--topology: bad parameter in {topo}")))
    };
    Ok(match topo.split_once(':') {
        None => match topo {
            "complete" => Graph::complete(n),
            "cycle" => Graph::cycle(n),
            "path" => Graph::path(n),
            "empty" => Graph::empty(n),
            _ => return Err(usage_error(format!("--topology: unknown topology {topo}"))),
        },
        Some(("er", p)) => Graph::erdos_renyi(n, parsed(p)?, &mut rng),
        Some(("regular", d)) => Graph::random_regular(n, parsed(d)? as usize, &mut rng)?,
        Some(_) => return Err(usage_error(format!("--topology: unknown topology {topo}"))),
    })
}

fn output_path(out: &Output, name: &str) -> Option<PathBuf> {
    out.out.clone().or_else(|| {
        std::env::var_os(OUTPUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{}.csv", name.replace(' ', "-"))))
    })
}

fn emit(art: &mut Artifacts, out: &Output, name: &str, table: &Table) {
    let csv = table.to_csv();
    match output_path(out, name) {
        Some(p) => art.files.push((p, csv.into_bytes())),
        None => art.table = Some(csv),
    }
}

fn count_header(prefix: &str, q: usize) -> Vec<String> {
    (1..=q).map(|k| format!("{prefix}_{k}")).collect()
}

fn counts_cells(c: &[usize]) -> Vec<Cell> {
    c.iter().map(|&v| Cell::from(v)).collect()
}

#[derive(Serialize)]
struct MacrostateJson {
    q: usize,
    beta: f64,
    beta_c: f64,
    beta_s: f64,
    macrostates: Vec<MacrostateRow>,
}

#[derive(Serialize)]
struct MacrostateRow {
    x: Vec<f64>,
    a: f64,
    a_prime: f64,
    b: f64,
    theta: f64,
    lambda: f64,
    condition_holds: bool,
}

fn macrostates(a: &MacrostatesArgs) -> Result<Artifacts> {
    let (q, beta) = (a.model.q, a.model.beta);
    check_model(q, beta)?;
    let temps = critical_temps(q)?;
    let mut rows = Vec::new();
    for x in macrostate_set(beta, q)? {
        let an = MacrostateAnalysis::new(&x, beta, q)?;
        rows.push(MacrostateRow {
            x: x.as_slice().to_vec(),
            a: an.a,
            a_prime: an.a_prime,
            b: an.b,
            theta: an.theta,
            lambda: an.lambda,
            condition_holds: an.condition_holds(),
        });
    }
    let mut header = vec!["index".to_string()];
    header.extend(count_header("x", q));
    header.extend(["a", "a_prime", "b", "theta", "lambda", "condition_holds", "beta_c", "beta_s"].map(String::from));
    let mut table = Table::new(header);
    for (i, r) in rows.iter().enumerate() {
        let mut row: Vec<Cell> = vec![(i + 1).into()];
        row.extend(r.x.iter().map(|&v| Cell::from(v)));
        row.extend([r.a, r.a_prime, r.b, r.theta, r.lambda].map(Cell::from));
        row.push(r.condition_holds.into());
        row.push(temps.beta_c.into());
        row.push(temps.beta_s.into());
        table.push(row);
    }
    let mut art = Artifacts::default();
    emit(&mut art, &a.output, "macrostates", &table);
    if a.json {
        let json = MacrostateJson {
            q,
            beta,
            beta_c: temps.beta_c,
            beta_s: temps.beta_s,
            macrostates: rows,
        };
        let text = serde_json::to_string_pretty(&json)? + "\n";
        if art.table.is_some() {
            art.table = Some(text);
        } else {
            art.notes.push(text);
        }
    }
    Ok(art)
}

fn initial_state(a: &SimulateArgs, n: usize, region: Option<&RestrictedRegion>) -> Result<Configuration> {
    let q = a.params.q;
    if let Some(path) = &a.init {
        let c = Configuration::parse(&read_text(path)?, q).with_context(|| format!("--init {}", path.display()))?;
        if c.len() != n {
            return Err(usage_error("--init: configuration length differs from N"));
        }
        return Ok(c);
    }
    if let Some(r) = region {
        let counts = nearest_lattice_point(r.center(), n);
        if !r.contains_counts(&counts) {
            return Err(usage_error("--restrict: no lattice point near the centre lies in the ball; pass --init"));
        }
        return Ok(Configuration::from_counts(&counts));
    }
    let mut rng = stream(a.graph.seed, 0, Lane::Aux);
    Ok(Configuration::random(n, q, &mut rng))
}

fn simulate(a: &SimulateArgs) -> Result<Artifacts> {
    check_model(a.params.q, a.params.beta)?;
    let graph = match a.model {
        ModelKind::Graph => Some(build_graph(&a.graph)?),
        ModelKind::Cwp => None,
    };
    let n = match (&graph, a.graph.n) {
        (Some(g), _) => g.n_vertices(),
        (None, Some(n)) => n,
        (None, None) => return Err(usage_error("--n is required")),
    };
    let p = params(a.params.q, a.params.beta, n)?;
    let region = a.restrict.as_deref().map(|s| restriction(s, p.beta, p.q)).transpose()?;
    let init = initial_state(a, n, region.as_ref())?;
    let model = match &graph {
        Some(g) => Model::Graph(g),
        None => Model::Cwp,
    };
    let opts = TrajectoryOptions {
        stopping_ball: None,
        record_stride: Some(a.stride),
    };
    let mut rng = stream(a.graph.seed, 0, Lane::Main);
    let traj = run_trajectory(model, ChainState::new(init, p.q), a.steps, region.as_ref(), &opts, &p, &mut rng)?;

    let mut header = vec!["step".to_string()];
    header.extend(count_header("counts", p.q));
    header.extend(["rejected_cum", "tau_out", "tau_in"].map(String::from));
    let mut table = Table::new(header);
    for pt in &traj.path {
        let mut row: Vec<Cell> = vec![pt.step.into()];
        row.extend(counts_cells(&pt.counts));
        row.push(pt.rejected_cum.into());
        row.push(traj.stopping.tau_out.into());
        row.push(traj.stopping.tau_in.into());
        table.push(row);
    }
    let mut art = Artifacts::default();
    emit(&mut art, &a.output, "simulate", &table);
    art.notes.push(format!(
        "final counts {:?}, {} rejections",
        traj.final_state.counts(),
        traj.rejections
    ));
    Ok(art)
}

fn couple(a: &CoupleArgs) -> Result<Artifacts> {
    let p = params(a.model.q, a.model.beta, a.n)?;
    check_radius(a.r, "--r")?;
    if a.replicas == 0 {
        return Err(usage_error("--replicas: must be ≥ 1"));
    }
    let region = RestrictedRegion::new(macrostate(&a.x, p.beta, p.q, "--x")?, a.r)?;
    let mut rng = stream(a.seed, u64::MAX / 4, Lane::Aux);
    let pairs = adversarial_start_pairs(a.n, p.q, Some(&region), 0, &mut rng)?;
    let (ca, cb) = pairs
        .iter()
        .max_by_key(|(x, y)| x.iter().zip(y).map(|(u, v)| u.abs_diff(*v)).sum::<usize>())
        .expect("at least one pair");
    let (sigma, tau) = pair_configurations(ca, cb);
    let opts = CouplingOptions {
        max_steps: a.max_steps,
        gamma: a.gamma,
        record: false,
    };
    let traces = (0..a.replicas as u64)
        .into_par_iter()
        .map(|rep| two_phase_coalescence(&sigma, &tau, Some(&region), &p, a.seed, rep, &opts))
        .collect::<spinstein::Result<Vec<_>>>()?;
    let mut table = Table::new(["replica", "tau_couple", "phase1_len", "max_hamming", "event_B_violated_at"]);
    for (rep, t) in traces.iter().enumerate() {
        table.push(vec![
            rep.into(),
            t.tau_couple.into(),
            t.phase1_len.into(),
            t.max_hamming.into(),
            t.event_b_violated_at.into(),
        ]);
    }
    let mut art = Artifacts::default();
    emit(&mut art, &a.output, "couple", &table);
    let met = traces.iter().filter(|t| t.tau_couple.is_some()).count();
    art.notes.push(format!("start counts {ca:?} vs {cb:?}; {met}/{} pairs coalesced", a.replicas));
    Ok(art)
}

fn exact_chain(c: &ExactCommon) -> Result<(ModelParams, Option<RestrictedRegion>, LumpedChain)> {
    let p = params(c.model.q, c.model.beta, c.n)?;
    let region = c.restrict.as_deref().map(|s| restriction(s, p.beta, p.q)).transpose()?;
    let chain = lumped_transition_matrix(c.n, p.q, p.beta, region.as_ref())?;
    Ok((p, region, chain))
}

fn export_matrix(art: &mut Artifacts, c: &ExactCommon, chain: &LumpedChain) {
    if let Some(path) = &c.matrix {
        art.files.push((path.clone(), chain.transition.to_coordinate_text().into_bytes()));
    }
}

fn exact(e: &ExactCommand) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match e {
        ExactCommand::Tmix { common, epsilon } => {
            if !(*epsilon > 0.0 && *epsilon < 0.5) {
                return Err(usage_error("--epsilon: ε must satisfy 0 < ε < 0.5"));
            }
            let (_, _, chain) = exact_chain(common)?;
            let mc = tv_curve_and_tmix(&chain, *epsilon)?;
            let mut table = Table::new(["t", "tv"]);
            for &(t, d) in &mc.curve {
                table.push(vec![t.into(), d.into()]);
            }
            emit(&mut art, &common.output, "exact tmix", &table);
            export_matrix(&mut art, common, &chain);
            art.notes.push(format!(
                "t_mix({epsilon}) = {} over {} states, worst start {:?}",
                mc.t_mix,
                chain.len(),
                chain.space.state(mc.worst_start)
            ));
        }
        ExactCommand::Stationary { common } => {
            let (p, region, chain) = exact_chain(common)?;
            let gibbs = lumped_gibbs(common.n, p.q, p.beta, region.as_ref())?;
            let mut header = count_header("counts", p.q);
            header.extend(["stationary", "gibbs"].map(String::from));
            let mut table = Table::new(header);
            for (i, c) in chain.space.iter().enumerate() {
                let mut row = counts_cells(c);
                row.push(chain.stationary[i].into());
                row.push(gibbs.weights[i].into());
                table.push(row);
            }
            emit(&mut art, &common.output, "exact stationary", &table);
            export_matrix(&mut art, common, &chain);
            art.notes.push(format!(
                "stationarity residual {:e}, TV to Gibbs {:e}",
                chain.stationary_residual,
                chain.stationary_measure().tv(&gibbs)
            ));
        }
        ExactCommand::Wasserstein { common, x } => {
            let p = params(common.model.q, common.model.beta, common.n)?;
            let region = common.restrict.as_deref().map(|s| restriction(s, p.beta, p.q)).transpose()?;
            let x = match &region {
                Some(r) => r.center().clone(),
                None => macrostate(x, p.beta, p.q, "--x")?,
            };
            let gibbs = lumped_gibbs(common.n, p.q, p.beta, region.as_ref())?;
            let product = conditional_multinomial(common.n, p.q, &x, region.as_ref())?;
            let r = exact_wasserstein_exchangeable(&gibbs, &product)?;
            let mut table = Table::new(["n", "states", "distance", "dual", "duality_gap", "nodes", "arcs"]);
            table.push(vec![
                common.n.into(),
                gibbs.space.len().into(),
                r.distance.into(),
                r.dual.into(),
                r.duality_gap.into(),
                r.nodes.into(),
                r.arcs.into(),
            ]);
            emit(&mut art, &common.output, "exact wasserstein", &table);
        }
        ExactCommand::Stein { common, color } => {
            let (p, _, chain) = exact_chain(common)?;
            if *color == 0 || *color > p.q {
                return Err(usage_error("--color: must be in 1..=q"));
            }
            let h: Vec<f64> = chain.space.iter().map(|c| c[color - 1] as f64).collect();
            let sol = solve_stein_poisson(&chain, &h)?;
            let mut header = count_header("counts", p.q);
            header.extend(["h", "f"].map(String::from));
            let mut table = Table::new(header);
            for (i, c) in chain.space.iter().enumerate() {
                let mut row = counts_cells(c);
                row.push(h[i].into());
                row.push(sol.f[i].into());
                table.push(row);
            }
            emit(&mut art, &common.output, "exact stein", &table);
            export_matrix(&mut art, common, &chain);
            art.notes.push(format!(
                "residual {:e}, E h = {}, max neighbour difference of f = {}",
                sol.residual,
                sol.mean_h,
                max_neighbor_difference(&chain, &sol.f)
            ));
        }
    }
    Ok(art)
}

fn bench(b: &BenchCommand) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match b {
        BenchCommand::BoundedDegree(a) => {
            check_model(a.model.q, a.model.beta)?;
            let g = build_graph(&a.graph)?;
            let p = params(a.model.q, a.model.beta, g.n_vertices())?;
            let l = LipschitzSpec::uniform("uniform", g.n_vertices(), a.lipschitz).context("--lipschitz")?;
            let r = bounded_degree_bound(&g, &p, &l)?;
            let mut table = Table::new(["n", "edges", "max_degree", "q", "beta", "kappa", "lipschitz", "bound", "refined"]);
            table.push(vec![
                r.n.into(),
                r.edges.into(),
                r.max_degree.into(),
                r.q.into(),
                r.beta.into(),
                r.kappa.into(),
                r.lipschitz.into(),
                r.bound_value.into(),
                r.refined_value.into(),
            ]);
            emit(&mut art, &a.output, "bench bounded-degree", &table);
        }
        BenchCommand::Tnorm(a) => {
            check_model(a.model.q, a.model.beta)?;
            let g = build_graph(&a.graph)?;
            let p = params(a.model.q, a.model.beta, g.n_vertices())?;
            let x = macrostate(&a.x, p.beta, p.q, "--x")?;
            let mut rng = stream(a.graph.seed, 0, Lane::Main);
            let est = mean_t_norm(&g, &p, &x, a.samples, &mut rng)?;
            let mut table = Table::new(["n", "q", "beta", "samples", "mean", "std_error", "analytic_bound"]);
            table.push(vec![
                g.n_vertices().into(),
                p.q.into(),
                p.beta.into(),
                est.samples.into(),
                est.mean.into(),
                est.std_error.into(),
                est.analytic_bound.into(),
            ]);
            emit(&mut art, &a.output, "bench tnorm", &table);
        }
        BenchCommand::Clt(a) => {
            let p = params(a.model.q, a.model.beta, a.n)?;
            let r = clt_covariance_check(a.n, p.q, p.beta)?;
            let mut table = Table::new(["quantity", "value"]);
            for (k, v) in [
                ("gibbs_diag", r.gibbs_diag()),
                ("gibbs_offdiag", r.gibbs_offdiag()),
                ("product_diag", r.product_diag()),
                ("product_offdiag", r.product_offdiag()),
                ("limit_diag_x", r.limit_diag_x),
                ("limit_offdiag_x", r.limit_offdiag_x),
                ("row_sum_offdiag_x", r.row_sum_offdiag_x),
                ("limit_diag_y", r.limit_diag_y),
                ("limit_offdiag_y", r.limit_offdiag_y),
            ] {
                table.push(vec![k.into(), v.into()]);
            }
            emit(&mut art, &a.output, "bench clt", &table);
        }
        BenchCommand::Wscaling(a) => {
            check_model(a.model.q, a.model.beta)?;
            if let Some(r) = a.r {
                check_radius(r, "--r")?;
            }
            let x = macrostate(&a.x, a.model.beta, a.model.q, "--x")?;
            let rows = wasserstein_scaling(a.model.q, a.model.beta, &x, a.r, &a.ns)?;
            let mut table = Table::new(["n", "states", "distance", "ratio", "duality_gap"]);
            for r in &rows {
                table.push(vec![r.n.into(), r.states.into(), r.distance.into(), r.ratio.into(), r.duality_gap.into()]);
            }
            emit(&mut art, &a.output, "bench wscaling", &table);
            let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
            if !ratios.is_empty() {
                art.notes.push(format!("band ratio of d_W/√N: {}", band_ratio(&ratios)));
            }
            if let Some(path) = &a.plot.svg {
                let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
                let svg = svg_line_plot("Wasserstein distance scaling", "N", "d_W / sqrt(N)", &ns, &ratios);
                art.files.push((path.clone(), svg.into_bytes()));
            }
        }
        BenchCommand::ThetaTrend(a) => {
            check_model(a.q, 0.0)?;
            if a.betas.is_empty() {
                return Err(usage_error("--betas: need at least one value"));
            }
            let rows = theta_star_trend(a.q, &a.x, &a.betas)?;
            let mut table = Table::new(["beta", "theta", "proxy"]);
            for r in &rows {
                table.push(vec![r.beta.into(), r.theta.into(), r.proxy.into()]);
            }
            emit(&mut art, &a.output, "bench theta-trend", &table);
            if let Some(path) = &a.plot.svg {
                let svg = svg_line_plot("Prefactor proxy", "beta", "4q theta/(1 - theta)", &table.column(0), &table.column(2));
                art.files.push((path.clone(), svg.into_bytes()));
            }
        }
    }
    Ok(art)
}
