//! Exact oracles: lumped count chains, brute-force Gibbs measures, mixing
//! curves, Stein solutions and exchangeable optimal transport.

pub mod brute;
pub mod lumped;
pub mod mixing;
pub mod ot;
pub mod states;
pub mod stein;

pub use brute::{brute_force_gibbs, configuration_transition_matrix, BruteGibbs};
pub use lumped::{
    conditional_multinomial, lumped_gibbs, lumped_transition_matrix, stationary_by_solve, LumpedChain,
    LumpedMeasure, SparseMatrix,
};
pub use mixing::{tv_curve_and_tmix, MixingCurve};
pub use ot::{exact_wasserstein_exchangeable, OtReport};
pub use states::{enumerate_states, simplex_size, StateSpace};
pub use stein::{max_neighbor_difference, solve_stein_poisson, stein_residual, stein_series, SteinSolution};

/// Compensated summation.
pub(crate) fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
