//! Potts and Curie–Weiss–Potts Glauber dynamics: simulation, couplings,
//! macrostate analysis and an exact lumped-chain oracle.

pub mod bench;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod rng;
pub mod macrostates;
pub mod spin;

pub use error::{Error, Result};
pub use spin::{
    conditional_spin_dist, edge_energy, hamming, neighbor_proportions, proportions, softmax_gbeta,
    tv_distance, Color, Configuration, CountVector, Graph, ModelParams, ProbVector,
};
