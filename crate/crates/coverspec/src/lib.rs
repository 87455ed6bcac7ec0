//! Point spectra and density-of-states atoms of periodic universal covers of
//! compact quantum graphs with δ-type vertex conditions.
//!
//! A compact quantum graph Γ carries the Schrödinger operator −d²/dx² + W on
//! each edge, glued by δ-type conditions (continuity plus "sum of outgoing
//! derivatives = α·value" at each vertex; α = +∞ denotes Dirichlet). Its
//! universal cover T is a periodic quantum tree, and the point spectrum of
//! the tree operator — together with the atomic part of the density of
//! states — is computable from the compact base graph alone. This crate
//! implements that computation:
//!
//! * [`graph`]: the data model (discrete, metric, quantum graphs), subset
//!   machinery for the combinatorial index, and finite truncations of the
//!   universal cover.
//! * [`transfer`]: fundamental solutions of the edge ODE and their boundary
//!   transfer data.
//! * [`solver`]: eigenvalues, multiplicities, and eigenfunctions of compact
//!   quantum graphs via secular matrices.
//! * [`aomoto`]: candidate enumeration, eligible vertex–edge sets, index
//!   maximization, the windowed point spectrum of the cover, and an
//!   independent truncation-based verifier.
//! * [`discrete`]: the derived weighted discrete graph, the Jacobi operator,
//!   the eigenfunction embedding into its kernel, and the bipartite
//!   companion used for the index identity.
//! * [`covers`]: permutation-voltage n-lifts, girth control, counting-measure
//!   experiments, density-of-states bounds, and the genericity experiment.

pub mod aomoto;
pub mod discrete;
mod error;
pub mod graph;
pub mod solver;
pub mod transfer;

#[cfg(test)]
pub(crate) mod testgraphs;

pub use error::{Error, ErrorKind, Result};
