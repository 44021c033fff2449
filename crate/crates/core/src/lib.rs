//! Simulation toolkit for decentralized optimization over graphs with
//! compressed communication.
//!
//! The centerpiece is a two-timescale compressed primal-dual solver
//! ([`algorithms::ticopd`]): agents hold a primal iterate, a dual iterate and
//! a publicly tracked surrogate of their iterate. Surrogates are advanced only
//! through compressed difference messages, and the primal-dual step reads the
//! surrogates of its neighbours instead of their exact iterates.
//!
//! Around it sit the pieces needed to exercise it at desk scale:
//!
//! * [`topology`]: graphs, incidence operators and Laplacian spectra.
//! * [`compression`]: contractive compressors with bit-exact codecs.
//! * [`objectives`]: smooth per-agent losses and dataset handling.
//! * [`algorithms`]: the solver plus exact primal-dual, DGD, quantized DGD
//!   and CHOCO-style gossip baselines.
//! * [`diagnostics`]: metrics, step-size constants and the Lyapunov value.
//! * [`harness`]: JSON configuration, orchestration and persisted records.

pub mod algorithms;
pub mod compression;
pub mod diagnostics;
mod error;
pub mod harness;
pub mod objectives;
pub mod topology;

pub use error::{Error, Result};
