//! Decentralized low-rank matrix completion by pairwise gossip on the
//! Grassmann manifold.
//!
//! N agents each hold a column block of an incompletely observed matrix.
//! Every agent keeps its own estimate of the shared column subspace, locally
//! completes its block against that estimate, and exchanges stochastic
//! gradient steps with one neighbor per time slot so that all estimates
//! asymptotically agree.
//!
//! Module map:
//! - [`grassmann`] — exact subspace geometry (exp/log maps, distances).
//! - [`completion`] — per-agent weight solves, costs, gradients, preconditioner.
//! - [`gossip`] — the protocol variants as deterministic seeded simulations.
//! - [`datagen`] — synthetic problem instances.
//! - [`ingest`] — ratings-file and instance-file loading.
//! - [`metrics`] — run traces and CSV output.
//! - [`cli`] — the experiment runner behind the `grassgossip` binary.

pub mod cli;
pub mod completion;
pub mod datagen;
pub mod error;
pub mod gossip;
pub mod grassmann;
pub mod ingest;
mod linalg;
pub mod metrics;
mod par;

pub use error::{Error, Result};
pub use grassmann::{SubspacePoint, TangentVector};
