//! Simulation and analysis engine for chunk-swapping peer-to-peer swarms.
//!
//! Peers hold subsets ("labels") of an n-chunk file and interact by
//! single-chunk downloads and one-for-one swaps; seeds depart, new peers
//! arrive. The crate provides the full ladder of descriptions of that
//! system and cross-validates each rung against its neighbours:
//!
//! - [`labels`]: the subset algebra on chunk labels;
//! - [`model`]: the jump-vector set and rate polynomials of the
//!   continuous-time Markov chain;
//! - [`stochastic`]: exact event simulation (direct and random-time-change
//!   forms), per-peer tagging, and the N-scaled sequence harness;
//! - [`fluid`]: the deterministic fluid-limit vector field, its drift
//!   oracle, an adaptive RK5(4) integrator, and the known closed forms;
//! - [`equilibria`]: fixed points, spectra and stability, settling-time
//!   estimates, and the cardinality-symmetric dimension reduction;
//! - [`incentives`]: the chunk-splitting performance comparison and its
//!   quadratic criterion, plus a steady-state occupancy/sojourn check;
//! - [`diffusion`]: the Gaussian correction about the fluid path;
//! - [`validation`]: the release gate tying all of the above together.

pub mod diffusion;
pub mod equilibria;
mod error;
pub mod fluid;
pub mod incentives;
pub mod io;
pub mod labels;
pub mod model;
pub mod ode;
pub mod stochastic;
pub mod validation;

pub use error::{Error, Result};
pub use fluid::DensityState;
pub use labels::ChunkLabel;
pub use model::{JumpSet, ModelParams, PopulationState};
