//! Boundary-driven stirring processes on `[-N, N]`.
//!
//! * [`lattice`]: single and coupled configurations.
//! * [`dynamics`]: exact Gillespie evolution of one copy under density or
//!   current reservoirs.
//! * [`harris`]: the graphical construction of the monotone coupling, with
//!   labelled discrepancies.
//! * [`auxwalk`]: the tagged discrepancy's Markovian projection.
//! * [`estimators`]: decay fits, scaling tables, coupling bounds, and the
//!   exact master-equation and killed-walk oracles.

pub mod auxwalk;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod harris;
pub mod lattice;
pub mod rng;

pub use error::{Error, Result};
pub use lattice::{Configuration, CoupledConfiguration, Lattice, ModelParams, Reservoir, SiteState};
