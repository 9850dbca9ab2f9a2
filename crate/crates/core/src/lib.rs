//! Gradient Gibbs random surfaces on ℤ²: periodic edge potentials, slope
//! feasibility, heat-bath and coupling-from-the-past samplers, cluster swapping,
//! domino tilings and surface-tension observables.

pub mod cluster;
pub mod config;
pub mod energy;
pub mod enumerate;
pub mod error;
pub mod feasibility;
pub mod lattice;
pub mod observables;
pub mod potential;
pub mod rng;
pub mod tilings;
pub mod verify;
pub mod sampler;
pub mod wedge;

pub use config::{Boundary, Height, HeightConfig};
pub use energy::Energy;
pub use error::{Error, Result};
pub use lattice::{Dir, Edge, Graph, GraphKind, Period, Site};
pub use potential::{EdgePotential, PeriodicPotential, ValueDomain};
pub use rng::RngStream;
