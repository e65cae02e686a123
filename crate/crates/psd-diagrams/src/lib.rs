//! Retarded cutting rules for finite-temperature self-energy diagrams.
//!
//! The crate expands self-energy diagrams into retarded half-diagrams,
//! evaluates them for discrete-level fermion systems, and assembles rate
//! functions that are Hermitian squares by construction. An exact
//! diagonalization oracle provides ground truth for small systems.

pub mod assembly;
pub mod commands;
pub mod config;
pub mod cutting;
pub mod diagram;
pub mod ed;
pub mod error;
pub mod matsubara;
pub mod perm;
pub mod poles;
pub mod propagator;
mod quad;
pub mod retarded;

pub use assembly::{GridSpec, PsdReport, RatePair, SpectralGrid};
pub use config::RunConfig;
pub use cutting::{CutExpansion, CutTerm, HalfDiagram};
pub use diagram::{generate_series, ApproximationSeries, Diagram, Family};
pub use error::{PsdError, PsdResult};
pub use perm::{Perm, PermGroup};
pub use poles::{Pole, PoleSum};
pub use propagator::{fermi, GKind, Propagator, SystemSpec, VMat};
pub use retarded::HalfIntegrand;
