//! Simulation and statistical verification of information flooding by mobile
//! agents on torus grids and road networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] and [`rng`]: torus metric and seed plumbing.
//! * [`mobility`]: Random Walk, Random Way-point, Manhattan Random Way-point
//!   and Lévy Walk agents.
//! * [`contact`]: per-step meeting detection and contact components.
//! * [`spread`] and [`sweep`]: flood-time realizations and parameter sweeps.
//! * [`oracle`]: Monte-Carlo and exhaustive checks of the collocation,
//!   overlap, independence and lower-bound claims behind the flood-time bound.
//! * [`fit`]: least-squares fits of sweep curves to the bound's functional
//!   forms.
//! * [`ingest`]: station-transition models, trajectory synthesis on road
//!   graphs, and GPS trace replay.

pub mod contact;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod ingest;
pub mod mobility;
pub mod oracle;
pub mod rng;
pub mod spread;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::{Position, TorusGrid};
pub use mobility::MobilityPolicy;
pub use rng::RngSeed;
pub use spread::{run_realization, RealizationResult, SimConfig};
pub use sweep::{SweepPoint, SweepResult};
