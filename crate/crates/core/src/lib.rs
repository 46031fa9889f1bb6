//! Roth-Erev reinforcement learning in the Lewis signaling game with `M1`
//! states, `M2` signals and `M1` acts.
//!
//! * [`game`]: the urn process with exact integer counts and the functionals
//!   of its occupation measure (potential, efficiencies, dissipation).
//! * [`meanfield`]: the mean-field vector field, an RK4 integrator and the
//!   Lyapunov identities.
//! * [`graph`] and [`equilibrium`]: state/signal graphs, rest points,
//!   Jacobians and stability.
//! * [`statics`]: the static symmetrized game and its Nash/NSS/ESS tests.
//! * [`harness`]: seeded Monte Carlo ensembles and the statistics run on them.
//! * [`oracle`]: brute-force enumerations used to check the closed forms.

pub mod equilibrium;
pub mod error;
pub mod game;
pub mod graph;
pub mod harness;
pub mod meanfield;
pub mod oracle;
pub mod rng;
pub mod statics;

pub use error::{Error, Result};
pub use game::{GameConfig, OccupationMeasure, PayoffMatrix, StepOutcome, Vertex};
pub use graph::{BipartiteGraph, WeightMode};
pub use rng::SeedMaterial;
