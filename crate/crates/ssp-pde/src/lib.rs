//! Ground-truth trajectory generation for periodic 2D PDE benchmarks.
//!
//! Three equation families are supported on the 2π-periodic square: the heat
//! equation and advection-diffusion (both advanced exactly, mode by mode, via
//! the per-mode exponential) and a two-channel FitzHugh–Nagumo-type
//! reaction–diffusion system advanced with an IMEX step (explicit Euler
//! reaction in physical space, exact spectral diffusion). Initial conditions
//! are drawn in spectral space with a power-law envelope and are deterministic
//! in their seed. Datasets serialize to the `SSPD1` binary format.

pub mod dataset;
pub mod init;
pub mod solver;
pub mod spec;

pub use dataset::{generate_dataset, load_dataset, write_dataset, Dataset, Trajectory};
pub use init::random_initial_condition;
pub use solver::{advance_frame, exact_linear_step, reaction_diffusion_step};
pub use spec::{PdeKind, PdeSpec};
