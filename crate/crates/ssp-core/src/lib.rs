//! Core numerics for structured spectral propagation: dense real/complex grid
//! arrays on periodic 2D domains, half-spectrum FFTs with hand-written adjoints,
//! retained-mode truncation, and a finite-difference gradient checker.
//!
//! Everything here is double precision and deterministic: pure functions over
//! immutable inputs with fixed summation order, safe to call from multiple
//! threads concurrently.

pub mod error;
pub mod field;
pub mod fft;
pub mod gradcheck;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{signed_freq, validate_resolution, GridField, RetainedBlock, RetainedSet, SpectralField};
pub use fft::{AxisFft, Fft2, SpatialAxis};
pub use gradcheck::{grad_check, grad_check_at, random_probes, CheckReport, DiffOp, ProbeResult};
pub use spectral::{embed, truncate, write_into};
