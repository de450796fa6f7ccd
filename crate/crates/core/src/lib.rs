//! Numerical laboratory for ideal incompressible MHD Alfven waves in thin slabs
//! `R^2 x (-delta, delta)` with slip walls, written in Elsasser variables.

pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod greens;
pub mod packet;
pub mod scattering;
pub mod solver2d;
pub mod solver3d;
pub mod spectral;
pub mod types;

pub use error::{Error, Result};
pub use packet::{gaussian_packet, PacketSpec};
pub use solver3d::{run, DtPolicy, Observer, RunOptions, RunReport, SpecState, Solver, StepView, System, SystemKind};
pub use spectral::{Parity, SpectralField, Transform};
pub use types::{ElsasserState, GridSpec, PhysParams, ScalarField, Sign, VectorField3, WeightContext};
