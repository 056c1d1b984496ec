//! Numerical toolkit for self-propelled particles with alignment and noise.
//!
//! The crate connects three levels of description:
//!
//! * the kinetic model, simulated by mean-field particles ([`kinetic`]) and, in
//!   its space-homogeneous form on the velocity sphere, by a spectral
//!   Fokker-Planck solver ([`spherefp`]);
//! * the equilibria of the averaged collision operator, the von Mises-Fisher
//!   family ([`vmf`]), together with the generalized collision invariants that
//!   close the macroscopic system ([`gci`]);
//! * the self-organized hydrodynamics (SOH) for density and orientation
//!   ([`soh`]).
//!
//! [`harness`] wires these into configurable batch runs, including the
//! kinetic-versus-SOH comparison as the scale parameter shrinks.

pub mod averaging;
pub mod error;
pub mod fd;
pub mod gci;
pub mod harness;
pub mod kinetic;
pub mod soh;
pub mod spherefp;
pub mod spherequad;
pub mod stats;
pub mod vecops;
pub mod vmf;

pub use error::{Error, Result};
pub use gci::{compute_kd, solve_chi, ChiProfile, ChiSolution};
pub use kinetic::{CellDecomposition, ParticleEnsemble};
pub use soh::{SohCoefficients, SohState};
pub use spherefp::AngularDensity;
pub use spherequad::{sphere_grid, theta_rule, SphereGrid, ThetaRule};
pub use vmf::{ModelParams, VmfEquilibrium};

/// Version string written into every output provenance block.
pub const VERSION: &str = concat!("sohk ", env!("CARGO_PKG_VERSION"));
