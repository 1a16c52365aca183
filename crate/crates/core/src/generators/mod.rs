//! Reference data generators for the benchmark systems, plus a loader for
//! externally produced cylinder-wake snapshots.
//!
//! Every generator is a pure function of its configuration.

mod advdiff;
mod advection;
mod cylinder;
mod lorenz;
mod msd;
mod schrodinger;

pub use advdiff::{gen_advdiff1d, gen_advdiff1d_with, AdvDiff1DConfig};
pub use advection::{gen_advection2d, gen_advection2d_with, Advection2DConfig};
pub use cylinder::{load_cylinder, Crop, CylinderSource};
pub use lorenz::{gen_lorenz, lorenz_rhs, LorenzConfig};
pub use msd::{gen_msd5, stiffness_matrix, Msd5Config};
pub use schrodinger::{gen_schrodinger1d, schrodinger_wavefunctions, Observable, Schrodinger1DConfig};
