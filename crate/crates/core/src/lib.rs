//! Online proximal-gradient dynamic mode decomposition.
//!
//! Snapshot handling, reference data generators, proximal operators for
//! structural and penalty constraints, the streaming operator learner, batch
//! DMD baselines and modal prediction.

pub mod batch;
pub mod error;
pub mod generators;
pub mod online;
pub mod prox;
pub mod snapshots;
pub mod spectral;

pub use error::{Error, Result};
pub use online::{opidmd_fit, opidmd_step, online_dmd_fit, online_dmd_step, FitOptions, OnlineState, RlsState};
pub use prox::{ConstraintSpec, StepRule};
pub use snapshots::{add_noise, build_pairs, split, NoiseSpec, SnapshotMatrix, SnapshotPairStream, Split, SplitSpec};
pub use spectral::{decompose, evaluate, predict, r_squared, ModalDecomposition};
