//! Support correlation filters: max-margin correlation trackers trained
//! over all cyclic shifts of a patch, with the hinge-loss solve carried out
//! in the Fourier domain.

pub mod error;
pub mod evaluation;
pub mod features;
pub mod kscf;
pub mod labeling;
pub mod mscf;
pub mod oracle;
pub mod scf;
pub mod solver;
pub mod speed;
pub mod spectral;
pub mod synthetic;
pub mod tracker;
pub mod verify;

pub use error::{Error, Result};
pub use evaluation::{OpeResult, Sequence, Summary};
pub use features::{FeatureKind, FeatureStack, Frame};
pub use kscf::{DualFilter, KernelSpec};
pub use labeling::{LabelGrid, Thresholds};
pub use mscf::MultiFilter;
pub use scf::SupportFilter;
pub use solver::{SolveReport, Solution, SolverConfig};
pub use spectral::{ComplexGrid, Fft2, RealGrid};
pub use tracker::{BBox, Model, StepReport, Tracker, TrackerConfig, Variant};
