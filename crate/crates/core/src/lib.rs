//! Discrete phase retrieval on periodic rasters: the magnitude-DFT
//! measurement, constraint projections, hybrid iterative maps, and
//! tangent-space diagnostics that quantify when reconstruction is
//! well posed.

pub mod error;
pub mod grid;
pub mod io;
pub mod measure;
pub mod project;
pub mod solve;
pub mod synth;
pub mod tangent;

pub use error::{Error, Result};
pub use grid::{autocorrelation, convolve, dft, idft, invert_image, translate, Dims, Image, IndexVector, Spectrum};
pub use measure::{measure, pad_support, support_of, true_error, Associate, MagnitudeData, SupportMask};
pub use project::{project_l1ball, project_nonneg, project_support, project_torus, reflect, reflect_from, ConstraintSet};
pub use solve::{alternating_step, hybrid_step, linear_model_matrix, random_torus_start, run, stagnation_detect, IterMap, IterRecord, IterTrace, RunStatus, SolverConfig};
