//! Recovery of sparse multivariate exponential sums
//! `f(k) = Σ_j c_j exp(−2πi⟨t_j, k⟩)` with a randomized matrix pencil, plus
//! the probabilistic analysis of the random direction and an application to
//! subpixel localization of point sources in blurred images.
//!
//! * [`model`]: evaluation, sampling and synthetic ground truth.
//! * [`pencil`]: the reconstruction pipeline.
//! * [`randsphere`]: random directions and gap-probability bounds.
//! * [`microscopy`]: Gaussian PSF imaging and localization.
//! * [`io`], [`presets`]: file formats and checked-in configurations.

// `!(x > 0.0)` is used on purpose: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod microscopy;
pub mod model;
pub mod pencil;
pub mod presets;
pub mod randsphere;

pub use error::{Error, Result, Stage};
pub use microscopy::{localize, ImageGrid, LocalizeConfig, PsfModel};
pub use model::{AddNoise, ParameterSet, SampleTable};
pub use pencil::{reconstruct, ReconConfig, ReconstructionResult};
