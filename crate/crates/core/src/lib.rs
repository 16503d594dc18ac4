//! Scaled residual bootstrap for diffusion MRI.
//!
//! The pipeline fits each voxel's DW signal with a linear dictionary
//! (SHORE by default), corrects the fit residuals for leverage, and
//! synthesizes new scans by adding resampled residuals multiplied by a
//! scaling factor `r`. Larger `r` lowers the SNR of the augmented scan.
//!
//! ```no_run
//! use resboot_core::prelude::*;
//!
//! let scheme = hcp_like_scheme();
//! let dictionary = shore_dictionary(&scheme, 6, 700.0)?;
//! let op = build_fit_operator(&dictionary, 0.0)?;
//! # let scan = Volume4D::zeros([4, 4, 4, scheme.len()])?;
//! let mask = Mask::full(scan.spatial_dims());
//! let fits = fit_scan(&op, &dictionary, &scan, &mask)?;
//! let plan = BootstrapPlan { seed: 7, ..BootstrapPlan::default() };
//! let outputs = bootstrap_scan(&scan, &scheme, &fits, &plan, &mask)?;
//! assert_eq!(outputs.len(), 3);
//! # Ok::<(), resboot_core::Error>(())
//! ```

pub mod basis;
pub mod bootstrap;
pub mod error;
pub mod fitting;
pub mod gradients;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod rng;
pub mod volumes;

pub use error::{Error, ErrorKind, Result};

pub mod prelude {
    pub use crate::basis::{shore_dictionary, Basis, Dictionary, ShoreParams};
    pub use crate::bootstrap::{bootstrap_scan, estimate_noise_sigma, BootstrapPlan};
    pub use crate::error::{Error, Result};
    pub use crate::fitting::{build_fit_operator, fit_scan, fit_volume, fit_voxel, FitOperator, FitStore};
    pub use crate::gradients::GradientScheme;
    pub use crate::nifti::{read_nifti, write_nifti};
    pub use crate::phantom::hcp_like_scheme;
    pub use crate::volumes::{DataType, Mask, Volume4D};
}
