//! Near-field (spherical-wavefront) modeling for extremely large antenna arrays.
//!
//! The crate covers the full chain used in near-field link studies:
//!
//! * [`model`]: array geometries, carrier configuration and polar locations.
//! * [`scenario`]: TOML scenario files.
//! * [`propagation`]: exact spherical and first-order planar array responses,
//!   multipath, LoS-MIMO and RIS cascaded channels.
//! * [`boundaries`]: Rayleigh-distance style near/far-field boundaries.
//! * [`codebook`]: angular and polar-domain codebooks.
//! * [`estimation`]: pilot simulation and OMP channel estimation.
//! * [`beamforming`]: beamfocusing, beamsteering and wideband PS/TTD designs.
//! * [`capacity`]: LoS-MIMO degrees of freedom and multi-user SDMA.
//!
//! Every steering vector uses the array center as phase reference and a
//! negative propagation phase, `exp(-j 2 pi f d / c)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamforming;
pub mod boundaries;
pub mod capacity;
pub mod codebook;
mod error;
pub mod estimation;
pub mod model;
pub mod propagation;
pub mod scenario;

pub use error::{Error, Result};
pub use model::{
    build_ula, build_upa, subcarrier_frequencies, wavelength, AmplitudeModel, ArrayGeometry, CarrierConfig, PolarPoint,
    SPEED_OF_LIGHT,
};
pub use propagation::{ChannelMatrix, PathSpec, SteeringModel, SteeringVector};
pub use scenario::ScenarioConfig;

pub use nalgebra::{DMatrix, DVector, Point3, Rotation3};
pub use num_complex::Complex64;

/// Complex column vector used for channels, codewords and weights.
pub type CVector = DVector<Complex64>;
/// Complex dense matrix.
pub type CMatrix = DMatrix<Complex64>;
