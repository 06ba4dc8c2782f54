//! Dispersion relations, interaction kernels and the truncated spectral field.

mod field;
mod kernels;
mod lattice;
mod mode;
mod model;

pub use field::{apply_j, apply_semigroup, apply_semigroup_in_place, SpectralField};
pub use kernels::{f_kernel, sinc_kernel, tilde_f_kernel, DEGENERACY_THRESHOLD};
pub use lattice::Lattice;
pub use mode::ModeIndex;
pub use model::DispersionModel;
