//! Dressed-state spectroscopy of a flux qubit ultrastrongly coupled to a
//! multi-mode resonator.
//!
//! Energies are in GHz with ħ = 1, fluxes in mΦ0 and currents in nA. The
//! numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`. Sweeps, spectra and fits work in `f64`.

pub mod basis;
pub mod dressed;
pub mod eigen;
pub mod error;
pub mod fitsuite;
pub mod fluxmap;
pub mod linalg;
pub mod numfmt;
pub mod operators;
pub mod scalar;
pub mod sparse;
pub mod spectra;

pub use basis::{BasisDescriptor, ModeFactor, QubitLevel, StateLabel};
pub use dressed::{label_eigenstates, LabelOptions, LabeledSystem, ModelTag, TransitionRecord};
pub use eigen::{converge_truncation, eigh, EigenSystem};
pub use error::{Error, Result};
pub use fluxmap::{flux_to_qubit, FluxPoint, QubitParams};
pub use operators::{HermitianOperator, ModeParams, ModelVariant};
pub use scalar::Real;

pub type Qubit = QubitParams<f64>;
pub type Flux = FluxPoint<f64>;
pub type Mode = ModeParams<f64>;
pub type Hamiltonian = HermitianOperator<f64>;
pub type Eigen = EigenSystem<f64>;
pub type Labeled = LabeledSystem<f64>;
pub type Transition = TransitionRecord<f64>;
