//! Equivariant Weyl-law toolkit: group actions on model manifolds, reduced
//! phase-space volumes, reduced spectra, stationary-phase and blow-up
//! machinery, oscillatory quadrature and the Weyl-law verifier.

pub mod actions;
pub mod artifacts;
pub mod blowup;
pub mod config;
pub mod error;
pub mod numerics;
pub mod oscquad;
pub mod spectral;
pub mod statphase;
pub mod symplectic;
pub mod weyl;

pub use actions::{
    orbit_type_info, restriction_multiplicity, sample_group, CharacterLabel, ChartMap, GroupActionSpec,
    GroupElement, GroupId, Isotropy, ManifoldId, OrbitTypeInfo,
};
pub use error::{Error, Result};
pub use blowup::{blow_up, singular_asymptotics, weak_phase_cleanliness, BlowupChart, QuadraticSubstitution, TransformedPhase};
pub use config::ExperimentConfig;
pub use oscquad::{integrate, MuConvention, QuadratureSpec, Term};
pub use spectral::{build_spectrum, SpectrumTable};
pub use statphase::PhaseProblem;
pub use symplectic::{reduced_volume, MomentumMapModel, ReducedVolumeEstimate};
pub use weyl::{full_law_check, predict, verify, WeylPrediction};
