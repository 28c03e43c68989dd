#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Spectral tools for the stationary McKean–Vlasov equation on the sphere S^{n-1}
//! with zonal interaction kernels W(⟨x, y⟩).

pub mod error;
pub mod harmonics;
pub mod io;
pub mod kernels;
pub mod meanfield;
pub mod particles;
pub mod solver;
pub mod specfun;

pub use error::{Error, Result};
pub use harmonics::{decompose, reconstruct, ZonalBasis, ZonalCoefficients, ZonalProfile};
pub use kernels::{coefficients, KernelFamily, KernelSpec};
pub use meanfield::{free_energy, EnergyReport, ZonalDensity};
pub use particles::{ForceModel, ParticleEnsemble, SimConfig};
pub use solver::{
    bifurcation_points, find_transition, gibbs_fixed_point, trace_branch, SolverConfig, TransitionReport,
    TransitionType,
};
