//! Numerical workbench for two-weight bounds of fractional Riesz
//! transforms over atomic Cantor-type measures.
//!
//! The crate builds the spread Cantor weight pair at a chosen depth,
//! locates the zeros of the first transform component along the removed
//! gaps, and evaluates — exactly, atom by atom — the Muckenhoupt, testing,
//! pivotal, and energy constants together with the finite-rank operator
//! norm.  The headline contrast: the backward pivotal and energy sums grow
//! linearly in the depth while everything else stays uniformly bounded.

pub mod calib;
pub mod error;
pub mod experiments;
pub mod functionals;
pub mod geometry;
pub mod kahan;
pub mod kernels;
pub mod measures;
pub mod rat;
pub mod riesz;

pub use error::{Result, WorkbenchError};
pub use experiments::{compute_constants, sweep, ConstantReport, SweepConfig, SweepReport};
pub use geometry::{cantor_hierarchy, hat_square, CantorHierarchy, Cube, Interval};
pub use kahan::KahanSum;
pub use kernels::{KernelSpec, SectorConfig};
pub use measures::{
    build_omega_hat, build_omega_line, build_sigma_dot_hat, build_sigma_hat, check_slope_property,
    general_scheme, AtomicMeasure, SigmaSide, WeightScheme,
};
pub use rat::Rat;
pub use riesz::{
    blowup_check, compute_zeros, find_zero, operator_matrix, operator_norm, reversal_check,
    riesz_at, testing_constant, Direction, Edge, OperatorMatrix, ZeroTable,
};
