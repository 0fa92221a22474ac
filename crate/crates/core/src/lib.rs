//! Static analysis of fixed feedforward architectures: definability
//! classification, Pfaffian format propagation, explicit pseudo-dimension
//! bounds, sample-size planning and brute-force checks of those bounds.
//!
//! The symbolic side works on exact naturals and rationals. The empirical
//! side is generic over the floating-point scalar used by its evaluators.

pub mod format_algebra;
pub mod tame_analyzer;
pub mod gate_catalog;
pub mod arch_graph;
pub mod bound_engine;
pub mod empirical_lab;
mod natural;

pub use arch_graph::{ArchGraph, Diagnostic, GraphError};
pub use format_algebra::{ChainSharing, FormatError, PfaffFormat};
pub use gate_catalog::{DefinabilityClass, GateSpec};

pub type Natural = num_bigint::BigUint;
pub type Rational = num_rational::BigRational;
pub type F64Family = empirical_lab::ParametricFamily<f64>;
pub type F32Family = empirical_lab::ParametricFamily<f32>;
pub type RationalPolynomial = empirical_lab::Polynomial<Rational>;
