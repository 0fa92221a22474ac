//! Brute-force oracles that produce lower bounds to hold against the
//! symbolic bounds: shattering on grids, sublevel components in one
//! dimension, and exact real-root counts.
//!
//! Every value reported here is a lower bound on the true quantity.

pub mod components;
pub mod family;
pub mod graph_eval;
pub mod roots;
pub mod shatter;
pub mod suite;

pub use components::sign_components_1d;
pub use family::{Evaluator, Grid, ParametricFamily, ValueMatrix};
pub use graph_eval::graph_family;
pub use roots::{conic_pair_intersections, exp_linear_roots, poly_roots_count, Polynomial};
pub use shatter::{fat_lower_bound, pdim_lower_bound, vc_lower_bound, verify_witness, ShatterConfig};
pub use suite::{parse_suite, verify_suite, CheckDoc, CheckResult, CheckStatus, SuiteDoc, SuiteOptions, SuiteSummary};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("enumeration needs {work} work units, budget is {budget}")]
    GridTooLarge { work: u64, budget: u64 },
    #[error("enumeration exceeded the budget of {0} work units")]
    BudgetExceeded(u64),
    #[error("max_d = {0} exceeds the enumeration guard of 12")]
    MaxDTooLarge(usize),
    #[error("grid shape: {0}")]
    GridShape(String),
    #[error("non-finite value at input {input}, parameter {param}")]
    NonFinite { input: usize, param: usize },
    #[error("fat-shattering margin must be positive")]
    BadMargin,
    #[error("the zero polynomial has no finite root count")]
    ZeroPolynomial,
    #[error("expected a one-dimensional input, family has dimension {0}")]
    NotOneDimensional(usize),
    #[error("cannot evaluate graph: {0}")]
    Unsupported(String),
    #[error("suite: {0}")]
    Suite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    VcLb,
    PdimLb,
    FatLb,
    Components,
    Roots,
}

/// A shattered set with thresholds and one parameter per sign pattern;
/// `params[b]` realizes the pattern whose bit `i` says point `i` is above.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShatterWitness {
    pub point_indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub thresholds: Vec<f64>,
    pub param_indices: Vec<usize>,
    pub params: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Witness {
    Shatter(ShatterWitness),
    Components { theta: Vec<f64>, xs: Vec<f64>, runs: Vec<(usize, usize)> },
    Roots { intervals: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub kind: ProbeKind,
    pub value: u64,
    pub witness: Witness,
    pub instance: String,
    pub work: u64,
}

impl ProbeResult {
    pub(crate) fn new(kind: ProbeKind, value: u64, witness: Witness, instance: &str, work: u64) -> Self {
        ProbeResult { kind, value, witness, instance: instance.to_string(), work }
    }
}
