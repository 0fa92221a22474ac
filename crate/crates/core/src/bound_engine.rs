//! Exact evaluation of the component-count and dimension bounds, and the
//! sample-size planners.
//!
//! All integer bounds are computed on `BigUint` without rounding. The
//! planners evaluate logarithms on 256-bit binary floats and take the
//! ceiling at the end.

use crate::format_algebra::PfaffFormat;
use dashu_float::round::mode::HalfAway;
use dashu_float::FBig;
use dashu_int::UBig;
use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

type Real = FBig<HalfAway, 2>;

const PRECISION: usize = 256;

/// Above this many estimated bits `B` is not materialized.
const MAX_EXACT_BITS: u64 = 1 << 22;

/// Largest `B` (in bits) echoed verbatim in a report.
const MAX_REPORTED_BITS: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("argument must be positive")]
    NonPositive,
    #[error("base {0} of the Khovanskii bound is negative")]
    NegativeBase(BigInt),
    #[error("invalid format: {0}")]
    InvalidFormat(String),
    #[error("{name} = {value} is out of range: {expected}")]
    BadRange { name: &'static str, value: String, expected: &'static str },
    #[error("K/epsilon = {0} must exceed 1 for the regression planner")]
    DegenerateLog(String),
}

/// Smallest `k` with `2^k >= x`.
pub fn ceil_log2(x: &BigUint) -> Result<u64, BoundError> {
    if x.is_zero() {
        return Err(BoundError::NonPositive);
    }
    Ok((x - 1u32).bits())
}

fn ceil_log2_big(x: &BigUint) -> BigUint {
    BigUint::from((x - 1u32).bits())
}

/// Khovanskii's bound `2^{q(q-1)/2} * prod d_i * (min(n,q) D + sum d_i - n + 1)^q`
/// on nondegenerate solutions of `n` Pfaffian equations over a chain of
/// length `q` and degree `D`.
pub fn khovanskii_count(n: u64, q: u64, chain_degree: u64, degrees: &[u64]) -> Result<BigUint, BoundError> {
    if n == 0 {
        return Err(BoundError::NonPositive);
    }
    if degrees.len() as u64 != n {
        return Err(BoundError::InvalidFormat(format!("expected {n} degrees, got {}", degrees.len())));
    }
    let sum: BigInt = degrees.iter().map(|&d| BigInt::from(d)).sum();
    let base: BigInt = BigInt::from(n.min(q)) * chain_degree + sum - n + 1u32;
    let Some(base) = base.to_biguint() else {
        return Err(BoundError::NegativeBase(base));
    };
    let product: BigUint = degrees.iter().map(|&d| BigUint::from(d)).product();
    let q32 = u32::try_from(q).map_err(|_| BoundError::InvalidFormat("chain too long".into()))?;
    let pairs = q * q.saturating_sub(1) / 2;
    Ok(pow2(pairs) * product * base.pow(q32))
}

fn pow2(k: u64) -> BigUint {
    BigUint::one() << k
}

/// The worst-case connected-component bound `B`, exact when it is small
/// enough to materialize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentBound {
    pub value: Option<BigUint>,
    pub log2_ceil: BigUint,
}

impl ComponentBound {
    pub fn is_exact(&self) -> bool {
        self.value.is_some()
    }
}

fn checked_u32(x: &BigUint, what: &str) -> Result<u32, BoundError> {
    x.to_u32().ok_or_else(|| BoundError::InvalidFormat(format!("{what} = {x} is too large")))
}

/// `B = 2^{pq(pq-1)/2} d^p S^p ((p+1) S)^{pq}` with `S = p(D+d-1)+1`.
///
/// A constant format (`q = 0, d = 0`) is evaluated as degree 1.
pub fn component_bound_b(p: u64, q: &BigUint, chain_degree: &BigUint, d: &BigUint) -> Result<ComponentBound, BoundError> {
    if p == 0 {
        return Err(BoundError::InvalidFormat("parameter count must be at least 1".into()));
    }
    if d.is_zero() && !q.is_zero() {
        return Err(BoundError::InvalidFormat("degree 0 with a nonempty chain".into()));
    }
    let d = if d.is_zero() { BigUint::one() } else { d.clone() };
    let p_big = BigUint::from(p);
    let s = &p_big * (chain_degree + &d - 1u32) + 1u32;
    let pq = &p_big * q;
    let pairs = if pq.is_zero() { BigUint::zero() } else { &pq * (&pq - 1u32) / 2u32 };
    let wide = (&p_big + 1u32) * &s;

    let log2_bound = &pairs + &p_big * ceil_log2_big(&d) + &p_big * ceil_log2_big(&s) + &pq * ceil_log2_big(&wide);
    let estimated_bits = log2_bound.to_u64().unwrap_or(u64::MAX);
    if estimated_bits > MAX_EXACT_BITS {
        return Ok(ComponentBound { value: None, log2_ceil: log2_bound });
    }
    let p32 = checked_u32(&p_big, "p")?;
    let pq32 = checked_u32(&pq, "pq")?;
    let value = (BigUint::one() << pairs.to_u64().expect("bounded by estimate"))
        * d.pow(p32)
        * s.pow(p32)
        * wide.pow(pq32);
    let log2_ceil = BigUint::from(ceil_log2(&value)?);
    Ok(ComponentBound { value: Some(value), log2_ceil })
}

/// Karpinski-Macintyre style VC bound `2 ceil_log2(B) + (16 + 2 ceil_log2(s)) p`.
pub fn km_vc_bound(p: u64, s: &BigUint, b: &BigUint) -> Result<BigUint, BoundError> {
    if p == 0 {
        return Err(BoundError::NonPositive);
    }
    Ok(km_from_logs(p, &BigUint::from(ceil_log2(s)?), &BigUint::from(ceil_log2(b)?)))
}

fn km_from_logs(p: u64, s_log2: &BigUint, b_log2: &BigUint) -> BigUint {
    b_log2 * 2u32 + (s_log2 * 2u32 + 16u32) * p
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundReport {
    pub p: u64,
    #[serde(with = "crate::natural")]
    pub q: BigUint,
    #[serde(rename = "D", with = "crate::natural")]
    pub chain_degree: BigUint,
    #[serde(with = "crate::natural")]
    pub d: BigUint,
    pub s: u64,
    #[serde(rename = "B_log2_ceil", with = "crate::natural")]
    pub b_log2_ceil: BigUint,
    /// False when `B` was too large to evaluate and the log is a per-factor
    /// over-approximation.
    #[serde(rename = "B_exact")]
    pub b_exact: bool,
    #[serde(rename = "B", with = "crate::natural::option", skip_serializing_if = "Option::is_none", default)]
    pub b: Option<BigUint>,
    #[serde(with = "crate::natural")]
    pub pdim_bound: BigUint,
    #[serde(with = "crate::natural::option", skip_serializing_if = "Option::is_none", default)]
    pub khovanskii_m: Option<BigUint>,
}

/// Pseudo-dimension bound for a single-output family of format `fmt` with
/// `p` parameters.
pub fn pnn_pdim_bound(fmt: &PfaffFormat, p: u64) -> Result<BoundReport, BoundError> {
    let b = component_bound_b(p, &fmt.q, &fmt.chain_degree, &fmt.degree)?;
    let pdim_bound = km_from_logs(p, &BigUint::zero(), &b.log2_ceil);
    let b_exact = b.is_exact();
    let reported = b.value.filter(|v| v.bits() <= MAX_REPORTED_BITS);
    Ok(BoundReport {
        p,
        q: fmt.q.clone(),
        chain_degree: fmt.chain_degree.clone(),
        d: fmt.degree.clone(),
        s: 1,
        b_log2_ceil: b.log2_ceil,
        b_exact,
        b: reported,
        pdim_bound,
        khovanskii_m: None,
    })
}

impl BoundReport {
    /// Attaches the Khovanskii count for `n` equations of this format.
    pub fn with_khovanskii(mut self, n: u64) -> Result<Self, BoundError> {
        let small = |x: &BigUint, what| x.to_u64().ok_or_else(|| BoundError::InvalidFormat(format!("{what} too large")));
        let (q, dd, d) = (small(&self.q, "q")?, small(&self.chain_degree, "D")?, small(&self.d, "d")?);
        self.khovanskii_m = Some(khovanskii_count(n, q, dd, &vec![d; n as usize])?);
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Classification,
    Regression,
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Classification => "classification",
            PlanMode::Regression => "regression",
        })
    }
}

impl std::str::FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classification" => Ok(PlanMode::Classification),
            "regression" => Ok(PlanMode::Regression),
            other => Err(format!("unknown mode {other:?}; expected classification or regression")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub mode: PlanMode,
    #[serde(rename = "K", with = "crate::natural")]
    pub k: BigUint,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(rename = "C")]
    pub constant_c: f64,
    #[serde(rename = "N", with = "crate::natural")]
    pub n: BigUint,
    pub formula: String,
    pub caveat: String,
}

pub const CONSTANT_CAVEAT: &str =
    "C is a universal constant whose value is not known; N scales linearly with the chosen C";

fn real(x: f64) -> Real {
    Real::try_from(x).expect("finite value").with_precision(PRECISION).value()
}

fn real_nat(x: &BigUint) -> Real {
    Real::from(UBig::from_le_bytes(&x.to_bytes_le())).with_precision(PRECISION).value()
}

fn ceil_natural(x: &Real) -> BigUint {
    let int = x.ceil().to_int().value();
    let (_, mag) = int.into_parts();
    BigUint::from_bytes_le(&mag.to_le_bytes())
}

fn check_ranges(k: &BigUint, epsilon: f64, delta: f64, c: f64) -> Result<(), BoundError> {
    let bad = |name, value: String, expected| Err(BoundError::BadRange { name, value, expected });
    if k.is_zero() {
        return bad("K", k.to_string(), "K >= 1");
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return bad("epsilon", epsilon.to_string(), "0 < epsilon <= 1");
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return bad("delta", delta.to_string(), "0 < delta <= 1");
    }
    if !(c > 0.0 && c.is_finite()) {
        return bad("C", c.to_string(), "0 < C < infinity");
    }
    Ok(())
}

/// `N = ceil(C (K + ln(1/delta)) / epsilon^2)`.
pub fn sample_size_classification(k: &BigUint, epsilon: f64, delta: f64, c: f64) -> Result<SamplePlan, BoundError> {
    check_ranges(k, epsilon, delta, c)?;
    let eps = real(epsilon);
    let log_term = -real(delta).ln();
    let value = real(c) * (real_nat(k) + log_term) / (&eps * &eps);
    Ok(SamplePlan {
        mode: PlanMode::Classification,
        k: k.clone(),
        epsilon,
        delta,
        constant_c: c,
        n: ceil_natural(&value),
        formula: format!("N = ceil({c} * ({k} + ln(1/{delta})) / {epsilon}^2)"),
        caveat: CONSTANT_CAVEAT.into(),
    })
}

/// `N = ceil(C (K ln^2(K/epsilon) + ln(1/delta)) / epsilon^2)`.
pub fn sample_size_regression(k: &BigUint, epsilon: f64, delta: f64, c: f64) -> Result<SamplePlan, BoundError> {
    check_ranges(k, epsilon, delta, c)?;
    let eps = real(epsilon);
    let ratio = real_nat(k) / &eps;
    if ratio <= Real::ONE {
        return Err(BoundError::DegenerateLog(format!("{}", ratio.to_f64().value())));
    }
    let log_ratio = ratio.ln();
    let value = real(c) * (real_nat(k) * &log_ratio * &log_ratio - real(delta).ln()) / (&eps * &eps);
    Ok(SamplePlan {
        mode: PlanMode::Regression,
        k: k.clone(),
        epsilon,
        delta,
        constant_c: c,
        n: ceil_natural(&value),
        formula: format!("N = ceil({c} * ({k} * ln^2({k}/{epsilon}) + ln(1/{delta})) / {epsilon}^2)"),
        caveat: CONSTANT_CAVEAT.into(),
    })
}

pub fn sample_size(mode: PlanMode, k: &BigUint, epsilon: f64, delta: f64, c: f64) -> Result<SamplePlan, BoundError> {
    match mode {
        PlanMode::Classification => sample_size_classification(k, epsilon, delta, c),
        PlanMode::Regression => sample_size_regression(k, epsilon, delta, c),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(x: u64) -> BigUint {
        BigUint::from(x)
    }

    #[test]
    fn logs() {
        assert_eq!(ceil_log2(&n(1)), Ok(0));
        assert_eq!(ceil_log2(&n(8)), Ok(3));
        assert_eq!(ceil_log2(&n(9)), Ok(4));
        assert_eq!(ceil_log2(&n(0)), Err(BoundError::NonPositive));
    }

    #[test]
    fn khovanskii_examples() {
        assert_eq!(khovanskii_count(2, 0, 0, &[2, 2]), Ok(n(4)));
        assert_eq!(khovanskii_count(1, 1, 1, &[1]), Ok(n(2)));
        assert_eq!(khovanskii_count(1, 0, 0, &[3]), Ok(n(3)));
        assert!(matches!(khovanskii_count(3, 1, 0, &[0, 0, 0]), Err(BoundError::NegativeBase(_))));
    }

    #[test]
    fn component_bound_examples() {
        let b = component_bound_b(1, &n(1), &n(1), &n(1)).unwrap();
        assert_eq!(b.value, Some(n(8)));
        assert_eq!(component_bound_b(2, &n(0), &n(0), &n(1)).unwrap().value, Some(n(1)));
        assert!(component_bound_b(1, &n(1), &n(0), &n(0)).is_err());
        assert!(component_bound_b(0, &n(0), &n(0), &n(1)).is_err());
    }

    #[test]
    fn km_examples() {
        assert_eq!(km_vc_bound(1, &n(1), &n(8)), Ok(n(22)));
        assert_eq!(km_vc_bound(2, &n(1), &n(1)), Ok(n(32)));
        assert_eq!(km_vc_bound(1, &n(1), &n(1)), Ok(n(16)));
    }

    #[test]
    fn pdim_examples() {
        assert_eq!(pnn_pdim_bound(&PfaffFormat::new(1, 1, 1), 1).unwrap().pdim_bound, n(22));
        let affine = pnn_pdim_bound(&PfaffFormat::affine(), 2).unwrap();
        assert_eq!(affine.pdim_bound, n(32));
        assert!(affine.b_exact);
    }

    #[test]
    fn huge_b_falls_back_to_logs() {
        let r = pnn_pdim_bound(&PfaffFormat::new(4000, 10, 3), 5000).unwrap();
        assert!(!r.b_exact);
        assert!(r.b.is_none());
        assert!(r.pdim_bound > n(1u64 << 40));
    }

    #[test]
    fn planner_ranges() {
        let k = n(22);
        assert!(matches!(sample_size_classification(&k, 0.0, 0.05, 1.0), Err(BoundError::BadRange { name: "epsilon", .. })));
        assert!(matches!(sample_size_classification(&k, 0.1, 0.0, 1.0), Err(BoundError::BadRange { name: "delta", .. })));
        assert!(matches!(sample_size_classification(&k, 0.1, 0.5, -1.0), Err(BoundError::BadRange { name: "C", .. })));
        assert!(matches!(sample_size_classification(&n(0), 0.1, 0.5, 1.0), Err(BoundError::BadRange { name: "K", .. })));
        assert!(matches!(sample_size_regression(&n(1), 1.0, 0.5, 1.0), Err(BoundError::DegenerateLog(_))));
    }

    #[test]
    fn delta_one_drops_the_log_term() {
        let plan = sample_size_classification(&n(7), 0.5, 1.0, 1.0).unwrap();
        assert_eq!(plan.n, n(28));
    }
}
