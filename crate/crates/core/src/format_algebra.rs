//! Exact arithmetic on Pfaffian format triples `(q, D, d)`.
//!
//! A format records chain length `q`, chain degree `D` and the degree `d`
//! of the output polynomial over the chain. Every operation here returns an
//! upper bound: if the arguments bound the formats of some functions, the
//! result bounds the format of the combined function. Components are
//! arbitrary-precision so repeated composition never overflows.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("inner function {index} has output degree 0; model the constant as a frozen parameter")]
    DegenerateInnerDegree { index: usize },
    #[error("composition needs at least one inner function")]
    EmptyInnerList,
    #[error("replication needs at least one copy")]
    ZeroCopies,
}

/// Upper bound on the format of a Pfaffian function.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PfaffFormat {
    #[serde(with = "crate::natural")]
    pub q: BigUint,
    #[serde(rename = "D", with = "crate::natural")]
    pub chain_degree: BigUint,
    #[serde(rename = "d", with = "crate::natural")]
    pub degree: BigUint,
}

impl PfaffFormat {
    pub fn new(q: u64, chain_degree: u64, degree: u64) -> Self {
        Self::from_naturals(q.into(), chain_degree.into(), degree.into())
    }

    pub fn from_naturals(q: BigUint, chain_degree: BigUint, degree: BigUint) -> Self {
        Self { q, chain_degree, degree }
    }

    /// Format of an affine map in its inputs.
    pub fn affine() -> Self {
        Self::new(0, 0, 1)
    }

    pub fn constant() -> Self {
        Self::new(0, 0, 0)
    }

    /// Format of a polynomial of the given degree.
    pub fn polynomial(degree: u64) -> Self {
        Self::new(0, 0, degree)
    }

    pub fn is_constant(&self) -> bool {
        self.degree.is_zero()
    }

    /// Componentwise order.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.q <= other.q && self.chain_degree <= other.chain_degree && self.degree <= other.degree
    }

    /// Componentwise maximum.
    pub fn join(&self, other: &Self) -> Self {
        Self {
            q: (&self.q).max(&other.q).clone(),
            chain_degree: (&self.chain_degree).max(&other.chain_degree).clone(),
            degree: (&self.degree).max(&other.degree).clone(),
        }
    }

    /// `D + d - 1`, clamped at zero.
    pub(crate) fn derivative_degree(&self) -> BigUint {
        let s = &self.chain_degree + &self.degree;
        if s.is_zero() {
            s
        } else {
            s - 1u32
        }
    }
}

impl PartialOrd for PfaffFormat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.dominated_by(other), other.dominated_by(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }
}

impl fmt::Display for PfaffFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.q, self.chain_degree, self.degree)
    }
}

impl fmt::Debug for PfaffFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Whether two operands are known to be built over one common chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainSharing {
    #[default]
    Disjoint,
    Shared,
}

fn chain_length(a: &BigUint, b: &BigUint, sharing: ChainSharing) -> BigUint {
    match sharing {
        ChainSharing::Disjoint => a + b,
        ChainSharing::Shared => a.max(b).clone(),
    }
}

pub fn fmt_sum(a: &PfaffFormat, b: &PfaffFormat, sharing: ChainSharing) -> PfaffFormat {
    PfaffFormat {
        q: chain_length(&a.q, &b.q, sharing),
        chain_degree: (&a.chain_degree).max(&b.chain_degree).clone(),
        degree: (&a.degree).max(&b.degree).clone(),
    }
}

pub fn fmt_product(a: &PfaffFormat, b: &PfaffFormat, sharing: ChainSharing) -> PfaffFormat {
    PfaffFormat {
        q: chain_length(&a.q, &b.q, sharing),
        chain_degree: (&a.chain_degree).max(&b.chain_degree).clone(),
        degree: &a.degree + &b.degree,
    }
}

/// Format bound for any first-order partial derivative.
pub fn fmt_derivative(a: &PfaffFormat) -> PfaffFormat {
    PfaffFormat {
        q: a.q.clone(),
        chain_degree: a.chain_degree.clone(),
        degree: a.derivative_degree(),
    }
}

/// Format after appending the function itself to its chain.
pub fn fmt_chain_extend(a: &PfaffFormat) -> PfaffFormat {
    PfaffFormat {
        q: &a.q + 1u32,
        chain_degree: (&a.chain_degree).max(&a.derivative_degree()).clone(),
        degree: a.degree.clone(),
    }
}

/// Composition `outer(inner_1, ..., inner_k)`.
///
/// Inner chains are treated as distinct unless `sharing` is `Shared`, in
/// which case all inners are assumed to live on one chain.
pub fn fmt_compose(
    outer: &PfaffFormat,
    inners: &[PfaffFormat],
    sharing: ChainSharing,
) -> Result<PfaffFormat, FormatError> {
    let tagged: Vec<(usize, &PfaffFormat)> = match sharing {
        ChainSharing::Disjoint => inners.iter().enumerate().collect(),
        ChainSharing::Shared => inners.iter().map(|f| (0, f)).collect(),
    };
    fmt_compose_tagged(outer, &tagged)
}

/// Composition where each inner carries a chain key; inners with equal keys
/// share a chain, which is then counted once at its longest length.
pub fn fmt_compose_tagged<K: Ord + Clone>(
    outer: &PfaffFormat,
    inners: &[(K, &PfaffFormat)],
) -> Result<PfaffFormat, FormatError> {
    if inners.is_empty() {
        return Err(FormatError::EmptyInnerList);
    }
    if let Some(index) = inners.iter().position(|(_, f)| f.is_constant()) {
        return Err(FormatError::DegenerateInnerDegree { index });
    }
    let mut chains: BTreeMap<K, &BigUint> = BTreeMap::new();
    let mut max_d = BigUint::zero();
    let mut max_chain_degree = BigUint::zero();
    for (key, f) in inners {
        let slot = chains.entry(key.clone()).or_insert(&f.q);
        if f.q > **slot {
            *slot = &f.q;
        }
        if f.degree > max_d {
            max_d = f.degree.clone();
        }
        if f.chain_degree > max_chain_degree {
            max_chain_degree = f.chain_degree.clone();
        }
    }
    let inner_q: BigUint = chains.values().copied().sum();
    let chain_degree = max_chain_degree + (&outer.chain_degree + 1u32) * &max_d - 1u32;
    Ok(PfaffFormat {
        q: &outer.q + inner_q,
        chain_degree,
        degree: &outer.degree * max_d,
    })
}

/// Format of `e^f` after appending it to the chain of `f`: its derivative
/// `f' e^f` has degree `D + d` in the variables and the extended chain.
pub fn fmt_exp_extend(a: &PfaffFormat) -> PfaffFormat {
    let derivative = &a.chain_degree + &a.degree;
    PfaffFormat {
        q: &a.q + 1u32,
        chain_degree: (&a.chain_degree).max(&derivative).clone(),
        degree: BigUint::one(),
    }
}

/// Format of `1/f` (with `f` nonvanishing) after appending it to the chain
/// of `f`: its derivative `-f' (1/f)^2` has degree `D + d + 1`.
pub fn fmt_reciprocal_extend(a: &PfaffFormat) -> PfaffFormat {
    let derivative = &a.chain_degree + &a.degree + 1u32;
    PfaffFormat {
        q: &a.q + 1u32,
        chain_degree: (&a.chain_degree).max(&derivative).clone(),
        degree: BigUint::one(),
    }
}

/// `x + F(x)` for a residual branch `F`.
pub fn fmt_residual(a: &PfaffFormat) -> PfaffFormat {
    PfaffFormat {
        q: a.q.clone(),
        chain_degree: a.chain_degree.clone(),
        degree: (&a.degree).max(&BigUint::one()).clone(),
    }
}

/// `f(Ax + b)`: the bound is unchanged, though the domain becomes a preimage.
pub fn fmt_affine_precompose(a: &PfaffFormat) -> PfaffFormat {
    a.clone()
}

/// Chain obtained by substituting `copies` points into one chain.
pub fn fmt_replicate(a: &PfaffFormat, copies: &BigUint) -> Result<PfaffFormat, FormatError> {
    if copies.is_zero() {
        return Err(FormatError::ZeroCopies);
    }
    Ok(PfaffFormat {
        q: &a.q * copies,
        chain_degree: a.chain_degree.clone(),
        degree: a.degree.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f(q: u64, dd: u64, d: u64) -> PfaffFormat {
        PfaffFormat::new(q, dd, d)
    }

    #[test]
    fn sum_cases() {
        assert_eq!(fmt_sum(&f(1, 2, 1), &f(2, 2, 1), ChainSharing::Disjoint), f(3, 2, 1));
        assert_eq!(fmt_sum(&f(0, 0, 1), &f(0, 0, 1), ChainSharing::Disjoint), f(0, 0, 1));
        assert_eq!(fmt_sum(&f(2, 4, 2), &f(1, 2, 1), ChainSharing::Disjoint), f(3, 4, 2));
        assert_eq!(fmt_sum(&f(2, 4, 2), &f(1, 2, 1), ChainSharing::Shared), f(2, 4, 2));
    }

    #[test]
    fn product_cases() {
        assert_eq!(fmt_product(&f(1, 2, 1), &f(1, 2, 1), ChainSharing::Disjoint), f(2, 2, 2));
        assert_eq!(fmt_product(&f(0, 0, 1), &f(0, 0, 1), ChainSharing::Disjoint), f(0, 0, 2));
        assert_eq!(fmt_product(&f(0, 0, 1), &f(2, 4, 2), ChainSharing::Disjoint), f(2, 4, 3));
        assert_eq!(fmt_product(&f(1, 2, 1), &f(1, 2, 1), ChainSharing::Shared), f(1, 2, 2));
    }

    #[test]
    fn derivative_cases() {
        assert_eq!(fmt_derivative(&f(1, 2, 1)), f(1, 2, 2));
        assert_eq!(fmt_derivative(&f(0, 0, 0)), f(0, 0, 0));
        assert_eq!(fmt_derivative(&f(2, 2, 2)), f(2, 2, 3));
        assert_eq!(fmt_derivative(&f(0, 0, 1)), f(0, 0, 0));
    }

    #[test]
    fn chain_extend_cases() {
        assert_eq!(fmt_chain_extend(&f(1, 1, 1)), f(2, 1, 1));
        assert_eq!(fmt_chain_extend(&f(1, 1, 0)), f(2, 1, 0));
        assert_eq!(fmt_chain_extend(&f(2, 2, 3)), f(3, 4, 3));
    }

    #[test]
    fn compose_cases() {
        let c = |o, i: &[PfaffFormat]| fmt_compose(&o, i, ChainSharing::Disjoint).unwrap();
        assert_eq!(c(f(1, 2, 1), &[f(0, 0, 1)]), f(1, 2, 1));
        assert_eq!(c(f(1, 1, 1), &[f(1, 1, 1)]), f(2, 2, 1));
        assert_eq!(c(f(1, 2, 1), &[f(1, 2, 2), f(1, 2, 2)]), f(3, 7, 2));
        let shared = fmt_compose(&f(1, 2, 1), &[f(1, 2, 2), f(1, 2, 2)], ChainSharing::Shared);
        assert_eq!(shared.unwrap(), f(2, 7, 2));
    }

    #[test]
    fn compose_rejects_constant_inner() {
        let err = fmt_compose(&f(1, 2, 1), &[f(0, 0, 1), f(0, 0, 0)], ChainSharing::Disjoint);
        assert_eq!(err, Err(FormatError::DegenerateInnerDegree { index: 1 }));
        let err = fmt_compose(&f(1, 2, 1), &[], ChainSharing::Disjoint);
        assert_eq!(err, Err(FormatError::EmptyInnerList));
    }

    #[test]
    fn tagged_compose_counts_each_chain_once() {
        let a = f(2, 1, 1);
        let b = f(3, 1, 1);
        let inners = [("x", &a), ("x", &b), ("y", &a)];
        assert_eq!(fmt_compose_tagged(&f(1, 0, 1), &inners).unwrap().q, BigUint::from(6u32));
    }

    #[test]
    fn exp_and_reciprocal_extensions() {
        assert_eq!(fmt_exp_extend(&f(0, 0, 1)), f(1, 1, 1));
        assert_eq!(fmt_exp_extend(&f(0, 0, 2)), f(1, 2, 1));
        assert_eq!(fmt_exp_extend(&f(1, 1, 1)), f(2, 2, 1));
        assert_eq!(fmt_reciprocal_extend(&f(1, 1, 1)), f(2, 3, 1));
        assert_eq!(fmt_reciprocal_extend(&f(2, 2, 1)), f(3, 4, 1));
    }

    #[test]
    fn residual_precompose_replicate() {
        assert_eq!(fmt_residual(&f(1, 2, 1)), f(1, 2, 1));
        assert_eq!(fmt_residual(&f(0, 0, 0)), f(0, 0, 1));
        assert_eq!(fmt_residual(&f(2, 4, 3)), f(2, 4, 3));
        for a in [f(1, 2, 1), f(0, 0, 2), f(2, 2, 2)] {
            assert_eq!(fmt_affine_precompose(&a), a);
        }
        let n = |k: u32| BigUint::from(k);
        assert_eq!(fmt_replicate(&f(1, 1, 1), &n(3)).unwrap(), f(3, 1, 1));
        assert_eq!(fmt_replicate(&f(2, 4, 2), &n(1)).unwrap(), f(2, 4, 2));
        assert_eq!(fmt_replicate(&f(1, 2, 1), &n(5)).unwrap(), f(5, 2, 1));
        assert_eq!(fmt_replicate(&f(1, 2, 1), &n(0)), Err(FormatError::ZeroCopies));
    }

    #[test]
    fn partial_order() {
        assert!(f(1, 2, 1) < f(1, 2, 2));
        assert_eq!(f(1, 0, 0).partial_cmp(&f(0, 1, 0)), None);
        assert_eq!(f(1, 0, 0).join(&f(0, 1, 0)), f(1, 1, 0));
    }

    #[test]
    fn wide_values_do_not_overflow() {
        let big = PfaffFormat::from_naturals(
            BigUint::from(u64::MAX),
            BigUint::from(u64::MAX),
            BigUint::from(u64::MAX),
        );
        let out = fmt_compose(&big, &[big.clone()], ChainSharing::Disjoint).unwrap();
        assert_eq!(out.degree, BigUint::from(u64::MAX) * BigUint::from(u64::MAX));
    }

    #[test]
    fn json_form() {
        let text = serde_json::to_string(&f(1, 2, 1)).unwrap();
        assert_eq!(text, r#"{"q":1,"D":2,"d":1}"#);
        let huge: PfaffFormat =
            serde_json::from_str(r#"{"q":"340282366920938463463374607431768211456","D":0,"d":1}"#)
                .unwrap();
        assert_eq!(huge.q, BigUint::from(1u8) << 128);
        assert!(serde_json::to_string(&huge).unwrap().contains("\"340282366920938463463374607431768211456\""));
    }

    fn arb_format() -> impl Strategy<Value = PfaffFormat> {
        (0u64..20, 0u64..20, 0u64..20).prop_map(|(q, dd, d)| f(q, dd, d))
    }

    fn arb_nonconstant() -> impl Strategy<Value = PfaffFormat> {
        (0u64..20, 0u64..20, 1u64..20).prop_map(|(q, dd, d)| f(q, dd, d))
    }

    fn bump() -> impl Strategy<Value = PfaffFormat> {
        (0u64..5, 0u64..5, 0u64..5).prop_map(|(q, dd, d)| f(q, dd, d))
    }

    fn add(a: &PfaffFormat, b: &PfaffFormat) -> PfaffFormat {
        PfaffFormat::from_naturals(&a.q + &b.q, &a.chain_degree + &b.chain_degree, &a.degree + &b.degree)
    }

    proptest! {
        #[test]
        fn binary_ops_commute(a in arb_format(), b in arb_format()) {
            for s in [ChainSharing::Disjoint, ChainSharing::Shared] {
                prop_assert_eq!(fmt_sum(&a, &b, s), fmt_sum(&b, &a, s));
                prop_assert_eq!(fmt_product(&a, &b, s), fmt_product(&b, &a, s));
            }
        }

        #[test]
        fn binary_ops_monotone(a in arb_format(), b in arb_format(), da in bump(), db in bump()) {
            let (a2, b2) = (add(&a, &da), add(&b, &db));
            for s in [ChainSharing::Disjoint, ChainSharing::Shared] {
                prop_assert!(fmt_sum(&a, &b, s).dominated_by(&fmt_sum(&a2, &b2, s)));
                prop_assert!(fmt_product(&a, &b, s).dominated_by(&fmt_product(&a2, &b2, s)));
            }
        }

        #[test]
        fn compose_monotone(o in arb_format(), i in arb_nonconstant(), j in arb_nonconstant(),
                            d1 in bump(), d2 in bump()) {
            let base = fmt_compose(&o, &[i.clone(), j.clone()], ChainSharing::Disjoint).unwrap();
            let grown = fmt_compose(&add(&o, &d1), &[add(&i, &d2), j], ChainSharing::Disjoint).unwrap();
            prop_assert!(base.dominated_by(&grown));
        }

        #[test]
        fn unary_ops_monotone(a in arb_format(), da in bump()) {
            let a2 = add(&a, &da);
            prop_assert!(fmt_derivative(&a).dominated_by(&fmt_derivative(&a2)));
            prop_assert!(fmt_chain_extend(&a).dominated_by(&fmt_chain_extend(&a2)));
            prop_assert!(fmt_residual(&a).dominated_by(&fmt_residual(&a2)));
            prop_assert!(fmt_exp_extend(&a).dominated_by(&fmt_exp_extend(&a2)));
            prop_assert!(fmt_reciprocal_extend(&a).dominated_by(&fmt_reciprocal_extend(&a2)));
        }

        #[test]
        fn affine_inner_is_precompose(o in arb_format()) {
            let c = fmt_compose(&o, &[PfaffFormat::affine()], ChainSharing::Disjoint).unwrap();
            prop_assert_eq!(c, fmt_affine_precompose(&o));
        }

        #[test]
        fn residual_is_shared_sum_with_identity(a in arb_format()) {
            prop_assert_eq!(fmt_residual(&a), fmt_sum(&a, &PfaffFormat::affine(), ChainSharing::Shared));
        }

        #[test]
        fn shared_never_exceeds_disjoint(a in arb_format(), b in arb_format()) {
            prop_assert!(fmt_sum(&a, &b, ChainSharing::Shared).dominated_by(&fmt_sum(&a, &b, ChainSharing::Disjoint)));
            prop_assert!(fmt_product(&a, &b, ChainSharing::Shared).dominated_by(&fmt_product(&a, &b, ChainSharing::Disjoint)));
        }
    }
}
