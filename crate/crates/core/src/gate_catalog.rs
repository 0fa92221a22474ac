//! The gate dictionary: every building block with its definability class and,
//! for smooth Pfaffian gates, a format bound.
//!
//! Gates are instantiated from a name and a hyperparameter map. Dimensions
//! (`input_dim`, `param_count`, `output_dim`) are computed from the
//! hyperparameters; the format is always the bound for one output unit, and
//! [`FormatRule`] says how the analyzer lifts it to the whole node.

use crate::format_algebra::{
    fmt_exp_extend, fmt_product, fmt_reciprocal_extend, fmt_sum, ChainSharing, PfaffFormat,
};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use thiserror::Error;

pub type Hyperparams = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("gate {gate:?} needs hyperparameter {key:?}")]
    MissingHyperparam { gate: String, key: String },
    #[error("gate {gate:?}: hyperparameter {key:?} {reason}")]
    InvalidHyperparam { gate: String, key: String, reason: String },
    #[error("gate {gate:?}: {reason}")]
    UnboundedDomain { gate: String, reason: String },
    #[error("unknown loss {0:?}")]
    UnknownLoss(String),
    #[error("sequence length must be at least 1")]
    InvalidSequenceLength,
    #[error("score degree must be at least 1")]
    InvalidScoreDegree,
}

/// Structures a gate can be definable in, ordered by expansion.
///
/// `Top` is the Pfaffian closure of the restricted-analytic field, the least
/// structure known to contain both `RAnExp` and `PfaffianClosure`. Every
/// element except `NotDefinable` is o-minimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DefinabilityClass {
    SemiAlgebraic,
    RAn,
    RExp,
    RAnExp,
    PfaffianClosure,
    Top,
    NotDefinable,
}

impl DefinabilityClass {
    pub const ALL: [DefinabilityClass; 7] = [
        Self::SemiAlgebraic,
        Self::RAn,
        Self::RExp,
        Self::RAnExp,
        Self::PfaffianClosure,
        Self::Top,
        Self::NotDefinable,
    ];

    /// Lattice order: every set definable in `self` is definable in `other`.
    pub fn leq(self, other: Self) -> bool {
        use DefinabilityClass::*;
        if self == other || self == SemiAlgebraic || other == NotDefinable {
            return true;
        }
        match self {
            RAn => matches!(other, RAnExp | Top),
            RExp => matches!(other, RAnExp | PfaffianClosure | Top),
            RAnExp | PfaffianClosure => other == Top,
            _ => false,
        }
    }

    pub fn join(self, other: Self) -> Self {
        Self::ALL
            .into_iter()
            .filter(|c| self.leq(*c) && other.leq(*c))
            .find(|c| {
                Self::ALL
                    .into_iter()
                    .all(|u| !(self.leq(u) && other.leq(u)) || c.leq(u))
            })
            .expect("class order is a lattice")
    }

    pub fn is_definable(self) -> bool {
        self != Self::NotDefinable
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::SemiAlgebraic => "semi-algebraic (real field)",
            Self::RAn => "restricted analytic functions",
            Self::RExp => "real exponential field",
            Self::RAnExp => "restricted analytic functions with exponentiation",
            Self::PfaffianClosure => "Pfaffian closure of the real field",
            Self::Top => "Pfaffian closure of the restricted analytic field",
            Self::NotDefinable => "not definable in any o-minimal structure",
        }
    }
}

impl fmt::Display for DefinabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for DefinabilityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown definability class {s:?}"))
    }
}

/// Least upper bound of a list of classes; the empty join is `SemiAlgebraic`.
pub fn join_classes(classes: &[DefinabilityClass]) -> DefinabilityClass {
    classes
        .iter()
        .fold(DefinabilityClass::SemiAlgebraic, |acc, c| acc.join(*c))
}

/// How a node's format follows from its parents' formats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum FormatRule {
    /// Compose `copies` replicas of the unit format over the parents.
    Pfaffian {
        unit: PfaffFormat,
        #[serde(with = "crate::natural")]
        copies: BigUint,
    },
    /// A polynomial map of the given degree in the parent outputs.
    Polynomial { degree: u64 },
    /// No Pfaffian format is known.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSpec {
    pub name: String,
    pub input_dim: u64,
    pub param_count: u64,
    pub output_dim: u64,
    pub class: DefinabilityClass,
    /// Format bound for one output unit, in the gate inputs.
    pub format: Option<PfaffFormat>,
    /// Format bound jointly in inputs and parameters, when it differs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joint_format: Option<PfaffFormat>,
    pub smooth: bool,
    pub rule: FormatRule,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    /// Assumptions the user asserts by including the gate.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub obligations: Vec<String>,
}

impl GateSpec {
    /// A placeholder for a gate whose instantiation is known not to be
    /// definable; keeps dimensions so the graph still validates.
    pub fn not_definable(name: &str, n: u64, p: u64, m: u64, note: String) -> Self {
        GateSpec {
            name: name.to_string(),
            input_dim: n,
            param_count: p,
            output_dim: m,
            class: DefinabilityClass::NotDefinable,
            format: None,
            joint_format: None,
            smooth: false,
            rule: FormatRule::Unavailable,
            notes: vec![note],
            obligations: Vec::new(),
        }
    }
}

/// How a format bound was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatDerivation {
    pub format: PfaffFormat,
    pub steps: Vec<String>,
}

struct Hp<'a> {
    gate: &'a str,
    map: &'a Hyperparams,
}

impl Hp<'_> {
    fn missing(&self, key: &str) -> CatalogError {
        CatalogError::MissingHyperparam { gate: self.gate.into(), key: key.into() }
    }

    fn invalid(&self, key: &str, reason: &str) -> CatalogError {
        CatalogError::InvalidHyperparam {
            gate: self.gate.into(),
            key: key.into(),
            reason: reason.into(),
        }
    }

    fn opt_u64(&self, key: &str) -> Result<Option<u64>, CatalogError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| self.invalid(key, "must be a nonnegative integer")),
        }
    }

    fn u64(&self, key: &str) -> Result<u64, CatalogError> {
        self.opt_u64(key)?.ok_or_else(|| self.missing(key))
    }

    fn pos(&self, key: &str) -> Result<u64, CatalogError> {
        match self.u64(key)? {
            0 => Err(self.invalid(key, "must be at least 1")),
            v => Ok(v),
        }
    }

    fn pos_or(&self, key: &str, default: u64) -> Result<u64, CatalogError> {
        match self.opt_u64(key)? {
            None => Ok(default),
            Some(0) => Err(self.invalid(key, "must be at least 1")),
            Some(v) => Ok(v),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CatalogError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| self.invalid(key, "must be a boolean")),
        }
    }

    fn str_or<'b>(&'b self, key: &str, default: &'b str) -> Result<&'b str, CatalogError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v.as_str().ok_or_else(|| self.invalid(key, "must be a string")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CatalogError> {
        match self.map.get(key) {
            None | Some(Value::Null) => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| self.invalid(key, "must be a number")),
        }
    }

    fn class(&self, key: &str) -> Result<DefinabilityClass, CatalogError> {
        let s = self.map.get(key).and_then(Value::as_str).ok_or_else(|| self.missing(key))?;
        s.parse().map_err(|e: String| self.invalid(key, &e))
    }
}

struct Entry {
    name: &'static str,
    summary: &'static str,
    required: &'static [&'static str],
    optional: &'static [&'static str],
    /// Hyperparameters used to instantiate the entry for listings.
    example: &'static str,
    build: fn(&Hp) -> Result<GateSpec, CatalogError>,
}

fn spec(hp: &Hp, n: u64, p: u64, m: u64, class: DefinabilityClass) -> GateSpec {
    GateSpec {
        name: hp.gate.to_string(),
        input_dim: n,
        param_count: p,
        output_dim: m,
        class,
        format: None,
        joint_format: None,
        smooth: false,
        rule: FormatRule::Unavailable,
        notes: Vec::new(),
        obligations: Vec::new(),
    }
}

impl GateSpec {
    fn pfaffian(mut self, unit: PfaffFormat, copies: u64) -> Self {
        self.format = Some(unit.clone());
        self.smooth = true;
        self.rule = FormatRule::Pfaffian { unit, copies: copies.into() };
        self
    }

    fn polynomial(mut self, degree: u64) -> Self {
        self.format = Some(PfaffFormat::polynomial(degree));
        self.smooth = true;
        self.rule = FormatRule::Polynomial { degree };
        self
    }

    fn affine(self) -> Self {
        let mut s = self.polynomial(1);
        s.joint_format = Some(PfaffFormat::polynomial(2));
        s
    }

    fn note(mut self, text: impl Into<String>) -> Self {
        self.notes.push(text.into());
        self
    }

    fn obligation(mut self, text: impl Into<String>) -> Self {
        self.obligations.push(text.into());
        self
    }
}

fn elementwise(hp: &Hp, class: DefinabilityClass) -> Result<(GateSpec, u64), CatalogError> {
    let w = hp.pos("width")?;
    Ok((spec(hp, w, 0, w, class), w))
}

fn smooth_activation(
    hp: &Hp,
    class: DefinabilityClass,
    unit: PfaffFormat,
) -> Result<GateSpec, CatalogError> {
    let (s, w) = elementwise(hp, class)?;
    Ok(s.pfaffian(unit, w))
}

fn piecewise(hp: &Hp) -> Result<GateSpec, CatalogError> {
    let (s, _) = elementwise(hp, DefinabilityClass::SemiAlgebraic)?;
    Ok(s.note("piecewise polynomial; no Pfaffian format"))
}

/// `½x(1 + tanh(c(x + a x³)))`, with the format obtained by composing the
/// tanh chain over the cubic and multiplying by `x`.
pub fn gelu_tanh_format() -> FormatDerivation {
    use crate::format_algebra::fmt_compose;
    let tanh = PfaffFormat::new(1, 2, 1);
    let cubic = PfaffFormat::polynomial(3);
    let inner = fmt_compose(&tanh, &[cubic.clone()], ChainSharing::Disjoint)
        .expect("cubic has positive degree");
    let shifted = fmt_sum(&inner, &PfaffFormat::constant(), ChainSharing::Shared);
    let format = fmt_product(&PfaffFormat::affine(), &shifted, ChainSharing::Disjoint);
    FormatDerivation {
        steps: vec![
            format!("tanh {tanh} composed over cubic {cubic} -> {inner}"),
            format!("1 + tanh(..) on the same chain -> {shifted}"),
            format!("times x {} -> {format}", PfaffFormat::affine()),
        ],
        format,
    }
}

/// `f` read as a function over the longer chain that `host` lives on.
fn lift_to_chain(f: &PfaffFormat, host: &PfaffFormat) -> PfaffFormat {
    PfaffFormat::from_naturals(host.q.clone(), host.chain_degree.clone(), f.degree.clone())
}

/// Format bound for one output row of softmax attention over `seq_len` keys
/// whose scores are polynomials of degree `score_degree`.
pub fn attention_format(seq_len: u64, score_degree: u64) -> Result<FormatDerivation, CatalogError> {
    if seq_len == 0 {
        return Err(CatalogError::InvalidSequenceLength);
    }
    if score_degree == 0 {
        return Err(CatalogError::InvalidScoreDegree);
    }
    if seq_len == 1 {
        return Ok(FormatDerivation {
            format: PfaffFormat::affine(),
            steps: vec![
                "one key: the softmax weight is identically 1".into(),
                "row = value projection (0,0,1)".into(),
            ],
        });
    }
    let mut steps = Vec::new();
    let score = PfaffFormat::polynomial(score_degree);
    let exp = fmt_exp_extend(&score);
    steps.push(format!("exp of a degree-{score_degree} score -> {exp}, one per key"));
    let mut total = exp.clone();
    for _ in 1..seq_len {
        total = fmt_sum(&total, &exp, ChainSharing::Disjoint);
    }
    steps.push(format!("sum of {seq_len} exponentials on disjoint chains -> {total}"));
    let recip = fmt_reciprocal_extend(&total);
    steps.push(format!("reciprocal of the sum appended to the chain -> {recip}"));
    let exp_on_chain = lift_to_chain(&exp, &recip);
    let weight = fmt_product(&exp_on_chain, &recip, ChainSharing::Shared);
    steps.push(format!("weight exp_j * reciprocal on the combined chain -> {weight}"));
    let term = fmt_product(&weight, &PfaffFormat::affine(), ChainSharing::Shared);
    steps.push(format!("times the value projection (0,0,1) -> {term}"));
    let mut row = term.clone();
    for _ in 1..seq_len {
        row = fmt_sum(&row, &term, ChainSharing::Shared);
    }
    steps.push(format!("sum over keys on the combined chain -> {row}"));
    Ok(FormatDerivation { format: row, steps })
}

/// Format bound for one coordinate of softmax over `width` logits.
pub fn softmax_format(width: u64) -> FormatDerivation {
    if width <= 1 {
        return FormatDerivation {
            format: PfaffFormat::affine(),
            steps: vec!["one logit: the output is identically 1, bounded by (0,0,1)".into()],
        };
    }
    let exp = fmt_exp_extend(&PfaffFormat::affine());
    let mut total = exp.clone();
    for _ in 1..width {
        total = fmt_sum(&total, &exp, ChainSharing::Disjoint);
    }
    let recip = fmt_reciprocal_extend(&total);
    let format = fmt_product(&lift_to_chain(&exp, &recip), &recip, ChainSharing::Shared);
    FormatDerivation {
        steps: vec![
            format!("exp of each logit -> {exp}"),
            format!("sum of {width} exponentials -> {total}"),
            format!("reciprocal appended to the chain -> {recip}"),
            format!("exp_i * reciprocal on the combined chain -> {format}"),
        ],
        format,
    }
}

fn attention_params(h: u64, d_model: u64, d_context: u64, dk: u64, dv: u64, out: u64) -> u64 {
    h * (d_model * dk + d_context * (dk + dv)) + h * dv * out
}

fn build_attention(hp: &Hp, keys: u64, queries: u64, n: u64, d_model: u64, d_context: u64) -> Result<GateSpec, CatalogError> {
    let heads = hp.pos("heads")?;
    let dk = hp.pos("d_k")?;
    let dv = hp.pos("d_v")?;
    let out = hp.pos_or("d_out", d_model)?;
    if hp.f64_or("temperature", 1.0)? <= 0.0 {
        return Err(hp.invalid("temperature", "must be positive"));
    }
    let p = attention_params(heads, d_model, d_context, dk, dv, out);
    let derivation = attention_format(keys, 2)?;
    let mut s = spec(hp, n, p, queries * out, DefinabilityClass::RExp)
        .pfaffian(derivation.format, queries * heads)
        .note("format bound derived by composing exp, reciprocal and product bounds; scores of degree 2 in the inputs");
    s.notes.extend(derivation.steps);
    Ok(s)
}

fn pool(hp: &Hp) -> Result<(u64, u64, u64), CatalogError> {
    let w = hp.pos("width")?;
    let window = hp.pos("window")?;
    let stride = hp.pos_or("stride", window)?;
    if window > w {
        return Err(hp.invalid("window", "exceeds width"));
    }
    Ok((w, window, (w - window) / stride + 1))
}

fn norm(hp: &Hp, per_unit_affine: u64) -> Result<GateSpec, CatalogError> {
    let w = hp.pos("width")?;
    let positions = hp.pos_or("positions", 1)?;
    let eps = hp.f64_or("epsilon", 1e-5)?;
    if !(eps > 0.0) {
        return Err(hp.invalid("epsilon", "must be positive"));
    }
    let p = if hp.bool_or("affine", false)? { per_unit_affine * w } else { 0 };
    Ok(spec(hp, positions * w, p, positions * w, DefinabilityClass::SemiAlgebraic)
        .note("rational in the inputs and a square root of a positive quadratic; no format catalogued"))
}

fn fourier_pe(hp: &Hp) -> Result<GateSpec, CatalogError> {
    use DefinabilityClass::*;
    let t = hp.pos("positions")?;
    let w = hp.pos("width")?;
    let domain = hp.str_or("domain", "bounded")?;
    let trainable = hp.bool_or("trainable_frequencies", false)?;
    let freq_domain = hp.str_or("frequency_domain", "bounded")?;
    for (key, v) in [("domain", domain), ("frequency_domain", freq_domain)] {
        if !matches!(v, "finite" | "bounded" | "unbounded") || (key == "frequency_domain" && v == "finite") {
            return Err(hp.invalid(key, "must be \"finite\", \"bounded\" or \"unbounded\""));
        }
    }
    if domain == "unbounded" {
        return Err(CatalogError::UnboundedDomain {
            gate: hp.gate.into(),
            reason: "sinusoids on an unbounded domain have infinitely many sublevel components".into(),
        });
    }
    if trainable && freq_domain == "unbounded" {
        return Err(CatalogError::UnboundedDomain {
            gate: hp.gate.into(),
            reason: "trainable frequencies need a bounded parameter domain".into(),
        });
    }
    let class = if domain == "finite" && !trainable { SemiAlgebraic } else { RAn };
    let p = if trainable { w } else { 0 };
    let mut s = spec(hp, t * w, p, t * w, class).note("added to its input");
    if class == RAn {
        s = s.obligation(format!(
            "{}: positions and frequencies range over a bounded domain",
            hp.gate
        ));
    }
    Ok(s)
}

fn deq(hp: &Hp) -> Result<GateSpec, CatalogError> {
    let w = hp.pos("width")?;
    let p = hp.opt_u64("params")?.unwrap_or(0);
    let class = hp.class("f_class")?.join(hp.class("g_class")?);
    if !hp.bool_or("unique_fixed_point", false)? {
        return Err(hp.invalid("unique_fixed_point", "must be asserted true"));
    }
    Ok(spec(hp, w, p, w, class)
        .note("deep equilibrium layer; no format")
        .obligation(format!("{}: the fixed-point equation has a unique solution for every input and parameter", hp.gate)))
}

fn custom_pfaffian(hp: &Hp) -> Result<GateSpec, CatalogError> {
    let n = hp.pos("in")?;
    let m = hp.pos("out")?;
    let q = hp.u64("q")?;
    let dd = hp.u64("D")?;
    let d = hp.pos("d")?;
    let p = hp.opt_u64("params")?.unwrap_or(0);
    let class = match hp.map.get("class") {
        None | Some(Value::Null) => DefinabilityClass::PfaffianClosure,
        Some(_) => hp.class("class")?,
    };
    if !class.is_definable() {
        return Err(hp.invalid("class", "a Pfaffian layer is definable"));
    }
    Ok(spec(hp, n, p, m, class)
        .pfaffian(PfaffFormat::new(q, dd, d), 1)
        .note("user-declared layer format over one chain shared by all outputs"))
}

fn entries() -> Vec<Entry> {
    use DefinabilityClass::*;
    vec![
        Entry {
            name: "affine",
            summary: "x -> Wx + b, optionally shared across positions",
            required: &["in", "out"],
            optional: &["bias", "positions"],
            example: r#"{"in":1,"out":1}"#,
            build: |hp| {
                let (i, o) = (hp.pos("in")?, hp.pos("out")?);
                let t = hp.pos_or("positions", 1)?;
                let bias = hp.bool_or("bias", true)?;
                let p = o * i + if bias { o } else { 0 };
                Ok(spec(hp, t * i, p, t * o, SemiAlgebraic).affine())
            },
        },
        Entry {
            name: "conv1d",
            summary: "one-dimensional convolution (Toeplitz affine map)",
            required: &["channels_in", "channels_out", "kernel", "length"],
            optional: &["stride", "bias"],
            example: r#"{"channels_in":1,"channels_out":1,"kernel":1,"length":1}"#,
            build: |hp| {
                let (ci, co) = (hp.pos("channels_in")?, hp.pos("channels_out")?);
                let (k, len) = (hp.pos("kernel")?, hp.pos("length")?);
                let stride = hp.pos_or("stride", 1)?;
                if k > len {
                    return Err(hp.invalid("kernel", "exceeds length"));
                }
                let bias = hp.bool_or("bias", true)?;
                let p = co * ci * k + if bias { co } else { 0 };
                let m = co * ((len - k) / stride + 1);
                Ok(spec(hp, ci * len, p, m, SemiAlgebraic)
                    .affine()
                    .note("kernel weights are shared across output positions"))
            },
        },
        Entry {
            name: "batchnorm_inference",
            summary: "batch normalization with frozen population statistics",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, SemiAlgebraic)?;
                Ok(s.affine().note("affine with fixed statistics"))
            },
        },
        Entry {
            name: "add",
            summary: "coordinatewise sum of the parent blocks",
            required: &["width"],
            optional: &["arity"],
            example: r#"{"width":1}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                let k = hp.pos_or("arity", 2)?;
                Ok(spec(hp, k * w, 0, w, SemiAlgebraic).polynomial(1))
            },
        },
        Entry {
            name: "residual",
            summary: "x + F(x) over parents (x, F(x))",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                Ok(spec(hp, 2 * w, 0, w, SemiAlgebraic).polynomial(1))
            },
        },
        Entry {
            name: "gated_residual",
            summary: "x + G(x) * F(x) over parents (x, G(x), F(x))",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                Ok(spec(hp, 3 * w, 0, w, SemiAlgebraic).polynomial(2))
            },
        },
        Entry {
            name: "hadamard",
            summary: "coordinatewise product of two parent blocks",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                Ok(spec(hp, 2 * w, 0, w, SemiAlgebraic).polynomial(2))
            },
        },
        Entry {
            name: "polynomial",
            summary: "coordinatewise monomial x^k",
            required: &["width", "degree"],
            optional: &[],
            example: r#"{"width":1,"degree":2}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, SemiAlgebraic)?;
                Ok(s.polynomial(hp.pos("degree")?))
            },
        },
        Entry {
            name: "sigmoid",
            summary: "logistic sigmoid",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| smooth_activation(hp, RExp, PfaffFormat::new(1, 2, 1)),
        },
        Entry {
            name: "tanh",
            summary: "hyperbolic tangent",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| smooth_activation(hp, RExp, PfaffFormat::new(1, 2, 1)),
        },
        Entry {
            name: "softplus",
            summary: "log(1 + e^x)",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| smooth_activation(hp, RExp, PfaffFormat::new(2, 2, 1)),
        },
        Entry {
            name: "gelu",
            summary: "x * Phi(x) with the Gaussian distribution function",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| smooth_activation(hp, PfaffianClosure, PfaffFormat::new(2, 2, 2)),
        },
        Entry {
            name: "gelu_tanh",
            summary: "tanh approximation of GELU",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let derivation = gelu_tanh_format();
                let mut s = smooth_activation(hp, RExp, derivation.format)?;
                s.notes.extend(derivation.steps);
                Ok(s)
            },
        },
        Entry {
            name: "swish",
            summary: "x * sigmoid(beta x), beta treated as a variable",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| smooth_activation(hp, RExp, PfaffFormat::new(2, 4, 2)),
        },
        Entry {
            name: "swiglu",
            summary: "x1 * swish(x2) over two parent halves",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                Ok(spec(hp, 2 * w, 0, w, RExp).pfaffian(PfaffFormat::new(2, 4, 3), w))
            },
        },
        Entry {
            name: "relu",
            summary: "max(0, x)",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: piecewise,
        },
        Entry {
            name: "leaky_relu",
            summary: "max(ax, x) with a fixed slope",
            required: &["width"],
            optional: &["slope"],
            example: r#"{"width":1}"#,
            build: piecewise,
        },
        Entry {
            name: "prelu",
            summary: "leaky ReLU with trainable slope",
            required: &["width"],
            optional: &["shared"],
            example: r#"{"width":1}"#,
            build: |hp| {
                let mut s = piecewise(hp)?;
                s.param_count = if hp.bool_or("shared", false)? { 1 } else { s.output_dim };
                Ok(s)
            },
        },
        Entry {
            name: "relu_pow",
            summary: "max(0, x)^k",
            required: &["width", "power"],
            optional: &[],
            example: r#"{"width":1,"power":2}"#,
            build: |hp| {
                hp.pos("power")?;
                piecewise(hp)
            },
        },
        Entry {
            name: "hard_tanh",
            summary: "clip(x, -1, 1)",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: piecewise,
        },
        Entry {
            name: "hard_sigmoid",
            summary: "clip((x + 1)/2, 0, 1)",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: piecewise,
        },
        Entry {
            name: "spline",
            summary: "learnable piecewise-polynomial activation (KAN-style)",
            required: &["width", "knots"],
            optional: &["degree"],
            example: r#"{"width":1,"knots":4}"#,
            build: |hp| {
                let mut s = piecewise(hp)?;
                let k = hp.pos("knots")?;
                let deg = hp.pos_or("degree", 3)?;
                s.param_count = s.output_dim * (k + deg);
                Ok(s)
            },
        },
        Entry {
            name: "elu",
            summary: "x for x > 0, e^x - 1 otherwise",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, RExp)?;
                Ok(s.note("not smooth at 0; no Pfaffian format"))
            },
        },
        Entry {
            name: "selu",
            summary: "scaled ELU",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, RExp)?;
                Ok(s.note("not smooth at 0; no Pfaffian format"))
            },
        },
        Entry {
            name: "softsign",
            summary: "x / (1 + |x|)",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: piecewise,
        },
        Entry {
            name: "mish",
            summary: "x * tanh(softplus(x))",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, RExp)?;
                Ok(s.note("no catalogued format"))
            },
        },
        Entry {
            name: "maxout",
            summary: "maximum over groups of parent coordinates",
            required: &["width", "pieces"],
            optional: &[],
            example: r#"{"width":1,"pieces":2}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                let k = hp.pos("pieces")?;
                Ok(spec(hp, w * k, 0, w, SemiAlgebraic).note("piecewise affine gating"))
            },
        },
        Entry {
            name: "winner_take_all",
            summary: "keeps the largest coordinate, zeroes the rest",
            required: &["width"],
            optional: &[],
            example: r#"{"width":1}"#,
            build: |hp| {
                let (s, _) = elementwise(hp, SemiAlgebraic)?;
                Ok(s.note("piecewise affine gating"))
            },
        },
        Entry {
            name: "max_pool",
            summary: "maximum over sliding windows",
            required: &["width", "window"],
            optional: &["stride"],
            example: r#"{"width":1,"window":1}"#,
            build: |hp| {
                let (w, _, m) = pool(hp)?;
                Ok(spec(hp, w, 0, m, SemiAlgebraic).note("piecewise affine; no format"))
            },
        },
        Entry {
            name: "avg_pool",
            summary: "mean over sliding windows",
            required: &["width", "window"],
            optional: &["stride"],
            example: r#"{"width":1,"window":1}"#,
            build: |hp| {
                let (w, _, m) = pool(hp)?;
                Ok(spec(hp, w, 0, m, SemiAlgebraic).polynomial(1))
            },
        },
        Entry {
            name: "softmax",
            summary: "normalized exponentials, per position",
            required: &["width"],
            optional: &["positions"],
            example: r#"{"width":2}"#,
            build: |hp| {
                let w = hp.pos("width")?;
                let t = hp.pos_or("positions", 1)?;
                let derivation = softmax_format(w);
                let mut s = spec(hp, t * w, 0, t * w, RExp).pfaffian(derivation.format, t * w);
                s.notes.extend(derivation.steps);
                Ok(s)
            },
        },
        Entry {
            name: "attention",
            summary: "multi-head self-attention with output projection",
            required: &["seq_len", "d_model", "heads", "d_k", "d_v"],
            optional: &["d_out", "temperature"],
            example: r#"{"seq_len":2,"d_model":1,"heads":1,"d_k":1,"d_v":1}"#,
            build: |hp| {
                let t = hp.pos("seq_len")?;
                let d = hp.pos("d_model")?;
                build_attention(hp, t, t, t * d, d, d)
            },
        },
        Entry {
            name: "cross_attention",
            summary: "multi-head attention from a query sequence to a context sequence",
            required: &["seq_len", "context_len", "d_model", "heads", "d_k", "d_v"],
            optional: &["d_context", "d_out", "temperature"],
            example: r#"{"seq_len":1,"context_len":2,"d_model":1,"heads":1,"d_k":1,"d_v":1}"#,
            build: |hp| {
                let t = hp.pos("seq_len")?;
                let s = hp.pos("context_len")?;
                let d = hp.pos("d_model")?;
                let dc = hp.pos_or("d_context", d)?;
                build_attention(hp, s, t, t * d + s * dc, d, dc)
            },
        },
        Entry {
            name: "sliding_window_attention",
            summary: "self-attention restricted to a fixed window of keys",
            required: &["seq_len", "window", "d_model", "heads", "d_k", "d_v"],
            optional: &["d_out", "temperature"],
            example: r#"{"seq_len":2,"window":1,"d_model":1,"heads":1,"d_k":1,"d_v":1}"#,
            build: |hp| {
                let t = hp.pos("seq_len")?;
                let window = hp.pos("window")?;
                let d = hp.pos("d_model")?;
                build_attention(hp, window.min(t), t, t * d, d, d)
            },
        },
        Entry {
            name: "layer_norm",
            summary: "row-wise centering and scaling with epsilon > 0",
            required: &["width"],
            optional: &["positions", "epsilon", "affine"],
            example: r#"{"width":1}"#,
            build: |hp| norm(hp, 2),
        },
        Entry {
            name: "rms_norm",
            summary: "root-mean-square normalization",
            required: &["width"],
            optional: &["positions", "epsilon", "affine"],
            example: r#"{"width":1}"#,
            build: |hp| norm(hp, 1),
        },
        Entry {
            name: "group_norm",
            summary: "normalization over channel groups",
            required: &["width", "groups"],
            optional: &["positions", "epsilon", "affine"],
            example: r#"{"width":2,"groups":1}"#,
            build: |hp| {
                let g = hp.pos("groups")?;
                if hp.pos("width")? % g != 0 {
                    return Err(hp.invalid("groups", "must divide width"));
                }
                norm(hp, 2)
            },
        },
        Entry {
            name: "instance_norm",
            summary: "per-channel normalization",
            required: &["width"],
            optional: &["positions", "epsilon", "affine"],
            example: r#"{"width":1}"#,
            build: |hp| norm(hp, 2),
        },
        Entry {
            name: "embedding",
            summary: "token lookup in a trainable table, one row per position",
            required: &["vocab", "dim"],
            optional: &["positions"],
            example: r#"{"vocab":2,"dim":1}"#,
            build: |hp| {
                let (v, d) = (hp.pos("vocab")?, hp.pos("dim")?);
                let t = hp.pos_or("positions", 1)?;
                Ok(spec(hp, t, v * d, t * d, SemiAlgebraic).note("piecewise constant in the token index"))
            },
        },
        Entry {
            name: "fourier_pe",
            summary: "additive sinusoidal positional encoding",
            required: &["positions", "width"],
            optional: &["domain", "trainable_frequencies", "frequency_domain"],
            example: r#"{"positions":1,"width":1}"#,
            build: fourier_pe,
        },
        Entry {
            name: "deq",
            summary: "deep equilibrium layer z = F(z, x), output G(z)",
            required: &["width", "f_class", "g_class", "unique_fixed_point"],
            optional: &["params"],
            example: r#"{"width":1,"f_class":"SemiAlgebraic","g_class":"SemiAlgebraic","unique_fixed_point":true}"#,
            build: deq,
        },
        Entry {
            name: "pfaffian",
            summary: "layer with a user-declared format over one shared chain",
            required: &["in", "out", "q", "D", "d"],
            optional: &["params", "class"],
            example: r#"{"in":1,"out":1,"q":1,"D":1,"d":1}"#,
            build: custom_pfaffian,
        },
    ]
}

fn catalog() -> &'static BTreeMap<&'static str, Entry> {
    static CATALOG: OnceLock<BTreeMap<&'static str, Entry>> = OnceLock::new();
    CATALOG.get_or_init(|| entries().into_iter().map(|e| (e.name, e)).collect())
}

pub fn gate_names() -> impl Iterator<Item = &'static str> {
    catalog().keys().copied()
}

pub fn lookup(name: &str, hyperparams: &Hyperparams) -> Result<GateSpec, CatalogError> {
    let entry = catalog()
        .get(name)
        .ok_or_else(|| CatalogError::UnknownGate(name.to_string()))?;
    (entry.build)(&Hp { gate: entry.name, map: hyperparams })
}

/// Like [`lookup`], but an instantiation that is known not to be definable
/// yields a `NotDefinable` spec instead of an error.
pub fn lookup_permissive(name: &str, hyperparams: &Hyperparams) -> Result<GateSpec, CatalogError> {
    match lookup(name, hyperparams) {
        Err(CatalogError::UnboundedDomain { gate, reason }) => {
            let hp = Hp { gate: &gate, map: hyperparams };
            let t = hp.pos("positions")?;
            let w = hp.pos("width")?;
            let p = if hp.bool_or("trainable_frequencies", false)? { w } else { 0 };
            Ok(GateSpec::not_definable(&gate, t * w, p, t * w, reason))
        }
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub name: String,
    pub summary: String,
    pub class: DefinabilityClass,
    pub format: Option<PfaffFormat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub joint_format: Option<PfaffFormat>,
    pub smooth: bool,
    pub required: Vec<String>,
    pub optional: Vec<String>,
    pub example: Hyperparams,
    pub caveats: Vec<String>,
}

/// One record per gate, instantiated at its example hyperparameters.
pub fn catalog_listing() -> Vec<CatalogRecord> {
    catalog()
        .values()
        .map(|e| {
            let example: Hyperparams = serde_json::from_str(e.example).expect("example hyperparameters parse");
            let g = lookup(e.name, &example).expect("example hyperparameters instantiate");
            CatalogRecord {
                name: e.name.into(),
                summary: e.summary.into(),
                class: g.class,
                format: g.format,
                joint_format: g.joint_format,
                smooth: g.smooth,
                required: e.required.iter().map(|s| s.to_string()).collect(),
                optional: e.optional.iter().map(|s| s.to_string()).collect(),
                example,
                caveats: g.notes.into_iter().chain(g.obligations).collect(),
            }
        })
        .collect()
}

pub const LOSS_NAMES: [&str; 4] = ["zero_one", "clipped_mse", "clipped_mae", "exp_squashed_mse"];

/// Loss functions `ℓ(ŷ, y)`, each with inputs `(ŷ, y)` and range `[0, 1]`.
pub fn loss_lookup(name: &str) -> Result<GateSpec, CatalogError> {
    let base = |class, note: &str| GateSpec {
        name: name.to_string(),
        input_dim: 2,
        param_count: 0,
        output_dim: 1,
        class,
        format: None,
        joint_format: None,
        smooth: false,
        rule: FormatRule::Unavailable,
        notes: vec![note.to_string(), "range [0, 1]".to_string()],
        obligations: Vec::new(),
    };
    match name {
        "zero_one" => Ok(base(
            DefinabilityClass::SemiAlgebraic,
            "classification indicator; handled by the classification planner",
        )),
        "clipped_mse" => Ok(base(DefinabilityClass::SemiAlgebraic, "min(1, (ŷ - y)^2)")),
        "clipped_mae" => Ok(base(DefinabilityClass::SemiAlgebraic, "min(1, |ŷ - y|)")),
        "exp_squashed_mse" => {
            let derivation = exp_squashed_mse_format();
            let mut s = base(DefinabilityClass::RExp, "1 - exp(-(ŷ - y)^2)")
                .pfaffian(derivation.format, 1);
            s.notes.extend(derivation.steps);
            Ok(s)
        }
        _ => Err(CatalogError::UnknownLoss(name.to_string())),
    }
}

/// `1 - e^{-(ŷ-y)^2}`: a single exponential chain over a quadratic.
pub fn exp_squashed_mse_format() -> FormatDerivation {
    let square = PfaffFormat::polynomial(2);
    let exp = fmt_exp_extend(&square);
    let format = fmt_sum(&exp, &PfaffFormat::constant(), ChainSharing::Shared);
    FormatDerivation {
        steps: vec![
            format!("exp of the quadratic -(ŷ - y)^2 -> {exp}"),
            format!("1 - exp(..) on the same chain -> {format}"),
        ],
        format,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use DefinabilityClass::*;

    fn hp(json: &str) -> Hyperparams {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn joins() {
        assert_eq!(join_classes(&[SemiAlgebraic, RExp]), RExp);
        assert_eq!(join_classes(&[RAn, RExp]), RAnExp);
        assert_eq!(join_classes(&[RExp, NotDefinable]), NotDefinable);
        assert_eq!(join_classes(&[RAnExp, PfaffianClosure]), Top);
        assert_eq!(join_classes(&[RAn, PfaffianClosure]), Top);
        assert_eq!(join_classes(&[RExp, PfaffianClosure]), PfaffianClosure);
        assert_eq!(join_classes(&[]), SemiAlgebraic);
    }

    #[test]
    fn order_facts() {
        assert!(!RAn.leq(PfaffianClosure));
        assert!(!PfaffianClosure.leq(RAnExp));
        assert!(!RAnExp.leq(PfaffianClosure));
        assert!(Top.is_definable());
        assert!(!NotDefinable.is_definable());
        assert_eq!("rexp".parse::<DefinabilityClass>(), Ok(RExp));
    }

    #[test]
    fn sigmoid_and_relu() {
        let s = lookup("sigmoid", &hp(r#"{"width":1}"#)).unwrap();
        assert_eq!(s.format, Some(PfaffFormat::new(1, 2, 1)));
        assert!(s.class.leq(PfaffianClosure) && s.class.leq(RAnExp));
        let r = lookup("relu", &hp(r#"{"width":4}"#)).unwrap();
        assert_eq!((r.class, r.format), (SemiAlgebraic, None));
        assert_eq!((r.input_dim, r.output_dim, r.param_count), (4, 4, 0));
    }

    #[test]
    fn fourier_pe_cases() {
        let err = lookup("fourier_pe", &hp(r#"{"positions":4,"width":2,"domain":"unbounded","trainable_frequencies":true}"#));
        assert!(matches!(err, Err(CatalogError::UnboundedDomain { .. })));
        let err = lookup("fourier_pe", &hp(r#"{"positions":4,"width":2,"trainable_frequencies":true,"frequency_domain":"unbounded"}"#));
        assert!(matches!(err, Err(CatalogError::UnboundedDomain { .. })));
        let fin = lookup("fourier_pe", &hp(r#"{"positions":4,"width":2,"domain":"finite"}"#)).unwrap();
        assert_eq!(fin.class, SemiAlgebraic);
        let bounded = lookup("fourier_pe", &hp(r#"{"positions":4,"width":2}"#)).unwrap();
        assert_eq!((bounded.class, bounded.param_count), (RAn, 0));
        let permissive = lookup_permissive("fourier_pe", &hp(r#"{"positions":4,"width":2,"domain":"unbounded"}"#)).unwrap();
        assert_eq!((permissive.class, permissive.input_dim), (NotDefinable, 8));
    }

    #[test]
    fn lookup_errors() {
        assert_eq!(lookup("nope", &hp("{}")), Err(CatalogError::UnknownGate("nope".into())));
        assert!(matches!(lookup("affine", &hp(r#"{"in":2}"#)), Err(CatalogError::MissingHyperparam { .. })));
        assert!(matches!(lookup("affine", &hp(r#"{"in":0,"out":1}"#)), Err(CatalogError::InvalidHyperparam { .. })));
        assert!(matches!(
            lookup("deq", &hp(r#"{"width":1,"f_class":"RExp","g_class":"SemiAlgebraic","unique_fixed_point":false}"#)),
            Err(CatalogError::InvalidHyperparam { .. })
        ));
    }

    #[test]
    fn dims_and_params() {
        let a = lookup("affine", &hp(r#"{"in":2,"out":3}"#)).unwrap();
        assert_eq!((a.input_dim, a.param_count, a.output_dim), (2, 9, 3));
        assert_eq!(a.joint_format, Some(PfaffFormat::new(0, 0, 2)));
        let a = lookup("affine", &hp(r#"{"in":2,"out":3,"positions":4,"bias":false}"#)).unwrap();
        assert_eq!((a.input_dim, a.param_count, a.output_dim), (8, 6, 12));
        let mha = lookup("attention", &hp(r#"{"seq_len":2,"d_model":2,"heads":1,"d_k":1,"d_v":1,"d_out":2}"#)).unwrap();
        assert_eq!((mha.input_dim, mha.param_count, mha.output_dim), (4, 8, 4));
        let c = lookup("conv1d", &hp(r#"{"channels_in":2,"channels_out":3,"kernel":3,"length":8,"stride":1}"#)).unwrap();
        assert_eq!((c.input_dim, c.param_count, c.output_dim), (16, 21, 18));
        let d = lookup("deq", &hp(r#"{"width":3,"f_class":"RExp","g_class":"RAn","unique_fixed_point":true,"params":5}"#)).unwrap();
        assert_eq!((d.class, d.param_count, d.obligations.len()), (RAnExp, 5, 1));
        let p = lookup("max_pool", &hp(r#"{"width":8,"window":2}"#)).unwrap();
        assert_eq!(p.output_dim, 4);
        let sw = lookup("swiglu", &hp(r#"{"width":3}"#)).unwrap();
        assert_eq!((sw.input_dim, sw.output_dim), (6, 3));
    }

    #[test]
    fn attention_formats() {
        assert_eq!(attention_format(1, 2).unwrap().format, PfaffFormat::affine());
        let two = attention_format(2, 2).unwrap();
        assert_eq!(two.format.q, BigUint::from(3u8));
        assert_eq!(two.format, PfaffFormat::new(3, 4, 3));
        assert!(!two.steps.is_empty());
        assert_eq!(attention_format(0, 2), Err(CatalogError::InvalidSequenceLength));
    }

    #[test]
    fn derived_formats() {
        assert_eq!(gelu_tanh_format().format, PfaffFormat::new(1, 8, 4));
        assert_eq!(exp_squashed_mse_format().format, PfaffFormat::new(1, 2, 1));
        assert_eq!(softmax_format(3).format, PfaffFormat::new(4, 3, 2));
    }

    #[test]
    fn losses() {
        let l = loss_lookup("clipped_mse").unwrap();
        assert_eq!((l.class, l.format.is_none()), (SemiAlgebraic, true));
        assert_eq!(loss_lookup("exp_squashed_mse").unwrap().format, Some(PfaffFormat::new(1, 2, 1)));
        assert_eq!(loss_lookup("hinge_42"), Err(CatalogError::UnknownLoss("hinge_42".into())));
    }

    #[test]
    fn listing_covers_every_gate() {
        let listing = catalog_listing();
        assert_eq!(listing.len(), gate_names().count());
        for r in &listing {
            assert!(r.format.is_none() || r.class.is_definable(), "{}", r.name);
        }
    }

    fn arb_class() -> impl Strategy<Value = DefinabilityClass> {
        (0usize..7).prop_map(|i| DefinabilityClass::ALL[i])
    }

    proptest! {
        #[test]
        fn join_laws(a in arb_class(), b in arb_class(), c in arb_class()) {
            prop_assert_eq!(a.join(b), b.join(a));
            prop_assert_eq!(a.join(a), a);
            prop_assert_eq!(a.join(b).join(c), a.join(b.join(c)));
            prop_assert!(a.leq(a.join(b)) && b.leq(a.join(b)));
        }

        #[test]
        fn join_list_order_free(mut v in proptest::collection::vec(arb_class(), 1..8)) {
            let before = join_classes(&v);
            v.reverse();
            prop_assert_eq!(before, join_classes(&v));
        }

        #[test]
        fn attention_monotone_in_length(t in 1u64..20, k in 1u64..5) {
            let a = attention_format(t, k).unwrap().format;
            let b = attention_format(t + 1, k).unwrap().format;
            prop_assert!(a.dominated_by(&b));
        }
    }
}
