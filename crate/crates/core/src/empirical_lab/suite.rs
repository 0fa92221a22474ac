//! Suite documents pairing brute-force oracles with the symbolic bounds
//! they must not exceed.

use super::components::{max_components_on_grid, sign_components_1d};
use super::family::{Grid, ParametricFamily};
use super::graph_eval::graph_family;
use super::roots::{conic_pair_intersections, exp_linear_roots, poly_roots_count};
use super::shatter::{pdim_lower_bound, vc_lower_bound, verify_witness, ShatterConfig};
use super::{LabError, Witness};
use crate::arch_graph::{graph_from_doc, ArchSpecDoc};
use crate::bound_engine::{khovanskii_count, pnn_pdim_bound};
use crate::format_algebra::{fmt_compose, ChainSharing, PfaffFormat};
use crate::gate_catalog;
use crate::tame_analyzer::analyze;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const SUITE_VERSION: u32 = 1;

const SEED_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteDoc {
    pub version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<CheckDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilyDoc {
    Builtin { builtin: String },
    Graph { graph: Box<ArchSpecDoc> },
}

fn default_max_d() -> usize {
    6
}

fn default_window() -> (f64, f64) {
    (-10.0, 10.0)
}

fn default_coef_range() -> f64 {
    5.0
}

fn default_samples_500() -> usize {
    500
}

fn default_samples_200() -> usize {
    200
}

fn default_max_degree() -> u32 {
    6
}

fn default_resolution() -> usize {
    2001
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckDoc {
    Shatter {
        name: String,
        family: FamilyDoc,
        input_grid: Grid,
        param_grid: Grid,
        #[serde(default = "default_max_d")]
        max_d: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<u64>,
        /// Replaces the symbolic bound, for testing the harness itself.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        override_bound: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect_pdim_lb: Option<u64>,
    },
    ExpLinear {
        name: String,
        #[serde(default = "default_samples_500")]
        samples: usize,
        #[serde(default = "default_window")]
        window: (f64, f64),
        #[serde(default = "default_coef_range")]
        coefficient_range: f64,
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        override_bound: Option<u64>,
    },
    ConicPairs {
        name: String,
        #[serde(default = "default_samples_200")]
        samples: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        override_bound: Option<u64>,
    },
    PolyRoots {
        name: String,
        #[serde(default = "default_samples_200")]
        samples: usize,
        #[serde(default = "default_max_degree")]
        max_degree: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        override_bound: Option<u64>,
    },
}

impl CheckDoc {
    pub fn name(&self) -> &str {
        match self {
            CheckDoc::Shatter { name, .. }
            | CheckDoc::ExpLinear { name, .. }
            | CheckDoc::ConicPairs { name, .. }
            | CheckDoc::PolyRoots { name, .. } => name,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CheckDoc::Shatter { .. } => "shatter",
            CheckDoc::ExpLinear { .. } => "exp_linear",
            CheckDoc::ConicPairs { .. } => "conic_pairs",
            CheckDoc::PolyRoots { .. } => "poly_roots",
        }
    }
}

pub fn parse_suite(text: &str) -> Result<SuiteDoc, LabError> {
    let doc: SuiteDoc = serde_json::from_str(text).map_err(|e| LabError::Suite(e.to_string()))?;
    if doc.version != SUITE_VERSION {
        return Err(LabError::Suite(format!("unsupported suite version {}", doc.version)));
    }
    Ok(doc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Violation,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: String,
    pub status: CheckStatus,
    pub observed: Value,
    pub bounds: Value,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub violations: usize,
    pub errors: usize,
    pub warnings: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SuiteOptions {
    pub seed: Option<u64>,
    pub max_d: Option<usize>,
    pub budget: Option<u64>,
}

fn natural_json(x: &BigUint) -> Value {
    match u64::try_from(x) {
        Ok(v) => json!(v),
        Err(_) => json!(x.to_string()),
    }
}

/// Runs every check; violations are reported, never raised.
pub fn verify_suite(doc: &SuiteDoc, opts: &SuiteOptions) -> SuiteSummary {
    let seed = opts.seed.or(doc.seed).unwrap_or(0);
    let mut warnings = Vec::new();
    if doc.checks.is_empty() {
        warnings.push("suite has no checks; passing vacuously".to_string());
    }
    let checks: Vec<CheckResult> = doc
        .checks
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let check_seed = seed.wrapping_add((i as u64).wrapping_mul(SEED_STRIDE));
            run_check(c, check_seed, opts).unwrap_or_else(|e| CheckResult {
                name: c.name().to_string(),
                kind: c.kind().to_string(),
                status: CheckStatus::Error,
                observed: json!({}),
                bounds: json!({}),
                violations: Vec::new(),
                notes: vec![e.to_string()],
                witness: None,
            })
        })
        .collect();
    let violations = checks.iter().filter(|c| c.status == CheckStatus::Violation).count();
    let errors = checks.iter().filter(|c| c.status == CheckStatus::Error).count();
    SuiteSummary {
        suite: doc.name.clone(),
        seed,
        passed: violations == 0 && errors == 0,
        checks,
        violations,
        errors,
        warnings,
    }
}

fn finish(name: &str, kind: &str, observed: Value, bounds: Value, violations: Vec<String>, notes: Vec<String>, witness: Option<Witness>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        kind: kind.to_string(),
        status: if violations.is_empty() { CheckStatus::Pass } else { CheckStatus::Violation },
        observed,
        bounds,
        violations,
        notes,
        witness,
    }
}

/// A family with its symbolic format and parameter count, when known.
struct Resolved {
    family: ParametricFamily<f64>,
    symbolic: Option<(PfaffFormat, u64)>,
    notes: Vec<String>,
}

fn builtin(name: &str, input_grid: Grid, param_grid: Grid) -> Result<Resolved, LabError> {
    let affine = PfaffFormat::affine();
    let (family, format, p) = match name {
        "affine_1d" => (
            ParametricFamily::new(name, 1, 2, |x: &[f64], t: &[f64]| t[0] * x[0] + t[1], input_grid, param_grid),
            affine,
            2,
        ),
        "sigmoid_neuron" => {
            let unit = gate_catalog::lookup("sigmoid", &[("width".to_string(), json!(1))].into_iter().collect())
                .ok()
                .and_then(|s| s.format)
                .expect("sigmoid has a format");
            let format = fmt_compose(&unit, &[affine], ChainSharing::Disjoint).expect("affine inner");
            let f = |x: &[f64], t: &[f64]| 1.0 / (1.0 + (-(t[0] * x[0] + t[1])).exp());
            (ParametricFamily::new(name, 1, 2, f, input_grid, param_grid), format, 2)
        }
        "exp_linear" => (
            ParametricFamily::new(name, 1, 3, |x: &[f64], t: &[f64]| t[0] + t[1] * x[0] + t[2] * x[0].exp(), input_grid, param_grid),
            PfaffFormat::new(1, 1, 1),
            3,
        ),
        "constant" => (
            ParametricFamily::new(name, 1, 1, |_: &[f64], _: &[f64]| 1.0, input_grid, param_grid),
            PfaffFormat::constant(),
            1,
        ),
        other => return Err(LabError::Suite(format!("unknown builtin family {other:?}"))),
    };
    let notes = vec![format!("symbolic format {format} with p = {p}")];
    Ok(Resolved { family, symbolic: Some((format, p)), notes })
}

fn resolve(family: &FamilyDoc, input_grid: Grid, param_grid: Grid) -> Result<Resolved, LabError> {
    match family {
        FamilyDoc::Builtin { builtin: name } => builtin(name, input_grid, param_grid),
        FamilyDoc::Graph { graph } => {
            let g = graph_from_doc(graph).map_err(|e| LabError::Suite(e.to_string()))?;
            let report = analyze(&g);
            let family = graph_family(&g, input_grid, param_grid)?;
            let (symbolic, notes) = match &report.net_format {
                Some(f) => (Some((f.clone(), report.param_count)), vec![format!("analyzed format {f} with p = {}", report.param_count)]),
                None => (None, vec![format!("no symbolic format: {}", report.k_status)]),
            };
            Ok(Resolved { family, symbolic, notes })
        }
    }
}

fn run_check(check: &CheckDoc, seed: u64, opts: &SuiteOptions) -> Result<CheckResult, LabError> {
    match check {
        CheckDoc::Shatter { name, family, input_grid, param_grid, max_d, budget, override_bound, expect_pdim_lb } => {
            let Resolved { family, symbolic, mut notes } = resolve(family, seeded(input_grid, seed), seeded(param_grid, seed ^ 1))?;
            let mut cfg = ShatterConfig { max_d: opts.max_d.unwrap_or(*max_d), ..ShatterConfig::default() };
            if let Some(b) = opts.budget.or(*budget) {
                cfg.budget = b;
            }
            let pdim = pdim_lower_bound(&family, &cfg)?;
            let vc = vc_lower_bound(&family, &cfg)?;
            let mut violations = Vec::new();
            let mut observed = json!({"pdim_lb": pdim.value, "vc_lb": vc.value});
            if !verify_witness(&family, &pdim) || !verify_witness(&family, &vc) {
                violations.push("witness replay failed".to_string());
            }
            if vc.value > pdim.value {
                violations.push(format!("vc_lb {} exceeds pdim_lb {}", vc.value, pdim.value));
            }
            if family.input_dim == 1 {
                let comps = max_components_on_grid(&family)?;
                observed["max_components"] = json!(comps.value);
                if vc.value > 2 * comps.value {
                    violations.push(format!("vc_lb {} exceeds twice the component count {}", vc.value, comps.value));
                }
            }
            if let Some(e) = expect_pdim_lb {
                if pdim.value != *e {
                    violations.push(format!("expected pdim_lb {e}, found {}", pdim.value));
                }
            }
            let bound = match (override_bound, &symbolic) {
                (Some(b), _) => {
                    notes.push(format!("symbolic bound overridden with {b}"));
                    Some(BigUint::from(*b))
                }
                (None, Some((f, p))) => Some(pnn_pdim_bound(f, *p).map_err(|e| LabError::Suite(e.to_string()))?.pdim_bound),
                (None, None) => None,
            };
            let bounds = match &bound {
                Some(b) => {
                    for (what, v) in [("pdim_lb", pdim.value), ("vc_lb", vc.value)] {
                        if BigUint::from(v) > *b {
                            violations.push(format!("{what} {v} exceeds symbolic bound {b}"));
                        }
                    }
                    json!({"pdim_bound": natural_json(b), "vc_bound": natural_json(b)})
                }
                None => json!({}),
            };
            Ok(finish(name, "shatter", observed, bounds, violations, notes, Some(pdim.witness)))
        }
        CheckDoc::ExpLinear { name, samples, window, coefficient_range, resolution, override_bound } => {
            let symbolic = khovanskii_count(1, 1, 1, &[1]).expect("valid arguments");
            let bound = override_bound.map(BigUint::from).unwrap_or(symbolic);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = *coefficient_range;
            let family = builtin("exp_linear", Grid::regular(vec![*window], 2), Grid::Points(Vec::new()))?.family;
            let mut max_roots = 0;
            let mut max_components = 0;
            let mut violations = Vec::new();
            for i in 0..*samples {
                let (a, b, c) = (rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r));
                let roots = exp_linear_roots(a, b, c, window.0, window.1)?.len() as u64;
                let comps = sign_components_1d(&family, &[a, b, c], *resolution)?.value;
                max_roots = max_roots.max(roots);
                max_components = max_components.max(comps);
                for (what, v) in [("roots", roots), ("sublevel components", comps)] {
                    if BigUint::from(v) > bound && violations.len() < 10 {
                        violations.push(format!("sample {i} ({a}, {b}, {c}): {v} {what} exceed {bound}"));
                    }
                }
            }
            let observed = json!({"samples": samples, "max_roots": max_roots, "max_components": max_components});
            Ok(finish(name, "exp_linear", observed, json!({"khovanskii": natural_json(&bound)}), violations, Vec::new(), None))
        }
        CheckDoc::ConicPairs { name, samples, override_bound } => {
            let symbolic = khovanskii_count(2, 0, 0, &[2, 2]).expect("valid arguments");
            let bound = override_bound.map(BigUint::from).unwrap_or(symbolic);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut max_count = 0;
            let mut skipped = 0;
            let mut violations = Vec::new();
            for i in 0..*samples {
                let coef: Vec<BigRational> = (0..6).map(|_| random_rational(&mut rng)).collect();
                let refs: [&BigRational; 6] = std::array::from_fn(|k| &coef[k]);
                match conic_pair_intersections(refs) {
                    Ok(n) => {
                        max_count = max_count.max(n as u64);
                        if BigUint::from(n) > bound && violations.len() < 10 {
                            violations.push(format!("sample {i}: {n} intersections exceed {bound}"));
                        }
                    }
                    Err(LabError::ZeroPolynomial) => skipped += 1,
                    Err(e) => return Err(e),
                }
            }
            let observed = json!({"samples": samples, "max_intersections": max_count, "degenerate": skipped});
            Ok(finish(name, "conic_pairs", observed, json!({"khovanskii": natural_json(&bound)}), violations, Vec::new(), None))
        }
        CheckDoc::PolyRoots { name, samples, max_degree, override_bound } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut max_count = 0;
            let mut violations = Vec::new();
            for i in 0..*samples {
                let degree = rng.random_range(1..=(*max_degree).max(1));
                let mut coeffs: Vec<BigRational> = (0..degree).map(|_| random_rational(&mut rng)).collect();
                let lead = loop {
                    let c = random_rational(&mut rng);
                    if !c.is_zero() {
                        break c;
                    }
                };
                coeffs.push(lead);
                let n = poly_roots_count(&coeffs)?;
                let symbolic = khovanskii_count(1, 0, 0, &[u64::from(degree)]).expect("valid arguments");
                let bound = override_bound.map(BigUint::from).unwrap_or(symbolic);
                max_count = max_count.max(n as u64);
                if BigUint::from(n) > bound && violations.len() < 10 {
                    violations.push(format!("sample {i}: degree {degree} polynomial has {n} roots, bound {bound}"));
                }
            }
            let observed = json!({"samples": samples, "max_roots": max_count});
            let bounds = json!({"khovanskii": override_bound.map_or_else(|| json!("degree of each sample"), |b| json!(b))});
            Ok(finish(name, "poly_roots", observed, bounds, violations, Vec::new(), None))
        }
    }
}

/// Random grids without an explicit seed in the document inherit the
/// check's seed.
fn seeded(grid: &Grid, seed: u64) -> Grid {
    match grid {
        Grid::Random { ranges, count, seed: 0 } => Grid::Random { ranges: ranges.clone(), count: *count, seed },
        other => other.clone(),
    }
}

fn random_rational(rng: &mut ChaCha8Rng) -> BigRational {
    let num: i64 = rng.random_range(-9..=9);
    let den: i64 = rng.random_range(1..=4);
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suite(checks: Value) -> SuiteDoc {
        serde_json::from_value(json!({"version": 1, "name": "t", "checks": checks})).unwrap()
    }

    #[test]
    fn empty_suite_passes_with_warning() {
        let s = verify_suite(&suite(json!([])), &SuiteOptions::default());
        assert!(s.passed);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn injected_fault_is_a_violation() {
        let doc = suite(json!([{
            "kind": "shatter", "name": "affine", "family": {"builtin": "affine_1d"},
            "input_grid": {"regular": {"ranges": [[-1.0, 1.0]], "resolution": 5}},
            "param_grid": {"regular": {"ranges": [[-2.0, 2.0], [-2.0, 2.0]], "resolution": 5}},
            "override_bound": 1
        }]));
        let s = verify_suite(&doc, &SuiteOptions::default());
        assert!(!s.passed);
        assert_eq!(s.violations, 1);
        assert!(s.checks[0].violations.iter().any(|v| v.contains("pdim_lb 2 exceeds symbolic bound 1")));
    }

    #[test]
    fn small_random_checks_pass() {
        let doc = suite(json!([
            {"kind": "exp_linear", "name": "e", "samples": 20, "resolution": 201},
            {"kind": "conic_pairs", "name": "c", "samples": 20},
            {"kind": "poly_roots", "name": "p", "samples": 20}
        ]));
        let s = verify_suite(&doc, &SuiteOptions { seed: Some(3), ..Default::default() });
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        let doc = suite(json!([{
            "kind": "shatter", "name": "x", "family": {"builtin": "nope"},
            "input_grid": {"points": [[0.0]]}, "param_grid": {"points": [[0.0]]}
        }]));
        let s = verify_suite(&doc, &SuiteOptions::default());
        assert_eq!(s.errors, 1);
        assert!(!s.passed);
    }
}
