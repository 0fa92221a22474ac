//! The two analysis passes over a validated graph: definability (a lattice
//! join over gate classes) and Pfaffian format propagation, plus the report
//! that combines them with the bound engine.

use crate::arch_graph::{ArchGraph, GraphError, NodeId, NodeKind};
use crate::bound_engine::{self, BoundError, BoundReport, PlanMode, SamplePlan};
use crate::format_algebra::{FormatError, PfaffFormat};
use crate::gate_catalog::{self, DefinabilityClass, FormatRule};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("no Pfaffian format is available for node {0:?}")]
    NoFormatAvailable(NodeId),
    #[error("node {node:?}: {source}")]
    Format { node: NodeId, source: FormatError },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

/// Class of the whole network and whether it is definable.
pub fn check_definability(g: &ArchGraph) -> Result<(DefinabilityClass, bool), GraphError> {
    let mut classes = vec![DefinabilityClass::SemiAlgebraic];
    for id in g.topo_order()? {
        if let Some(gate) = g.node(&id).and_then(|n| n.gate()) {
            classes.push(gate.spec.class);
        }
    }
    let class = gate_catalog::join_classes(&classes);
    Ok((class, class.is_definable()))
}

/// A format together with the chains it is built on, keyed by chain group.
#[derive(Debug, Clone, PartialEq)]
struct Tracked {
    chains: BTreeMap<String, BigUint>,
    chain_degree: BigUint,
    degree: BigUint,
}

impl Tracked {
    fn input() -> Self {
        Tracked { chains: BTreeMap::new(), chain_degree: BigUint::zero(), degree: BigUint::one() }
    }

    fn format(&self) -> PfaffFormat {
        let q = self.chains.values().sum();
        PfaffFormat::from_naturals(q, self.chain_degree.clone(), self.degree.clone())
    }
}

/// Union of parent chains and the largest parent degrees.
fn gather<'a>(parents: impl IntoIterator<Item = &'a Tracked>) -> Tracked {
    let mut out = Tracked { chains: BTreeMap::new(), chain_degree: BigUint::zero(), degree: BigUint::zero() };
    for t in parents {
        for (k, q) in &t.chains {
            let slot = out.chains.entry(k.clone()).or_default();
            if q > slot {
                *slot = q.clone();
            }
        }
        out.chain_degree = out.chain_degree.max(t.chain_degree.clone());
        out.degree = out.degree.max(t.degree.clone());
    }
    out
}

fn apply_rule(node: &str, rule: &FormatRule, chain_key: &str, mut acc: Tracked) -> Result<Tracked, AnalysisError> {
    match rule {
        FormatRule::Unavailable => Err(AnalysisError::NoFormatAvailable(node.into())),
        FormatRule::Polynomial { degree } => {
            acc.degree *= *degree;
            Ok(acc)
        }
        FormatRule::Pfaffian { unit, copies } => {
            if acc.degree.is_zero() {
                return Err(AnalysisError::Format {
                    node: node.into(),
                    source: FormatError::DegenerateInnerDegree { index: 0 },
                });
            }
            let m = acc.degree.clone();
            acc.chain_degree = &acc.chain_degree + (&unit.chain_degree + 1u32) * &m - 1u32;
            acc.degree = &unit.degree * &m;
            let own = copies * &unit.q;
            if !own.is_zero() {
                let slot = acc.chains.entry(chain_key.to_string()).or_default();
                *slot = own.max(slot.clone());
            }
            Ok(acc)
        }
    }
}

/// Per-node formats and the readout (net) format.
#[derive(Debug, Clone, PartialEq)]
pub struct FormatPropagation {
    pub per_node: BTreeMap<NodeId, PfaffFormat>,
    pub net: PfaffFormat,
    net_tracked: Tracked,
}

fn propagate(g: &ArchGraph) -> Result<FormatPropagation, AnalysisError> {
    let mut tracked: BTreeMap<NodeId, Tracked> = BTreeMap::new();
    for id in g.topo_order()? {
        let node = g.node(&id).expect("topo order lists known nodes");
        let t = match &node.kind {
            NodeKind::Input { .. } => Tracked::input(),
            NodeKind::Gate(gate) => {
                let acc = gather(node.parents.iter().map(|p| &tracked[p]));
                let key = gate.chain_group.as_deref().unwrap_or(&id);
                apply_rule(&id, &gate.spec.rule, key, acc)?
            }
        };
        tracked.insert(id, t);
    }
    let mut net = gather(g.readout_sources().iter().filter_map(|s| tracked.get(s)));
    net.degree = net.degree.max(BigUint::one());
    Ok(FormatPropagation {
        per_node: tracked.iter().map(|(k, t)| (k.clone(), t.format())).collect(),
        net: net.format(),
        net_tracked: net,
    })
}

/// Propagates formats in topological order, inputs starting at `(0,0,1)`.
pub fn propagate_formats(g: &ArchGraph) -> Result<BTreeMap<NodeId, PfaffFormat>, AnalysisError> {
    propagate(g).map(|p| p.per_node)
}

pub fn propagate_net_format(g: &ArchGraph) -> Result<FormatPropagation, AnalysisError> {
    propagate(g)
}

/// The closed form `(q, (D+1) L d^{L-1}, d^L)` for `L` layers.
pub fn simplified_format(layers: u32, q: &BigUint, chain_degree: &BigUint, d: &BigUint) -> PfaffFormat {
    assert!(layers >= 1, "at least one layer");
    let lower = d.pow(layers - 1);
    PfaffFormat::from_naturals(q.clone(), (chain_degree + 1u32) * layers * &lower, d * lower)
}

/// Format of `loss(net(x), y)` with the target `y` a fresh input.
fn compose_loss(net: &Tracked, loss: &str) -> Result<Option<PfaffFormat>, AnalysisError> {
    let spec = gate_catalog::loss_lookup(loss).map_err(|_| AnalysisError::NoFormatAvailable(loss.into()))?;
    if matches!(spec.rule, FormatRule::Unavailable) {
        return Ok(None);
    }
    let acc = gather([net, &Tracked::input()]);
    Ok(Some(apply_rule(loss, &spec.rule, "loss", acc)?.format()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        ToolInfo { name: "tamecheck".into(), version: env!("CARGO_PKG_VERSION").into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obligation {
    pub node: NodeId,
    pub text: String,
}

pub const K_UNQUANTIFIED: &str = "finite, unquantified";
pub const K_EXPLICIT: &str = "explicit";
pub const K_NONE: &str = "none, the structure is not definable";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool: ToolInfo,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input_sha256: Option<String>,
    pub name: String,
    pub param_count: u64,
    pub structure: DefinabilityClass,
    pub definable: bool,
    pub finite_sample_complexity: bool,
    pub qualitative_only: bool,
    /// Status of the sample-complexity constant `K`.
    pub k_status: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub net_format: Option<PfaffFormat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_format: Option<PfaffFormat>,
    pub per_node_formats: BTreeMap<NodeId, PfaffFormat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub format_blocked_by: Option<NodeId>,
    pub node_classes: BTreeMap<NodeId, DefinabilityClass>,
    pub obligations: Vec<Obligation>,
    pub provenance: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds: Option<BoundReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub plans: Vec<SamplePlan>,
    pub caveats: Vec<String>,
}

/// A sample-size request attached to an analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub delta: f64,
    pub constant_c: f64,
    pub mode: Option<PlanMode>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyzeOptions {
    pub plan: Option<PlanRequest>,
}

pub const INPUT_FORMAT_CAVEAT: &str = "formats are measured in the network inputs with the parameters held fixed; \
inputs start at (0,0,1)";

pub fn analyze(g: &ArchGraph) -> AnalysisReport {
    analyze_with(g, &AnalyzeOptions::default()).expect("analysis without plans cannot fail")
}

/// Runs both passes, the bound engine and any requested plans.
pub fn analyze_with(g: &ArchGraph, opts: &AnalyzeOptions) -> Result<AnalysisReport, AnalysisError> {
    let order = g.topo_order()?;
    let (mut structure, _) = check_definability(g)?;
    let mut provenance = Vec::new();
    let mut node_classes = BTreeMap::new();
    let mut obligations = Vec::new();
    for id in &order {
        let node = g.node(id).expect("known node");
        let Some(gate) = node.gate() else {
            provenance.push(format!("{id}: input of dimension {}", node.output_dim()));
            continue;
        };
        node_classes.insert(id.clone(), gate.spec.class);
        obligations.extend(gate.spec.obligations.iter().map(|t| Obligation { node: id.clone(), text: t.clone() }));
        provenance.push(format!("{id}: {} over [{}], class {}", gate.gate, node.parents.join(", "), gate.spec.class));
    }

    let loss_spec = match &g.loss {
        Some(l) => {
            let spec = gate_catalog::loss_lookup(l).map_err(|_| AnalysisError::NoFormatAvailable(l.clone()))?;
            structure = structure.join(spec.class);
            provenance.push(format!("loss {l}: class {}", spec.class));
            Some(spec)
        }
        None => None,
    };
    let definable = structure.is_definable();
    provenance.push(format!("structure: join of all classes = {structure}"));

    let mut report = AnalysisReport {
        tool: ToolInfo::default(),
        input_sha256: None,
        name: g.name.clone(),
        param_count: g.param_count(),
        structure,
        definable,
        finite_sample_complexity: definable,
        qualitative_only: true,
        k_status: K_UNQUANTIFIED.into(),
        net_format: None,
        loss: g.loss.clone(),
        loss_format: None,
        per_node_formats: BTreeMap::new(),
        format_blocked_by: None,
        node_classes,
        obligations,
        provenance,
        bounds: None,
        plans: Vec::new(),
        caveats: vec![INPUT_FORMAT_CAVEAT.to_string(), bound_engine::CONSTANT_CAVEAT.to_string()],
    };

    let propagation = if definable { Some(propagate(g)) } else { None };
    match propagation {
        None => {
            report.qualitative_only = false;
            report.k_status = K_NONE.into();
            report.caveats_push("a gate is not definable in any supported structure; no sample-complexity guarantee");
        }
        Some(Err(AnalysisError::NoFormatAvailable(node))) => {
            report.provenance.push(format!("format propagation blocked at {node}"));
            report.format_blocked_by = Some(node);
        }
        Some(Err(e)) => return Err(e),
        Some(Ok(prop)) => {
            for (id, f) in &prop.per_node {
                if let Some(pv) = report.provenance.iter_mut().find(|l| l.starts_with(&format!("{id}: "))) {
                    pv.push_str(&format!(" -> {f}"));
                }
            }
            report.provenance.push(format!("readout -> {}", prop.net));
            let mut bound_format = prop.net.clone();
            if let (Some(loss), Some(_)) = (&g.loss, &loss_spec) {
                match compose_loss(&prop.net_tracked, loss)? {
                    Some(f) => {
                        report.provenance.push(format!("loss {loss} composed -> {f}"));
                        bound_format = f.clone();
                        report.loss_format = Some(f);
                    }
                    None => report.caveats_push("the loss has no Pfaffian format; the bound covers the network output only"),
                }
            }
            if report.loss_format.is_none() && g.d_out > 1 {
                report.caveats_push(
                    "multi-output network without a Pfaffian loss: the bound is the largest per-output bound",
                );
            }
            let p = report.param_count.max(1);
            let mut bounds = bound_engine::pnn_pdim_bound(&bound_format, p)?;
            if g.d_in == 1 {
                if let Ok(with_m) = bounds.clone().with_khovanskii(1) {
                    bounds = with_m;
                }
            }
            if !bounds.b_exact {
                report.caveats_push("B is too large to evaluate exactly; its logarithm is over-approximated factor by factor");
            }
            report.net_format = Some(prop.net);
            report.per_node_formats = prop.per_node;
            report.bounds = Some(bounds);
            report.qualitative_only = false;
            report.k_status = K_EXPLICIT.into();
        }
    }

    if let Some(req) = &opts.plan {
        if let Some(b) = &report.bounds {
            let modes = match req.mode {
                Some(m) => vec![m],
                None => vec![PlanMode::Classification, PlanMode::Regression],
            };
            for mode in modes {
                report.plans.push(bound_engine::sample_size(mode, &b.pdim_bound, req.epsilon, req.delta, req.constant_c)?);
            }
        } else {
            report.caveats_push("no explicit dimension bound is available, so no sample size can be planned");
        }
    }
    Ok(report)
}

impl AnalysisReport {
    fn caveats_push(&mut self, text: &str) {
        self.caveats.push(text.to_string());
    }
}
