//! Computational-graph IR for fixed feedforward architectures.
//!
//! A graph has input nodes fed from the raw input by a binary lifting matrix,
//! computation nodes that each instantiate one catalogue gate on the
//! concatenation of their parents' outputs (parents in edge insertion order),
//! and a linear readout over designated source nodes.

use crate::gate_catalog::{self, CatalogError, GateSpec, Hyperparams};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

pub type NodeId = String;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate node id {0:?}")]
    DuplicateNode(NodeId),
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("node {node:?}: {source}")]
    Gate { node: NodeId, source: CatalogError },
    #[error("cycle through node {0:?}")]
    CycleDetected(NodeId),
    #[error("bad widths: {0}")]
    BadWidths(String),
    #[error("positional encoding: {0}")]
    UnboundedPE(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("graph does not validate: {}", summarize(.0))]
    Invalid(Vec<Diagnostic>),
}

fn summarize(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    CycleDetected,
    DimMismatch,
    EdgeIntoInput,
    MissingParents,
    NoInputs,
    LiftingShape,
    LiftingNotBinary,
    ReadoutSource,
    ReadoutShape,
    TieMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub node: Option<NodeId>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = serde_json::to_value(self.kind).expect("kind serializes");
        let kind = kind.as_str().unwrap_or("diagnostic");
        match &self.node {
            Some(n) => write!(f, "{kind} at {n}: {}", self.message),
            None => write!(f, "{kind}: {}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateInstance {
    pub gate: String,
    pub hyperparams: Hyperparams,
    pub spec: GateSpec,
    /// Nodes with the same group are asserted to share one Pfaffian chain.
    pub chain_group: Option<String>,
    /// Nodes with the same tie share one parameter slice.
    pub param_tie: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input { dim: u64 },
    Gate(Box<GateInstance>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
}

impl Node {
    pub fn output_dim(&self) -> u64 {
        match &self.kind {
            NodeKind::Input { dim } => *dim,
            NodeKind::Gate(g) => g.spec.output_dim,
        }
    }

    pub fn gate(&self) -> Option<&GateInstance> {
        match &self.kind {
            NodeKind::Gate(g) => Some(g),
            NodeKind::Input { .. } => None,
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self.kind, NodeKind::Input { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lifting {
    Identity,
    Matrix(Vec<Vec<u8>>),
}

/// `y_t = W z_t + b` applied to each of `positions` equal blocks of the
/// concatenated source outputs, with `W, b` shared across positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Readout {
    pub d_out: u64,
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default = "default_one")]
    pub positions: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub from: Option<Vec<NodeId>>,
}

fn default_true() -> bool {
    true
}

fn default_one() -> u64 {
    1
}

impl Readout {
    pub fn new(d_out: u64) -> Self {
        Readout { d_out, bias: true, positions: 1, from: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchGraph {
    pub name: String,
    pub d_in: u64,
    pub d_out: u64,
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<(NodeId, NodeId)>,
    pub lifting: Lifting,
    pub readout: Readout,
    pub loss: Option<String>,
}

/// One contiguous block of the parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub owner: String,
    pub offset: u64,
    pub len: u64,
    pub used_by: Vec<NodeId>,
}

impl ArchGraph {
    pub fn new(name: impl Into<String>, d_in: u64, d_out: u64) -> Self {
        ArchGraph {
            name: name.into(),
            d_in,
            d_out,
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            lifting: Lifting::Identity,
            readout: Readout::new(d_out),
            loss: None,
        }
    }

    fn insert(&mut self, node: Node) -> Result<(), GraphError> {
        if self.nodes.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        self.nodes.insert(node.id.clone(), node);
        Ok(())
    }

    pub fn add_input(&mut self, id: &str, dim: u64) -> Result<&mut Self, GraphError> {
        self.insert(Node { id: id.into(), kind: NodeKind::Input { dim }, parents: Vec::new() })?;
        Ok(self)
    }

    /// Adds a computation node after instantiating `gate` from the catalogue.
    pub fn add_gate(&mut self, id: &str, gate: &str, hyperparams: Hyperparams) -> Result<&mut Self, GraphError> {
        let spec = gate_catalog::lookup(gate, &hyperparams)
            .map_err(|source| GraphError::Gate { node: id.into(), source })?;
        self.add_gate_spec(id, gate, hyperparams, spec)
    }

    pub fn add_gate_spec(
        &mut self,
        id: &str,
        gate: &str,
        hyperparams: Hyperparams,
        spec: GateSpec,
    ) -> Result<&mut Self, GraphError> {
        let inst = GateInstance {
            gate: gate.into(),
            hyperparams,
            spec,
            chain_group: None,
            param_tie: None,
        };
        self.insert(Node { id: id.into(), kind: NodeKind::Gate(Box::new(inst)), parents: Vec::new() })?;
        Ok(self)
    }

    pub fn connect(&mut self, from: &str, to: &str) -> Result<&mut Self, GraphError> {
        if !self.nodes.contains_key(from) {
            return Err(GraphError::UnknownNode(from.into()));
        }
        let node = self.nodes.get_mut(to).ok_or_else(|| GraphError::UnknownNode(to.into()))?;
        node.parents.push(from.into());
        self.edges.push((from.into(), to.into()));
        Ok(self)
    }

    fn gate_mut(&mut self, id: &str) -> Result<&mut GateInstance, GraphError> {
        match self.nodes.get_mut(id).map(|n| &mut n.kind) {
            Some(NodeKind::Gate(g)) => Ok(g),
            _ => Err(GraphError::UnknownNode(id.into())),
        }
    }

    pub fn set_chain_group(&mut self, id: &str, group: Option<String>) -> Result<&mut Self, GraphError> {
        self.gate_mut(id)?.chain_group = group;
        Ok(self)
    }

    pub fn set_param_tie(&mut self, id: &str, tie: Option<String>) -> Result<&mut Self, GraphError> {
        self.gate_mut(id)?.param_tie = tie;
        Ok(self)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn gates(&self) -> impl Iterator<Item = (&Node, &GateInstance)> {
        self.nodes.values().filter_map(|n| n.gate().map(|g| (n, g)))
    }

    /// Readout sources: the declared list, else every node without children.
    pub fn readout_sources(&self) -> Vec<NodeId> {
        if let Some(from) = &self.readout.from {
            return from.clone();
        }
        let with_children: BTreeSet<&NodeId> = self.edges.iter().map(|(a, _)| a).collect();
        self.nodes.keys().filter(|id| !with_children.contains(id)).cloned().collect()
    }

    /// Total dimension `M_out` feeding the readout.
    pub fn readout_input_dim(&self) -> u64 {
        self.readout_sources()
            .iter()
            .filter_map(|id| self.nodes.get(id))
            .map(Node::output_dim)
            .sum()
    }

    pub fn readout_param_count(&self) -> u64 {
        let r = &self.readout;
        let per_position = self.readout_input_dim() / r.positions.max(1);
        r.d_out * (per_position + u64::from(r.bias))
    }

    /// Total dimension of the input nodes, i.e. the row count of the lift.
    pub fn lifted_dim(&self) -> u64 {
        self.nodes.values().filter(|n| n.is_input()).map(Node::output_dim).sum()
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let diag = |kind, node: Option<&str>, message: String| Diagnostic {
            kind,
            node: node.map(str::to_string),
            message,
        };
        if let Err(GraphError::CycleDetected(n)) = self.topo_order() {
            out.push(diag(DiagnosticKind::CycleDetected, Some(&n), "directed cycle".into()));
        }
        if !self.nodes.values().any(Node::is_input) {
            out.push(diag(DiagnosticKind::NoInputs, None, "graph has no input node".into()));
        }
        for node in self.nodes.values() {
            match &node.kind {
                NodeKind::Input { .. } if !node.parents.is_empty() => out.push(diag(
                    DiagnosticKind::EdgeIntoInput,
                    Some(&node.id),
                    "input nodes take no parents".into(),
                )),
                NodeKind::Input { .. } => {}
                NodeKind::Gate(g) => {
                    if node.parents.is_empty() {
                        out.push(diag(DiagnosticKind::MissingParents, Some(&node.id), "gate has no parents".into()));
                        continue;
                    }
                    let actual: u64 = node
                        .parents
                        .iter()
                        .filter_map(|p| self.nodes.get(p))
                        .map(Node::output_dim)
                        .sum();
                    if actual != g.spec.input_dim {
                        out.push(diag(
                            DiagnosticKind::DimMismatch,
                            Some(&node.id),
                            format!("{} expects input dimension {}, parents provide {actual}", g.gate, g.spec.input_dim),
                        ));
                    }
                }
            }
        }
        let rows = self.lifted_dim();
        match &self.lifting {
            Lifting::Identity if rows != self.d_in => out.push(diag(
                DiagnosticKind::LiftingShape,
                None,
                format!("identity lift needs input nodes of total dimension d_in = {}, found {rows}", self.d_in),
            )),
            Lifting::Identity => {}
            Lifting::Matrix(m) => {
                if m.len() as u64 != rows || m.iter().any(|r| r.len() as u64 != self.d_in) {
                    out.push(diag(
                        DiagnosticKind::LiftingShape,
                        None,
                        format!("lifting matrix must be {rows} x {}", self.d_in),
                    ));
                }
                for (i, row) in m.iter().enumerate() {
                    if let Some(j) = row.iter().position(|&v| v > 1) {
                        out.push(diag(
                            DiagnosticKind::LiftingNotBinary,
                            None,
                            format!("entry ({i}, {j}) is {}", row[j]),
                        ));
                    }
                }
            }
        }
        let sources = self.readout_sources();
        for s in &sources {
            if !self.nodes.contains_key(s) {
                out.push(diag(DiagnosticKind::ReadoutSource, Some(s), "readout source does not exist".into()));
            }
        }
        if sources.is_empty() {
            out.push(diag(DiagnosticKind::ReadoutSource, None, "readout has no sources".into()));
        }
        let r = &self.readout;
        let m_out = self.readout_input_dim();
        if r.positions == 0 || m_out % r.positions != 0 {
            out.push(diag(
                DiagnosticKind::ReadoutShape,
                None,
                format!("readout input dimension {m_out} does not split into {} positions", r.positions),
            ));
        }
        if r.d_out * r.positions != self.d_out {
            out.push(diag(
                DiagnosticKind::ReadoutShape,
                None,
                format!("readout produces {} x {} outputs but d_out = {}", r.positions, r.d_out, self.d_out),
            ));
        }
        let mut ties: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
        for (node, g) in self.gates() {
            if let Some(t) = &g.param_tie {
                let (p, first) = *ties.entry(t).or_insert((g.spec.param_count, &node.id));
                if p != g.spec.param_count {
                    out.push(diag(
                        DiagnosticKind::TieMismatch,
                        Some(&node.id),
                        format!("tie {t:?} has {p} parameters at {first} but {} here", g.spec.param_count),
                    ));
                }
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), GraphError> {
        let diags = self.validate();
        if diags.is_empty() {
            Ok(())
        } else {
            Err(GraphError::Invalid(diags))
        }
    }

    /// Kahn's algorithm with ties broken by node id.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let mut indegree: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (a, b) in &self.edges {
            *indegree.get_mut(b.as_str()).expect("edge target exists") += 1;
            children.entry(a).or_default().push(b);
        }
        let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(next) = ready.pop_first() {
            order.push(next.to_string());
            for c in children.get(next).into_iter().flatten() {
                let d = indegree.get_mut(c).expect("child exists");
                *d -= 1;
                if *d == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() < self.nodes.len() {
            let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
            let stuck = self.nodes.keys().find(|k| !placed.contains(k.as_str())).expect("some node unplaced");
            return Err(GraphError::CycleDetected(stuck.clone()));
        }
        Ok(order)
    }

    /// Parameter slices in topological order, tied gates sharing one slice,
    /// followed by the readout block.
    pub fn param_layout(&self) -> Result<Vec<ParamSlice>, GraphError> {
        let mut slices: Vec<ParamSlice> = Vec::new();
        let mut tie_index: BTreeMap<String, usize> = BTreeMap::new();
        let mut offset = 0;
        for id in self.topo_order()? {
            let Some(g) = self.nodes[&id].gate() else { continue };
            if g.spec.param_count == 0 {
                continue;
            }
            if let Some(t) = &g.param_tie {
                if let Some(&i) = tie_index.get(t) {
                    slices[i].used_by.push(id);
                    continue;
                }
                tie_index.insert(t.clone(), slices.len());
            }
            let owner = g.param_tie.clone().unwrap_or_else(|| id.clone());
            slices.push(ParamSlice { owner, offset, len: g.spec.param_count, used_by: vec![id] });
            offset += g.spec.param_count;
        }
        let len = self.readout_param_count();
        slices.push(ParamSlice { owner: "readout".into(), offset, len, used_by: Vec::new() });
        Ok(slices)
    }

    /// Trainable parameter count, each tied slice counted once.
    pub fn param_count(&self) -> u64 {
        let mut seen = BTreeSet::new();
        let gates: u64 = self
            .gates()
            .filter(|(_, g)| g.param_tie.as_ref().is_none_or(|t| seen.insert(t.clone())))
            .map(|(_, g)| g.spec.param_count)
            .sum();
        gates + self.readout_param_count()
    }
}

fn hp(v: Value) -> Hyperparams {
    match v {
        Value::Object(m) => m.into_iter().collect(),
        _ => Hyperparams::new(),
    }
}

/// A line-graph MLP: `widths = (d_0, ..., d_{L+1})` with one activation per
/// hidden layer, each hidden layer an affine node followed by its activation.
pub fn build_mlp(widths: &[u64], activations: &[&str]) -> Result<ArchGraph, GraphError> {
    if widths.len() < 2 {
        return Err(GraphError::BadWidths("need at least input and output widths".into()));
    }
    if activations.len() != widths.len() - 2 {
        return Err(GraphError::BadWidths(format!(
            "{} widths need {} activations, got {}",
            widths.len(),
            widths.len() - 2,
            activations.len()
        )));
    }
    if widths.contains(&0) {
        return Err(GraphError::BadWidths("widths must be positive".into()));
    }
    let d_out = *widths.last().expect("len checked");
    let mut g = ArchGraph::new(format!("mlp{widths:?}"), widths[0], d_out);
    g.add_input("x", widths[0])?;
    let mut prev = "x".to_string();
    for (l, act) in activations.iter().enumerate() {
        let affine = format!("affine{l}");
        let node = format!("act{l}");
        g.add_gate(&affine, "affine", hp(json!({"in": widths[l], "out": widths[l + 1]})))?;
        g.add_gate(&node, act, hp(json!({"width": widths[l + 1]})))?;
        g.connect(&prev, &affine)?.connect(&affine, &node)?;
        prev = node;
    }
    g.readout = Readout::new(d_out);
    g.ensure_valid()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub heads: u64,
    pub d_k: u64,
    pub d_v: u64,
    pub d_model: u64,
    pub d_ff: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    #[serde(default = "default_bounded")]
    pub domain: String,
    #[serde(default)]
    pub trainable_frequencies: bool,
    #[serde(default = "default_bounded")]
    pub frequency_domain: String,
}

fn default_bounded() -> String {
    "bounded".into()
}

impl Default for PositionalEncoding {
    fn default() -> Self {
        PositionalEncoding {
            domain: default_bounded(),
            trainable_frequencies: false,
            frequency_domain: default_bounded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub vocab: u64,
    pub seq_len: u64,
    pub d_embed: u64,
    pub blocks: Vec<BlockConfig>,
    pub d_out: u64,
    #[serde(default = "default_activation")]
    pub activation: String,
    /// Attention temperature.
    #[serde(default = "default_unit")]
    pub lambda: f64,
    /// Normalization epsilon.
    #[serde(default = "default_eps")]
    pub epsilon: f64,
    #[serde(default)]
    pub positional_encoding: PositionalEncoding,
}

fn default_activation() -> String {
    "gelu_tanh".into()
}

fn default_unit() -> f64 {
    1.0
}

fn default_eps() -> f64 {
    1e-5
}

impl TransformerConfig {
    /// Uniform blocks of the same shape.
    pub fn uniform(vocab: u64, seq_len: u64, d_embed: u64, layers: usize, block: BlockConfig, d_out: u64) -> Self {
        TransformerConfig {
            vocab,
            seq_len,
            d_embed,
            blocks: vec![block; layers],
            d_out,
            activation: default_activation(),
            lambda: 1.0,
            epsilon: default_eps(),
            positional_encoding: PositionalEncoding::default(),
        }
    }
}

/// Token embedding, positional encoding, `L` attention blocks with two
/// normalizations each, and a readout shared across positions.
pub fn build_transformer(cfg: &TransformerConfig) -> Result<ArchGraph, GraphError> {
    let t = cfg.seq_len;
    let dims = [cfg.vocab, t, cfg.d_embed, cfg.d_out];
    let block_dims = cfg.blocks.iter().flat_map(|b| [b.heads, b.d_k, b.d_v, b.d_model, b.d_ff]);
    if dims.into_iter().chain(block_dims).any(|d| d == 0) {
        return Err(GraphError::BadConfig("all dimensions must be at least 1".into()));
    }
    if !(cfg.lambda > 0.0 && cfg.epsilon > 0.0) {
        return Err(GraphError::BadConfig("lambda and epsilon must be positive".into()));
    }
    let pe = &cfg.positional_encoding;
    let mut g = ArchGraph::new(format!("transformer-L{}", cfg.blocks.len()), t, t * cfg.d_out);
    g.add_input("tokens", t)?;
    g.add_gate("embed", "embedding", hp(json!({"vocab": cfg.vocab, "dim": cfg.d_embed, "positions": t})))?;
    let pe_hp = hp(json!({
        "positions": t,
        "width": cfg.d_embed,
        "domain": pe.domain,
        "trainable_frequencies": pe.trainable_frequencies,
        "frequency_domain": pe.frequency_domain,
    }));
    match gate_catalog::lookup("fourier_pe", &pe_hp) {
        Err(CatalogError::UnboundedDomain { reason, .. }) => return Err(GraphError::UnboundedPE(reason)),
        Err(source) => return Err(GraphError::Gate { node: "pe".into(), source }),
        Ok(spec) => g.add_gate_spec("pe", "fourier_pe", pe_hp, spec)?,
    };
    g.connect("tokens", "embed")?.connect("embed", "pe")?;
    let mut prev = "pe".to_string();
    let mut d_prev = cfg.d_embed;
    for (i, b) in cfg.blocks.iter().enumerate() {
        let n = |s: &str| format!("b{}.{s}", i + 1);
        let d = b.d_model;
        g.add_gate(&n("mha"), "attention", hp(json!({
            "seq_len": t, "d_model": d_prev, "heads": b.heads, "d_k": b.d_k, "d_v": b.d_v,
            "d_out": d, "temperature": cfg.lambda,
        })))?;
        g.add_gate(&n("proj"), "affine", hp(json!({"in": d_prev, "out": d, "positions": t, "bias": false})))?;
        g.add_gate(&n("add1"), "add", hp(json!({"width": t * d})))?;
        g.add_gate(&n("norm1"), "layer_norm", hp(json!({"width": d, "positions": t, "epsilon": cfg.epsilon})))?;
        g.add_gate(&n("ff1"), "affine", hp(json!({"in": d, "out": b.d_ff, "positions": t})))?;
        g.add_gate(&n("act"), &cfg.activation, hp(json!({"width": t * b.d_ff})))?;
        g.add_gate(&n("ff2"), "affine", hp(json!({"in": b.d_ff, "out": d, "positions": t})))?;
        g.add_gate(&n("add2"), "residual", hp(json!({"width": t * d})))?;
        g.add_gate(&n("norm2"), "layer_norm", hp(json!({"width": d, "positions": t, "epsilon": cfg.epsilon})))?;
        g.connect(&prev, &n("mha"))?.connect(&prev, &n("proj"))?;
        g.connect(&n("proj"), &n("add1"))?.connect(&n("mha"), &n("add1"))?;
        g.connect(&n("add1"), &n("norm1"))?;
        g.connect(&n("norm1"), &n("ff1"))?.connect(&n("ff1"), &n("act"))?.connect(&n("act"), &n("ff2"))?;
        g.connect(&n("norm1"), &n("add2"))?.connect(&n("ff2"), &n("add2"))?;
        g.connect(&n("add2"), &n("norm2"))?;
        prev = n("norm2");
        d_prev = d;
    }
    g.readout = Readout { d_out: cfg.d_out, bias: true, positions: t, from: Some(vec![prev]) };
    g.ensure_valid()?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LiftingDoc {
    Named(String),
    Matrix(Vec<Vec<u8>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: String,
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dim: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gate: Option<String>,
    #[serde(skip_serializing_if = "Hyperparams::is_empty", default)]
    pub hyperparams: Hyperparams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chain_group: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub param_tie: Option<String>,
}

fn default_kind() -> String {
    "gate".into()
}

/// The declarative architecture document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpecDoc {
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub d_in: u64,
    pub d_out: u64,
    pub nodes: Vec<NodeDoc>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    #[serde(default = "default_lifting")]
    pub lifting: LiftingDoc,
    pub readout: Readout,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss: Option<String>,
}

fn default_name() -> String {
    "unnamed".into()
}

fn default_lifting() -> LiftingDoc {
    LiftingDoc::Named("identity".into())
}

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("{}", summarize(.0))]
    Invalid(Vec<Diagnostic>),
}

/// Parses and validates an architecture document.
pub fn parse_spec(text: &str) -> Result<ArchGraph, SpecError> {
    let doc: ArchSpecDoc = serde_json::from_str(text).map_err(|e| SpecError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    graph_from_doc(&doc)
}

pub fn graph_from_doc(doc: &ArchSpecDoc) -> Result<ArchGraph, SpecError> {
    let field = |path: String, message: String| SpecError::Field { path, message };
    if doc.version != SPEC_VERSION {
        return Err(field("version".into(), format!("unsupported version {}", doc.version)));
    }
    let mut g = ArchGraph::new(doc.name.clone(), doc.d_in, doc.d_out);
    for (i, n) in doc.nodes.iter().enumerate() {
        let at = |f: &str| format!("nodes[{i}]{f}");
        let result = match n.kind.as_str() {
            "input" => {
                let dim = n.dim.ok_or_else(|| field(at(".dim"), "input node needs a dimension".into()))?;
                g.add_input(&n.id, dim).map(|_| ())
            }
            "gate" => {
                let gate = n.gate.as_deref().ok_or_else(|| field(at(".gate"), "gate node needs a gate name".into()))?;
                let spec = gate_catalog::lookup_permissive(gate, &n.hyperparams)
                    .map_err(|e| field(at(".gate"), e.to_string()))?;
                g.add_gate_spec(&n.id, gate, n.hyperparams.clone(), spec)
                    .and_then(|g| g.set_chain_group(&n.id, n.chain_group.clone()))
                    .and_then(|g| g.set_param_tie(&n.id, n.param_tie.clone()))
                    .map(|_| ())
            }
            other => return Err(field(at(".kind"), format!("unknown node kind {other:?}"))),
        };
        result.map_err(|e| field(at(".id"), e.to_string()))?;
    }
    for (i, (a, b)) in doc.edges.iter().enumerate() {
        g.connect(a, b).map_err(|e| field(format!("edges[{i}]"), e.to_string()))?;
    }
    g.lifting = match &doc.lifting {
        LiftingDoc::Named(s) if s == "identity" => Lifting::Identity,
        LiftingDoc::Named(s) => return Err(field("lifting".into(), format!("unknown lifting {s:?}"))),
        LiftingDoc::Matrix(m) => Lifting::Matrix(m.clone()),
    };
    g.readout = doc.readout.clone();
    if let Some(loss) = &doc.loss {
        gate_catalog::loss_lookup(loss).map_err(|e| field("loss".into(), e.to_string()))?;
        g.loss = Some(loss.clone());
    }
    let diags = g.validate();
    if diags.is_empty() {
        Ok(g)
    } else {
        Err(SpecError::Invalid(diags))
    }
}

/// Inverse of [`parse_spec`]: nodes in id order, edges in insertion order.
pub fn emit_spec(g: &ArchGraph) -> ArchSpecDoc {
    let nodes = g
        .nodes()
        .map(|n| match &n.kind {
            NodeKind::Input { dim } => NodeDoc {
                id: n.id.clone(),
                kind: "input".into(),
                dim: Some(*dim),
                gate: None,
                hyperparams: Hyperparams::new(),
                chain_group: None,
                param_tie: None,
            },
            NodeKind::Gate(gi) => NodeDoc {
                id: n.id.clone(),
                kind: "gate".into(),
                dim: None,
                gate: Some(gi.gate.clone()),
                hyperparams: gi.hyperparams.clone(),
                chain_group: gi.chain_group.clone(),
                param_tie: gi.param_tie.clone(),
            },
        })
        .collect();
    ArchSpecDoc {
        version: SPEC_VERSION,
        name: g.name.clone(),
        d_in: g.d_in,
        d_out: g.d_out,
        nodes,
        edges: g.edges.clone(),
        lifting: match &g.lifting {
            Lifting::Identity => default_lifting(),
            Lifting::Matrix(m) => LiftingDoc::Matrix(m.clone()),
        },
        readout: g.readout.clone(),
        loss: g.loss.clone(),
    }
}

pub fn emit_spec_string(g: &ArchGraph) -> String {
    serde_json::to_string_pretty(&emit_spec(g)).expect("spec documents serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(ids: &[&str]) -> ArchGraph {
        let mut g = ArchGraph::new("line", 1, 1);
        g.add_input(ids[0], 1).unwrap();
        for w in ids.windows(2) {
            g.add_gate(w[1], "sigmoid", hp(json!({"width": 1}))).unwrap();
            g.connect(w[0], w[1]).unwrap();
        }
        g
    }

    #[test]
    fn smallest_valid_graph() {
        let mut g = ArchGraph::new("one", 2, 1);
        g.add_input("x", 2).unwrap();
        g.add_gate("a", "affine", hp(json!({"in": 2, "out": 1}))).unwrap();
        g.connect("x", "a").unwrap();
        assert!(g.validate().is_empty());
    }

    #[test]
    fn cycle_and_dim_mismatch() {
        let mut g = line(&["x", "a", "b"]);
        g.connect("b", "a").unwrap();
        let kinds: Vec<_> = g.validate().into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::CycleDetected));
        assert!(matches!(g.topo_order(), Err(GraphError::CycleDetected(_))));

        let mut g = ArchGraph::new("bad", 2, 1);
        g.add_input("x", 2).unwrap();
        g.add_gate("a", "affine", hp(json!({"in": 3, "out": 1}))).unwrap();
        g.connect("x", "a").unwrap();
        let d = g.validate();
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].kind, d[0].node.as_deref()), (DiagnosticKind::DimMismatch, Some("a")));
    }

    #[test]
    fn topo_orders() {
        assert_eq!(line(&["a", "b", "c"]).topo_order().unwrap(), ["a", "b", "c"]);
        let mut g = ArchGraph::new("diamond", 1, 1);
        g.add_input("a", 1).unwrap();
        g.add_gate("c", "sigmoid", hp(json!({"width": 1}))).unwrap();
        g.add_gate("b", "sigmoid", hp(json!({"width": 1}))).unwrap();
        g.add_gate("d", "add", hp(json!({"width": 1}))).unwrap();
        for (x, y) in [("a", "c"), ("a", "b"), ("c", "d"), ("b", "d")] {
            g.connect(x, y).unwrap();
        }
        assert_eq!(g.topo_order().unwrap(), ["a", "b", "c", "d"]);
        assert_eq!(g.node("d").unwrap().parents, ["c", "b"]);
    }

    #[test]
    fn mlp_counts() {
        assert_eq!(build_mlp(&[2, 3, 1], &["sigmoid"]).unwrap().param_count(), 13);
        assert_eq!(build_mlp(&[1, 1], &[]).unwrap().param_count(), 2);
        assert!(matches!(build_mlp(&[2, 3], &["relu"]), Err(GraphError::BadWidths(_))));
        assert!(matches!(
            build_mlp(&[2, 3, 1], &["nope"]),
            Err(GraphError::Gate { source: CatalogError::UnknownGate(_), .. })
        ));
    }

    #[test]
    fn readout_only_graph() {
        let mut g = ArchGraph::new("readout", 1, 1);
        g.add_input("x", 1).unwrap();
        assert!(g.validate().is_empty());
        assert_eq!(g.param_count(), 2);
        g.readout.bias = false;
        assert_eq!(g.param_count(), 1);
    }

    fn tiny() -> TransformerConfig {
        let block = BlockConfig { heads: 1, d_k: 1, d_v: 1, d_model: 2, d_ff: 2 };
        TransformerConfig::uniform(2, 2, 2, 1, block, 1)
    }

    #[test]
    fn transformer_counts() {
        assert_eq!(build_transformer(&tiny()).unwrap().param_count(), 31);
        let mut empty = tiny();
        empty.blocks.clear();
        assert_eq!(build_transformer(&empty).unwrap().param_count(), 2 * 2 + 2 + 1);
        let mut bad = tiny();
        bad.positional_encoding.trainable_frequencies = true;
        bad.positional_encoding.frequency_domain = "unbounded".into();
        assert!(matches!(build_transformer(&bad), Err(GraphError::UnboundedPE(_))));
        let mut bad = tiny();
        bad.lambda = 0.0;
        assert!(matches!(build_transformer(&bad), Err(GraphError::BadConfig(_))));
    }

    #[test]
    fn ties_count_once() {
        let mut g = ArchGraph::new("tied", 1, 1);
        g.add_input("x", 1).unwrap();
        g.add_gate("a", "affine", hp(json!({"in": 1, "out": 1}))).unwrap();
        g.add_gate("b", "affine", hp(json!({"in": 1, "out": 1}))).unwrap();
        g.connect("x", "a").unwrap().connect("a", "b").unwrap();
        assert_eq!(g.param_count(), 6);
        g.set_param_tie("a", Some("w".into())).unwrap();
        g.set_param_tie("b", Some("w".into())).unwrap();
        assert_eq!(g.param_count(), 4);
        let layout = g.param_layout().unwrap();
        assert_eq!(layout[0].used_by, ["a", "b"]);
        assert_eq!(layout[1].offset, 2);
    }

    #[test]
    fn lifting_checks() {
        let mut g = ArchGraph::new("lift", 2, 1);
        g.add_input("u", 1).unwrap().add_input("v", 2).unwrap();
        g.readout.from = Some(vec!["u".into()]);
        assert_eq!(g.validate()[0].kind, DiagnosticKind::LiftingShape);
        g.lifting = Lifting::Matrix(vec![vec![1, 0], vec![0, 1], vec![2, 0]]);
        assert_eq!(g.validate()[0].kind, DiagnosticKind::LiftingNotBinary);
        g.lifting = Lifting::Matrix(vec![vec![1, 0], vec![0, 1], vec![1, 0]]);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn spec_round_trip() {
        let g = build_mlp(&[2, 3, 1], &["sigmoid"]).unwrap();
        let text = emit_spec_string(&g);
        let back = parse_spec(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(emit_spec_string(&back), text);
    }

    #[test]
    fn spec_errors_are_located() {
        match parse_spec("{\n  \"version\": 1,\n  \"d_in\": 1,, }") {
            Err(SpecError::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let doc = r#"{"version":1,"d_in":1,"d_out":1,
            "nodes":[{"id":"x","kind":"input","dim":1},{"id":"h","gate":"warp_drive","hyperparams":{"width":1}}],
            "edges":[["x","h"]],"readout":{"d_out":1}}"#;
        match parse_spec(doc) {
            Err(SpecError::Field { path, message }) => {
                assert_eq!(path, "nodes[1].gate");
                assert!(message.contains("warp_drive"));
            }
            other => panic!("{other:?}"),
        }
    }
}
