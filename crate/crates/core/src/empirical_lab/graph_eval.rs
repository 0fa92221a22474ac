//! Numerical evaluation of small graphs built from affine maps, coordinatewise
//! activations and sums or products of parent blocks.
//!
//! The parameter vector follows `ArchGraph::param_layout`: each affine slice
//! holds its weights row-major (`out x in`) followed by the bias, and the
//! readout block comes last in the same layout. Input nodes take the rows
//! of the lifting matrix in node-id order.

use super::family::{Grid, ParametricFamily};
use super::LabError;
use crate::arch_graph::{ArchGraph, Lifting, NodeKind};
use num_traits::Float;
use serde_json::Value;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Act {
    Sigmoid,
    Tanh,
    Softplus,
    Relu,
    LeakyRelu(f64),
    Swish,
    GeluTanh,
    Softsign,
    HardTanh,
    Elu,
}

impl Act {
    fn apply<F: Float>(self, x: F) -> F {
        let c = |v: f64| F::from(v).expect("constant");
        let one = F::one();
        match self {
            Act::Sigmoid => one / (one + (-x).exp()),
            Act::Tanh => x.tanh(),
            Act::Softplus => x.max(F::zero()) + (one + (-x.abs()).exp()).ln(),
            Act::Relu => x.max(F::zero()),
            Act::LeakyRelu(a) => x.max(c(a) * x),
            Act::Swish => x / (one + (-x).exp()),
            Act::GeluTanh => c(0.5) * x * (one + (c(0.797_884_560_802_865_4) * (x + c(0.044715) * x * x * x)).tanh()),
            Act::Softsign => x / (one + x.abs()),
            Act::HardTanh => x.max(-one).min(one),
            Act::Elu => {
                if x > F::zero() {
                    x
                } else {
                    x.exp() - one
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Op {
    Lift { rows: Vec<Vec<u8>> },
    Affine { input: usize, output: usize, bias: bool, positions: usize, offset: usize },
    Activation(Act),
    Sum { width: usize },
    Product { width: usize },
}

#[derive(Debug, Clone)]
struct Step {
    op: Op,
    parents: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Program {
    steps: Vec<Step>,
    readout_sources: Vec<usize>,
    readout_offset: usize,
    readout_bias: bool,
}

fn hp_u64(h: &BTreeMap<String, Value>, key: &str, default: u64) -> u64 {
    h.get(key).and_then(Value::as_u64).unwrap_or(default)
}

fn compile(g: &ArchGraph) -> Result<Program, LabError> {
    let unsupported = |m: String| LabError::Unsupported(m);
    if g.d_out != 1 || g.readout.positions != 1 {
        return Err(unsupported("only scalar readouts are evaluated".into()));
    }
    g.ensure_valid().map_err(|e| unsupported(e.to_string()))?;
    let order = g.topo_order().map_err(|e| unsupported(e.to_string()))?;
    let index: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let layout = g.param_layout().map_err(|e| unsupported(e.to_string()))?;
    let offsets: BTreeMap<&str, usize> = layout
        .iter()
        .flat_map(|s| s.used_by.iter().map(move |n| (n.as_str(), s.offset as usize)))
        .collect();
    let readout_offset = layout.last().expect("readout slice").offset as usize;

    let identity: Vec<Vec<u8>> = (0..g.d_in as usize)
        .map(|i| (0..g.d_in as usize).map(|j| u8::from(i == j)).collect())
        .collect();
    let lift = match &g.lifting {
        Lifting::Identity => identity,
        Lifting::Matrix(m) => m.clone(),
    };
    let mut steps = Vec::with_capacity(order.len());
    let mut input_rows: BTreeMap<String, Vec<Vec<u8>>> = BTreeMap::new();
    let mut row = 0;
    for n in g.nodes().filter(|n| n.is_input()) {
        let dim = n.output_dim() as usize;
        input_rows.insert(n.id.clone(), lift[row..row + dim].to_vec());
        row += dim;
    }

    for id in &order {
        let node = g.node(id).expect("known node");
        let parents = node.parents.iter().map(|p| index[p.as_str()]).collect();
        let op = match &node.kind {
            NodeKind::Input { .. } => Op::Lift { rows: input_rows.remove(id).expect("input rows") },
            NodeKind::Gate(gate) => {
                let h = &gate.hyperparams;
                let width = hp_u64(h, "width", 0) as usize;
                match gate.gate.as_str() {
                    "affine" => Op::Affine {
                        input: hp_u64(h, "in", 0) as usize,
                        output: hp_u64(h, "out", 0) as usize,
                        bias: h.get("bias").and_then(Value::as_bool).unwrap_or(true),
                        positions: hp_u64(h, "positions", 1) as usize,
                        offset: offsets.get(id.as_str()).copied().unwrap_or(0),
                    },
                    "sigmoid" => Op::Activation(Act::Sigmoid),
                    "tanh" => Op::Activation(Act::Tanh),
                    "softplus" => Op::Activation(Act::Softplus),
                    "relu" => Op::Activation(Act::Relu),
                    "leaky_relu" => Op::Activation(Act::LeakyRelu(h.get("slope").and_then(Value::as_f64).unwrap_or(0.01))),
                    "swish" => Op::Activation(Act::Swish),
                    "gelu_tanh" => Op::Activation(Act::GeluTanh),
                    "softsign" => Op::Activation(Act::Softsign),
                    "hard_tanh" => Op::Activation(Act::HardTanh),
                    "elu" => Op::Activation(Act::Elu),
                    "add" | "residual" => Op::Sum { width },
                    "hadamard" => Op::Product { width },
                    other => return Err(unsupported(format!("gate {other:?} at node {id}"))),
                }
            }
        };
        steps.push(Step { op, parents });
    }
    Ok(Program {
        steps,
        readout_sources: g.readout_sources().iter().map(|s| index[s.as_str()]).collect(),
        readout_offset,
        readout_bias: g.readout.bias,
    })
}

impl Program {
    fn run<F: Float>(&self, x: &[F], theta: &[F]) -> F {
        let mut values: Vec<Vec<F>> = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let input: Vec<F> = step.parents.iter().flat_map(|&p| values[p].iter().copied()).collect();
            let out = match &step.op {
                Op::Lift { rows } => rows
                    .iter()
                    .map(|r| r.iter().zip(x).filter(|(&m, _)| m == 1).fold(F::zero(), |acc, (_, &v)| acc + v))
                    .collect(),
                Op::Affine { input: n, output: m, bias, positions, offset } => {
                    let w = &theta[*offset..offset + n * m];
                    let b = if *bias { &theta[offset + n * m..offset + n * m + m] } else { &[][..] };
                    (0..*positions)
                        .flat_map(|t| {
                            let block = &input[t * n..(t + 1) * n];
                            (0..*m).map(move |o| {
                                let dot = (0..*n).fold(F::zero(), |acc, i| acc + w[o * n + i] * block[i]);
                                if b.is_empty() {
                                    dot
                                } else {
                                    dot + b[o]
                                }
                            })
                        })
                        .collect()
                }
                Op::Activation(a) => input.iter().map(|&v| a.apply(v)).collect(),
                Op::Sum { width } => (0..*width)
                    .map(|i| input.iter().skip(i).step_by(*width).fold(F::zero(), |acc, &v| acc + v))
                    .collect(),
                Op::Product { width } => (0..*width).map(|i| input[i] * input[i + width]).collect(),
            };
            values.push(out);
        }
        let z: Vec<F> = self.readout_sources.iter().flat_map(|&s| values[s].iter().copied()).collect();
        let w = &theta[self.readout_offset..self.readout_offset + z.len()];
        let dot = z.iter().zip(w).fold(F::zero(), |acc, (&a, &b)| acc + a * b);
        if self.readout_bias {
            dot + theta[self.readout_offset + z.len()]
        } else {
            dot
        }
    }
}

/// Builds a family evaluating the scalar output of `g`.
pub fn graph_family<F: Float + Send + Sync + 'static>(
    g: &ArchGraph,
    input_grid: Grid,
    param_grid: Grid,
) -> Result<ParametricFamily<F>, LabError> {
    let program = compile(g)?;
    Ok(ParametricFamily::new(
        g.name.clone(),
        g.d_in as usize,
        g.param_count() as usize,
        move |x, t| program.run(x, t),
        input_grid,
        param_grid,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch_graph::build_mlp;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn mlp_matches_hand_evaluation() {
        let g = build_mlp(&[2, 3, 1], &["sigmoid"]).unwrap();
        let fam: ParametricFamily<f64> = graph_family(&g, Grid::Points(vec![]), Grid::Points(vec![])).unwrap();
        assert_eq!(fam.param_dim, 13);
        let theta: Vec<f64> = (0..13).map(|i| 0.1 * i as f64 - 0.6).collect();
        let x = [0.3, -0.7];
        let hidden: Vec<f64> = (0..3)
            .map(|o| sigmoid(theta[2 * o] * x[0] + theta[2 * o + 1] * x[1] + theta[6 + o]))
            .collect();
        let expected = hidden[0] * theta[9] + hidden[1] * theta[10] + hidden[2] * theta[11] + theta[12];
        assert!((fam.eval(&x, &theta) - expected).abs() < 1e-15);
    }

    #[test]
    fn unsupported_gates_are_reported() {
        let g = build_mlp(&[1, 2, 1], &["maxout_nonexistent"]);
        assert!(g.is_err());
        let mut g = ArchGraph::new("m", 1, 1);
        g.add_input("x", 1).unwrap();
        let hp = serde_json::json!({"width": 1, "window": 1}).as_object().unwrap().clone().into_iter().collect();
        g.add_gate("p", "max_pool", hp).unwrap();
        g.connect("x", "p").unwrap();
        let r: Result<ParametricFamily<f64>, _> = graph_family(&g, Grid::Points(vec![]), Grid::Points(vec![]));
        assert!(matches!(r, Err(LabError::Unsupported(_))));
    }
}
