//! Reverse-mode differentiation over a closed set of elementary operations.
//!
//! Nodes are appended in evaluation order, so parents always precede their
//! children and a single reverse pass over the node list visits every edge
//! exactly once.

mod steps;

pub use steps::{timestep_adjoint, DenseSteps, StepAdjoint, StepResidual};

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Default sharpness of [`Op::SmoothAbs`] and [`Op::SmoothMax`].
pub const DEFAULT_SMOOTH_EPS: f64 = 1e-8;

/// Elementary operation tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Input,
    Constant,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Exp,
    Logistic,
    SmoothAbs,
    SmoothMax,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Input | Op::Constant => 0,
            Op::Neg | Op::Sin | Op::Cos | Op::Exp | Op::Logistic | Op::SmoothAbs => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::SmoothMax => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Constant => "constant",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Exp => "exp",
            Op::Logistic => "logistic",
            Op::SmoothAbs => "abs_smooth",
            Op::SmoothMax => "max_smooth",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Op> {
        const ALL: [Op; 13] = [
            Op::Input,
            Op::Constant,
            Op::Add,
            Op::Sub,
            Op::Mul,
            Op::Div,
            Op::Neg,
            Op::Sin,
            Op::Cos,
            Op::Exp,
            Op::Logistic,
            Op::SmoothAbs,
            Op::SmoothMax,
        ];
        ALL.iter()
            .copied()
            .find(|op| op.tag() == tag)
            .ok_or_else(|| Error::Tape(format!("unknown op tag `{tag}`")))
    }
}

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub op: Op,
    parents: [u32; 2],
    pub value: f64,
}

impl Node {
    pub fn parents(&self) -> &[u32] {
        &self.parents[..self.op.arity()]
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    /// `d output / d input`, in the order inputs were registered.
    pub input_grads: Vec<f64>,
    /// Number of parent edges traversed.
    pub edges_visited: usize,
}

#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
    outputs: Vec<NodeId>,
    smooth_eps: f64,
    bar: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::with_smooth_eps(DEFAULT_SMOOTH_EPS)
    }

    pub fn with_smooth_eps(smooth_eps: f64) -> Self {
        Tape {
            nodes: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            smooth_eps,
            bar: Vec::new(),
        }
    }

    /// Drops all nodes but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.inputs.clear();
        self.outputs.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.index()].value
    }

    fn push(&mut self, op: Op, parents: [u32; 2], value: f64) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::Tape(format!(
                "{} produced a non-finite value at node {}",
                op.tag(),
                self.nodes.len()
            )));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { op, parents, value });
        Ok(id)
    }

    pub fn input(&mut self, value: f64) -> Result<NodeId> {
        let id = self.push(Op::Input, [0, 0], value)?;
        self.inputs.push(id);
        Ok(id)
    }

    pub fn constant(&mut self, value: f64) -> Result<NodeId> {
        self.push(Op::Constant, [0, 0], value)
    }

    pub fn mark_output(&mut self, id: NodeId) {
        self.outputs.push(id);
    }

    /// Appends `op` applied to `parents`, computing its forward value.
    pub fn record(&mut self, op: Op, parents: &[NodeId]) -> Result<NodeId> {
        if matches!(op, Op::Input | Op::Constant) {
            return Err(Error::Tape(format!(
                "`{}` nodes carry a value; use input() or constant()",
                op.tag()
            )));
        }
        if parents.len() != op.arity() {
            return Err(Error::Tape(format!(
                "`{}` takes {} operand(s), got {}",
                op.tag(),
                op.arity(),
                parents.len()
            )));
        }
        if let Some(p) = parents.iter().find(|p| p.index() >= self.nodes.len()) {
            return Err(Error::Tape(format!("parent node {} is not on the tape", p.0)));
        }
        let a = self.nodes[parents[0].index()].value;
        let b = parents.get(1).map(|p| self.nodes[p.index()].value).unwrap_or(0.0);
        let value = apply(op, a, b, self.smooth_eps);
        let second = parents.get(1).map(|p| p.0).unwrap_or(0);
        self.push(op, [parents[0].0, second], value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Div, &[a, b])
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Neg, &[a])
    }

    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sin, &[a])
    }

    pub fn cos(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Cos, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp, &[a])
    }

    pub fn logistic(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Logistic, &[a])
    }

    pub fn smooth_abs(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SmoothAbs, &[a])
    }

    pub fn smooth_max(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::SmoothMax, &[a, b])
    }

    /// Local partials `d node / d parent`.
    fn local_partials(&self, node: &Node) -> [f64; 2] {
        let val = |k: usize| self.nodes[node.parents[k] as usize].value;
        let eps = self.smooth_eps;
        match node.op {
            Op::Input | Op::Constant => [0.0, 0.0],
            Op::Add => [1.0, 1.0],
            Op::Sub => [1.0, -1.0],
            Op::Mul => [val(1), val(0)],
            Op::Div => {
                let b = val(1);
                [1.0 / b, -val(0) / (b * b)]
            }
            Op::Neg => [-1.0, 0.0],
            Op::Sin => [math::cos(val(0)), 0.0],
            Op::Cos => [-math::sin(val(0)), 0.0],
            Op::Exp => [node.value, 0.0],
            Op::Logistic => [node.value * (1.0 - node.value), 0.0],
            Op::SmoothAbs => [val(0) / node.value, 0.0],
            Op::SmoothMax => {
                let d = val(0) - val(1);
                let s = d / math::smooth_abs(d, eps);
                [0.5 * (1.0 + s), 0.5 * (1.0 - s)]
            }
        }
    }

    /// Reverse sweep from `output`: returns `d output / d input` for every input.
    pub fn backward(&mut self, output: NodeId) -> Result<Backward> {
        let out = output.index();
        if out >= self.nodes.len() {
            return Err(Error::Tape(format!("output node {} is not on the tape", output.0)));
        }
        self.bar.clear();
        self.bar.resize(out + 1, 0.0);
        self.bar[out] = 1.0;
        let mut edges_visited = 0;
        for idx in (0..=out).rev() {
            let node = self.nodes[idx];
            let arity = node.op.arity();
            if arity == 0 {
                continue;
            }
            let partials = self.local_partials(&node);
            let g = self.bar[idx];
            for k in 0..arity {
                self.bar[node.parents[k] as usize] += g * partials[k];
                edges_visited += 1;
            }
        }
        let input_grads = self
            .inputs
            .iter()
            .map(|id| if id.index() <= out { self.bar[id.index()] } else { 0.0 })
            .collect();
        Ok(Backward {
            input_grads,
            edges_visited,
        })
    }

    /// Re-evaluates every node for new input values, keeping the graph.
    pub fn replay(&mut self, inputs: &[f64]) -> Result<()> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::Tape(format!(
                "tape has {} inputs, got {} values",
                self.inputs.len(),
                inputs.len()
            )));
        }
        for (id, &v) in self.inputs.iter().zip(inputs) {
            self.nodes[id.index()].value = v;
        }
        let eps = self.smooth_eps;
        for idx in 0..self.nodes.len() {
            let node = self.nodes[idx];
            let arity = node.op.arity();
            if arity == 0 {
                continue;
            }
            let a = self.nodes[node.parents[0] as usize].value;
            let b = if arity == 2 {
                self.nodes[node.parents[1] as usize].value
            } else {
                0.0
            };
            let value = apply(node.op, a, b, eps);
            if !value.is_finite() {
                return Err(Error::Tape(format!(
                    "{} produced a non-finite value at node {idx}",
                    node.op.tag()
                )));
            }
            self.nodes[idx].value = value;
        }
        Ok(())
    }

    /// Like [`Tape::backward`] but writes the input gradients into `grads`.
    pub fn backward_into(&mut self, output: NodeId, grads: &mut [f64]) -> Result<()> {
        let out = output.index();
        if out >= self.nodes.len() {
            return Err(Error::Tape(format!("output node {} is not on the tape", output.0)));
        }
        self.bar.clear();
        self.bar.resize(out + 1, 0.0);
        self.bar[out] = 1.0;
        for idx in (0..=out).rev() {
            let node = self.nodes[idx];
            let arity = node.op.arity();
            if arity == 0 {
                continue;
            }
            let partials = self.local_partials(&node);
            let g = self.bar[idx];
            for k in 0..arity {
                self.bar[node.parents[k] as usize] += g * partials[k];
            }
        }
        for (g, id) in grads.iter_mut().zip(&self.inputs) {
            *g = if id.index() <= out { self.bar[id.index()] } else { 0.0 };
        }
        Ok(())
    }

    /// Adjoint of every node from the most recent [`Tape::backward`] call.
    pub fn adjoint(&self, id: NodeId) -> f64 {
        self.bar.get(id.index()).copied().unwrap_or(0.0)
    }

    /// Total parent-edge count of the first `len` nodes.
    pub fn edge_count(&self, len: usize) -> usize {
        self.nodes[..len].iter().map(|n| n.op.arity()).sum()
    }
}

fn apply(op: Op, a: f64, b: f64, eps: f64) -> f64 {
    match op {
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => a / b,
        Op::Neg => -a,
        Op::Sin => math::sin(a),
        Op::Cos => math::cos(a),
        Op::Exp => math::exp(a),
        Op::Logistic => math::logistic(a),
        Op::SmoothAbs => math::smooth_abs(a, eps),
        Op::SmoothMax => math::smooth_max(a, b, eps),
        Op::Input | Op::Constant => a,
    }
}

impl core::fmt::Display for Tape {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            let parents: Vec<_> = n.parents().iter().map(|p| p.to_string()).collect();
            writeln!(f, "w{i} = {}({}) = {}", n.op.tag(), parents.join(", "), n.value)?;
        }
        Ok(())
    }
}

/// Records `c1 * c2 + sin(c1)` and returns `(tape, output)`.
pub fn worked_example(c1: f64, c2: f64) -> Result<(Tape, NodeId)> {
    let mut tape = Tape::new();
    let w1 = tape.input(c1)?;
    let w2 = tape.input(c2)?;
    let w3 = tape.mul(w1, w2)?;
    let w4 = tape.sin(w1)?;
    let xi = tape.add(w3, w4)?;
    tape.mark_output(xi);
    Ok((tape, xi))
}
