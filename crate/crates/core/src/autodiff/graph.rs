use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise operations accepted by [`Graph::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Square,
    Sqrt,
    Cos,
    Sin,
    Exp,
    Log,
    Softplus,
    Sigmoid,
    Tanh,
    Relu,
}

impl ElementOp {
    pub fn arity(self) -> usize {
        match self {
            ElementOp::Add | ElementOp::Sub | ElementOp::Mul | ElementOp::Div => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementOp::Add => "add",
            ElementOp::Sub => "sub",
            ElementOp::Mul => "mul",
            ElementOp::Div => "div",
            ElementOp::Neg => "neg",
            ElementOp::Square => "square",
            ElementOp::Sqrt => "sqrt",
            ElementOp::Cos => "cos",
            ElementOp::Sin => "sin",
            ElementOp::Exp => "exp",
            ElementOp::Log => "log",
            ElementOp::Softplus => "softplus",
            ElementOp::Sigmoid => "sigmoid",
            ElementOp::Tanh => "tanh",
            ElementOp::Relu => "relu",
        }
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    Leaf,
    Unary(ElementOp, NodeId),
    Binary(ElementOp, NodeId, NodeId),
    /// Heaviside step; treated as locally constant by `backward`.
    Step(NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Sum of all entries into a 1×1 node.
    Sum(NodeId),
    /// 1×1 node replicated into the given shape.
    Broadcast(NodeId, (usize, usize)),
    /// Column sums: r×c into 1×c.
    SumRows(NodeId),
    /// 1×c row replicated r times.
    BroadcastRows(NodeId, usize),
}

impl Op {
    pub(crate) fn operands(&self) -> impl Iterator<Item = NodeId> {
        let (a, b) = match *self {
            Op::Leaf => (None, None),
            Op::Binary(_, a, b) | Op::MatMul(a, b) => (Some(a), Some(b)),
            Op::Unary(_, a)
            | Op::Step(a)
            | Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Transpose(a)
            | Op::Sum(a)
            | Op::Broadcast(a, _)
            | Op::SumRows(a)
            | Op::BroadcastRows(a, _) => (Some(a), None),
        };
        a.into_iter().chain(b)
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Unary(op, _) | Op::Binary(op, _, _) => op.name(),
            Op::Step(_) => "step",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Sum(_) => "sum",
            Op::Broadcast(..) => "broadcast",
            Op::SumRows(_) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) value: Array2<f64>,
}

/// Append-only computation record. Every node holds a dense 2-D `f64` value;
/// scalars are 1×1. Operands always precede the nodes that use them.
///
/// Gradients produced by [`Graph::backward`] are themselves nodes of the same
/// graph, so they can be differentiated again.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.dim()
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id.0].value;
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    /// Ids of the operands of `id`, in argument order.
    pub fn operands(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.operands().collect()
    }

    pub(crate) fn push(&mut self, op: Op, value: Array2<f64>) -> Result<NodeId> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op.name()));
        }
        self.nodes.push(Node { op, value });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "node {} not in graph of {} nodes",
                id.0,
                self.nodes.len()
            )))
        }
    }

    /// Scalar constant.
    pub fn constant(&mut self, value: f64) -> Result<NodeId> {
        self.push(Op::Leaf, Array2::from_elem((1, 1), value))
    }

    /// Leaf node holding an arbitrary matrix.
    pub fn leaf(&mut self, value: Array2<f64>) -> Result<NodeId> {
        self.push(Op::Leaf, value)
    }

    /// Leaf copy of `a`'s current value; gradients do not flow through it.
    pub fn detach(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.clone();
        self.push(Op::Leaf, value)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Result<NodeId> {
        self.push(Op::Leaf, Array2::zeros((rows, cols)))
    }

    /// Applies an elementwise operation. Binary operands must have equal shapes.
    pub fn apply(&mut self, op: ElementOp, operands: &[NodeId]) -> Result<NodeId> {
        if operands.len() != op.arity() {
            return Err(Error::invalid(format!(
                "{} takes {} operand(s), got {}",
                op.name(),
                op.arity(),
                operands.len()
            )));
        }
        for &o in operands {
            self.check(o)?;
        }
        if op.arity() == 1 {
            self.unary(op, operands[0])
        } else {
            self.binary(op, operands[0], operands[1])
        }
    }

    fn unary(&mut self, op: ElementOp, a: NodeId) -> Result<NodeId> {
        let x = &self.nodes[a.0].value;
        let value = match op {
            ElementOp::Neg => x.mapv(|v| -v),
            ElementOp::Square => x.mapv(|v| v * v),
            ElementOp::Sqrt => {
                if x.iter().any(|&v| v < 0.0) {
                    return Err(Error::domain("sqrt", "negative argument"));
                }
                x.mapv(f64::sqrt)
            }
            ElementOp::Cos => x.mapv(f64::cos),
            ElementOp::Sin => x.mapv(f64::sin),
            ElementOp::Exp => x.mapv(f64::exp),
            ElementOp::Log => {
                if x.iter().any(|&v| v <= 0.0) {
                    return Err(Error::domain("log", "non-positive argument"));
                }
                x.mapv(f64::ln)
            }
            ElementOp::Softplus => x.mapv(softplus),
            ElementOp::Sigmoid => x.mapv(sigmoid),
            ElementOp::Tanh => x.mapv(f64::tanh),
            ElementOp::Relu => x.mapv(|v| v.max(0.0)),
            _ => unreachable!("binary op routed to unary"),
        };
        self.push(Op::Unary(op, a), value)
    }

    fn binary(&mut self, op: ElementOp, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.dim() != y.dim() {
            return Err(Error::shape(
                op.name(),
                format!("{:?} vs {:?}", x.dim(), y.dim()),
            ));
        }
        let value = match op {
            ElementOp::Add => x + y,
            ElementOp::Sub => x - y,
            ElementOp::Mul => x * y,
            ElementOp::Div => {
                if y.iter().any(|&v| v == 0.0) {
                    return Err(Error::domain("div", "division by zero"));
                }
                x / y
            }
            _ => unreachable!("unary op routed to binary"),
        };
        self.push(Op::Binary(op, a, b), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Mul, &[a, b])
    }
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Div, &[a, b])
    }
    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Neg, &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Square, &[a])
    }
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Sqrt, &[a])
    }
    pub fn cos(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Cos, &[a])
    }
    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Sin, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Log, &[a])
    }
    pub fn softplus(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Softplus, &[a])
    }
    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Sigmoid, &[a])
    }
    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Tanh, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(ElementOp::Relu, &[a])
    }

    pub(crate) fn step(&mut self, a: NodeId) -> Result<NodeId> {
        let value = self.nodes[a.0]
            .value
            .mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        self.push(Op::Step(a), value)
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.check(a)?;
        let value = &self.nodes[a.0].value * c;
        self.push(Op::Scale(a, c), value)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.check(a)?;
        let value = &self.nodes[a.0].value + c;
        self.push(Op::Offset(a, c), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.ncols() != y.nrows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} · {:?}", x.dim(), y.dim()),
            ));
        }
        let value = x.dot(y);
        self.push(Op::MatMul(a, b), value)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.t().to_owned();
        self.push(Op::Transpose(a), value)
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let s = self.nodes[a.0].value.sum();
        self.push(Op::Sum(a), Array2::from_elem((1, 1), s))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.nodes[a.0].value.len();
        if n == 0 {
            return Err(Error::invalid("mean of an empty node"));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn broadcast(&mut self, a: NodeId, shape: (usize, usize)) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        if x.dim() != (1, 1) {
            return Err(Error::shape(
                "broadcast",
                format!("expected 1×1, got {:?}", x.dim()),
            ));
        }
        let value = Array2::from_elem(shape, x[[0, 0]]);
        self.push(Op::Broadcast(a, shape), value)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(Op::SumRows(a), value)
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.check(a)?;
        let x = &self.nodes[a.0].value;
        if x.nrows() != 1 {
            return Err(Error::shape(
                "broadcast_rows",
                format!("expected a row, got {:?}", x.dim()),
            ));
        }
        let value = x
            .broadcast((rows, x.ncols()))
            .expect("row broadcast")
            .to_owned();
        self.push(Op::BroadcastRows(a, rows), value)
    }
}
