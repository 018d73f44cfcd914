use ndarray::Array2;

use super::graph::{ElementOp, Graph, NodeId, Op};
use crate::error::{Error, Result};

impl Graph {
    /// Reverse-mode gradient of the 1×1 node `output` with respect to each
    /// node in `wrt`.
    ///
    /// Adjoints are accumulated with ordinary graph operations, so the returned
    /// ids are differentiable nodes: calling `backward` on an expression built
    /// from them yields exact higher derivatives. A `wrt` node that `output`
    /// does not depend on gets a zero node of its own shape.
    ///
    /// Cost is linear in the number of nodes between `wrt` and `output`; nodes
    /// that do not depend on any `wrt` entry are skipped entirely.
    pub fn backward(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::invalid("backward output is not in the graph"));
        }
        if self.shape(output) != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("output must be 1×1, got {:?}", self.shape(output)),
            ));
        }
        let end = output.0 + 1;
        let mut needs = vec![false; end];
        for w in wrt {
            if w.0 >= self.nodes.len() {
                return Err(Error::invalid("backward wrt node is not in the graph"));
            }
            if w.0 < end {
                needs[w.0] = true;
            }
        }
        for i in 0..end {
            if !needs[i] {
                needs[i] = self.nodes[i].op.operands().any(|o| needs[o.0]);
            }
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; end];
        if needs[output.0] {
            adj[output.0] = Some(self.leaf(Array2::ones((1, 1)))?);
        }
        for i in (0..end).rev() {
            if !needs[i] {
                continue;
            }
            if let Some(g) = adj[i] {
                let op = self.nodes[i].op;
                self.propagate(NodeId(i), op, g, &needs, &mut adj)?;
            }
        }

        wrt.iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(a) => Ok(a),
                None => {
                    let (r, c) = self.shape(w);
                    self.zeros(r, c)
                }
            })
            .collect()
    }

    fn accumulate(
        &mut self,
        adj: &mut [Option<NodeId>],
        target: NodeId,
        contrib: NodeId,
    ) -> Result<()> {
        adj[target.0] = Some(match adj[target.0] {
            None => contrib,
            Some(prev) => self.add(prev, contrib)?,
        });
        Ok(())
    }

    fn propagate(
        &mut self,
        out: NodeId,
        op: Op,
        g: NodeId,
        needs: &[bool],
        adj: &mut [Option<NodeId>],
    ) -> Result<()> {
        match op {
            Op::Leaf | Op::Step(_) => {}
            Op::Unary(e, a) => {
                if !needs[a.0] {
                    return Ok(());
                }
                let d = match e {
                    ElementOp::Neg => self.neg(g)?,
                    ElementOp::Square => {
                        let two_a = self.scale(a, 2.0)?;
                        self.mul(g, two_a)?
                    }
                    ElementOp::Sqrt => {
                        let half = self.scale(g, 0.5)?;
                        self.div(half, out)?
                    }
                    ElementOp::Cos => {
                        let s = self.sin(a)?;
                        let gs = self.mul(g, s)?;
                        self.neg(gs)?
                    }
                    ElementOp::Sin => {
                        let c = self.cos(a)?;
                        self.mul(g, c)?
                    }
                    ElementOp::Exp => self.mul(g, out)?,
                    ElementOp::Log => self.div(g, a)?,
                    ElementOp::Softplus => {
                        let s = self.sigmoid(a)?;
                        self.mul(g, s)?
                    }
                    ElementOp::Sigmoid => {
                        // s' = s (1 - s)
                        let neg = self.neg(out)?;
                        let one_minus = self.offset(neg, 1.0)?;
                        let ds = self.mul(out, one_minus)?;
                        self.mul(g, ds)?
                    }
                    ElementOp::Tanh => {
                        let sq = self.square(out)?;
                        let neg = self.neg(sq)?;
                        let dt = self.offset(neg, 1.0)?;
                        self.mul(g, dt)?
                    }
                    ElementOp::Relu => {
                        let mask = self.step(a)?;
                        self.mul(g, mask)?
                    }
                    ElementOp::Add | ElementOp::Sub | ElementOp::Mul | ElementOp::Div => {
                        unreachable!("binary op stored as unary")
                    }
                };
                self.accumulate(adj, a, d)?;
            }
            Op::Binary(e, a, b) => match e {
                ElementOp::Add => {
                    if needs[a.0] {
                        self.accumulate(adj, a, g)?;
                    }
                    if needs[b.0] {
                        self.accumulate(adj, b, g)?;
                    }
                }
                ElementOp::Sub => {
                    if needs[a.0] {
                        self.accumulate(adj, a, g)?;
                    }
                    if needs[b.0] {
                        let d = self.neg(g)?;
                        self.accumulate(adj, b, d)?;
                    }
                }
                ElementOp::Mul => {
                    if needs[a.0] {
                        let d = self.mul(g, b)?;
                        self.accumulate(adj, a, d)?;
                    }
                    if needs[b.0] {
                        let d = self.mul(g, a)?;
                        self.accumulate(adj, b, d)?;
                    }
                }
                ElementOp::Div => {
                    if needs[a.0] {
                        let d = self.div(g, b)?;
                        self.accumulate(adj, a, d)?;
                    }
                    if needs[b.0] {
                        // d(a/b)/db = -(a/b)/b
                        let q = self.div(out, b)?;
                        let gq = self.mul(g, q)?;
                        let d = self.neg(gq)?;
                        self.accumulate(adj, b, d)?;
                    }
                }
                _ => unreachable!("unary op stored as binary"),
            },
            Op::Scale(a, c) => {
                if needs[a.0] {
                    let d = self.scale(g, c)?;
                    self.accumulate(adj, a, d)?;
                }
            }
            Op::Offset(a, _) => {
                if needs[a.0] {
                    self.accumulate(adj, a, g)?;
                }
            }
            Op::MatMul(a, b) => {
                if needs[a.0] {
                    let bt = self.transpose(b)?;
                    let d = self.matmul(g, bt)?;
                    self.accumulate(adj, a, d)?;
                }
                if needs[b.0] {
                    let at = self.transpose(a)?;
                    let d = self.matmul(at, g)?;
                    self.accumulate(adj, b, d)?;
                }
            }
            Op::Transpose(a) => {
                if needs[a.0] {
                    let d = self.transpose(g)?;
                    self.accumulate(adj, a, d)?;
                }
            }
            Op::Sum(a) => {
                if needs[a.0] {
                    let shape = self.shape(a);
                    let d = self.broadcast(g, shape)?;
                    self.accumulate(adj, a, d)?;
                }
            }
            Op::Broadcast(a, _) => {
                if needs[a.0] {
                    let d = self.sum(g)?;
                    self.accumulate(adj, a, d)?;
                }
            }
            Op::SumRows(a) => {
                if needs[a.0] {
                    let rows = self.shape(a).0;
                    let d = self.broadcast_rows(g, rows)?;
                    self.accumulate(adj, a, d)?;
                }
            }
            Op::BroadcastRows(a, _) => {
                if needs[a.0] {
                    let d = self.sum_rows(g)?;
                    self.accumulate(adj, a, d)?;
                }
            }
        }
        Ok(())
    }
}
