use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::network::{forward, gather, param_leaves, LayerNodes, NetworkSpec, ParamVector};
use crate::physics::SymplecticForm;
use crate::taskgen::Dataset;

/// How a network output is turned into a vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Scalar head read as H; the field is its symplectic gradient.
    Hamiltonian,
    /// The head is the field itself.
    Naive,
}

impl LossKind {
    pub fn check_spec(self, spec: &NetworkSpec) -> Result<()> {
        let ok = match self {
            LossKind::Hamiltonian => spec.output_dim == 1,
            LossKind::Naive => spec.output_dim == spec.input_dim,
        };
        if !spec.input_dim.is_multiple_of(2) || !ok {
            return Err(Error::shape(
                "loss",
                format!(
                    "{self:?} learner cannot use a {}→{} network",
                    spec.input_dim, spec.output_dim
                ),
            ));
        }
        Ok(())
    }
}

/// Ω∇ₓH for every row, where `h` is the `batch × 1` energy computed from
/// `x`. Differentiable in everything `h` depends on.
pub fn symplectic_field(g: &mut Graph, h: NodeId, x: NodeId) -> Result<NodeId> {
    let (_, cols) = g.shape(x);
    if cols % 2 != 0 || g.shape(h).1 != 1 {
        return Err(Error::shape(
            "symplectic_field",
            format!("energy {:?} over states {:?}", g.shape(h), g.shape(x)),
        ));
    }
    // Rows of H are independent, so ∂(ΣH)/∂x stacks the per-row gradients.
    let total = g.sum(h)?;
    let grad = g.backward(total, &[x])?[0];
    let omega_t = g.leaf(SymplecticForm::new(cols / 2).matrix().reversed_axes())?;
    g.matmul(grad, omega_t)
}

/// Predicted field at every row of `x` (`batch × 2n`). For Hamiltonian
/// learners this is Ω∇ₓH_θ, still differentiable in the parameters.
pub fn predicted_field(
    kind: LossKind,
    spec: &NetworkSpec,
    g: &mut Graph,
    layers: &[LayerNodes],
    x: NodeId,
) -> Result<NodeId> {
    kind.check_spec(spec)?;
    let out = forward(spec, g, layers, x)?;
    match kind {
        LossKind::Naive => Ok(out),
        LossKind::Hamiltonian => symplectic_field(g, out, x),
    }
}

/// Mean over rows of ‖target − pred‖².
pub fn mean_squared_norm(g: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
    let rows = g.shape(pred).0;
    let diff = g.sub(pred, target)?;
    let sq = g.square(diff)?;
    let total = g.sum(sq)?;
    g.scale(total, 1.0 / rows as f64)
}

/// Mean over rows of ‖ẋ − predicted‖².
pub fn field_loss(
    kind: LossKind,
    spec: &NetworkSpec,
    g: &mut Graph,
    layers: &[LayerNodes],
    data: &Dataset,
) -> Result<NodeId> {
    if data.is_empty() {
        return Err(Error::invalid("loss over an empty batch"));
    }
    if data.dim() != spec.input_dim {
        return Err(Error::shape(
            "loss",
            format!(
                "data has {} columns, network expects {}",
                data.dim(),
                spec.input_dim
            ),
        ));
    }
    let x = g.leaf(data.states.clone())?;
    let target = g.leaf(data.derivs.clone())?;
    let pred = predicted_field(kind, spec, g, layers, x)?;
    mean_squared_norm(g, pred, target)
}

pub fn hnn_loss(
    spec: &NetworkSpec,
    g: &mut Graph,
    layers: &[LayerNodes],
    data: &Dataset,
) -> Result<NodeId> {
    field_loss(LossKind::Hamiltonian, spec, g, layers, data)
}

pub fn naive_loss(
    spec: &NetworkSpec,
    g: &mut Graph,
    layers: &[LayerNodes],
    data: &Dataset,
) -> Result<NodeId> {
    field_loss(LossKind::Naive, spec, g, layers, data)
}

/// Loss value and its gradient in the canonical parameter layout. Layers not
/// in `layers` get exact zeros.
pub fn loss_and_grad(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParamVector,
    data: &Dataset,
    layers: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let nodes = param_leaves(&mut g, spec, params)?;
    let loss = field_loss(kind, spec, &mut g, &nodes, data)?;
    let wrt: Vec<NodeId> = nodes.iter().flat_map(|l| [l.weight, l.bias]).collect();
    let grads = g.backward(loss, &wrt)?;
    let grad_layers: Vec<LayerNodes> = grads
        .chunks(2)
        .map(|c| LayerNodes {
            weight: c[0],
            bias: c[1],
        })
        .collect();
    let mut flat = gather(&g, &grad_layers);
    for l in 0..spec.num_layers() {
        if !layers.contains(&l) {
            flat[spec.layer_range(l)].fill(0.0);
        }
    }
    Ok((g.scalar(loss), flat))
}

/// A trained network read as a vector field (and, for Hamiltonian learners,
/// an energy).
#[derive(Debug, Clone, Copy)]
pub struct FieldModel<'a> {
    pub kind: LossKind,
    pub spec: &'a NetworkSpec,
    pub params: &'a ParamVector,
}

impl<'a> FieldModel<'a> {
    pub fn new(kind: LossKind, spec: &'a NetworkSpec, params: &'a ParamVector) -> Result<Self> {
        kind.check_spec(spec)?;
        if params.len() != spec.param_count() {
            return Err(Error::shape(
                "model",
                "parameter vector does not match spec",
            ));
        }
        Ok(Self { kind, spec, params })
    }

    /// Predicted field at every row of `states`.
    pub fn field_batch(&self, states: &Array2<f64>) -> Result<Array2<f64>> {
        let mut g = Graph::new();
        let layers = param_leaves(&mut g, self.spec, self.params)?;
        let x = g.leaf(states.clone())?;
        let f = predicted_field(self.kind, self.spec, &mut g, &layers, x)?;
        Ok(g.value(f).clone())
    }

    pub fn field(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row");
        Ok(self.field_batch(&row)?.into_raw_vec_and_offset().0)
    }

    /// H_θ(x); only defined for Hamiltonian learners.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        if self.kind != LossKind::Hamiltonian {
            return Err(Error::invalid("a naive learner has no energy"));
        }
        let mut g = Graph::new();
        let layers = param_leaves(&mut g, self.spec, self.params)?;
        let row = g.leaf(Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("one row"))?;
        let h = forward(self.spec, &mut g, &layers, row)?;
        Ok(g.scalar(h))
    }
}
