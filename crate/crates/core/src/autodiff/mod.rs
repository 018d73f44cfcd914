//! Reverse-mode automatic differentiation with differentiable adjoints.
//!
//! A [`Graph`] records every operation eagerly. [`Graph::backward`] writes the
//! adjoint computation back into the same graph, which is what makes
//! gradients of gradients (the HNN input gradient inside a loss, and MAML
//! meta-gradients through inner-loop updates) available without special cases.
//!
//! Nodes carry dense matrices rather than single scalars; a scalar is a 1×1
//! node. All scalar operations work unchanged on 1×1 nodes.

mod backward;
mod check;
mod graph;

pub use check::{
    check_gradient, check_gradient_at, eval, scalar_leaves, value_and_grad, GraphFn,
    GRAD_CHECK_FLOOR,
};
pub use graph::{sigmoid, softplus, ElementOp, Graph, NodeId};
