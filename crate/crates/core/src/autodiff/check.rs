//! Central finite-difference gradient checking.

use super::graph::{Graph, NodeId};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// derivative is zero are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

/// A scalar function of a real vector, built on a graph.
///
/// The closure receives a fresh graph and the point `x`. It must return the
/// 1×1 output node and the leaf nodes it created from `x`, whose row-major
/// values concatenated in order reproduce `x` exactly.
pub trait GraphFn: Fn(&mut Graph, &[f64]) -> Result<(NodeId, Vec<NodeId>)> {}
impl<F> GraphFn for F where F: Fn(&mut Graph, &[f64]) -> Result<(NodeId, Vec<NodeId>)> {}

/// Convenience for functions of individual scalars: every coordinate becomes
/// its own 1×1 leaf.
pub fn scalar_leaves(g: &mut Graph, x: &[f64]) -> Result<Vec<NodeId>> {
    x.iter().map(|&v| g.constant(v)).collect()
}

/// Evaluates `f` at `x` and returns the value and the reverse-mode gradient.
pub fn value_and_grad<F: GraphFn>(f: &F, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let (out, leaves) = f(&mut g, x)?;
    let grads = g.backward(out, &leaves)?;
    let mut flat = Vec::with_capacity(x.len());
    for id in grads {
        flat.extend(g.value(id).iter().copied());
    }
    if flat.len() != x.len() {
        return Err(Error::invalid(format!(
            "leaves cover {} coordinates but the point has {}",
            flat.len(),
            x.len()
        )));
    }
    Ok((g.scalar(out), flat))
}

pub fn eval<F: GraphFn>(f: &F, x: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let (out, _) = f(&mut g, x)?;
    Ok(g.scalar(out))
}

/// Maximum over coordinates of `|analytic − numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`,
/// with `numeric = (f(x + h eᵢ) − f(x − h eᵢ)) / 2h`.
pub fn check_gradient<F: GraphFn>(f: F, at: &[f64], h: f64) -> Result<f64> {
    let coords: Vec<usize> = (0..at.len()).collect();
    check_gradient_at(f, at, h, &coords)
}

/// Same as [`check_gradient`] restricted to a subset of coordinates.
pub fn check_gradient_at<F: GraphFn>(f: F, at: &[f64], h: f64, coords: &[usize]) -> Result<f64> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, analytic) = value_and_grad(&f, at)?;
    let mut x = at.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        if i >= at.len() {
            return Err(Error::invalid(format!("coordinate {i} out of range")));
        }
        x[i] = at[i] + h;
        let up = eval(&f, &x)?;
        x[i] = at[i] - h;
        let down = eval(&f, &x)?;
        x[i] = at[i];
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
