//! Fully connected networks as pure functions of a flat parameter vector.
//!
//! Parameter layout, per layer in order: the `fan_in × fan_out` weight
//! matrix in row-major order, then the `fan_out` biases. A layer maps a
//! batch `X` (rows are samples) to `X·W + b`.

use std::ops::Range;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Tanh,
    /// Not twice differentiable; unsuitable for exact second-order HNN training.
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl NetworkSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Scalar Hamiltonian head over a `input_dim`-dimensional phase space.
    pub fn hamiltonian(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            output_dim: 1,
            activation: Activation::Softplus,
        }
    }

    /// Direct vector-field regressor: outputs one value per input coordinate.
    pub fn naive(input_dim: usize) -> Self {
        Self {
            output_dim: input_dim,
            ..Self::hamiltonian(input_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid(format!(
                "network dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| (i + 1) * o).sum()
    }

    /// Range of layer `layer` (weights then biases) inside the flat vector.
    pub fn layer_range(&self, layer: usize) -> Range<usize> {
        let shapes = self.layer_shapes();
        let start: usize = shapes[..layer].iter().map(|&(i, o)| (i + 1) * o).sum();
        let (i, o) = shapes[layer];
        start..start + (i + 1) * o
    }
}

/// Flat trainable parameters; length always matches its [`NetworkSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::shape(
                "params",
                format!(
                    "spec needs {} parameters, got {}",
                    spec.param_count(),
                    values.len()
                ),
            ));
        }
        Ok(Self(values))
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self(vec![0.0; spec.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_shapes() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        values.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector(values)
}

/// Graph handles for one layer's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Places every layer of `params` on the graph as a pair of leaves.
pub fn param_leaves(
    g: &mut Graph,
    spec: &NetworkSpec,
    params: &ParamVector,
) -> Result<Vec<LayerNodes>> {
    if params.len() != spec.param_count() {
        return Err(Error::shape(
            "params",
            "parameter vector does not match spec",
        ));
    }
    let mut out = Vec::with_capacity(spec.num_layers());
    for (l, (fan_in, fan_out)) in spec.layer_shapes().into_iter().enumerate() {
        let range = spec.layer_range(l);
        let chunk = &params.as_slice()[range];
        let (w, b) = chunk.split_at(fan_in * fan_out);
        let weight =
            g.leaf(Array2::from_shape_vec((fan_in, fan_out), w.to_vec()).expect("layer shape"))?;
        let bias = g.leaf(Array2::from_shape_vec((1, fan_out), b.to_vec()).expect("bias shape"))?;
        out.push(LayerNodes { weight, bias });
    }
    Ok(out)
}

/// Flattens per-layer node values (parameters or their gradients) back into
/// the canonical layout.
pub fn gather(g: &Graph, layers: &[LayerNodes]) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in layers {
        out.extend(g.value(layer.weight).iter().copied());
        out.extend(g.value(layer.bias).iter().copied());
    }
    out
}

fn activate(g: &mut Graph, act: Activation, z: NodeId) -> Result<NodeId> {
    match act {
        Activation::Softplus => g.softplus(z),
        Activation::Tanh => g.tanh(z),
        Activation::Relu => g.relu(z),
        Activation::Sigmoid => g.sigmoid(z),
    }
}

/// Batched forward pass. `x` is `batch × input_dim`; the result is
/// `batch × output_dim` and differentiable in both `x` and the parameters.
pub fn forward(
    spec: &NetworkSpec,
    g: &mut Graph,
    layers: &[LayerNodes],
    x: NodeId,
) -> Result<NodeId> {
    if layers.len() != spec.num_layers() {
        return Err(Error::shape(
            "forward",
            format!(
                "{} layers for a {}-layer spec",
                layers.len(),
                spec.num_layers()
            ),
        ));
    }
    let (rows, cols) = g.shape(x);
    if cols != spec.input_dim {
        return Err(Error::shape(
            "forward",
            format!("input has {cols} columns, spec expects {}", spec.input_dim),
        ));
    }
    let mut h = x;
    for (l, layer) in layers.iter().enumerate() {
        let z = g.matmul(h, layer.weight)?;
        let b = g.broadcast_rows(layer.bias, rows)?;
        let z = g.add(z, b)?;
        h = if l + 1 < layers.len() {
            activate(g, spec.activation, z)?
        } else {
            z
        };
    }
    Ok(h)
}

/// Which layers an inner loop is allowed to update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelection {
    All,
    /// Head only.
    Last,
    /// Everything except the input layer.
    AllButFirst,
}

impl LayerSelection {
    pub fn layers(self, spec: &NetworkSpec) -> Result<Vec<usize>> {
        let n = spec.num_layers();
        let layers: Vec<usize> = match self {
            LayerSelection::All => (0..n).collect(),
            LayerSelection::Last => vec![n - 1],
            LayerSelection::AllButFirst => (1..n).collect(),
        };
        if layers.is_empty() {
            return Err(Error::invalid(format!(
                "{self:?} selects no layers of a {n}-layer network"
            )));
        }
        Ok(layers)
    }
}

/// Read-only view of a subset of layers within a parameter vector.
#[derive(Debug, Clone)]
pub struct LayerSlice<'a> {
    params: &'a [f64],
    ranges: Vec<Range<usize>>,
}

impl LayerSlice<'_> {
    pub fn len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.ranges
            .iter()
            .flat_map(|r| self.params[r.clone()].iter().copied())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }
}

pub fn slice_layers<'a>(
    spec: &NetworkSpec,
    params: &'a ParamVector,
    layers: &[usize],
) -> Result<LayerSlice<'a>> {
    if layers.is_empty() {
        return Err(Error::invalid("empty layer selection"));
    }
    let mut sorted = layers.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&bad) = sorted.iter().find(|&&l| l >= spec.num_layers()) {
        return Err(Error::invalid(format!("layer {bad} out of range")));
    }
    Ok(LayerSlice {
        params: params.as_slice(),
        ranges: sorted.into_iter().map(|l| spec.layer_range(l)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{check_gradient, GraphFn};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-2.0..2.0))
    }

    fn eval(spec: &NetworkSpec, params: &ParamVector, x: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let layers = param_leaves(&mut g, spec, params).unwrap();
        let xn = g.leaf(x.clone()).unwrap();
        let out = forward(spec, &mut g, &layers, xn).unwrap();
        g.value(out).clone()
    }

    #[test]
    fn default_parameter_count() {
        let spec = NetworkSpec::hamiltonian(2);
        let mut by_hand = 0;
        let widths = [2usize, 64, 64, 64, 1];
        for l in 0..4 {
            for _out in 0..widths[l + 1] {
                by_hand += widths[l] + 1;
            }
        }
        assert_eq!(by_hand, 8577);
        assert_eq!(spec.param_count(), 8577);
        assert_eq!(init_params(&spec, 0).len(), 8577);
    }

    #[test]
    fn init_is_seeded_and_biases_are_zero() {
        let spec = NetworkSpec::hamiltonian(2);
        assert_eq!(init_params(&spec, 7), init_params(&spec, 7));
        assert_ne!(init_params(&spec, 7), init_params(&spec, 8));
        let p = init_params(&spec, 7);
        for (l, (fan_in, fan_out)) in spec.layer_shapes().into_iter().enumerate() {
            let r = spec.layer_range(l);
            let layer = &p.as_slice()[r];
            assert!(layer[fan_in * fan_out..].iter().all(|&b| b == 0.0));
            let bound = 1.0 / (fan_in as f64).sqrt();
            assert!(layer[..fan_in * fan_out].iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = NetworkSpec::naive(4);
        let out = eval(&spec, &ParamVector::zeros(&spec), &random_input(5, 4, 1));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let spec = NetworkSpec::hamiltonian(2);
        let mut g = Graph::new();
        let layers = param_leaves(&mut g, &spec, &init_params(&spec, 0)).unwrap();
        let x = g.leaf(Array2::zeros((3, 4))).unwrap();
        assert!(matches!(
            forward(&spec, &mut g, &layers, x),
            Err(Error::Shape { .. })
        ));
        assert!(ParamVector::new(&spec, vec![0.0; 10]).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let spec = NetworkSpec::hamiltonian(2);
            let params = init_params(&spec, seed);
            let f = |g: &mut Graph, x: &[f64]| {
                let layers = param_leaves(g, &spec, &params)?;
                let xn = g.leaf(Array2::from_shape_vec((1, 2), x.to_vec()).unwrap())?;
                let h = forward(&spec, g, &layers, xn)?;
                Ok((g.sum(h)?, vec![xn]))
            };
            let x = random_input(1, 2, 100 + seed);
            let err = check_gradient(f, x.as_slice().unwrap(), 1e-5).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    fn param_fn(spec: NetworkSpec, x: Array2<f64>) -> impl GraphFn {
        move |g: &mut Graph, theta: &[f64]| {
            let params = ParamVector::new(&spec, theta.to_vec())?;
            let layers = param_leaves(g, &spec, &params)?;
            let xn = g.leaf(x.clone())?;
            let h = forward(&spec, g, &layers, xn)?;
            let sq = g.square(h)?;
            let out = g.mean(sq)?;
            let leaves = layers.iter().flat_map(|l| [l.weight, l.bias]).collect();
            Ok((out, leaves))
        }
    }

    #[test]
    fn two_layer_parameter_gradients_match_finite_differences() {
        for seed in 0..3 {
            let spec = NetworkSpec::new(3, vec![8], 2, Activation::Softplus).unwrap();
            let mut theta = init_params(&spec, seed);
            // Nonzero biases so their gradients are exercised away from the init point.
            for v in theta.as_mut_slice().iter_mut() {
                *v += 0.05;
            }
            let f = param_fn(spec, random_input(6, 3, seed + 10));
            let err = check_gradient(f, theta.as_slice(), 1e-5).unwrap();
            assert!(err < 1e-6, "seed {seed}: {err}");
        }
    }

    #[test]
    fn layer_slices() {
        let spec = NetworkSpec::hamiltonian(2);
        let p = init_params(&spec, 3);
        let last = slice_layers(&spec, &p, &LayerSelection::Last.layers(&spec).unwrap()).unwrap();
        assert_eq!(last.len(), 65);
        assert_eq!(last.to_vec(), p.as_slice()[8577 - 65..].to_vec());
        let all = slice_layers(&spec, &p, &LayerSelection::All.layers(&spec).unwrap()).unwrap();
        assert_eq!(all.to_vec(), p.as_slice().to_vec());
        let inv = LayerSelection::AllButFirst.layers(&spec).unwrap();
        assert_eq!(inv, vec![1, 2, 3]);
        let inv_slice = slice_layers(&spec, &p, &inv).unwrap();
        assert_eq!(inv_slice.len(), 8577 - 192);
        assert!(slice_layers(&spec, &p, &[]).is_err());
        assert!(slice_layers(&spec, &p, &[4]).is_err());

        let single = NetworkSpec::new(2, vec![], 1, Activation::Softplus).unwrap();
        assert!(LayerSelection::AllButFirst.layers(&single).is_err());
    }

    proptest! {
        #[test]
        fn forward_is_pure(seed in 0u64..1000) {
            let spec = NetworkSpec::new(2, vec![16, 16], 1, Activation::Softplus).unwrap();
            let p = init_params(&spec, seed);
            let x = random_input(4, 2, seed);
            let a = eval(&spec, &p, &x);
            let b = eval(&spec, &p, &x);
            prop_assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            prop_assert!(a.iter().all(|v| v.is_finite()));
        }

        #[test]
        fn updating_a_slice_leaves_complement_unchanged(seed in 0u64..1000, layer in 0usize..4) {
            let spec = NetworkSpec::hamiltonian(2);
            let before = init_params(&spec, seed);
            let mut after = before.clone();
            let range = spec.layer_range(layer);
            for v in &mut after.as_mut_slice()[range.clone()] {
                *v = *v * 0.5 + 1.0;
            }
            for i in (0..before.len()).filter(|i| !range.contains(i)) {
                prop_assert_eq!(before.as_slice()[i].to_bits(), after.as_slice()[i].to_bits());
            }
        }
    }
}
