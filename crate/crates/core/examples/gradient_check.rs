//! Reverse-mode derivatives of any order, checked against central
//! differences.
//!
//! cargo run --release --example gradient_check

use hamlearn::autodiff::{check_gradient, scalar_leaves, Graph, GraphFn};
use hamlearn::metalearn::{field_loss, LossKind};
use hamlearn::network::{init_params, param_leaves, Activation, NetworkSpec, ParamVector};
use hamlearn::physics::SystemKind;
use hamlearn::taskgen::{make_task, task_rng, Dataset};

/// Weights ↦ HNN loss on `data`; the loss itself differentiates in x.
fn hnn_loss(spec: NetworkSpec, data: Dataset) -> impl GraphFn {
    move |g: &mut Graph, w: &[f64]| {
        let params = ParamVector::new(&spec, w.to_vec())?;
        let layers = param_leaves(g, &spec, &params)?;
        let out = field_loss(LossKind::Hamiltonian, &spec, g, &layers, &data)?;
        Ok((
            out,
            layers.iter().flat_map(|l| [l.weight, l.bias]).collect(),
        ))
    }
}

fn main() -> hamlearn::Result<()> {
    let mut g = Graph::new();
    let x = g.constant(2.0)?;
    let x2 = g.mul(x, x)?;
    let f = g.mul(x2, x)?;
    let d1 = g.backward(f, &[x])?[0];
    let d2 = g.backward(d1, &[x])?[0];
    let d3 = g.backward(d2, &[x])?[0];
    println!(
        "x^3 at x=2: f'={} f''={} f'''={}",
        g.scalar(d1),
        g.scalar(d2),
        g.scalar(d3)
    );

    let rosenbrock = |g: &mut Graph, v: &[f64]| {
        let l = scalar_leaves(g, v)?;
        let a = g.neg(l[0])?;
        let a = g.offset(a, 1.0)?;
        let a2 = g.square(a)?;
        let x2 = g.square(l[0])?;
        let b = g.sub(l[1], x2)?;
        let b2 = g.square(b)?;
        let b2 = g.scale(b2, 100.0)?;
        Ok((g.add(a2, b2)?, l))
    };
    println!(
        "rosenbrock at (-1.2, 1): max rel err {:.2e}",
        check_gradient(rosenbrock, &[-1.2, 1.0], 1e-5)?
    );

    let spec = NetworkSpec::new(2, vec![16, 16], 1, Activation::Softplus)?;
    let task = make_task(SystemKind::SpringMass, 10, &mut task_rng(0, 0))?;
    let w = init_params(&spec, 3);
    let err = check_gradient(hnn_loss(spec, task.train), w.as_slice(), 1e-5)?;
    println!(
        "hnn loss on a (2,[16,16],1) net, all {} weights: max rel err {err:.2e}",
        w.len()
    );
    Ok(())
}
