//! Fits one Hamiltonian network to one system with Adam and exports the
//! learned field next to the true one.
//!
//! cargo run --release --example fit_hnn -- [steps] [out.csv]

use std::path::PathBuf;

use hamlearn::eval::{export_field, field_mse};
use hamlearn::metalearn::{loss_and_grad, AdamState, FieldModel, LossKind};
use hamlearn::network::{init_params, NetworkSpec};
use hamlearn::physics::{integrate, PhysicalParams, Tolerance};
use hamlearn::taskgen::{make_grid, sample_states, task_rng, Dataset};

fn main() -> hamlearn::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hamlearn_fit_hnn.csv"));

    let truth = PhysicalParams::Pendulum {
        m: 1.0,
        l: 1.0,
        q0: 0.0,
    };
    let states: Vec<Vec<f64>> = sample_states(&truth, &mut task_rng(1, 0), 500)?
        .iter()
        .map(|s| s.to_flat())
        .collect();
    let data = Dataset::labelled(&truth, &states)?;
    let grid = make_grid(&truth)?;

    let spec = NetworkSpec::hamiltonian(2);
    let mut params = init_params(&spec, 0);
    let mut adam = AdamState::new(params.len());
    let all: Vec<usize> = (0..spec.num_layers()).collect();
    for step in 0..=steps {
        let (loss, grad) = loss_and_grad(LossKind::Hamiltonian, &spec, &params, &data, &all)?;
        if step % (steps / 10).max(1) == 0 {
            let mse = field_mse(LossKind::Hamiltonian, &spec, &params, &grid.data)?;
            println!("step {step:>5}: train loss {loss:.4e}, grid mse {mse:.4e}");
        }
        if step < steps {
            adam.step(params.as_mut_slice(), &grad, 1e-3)?;
        }
    }

    let model = FieldModel::new(LossKind::Hamiltonian, &spec, &params)?;
    let x0 = [1.0, 0.0];
    let learned = integrate(|x: &[f64]| model.field(x), &x0, 10.0, 5, Tolerance::ROLLOUT)?;
    let exact = integrate(|x: &[f64]| truth.field(x), &x0, 10.0, 5, Tolerance::ROLLOUT)?;
    for ((t, a), b) in learned.times.iter().zip(&learned.states).zip(&exact.states) {
        println!(
            "t = {t:>4.1}: learned ({:+.4}, {:+.4})  true ({:+.4}, {:+.4})",
            a[0], a[1], b[0], b[1]
        );
    }
    export_field(LossKind::Hamiltonian, &spec, &params, &grid.data, &out)?;
    println!(
        "field on the {}-point grid written to {}",
        grid.len(),
        out.display()
    );
    Ok(())
}
