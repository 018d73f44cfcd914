//! The three benchmark systems: exact fields, autodiff fields and energy
//! along integrated trajectories.
//!
//! cargo run --release --example physics_flow

use hamlearn::physics::{autodiff_field, integrate, PhysicalParams, Tolerance};

fn main() -> hamlearn::Result<()> {
    let systems = [
        (
            PhysicalParams::SpringMass {
                m: 1.0,
                k: 2.0,
                q0: 0.5,
            },
            vec![1.0, 0.0],
        ),
        (
            PhysicalParams::Pendulum {
                m: 1.0,
                l: 1.5,
                q0: 0.0,
            },
            vec![2.0, 0.0],
        ),
        (
            PhysicalParams::Kepler {
                big_m: 1.0,
                m: 1.0,
                q0: [0.0, 0.0],
            },
            vec![1.0, 0.0, 0.0, 0.8],
        ),
    ];
    for (params, x0) in systems {
        let exact = params.field(&x0)?;
        let ad = autodiff_field(&params, &x0)?;
        let h0 = params.energy(&x0)?;
        let traj = integrate(|x: &[f64]| params.field(x), &x0, 20.0, 200, Tolerance::DATA)?;
        let drift = traj
            .states
            .iter()
            .map(|x| params.energy(x).map(|h| (h - h0).abs()))
            .collect::<hamlearn::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let end = traj.states.last().expect("samples");
        println!("{}", params.system());
        println!("  field at x0      {exact:?}");
        println!("  autodiff field   {ad:?}");
        println!("  state at t = 20  {end:.6?}");
        println!("  H(x0) = {h0:.6}, max |H(t) - H(x0)| = {drift:.2e}");
    }
    Ok(())
}
