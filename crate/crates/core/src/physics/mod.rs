//! Ground-truth Hamiltonian systems and ODE integration.

mod integrate;
mod symplectic;
mod systems;

pub use integrate::{integrate, integrate_partial, Tolerance, Trajectory};
pub use symplectic::SymplecticForm;
pub use systems::{
    autodiff_field, hamiltonian, true_field, PhasePoint, PhaseState, PhysicalParams, SystemKind,
    GRAVITATIONAL_CONSTANT, GRAVITY, KEPLER_EVAL_GUARD, KEPLER_SAMPLING_GUARD,
};
