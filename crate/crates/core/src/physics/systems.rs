use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::SymplecticForm;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};

/// Gravitational acceleration for the pendulum.
pub const GRAVITY: f64 = 1.0;
/// Gravitational constant for the Kepler problem.
pub const GRAVITATIONAL_CONSTANT: f64 = 1.0;
/// Minimum Kepler separation |q − q0| accepted when sampling states.
pub const KEPLER_SAMPLING_GUARD: f64 = 0.5;
/// Below this separation the Kepler Hamiltonian and field are rejected.
pub const KEPLER_EVAL_GUARD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    SpringMass,
    Pendulum,
    Kepler,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [
        SystemKind::SpringMass,
        SystemKind::Pendulum,
        SystemKind::Kepler,
    ];

    /// Degrees of freedom n; the phase space has dimension 2n.
    pub fn dof(self) -> usize {
        match self {
            SystemKind::SpringMass | SystemKind::Pendulum => 1,
            SystemKind::Kepler => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::SpringMass => "spring_mass",
            SystemKind::Pendulum => "pendulum",
            SystemKind::Kepler => "kepler",
        }
    }

    /// Column names of the physical parameters, in [`PhysicalParams::values`] order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            SystemKind::SpringMass => &["m", "k", "q0"],
            SystemKind::Pendulum => &["m", "l", "q0"],
            SystemKind::Kepler => &["M", "m", "q0x", "q0y"],
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spring_mass" | "spring-mass" => Ok(SystemKind::SpringMass),
            "pendulum" => Ok(SystemKind::Pendulum),
            "kepler" => Ok(SystemKind::Kepler),
            other => Err(Error::invalid(format!("unknown system '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum PhysicalParams {
    SpringMass { m: f64, k: f64, q0: f64 },
    Pendulum { m: f64, l: f64, q0: f64 },
    Kepler { big_m: f64, m: f64, q0: [f64; 2] },
}

impl PhysicalParams {
    pub fn system(&self) -> SystemKind {
        match self {
            PhysicalParams::SpringMass { .. } => SystemKind::SpringMass,
            PhysicalParams::Pendulum { .. } => SystemKind::Pendulum,
            PhysicalParams::Kepler { .. } => SystemKind::Kepler,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match *self {
            PhysicalParams::SpringMass { m, k, q0 } => vec![m, k, q0],
            PhysicalParams::Pendulum { m, l, q0 } => vec![m, l, q0],
            PhysicalParams::Kepler { big_m, m, q0 } => vec![big_m, m, q0[0], q0[1]],
        }
    }

    pub fn from_values(system: SystemKind, v: &[f64]) -> Result<Self> {
        if v.len() != system.param_names().len() {
            return Err(Error::invalid(format!(
                "{system} takes {} parameters",
                system.param_names().len()
            )));
        }
        let params = match system {
            SystemKind::SpringMass => PhysicalParams::SpringMass {
                m: v[0],
                k: v[1],
                q0: v[2],
            },
            SystemKind::Pendulum => PhysicalParams::Pendulum {
                m: v[0],
                l: v[1],
                q0: v[2],
            },
            SystemKind::Kepler => PhysicalParams::Kepler {
                big_m: v[0],
                m: v[1],
                q0: [v[2], v[3]],
            },
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive: &[f64] = match self {
            PhysicalParams::SpringMass { m, k, .. } => &[*m, *k],
            PhysicalParams::Pendulum { m, l, .. } => &[*m, *l],
            PhysicalParams::Kepler { big_m, m, .. } => &[*big_m, *m],
        };
        if positive.iter().any(|&v| v <= 0.0 || !v.is_finite())
            || self.values().iter().any(|v| !v.is_finite())
        {
            return Err(Error::invalid(format!(
                "invalid physical parameters {self:?}"
            )));
        }
        Ok(())
    }

    fn kepler_offset(q0: [f64; 2], x: &[f64]) -> Result<(f64, f64, f64)> {
        let (dx, dy) = (x[0] - q0[0], x[1] - q0[1]);
        let r = dx.hypot(dy);
        if r < KEPLER_EVAL_GUARD {
            return Err(Error::domain(
                "kepler",
                format!("separation {r} below {KEPLER_EVAL_GUARD}"),
            ));
        }
        Ok((dx, dy, r))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let n = 2 * self.system().dof();
        if x.len() != n {
            return Err(Error::shape(
                self.system().name(),
                format!("state has {} entries, expected {n}", x.len()),
            ));
        }
        Ok(())
    }

    /// Energy at the flat state `[q…, p…]`.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(match *self {
            PhysicalParams::SpringMass { m, k, q0 } => {
                let (q, p) = (x[0], x[1]);
                p * p / (2.0 * m) + k * (q - q0) * (q - q0) / 2.0
            }
            PhysicalParams::Pendulum { m, l, q0 } => {
                let (q, p) = (x[0], x[1]);
                p * p / (2.0 * m * l * l) + m * GRAVITY * l * (1.0 - (q - q0).cos())
            }
            PhysicalParams::Kepler { big_m, m, q0 } => {
                let (_, _, r) = Self::kepler_offset(q0, x)?;
                (x[2] * x[2] + x[3] * x[3]) / (2.0 * m) - GRAVITATIONAL_CONSTANT * big_m * m / r
            }
        })
    }

    /// Closed-form `(∂H/∂p, −∂H/∂q)` at the flat state `[q…, p…]`.
    pub fn field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(match *self {
            PhysicalParams::SpringMass { m, k, q0 } => vec![x[1] / m, -k * (x[0] - q0)],
            PhysicalParams::Pendulum { m, l, q0 } => {
                vec![x[1] / (m * l * l), -m * GRAVITY * l * (x[0] - q0).sin()]
            }
            PhysicalParams::Kepler { big_m, m, q0 } => {
                let (dx, dy, r) = Self::kepler_offset(q0, x)?;
                let c = GRAVITATIONAL_CONSTANT * big_m * m / (r * r * r);
                vec![x[2] / m, x[3] / m, -c * dx, -c * dy]
            }
        })
    }

    /// The same Hamiltonian built from graph operations over a batch
    /// `x: batch × 2n`, returning `batch × 1`. Independent of [`Self::field`].
    pub fn hamiltonian_graph(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let (rows, cols) = g.shape(x);
        let n2 = 2 * self.system().dof();
        if cols != n2 {
            return Err(Error::shape(
                "hamiltonian_graph",
                format!("batch has {cols} columns, expected {n2}"),
            ));
        }
        let column = |g: &mut Graph, j: usize| -> Result<NodeId> {
            let mut sel = Array2::zeros((n2, 1));
            sel[[j, 0]] = 1.0;
            let sel = g.leaf(sel)?;
            g.matmul(x, sel)
        };
        match *self {
            PhysicalParams::SpringMass { m, k, q0 } => {
                let (q, p) = (column(g, 0)?, column(g, 1)?);
                let p2 = g.square(p)?;
                let kinetic = g.scale(p2, 1.0 / (2.0 * m))?;
                let dq = g.offset(q, -q0)?;
                let dq2 = g.square(dq)?;
                let potential = g.scale(dq2, k / 2.0)?;
                g.add(kinetic, potential)
            }
            PhysicalParams::Pendulum { m, l, q0 } => {
                let (q, p) = (column(g, 0)?, column(g, 1)?);
                let p2 = g.square(p)?;
                let kinetic = g.scale(p2, 1.0 / (2.0 * m * l * l))?;
                let dq = g.offset(q, -q0)?;
                let c = g.cos(dq)?;
                let neg = g.neg(c)?;
                let one_minus = g.offset(neg, 1.0)?;
                let potential = g.scale(one_minus, m * GRAVITY * l)?;
                g.add(kinetic, potential)
            }
            PhysicalParams::Kepler { big_m, m, q0 } => {
                let dx = column(g, 0)?;
                let dx = g.offset(dx, -q0[0])?;
                let dy = column(g, 1)?;
                let dy = g.offset(dy, -q0[1])?;
                let (px, py) = (column(g, 2)?, column(g, 3)?);
                let dx2 = g.square(dx)?;
                let dy2 = g.square(dy)?;
                let r2 = g.add(dx2, dy2)?;
                let r = g.sqrt(r2)?;
                if g.value(r).iter().any(|&v| v < KEPLER_EVAL_GUARD) {
                    return Err(Error::domain(
                        "kepler",
                        "state inside the singularity guard",
                    ));
                }
                let ones = g.leaf(Array2::ones((rows, 1)))?;
                let inv_r = g.div(ones, r)?;
                let potential = g.scale(inv_r, -GRAVITATIONAL_CONSTANT * big_m * m)?;
                let px2 = g.square(px)?;
                let py2 = g.square(py)?;
                let p2 = g.add(px2, py2)?;
                let kinetic = g.scale(p2, 1.0 / (2.0 * m))?;
                g.add(kinetic, potential)
            }
        }
    }
}

/// Canonical coordinates x = (q, p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

/// Time derivative (q̇, ṗ) of a [`PhaseState`]; stored with the same layout.
pub type PhasePoint = PhaseState;

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != p.len() {
            return Err(Error::invalid(
                "q and p must be non-empty and of equal length",
            ));
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) {
            return Err(Error::invalid("phase state must be finite"));
        }
        Ok(Self { q, p })
    }

    pub fn from_flat(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::invalid("flat phase state must have even length"));
        }
        let n = x.len() / 2;
        Self::new(x[..n].to_vec(), x[n..].to_vec())
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.q.iter().chain(&self.p).copied().collect()
    }
}

pub fn hamiltonian(params: &PhysicalParams, x: &PhaseState) -> Result<f64> {
    params.energy(&x.to_flat())
}

pub fn true_field(params: &PhysicalParams, x: &PhaseState) -> Result<PhasePoint> {
    PhaseState::from_flat(&params.field(&x.to_flat())?)
}

/// Ω · ∇H evaluated through automatic differentiation of
/// [`PhysicalParams::hamiltonian_graph`]. Returns the flat field.
pub fn autodiff_field(params: &PhysicalParams, x: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let xn = g.leaf(
        Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?,
    )?;
    let h = params.hamiltonian_graph(&mut g, xn)?;
    let s = g.sum(h)?;
    let grad = g.backward(s, &[xn])?[0];
    let grad: Vec<f64> = g.value(grad).iter().copied().collect();
    Ok(SymplecticForm::new(x.len() / 2).apply(&grad))
}
