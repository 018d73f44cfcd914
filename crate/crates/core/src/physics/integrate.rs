//! Dormand–Prince 5(4) with step-size control and 4th-order dense output.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    /// Used when generating datasets.
    pub const DATA: Tolerance = Tolerance {
        rtol: 1e-8,
        atol: 1e-10,
    };
    /// Used for rolling out learned vector fields.
    pub const ROLLOUT: Tolerance = Tolerance {
        rtol: 1e-6,
        atol: 1e-8,
    };
}

/// `samples` states at `t_k = k·T/L`, `k = 1..=L`. The initial state is kept
/// separately and is not one of the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂ (fifth minus embedded fourth order)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// dense output
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// The fields are autonomous, so the stage nodes c_i are not needed.
const MAX_STEPS: usize = 5_000_000;

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, ki) in out.iter_mut().zip(k) {
                *o += h * c * ki;
            }
        }
    }
    out
}

fn eval_field<F>(field: &mut F, y: &[f64]) -> Option<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    match field(y) {
        Ok(v) if v.len() == y.len() && v.iter().all(|x| x.is_finite()) => Some(v),
        _ => None,
    }
}

/// Integrates `ẋ = field(x)` from `x0` over `[0, t_end]`.
pub fn integrate<F>(
    field: F,
    x0: &[f64],
    t_end: f64,
    samples: usize,
    tol: Tolerance,
) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    match integrate_partial(field, x0, t_end, samples, tol)? {
        (traj, None) => Ok(traj),
        (_, Some(err)) => Err(err),
    }
}

/// Like [`integrate`], but on failure returns the samples reached so far
/// alongside the error.
pub fn integrate_partial<F>(
    mut field: F,
    x0: &[f64],
    t_end: f64,
    samples: usize,
    tol: Tolerance,
) -> Result<(Trajectory, Option<Error>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if t_end <= 0.0 || !t_end.is_finite() {
        return Err(Error::invalid("integration span must be positive"));
    }
    if samples == 0 {
        return Err(Error::invalid("at least one sample is required"));
    }
    if !(tol.rtol > 0.0 && tol.atol > 0.0) {
        return Err(Error::invalid("tolerances must be positive"));
    }
    let sample_times: Vec<f64> = (1..=samples)
        .map(|k| {
            if k == samples {
                t_end
            } else {
                t_end * k as f64 / samples as f64
            }
        })
        .collect();
    let mut traj = Trajectory {
        initial: x0.to_vec(),
        times: Vec::with_capacity(samples),
        states: Vec::with_capacity(samples),
    };

    let dim = x0.len();
    let mut t = 0.0;
    let mut y = x0.to_vec();
    let Some(mut k1) = eval_field(&mut field, &y) else {
        return Ok((
            traj,
            Some(Error::Integration {
                time: 0.0,
                reason: "field undefined at the initial state".into(),
            }),
        ));
    };
    let mut h = initial_step(&mut field, &y, &k1, t_end, tol);
    let mut next = 0usize;
    let mut steps = 0usize;

    while next < samples {
        steps += 1;
        if steps > MAX_STEPS {
            return Ok((
                traj,
                Some(Error::Integration {
                    time: t,
                    reason: "step budget exhausted".into(),
                }),
            ));
        }
        if h < 1e-13 * t.abs().max(1.0) {
            return Ok((
                traj,
                Some(Error::Integration {
                    time: t,
                    reason: "step size underflow".into(),
                }),
            ));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let stages = (|| {
            let k2 = eval_field(&mut field, &combine(&y, h, &[(A21, &k1)]))?;
            let k3 = eval_field(&mut field, &combine(&y, h, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = eval_field(
                &mut field,
                &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = eval_field(
                &mut field,
                &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = eval_field(
                &mut field,
                &combine(
                    &y,
                    h,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            )?;
            let y_new = combine(
                &y,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = eval_field(&mut field, &y_new)?;
            Some((k3, k4, k5, k6, k7, y_new))
        })();

        let Some((k3, k4, k5, k6, k7, y_new)) = stages else {
            // The field is undefined somewhere inside the trial step; retry smaller.
            h *= 0.2;
            continue;
        };

        let mut err_sq = 0.0;
        for i in 0..dim {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / dim.max(1) as f64).sqrt();

        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            while next < samples && sample_times[next] <= t_new {
                let ts = sample_times[next];
                let state = if ts == t_new {
                    y_new.clone()
                } else {
                    let theta = (ts - t) / h;
                    let theta1 = 1.0 - theta;
                    (0..dim)
                        .map(|i| {
                            let ydiff = y_new[i] - y[i];
                            let bspl = h * k1[i] - ydiff;
                            let r4 = ydiff - h * k7[i] - bspl;
                            let r5 = h
                                * (D1 * k1[i]
                                    + D3 * k3[i]
                                    + D4 * k4[i]
                                    + D5 * k5[i]
                                    + D6 * k6[i]
                                    + D7 * k7[i]);
                            y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
                        })
                        .collect()
                };
                traj.times.push(ts);
                traj.states.push(state);
                next += 1;
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok((traj, None))
}

fn rms_scaled(v: &[f64], y: &[f64], tol: Tolerance) -> f64 {
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(vi, yi)| (vi / (tol.atol + tol.rtol * yi.abs())).powi(2))
        .sum();
    (s / v.len().max(1) as f64).sqrt()
}

fn initial_step<F>(field: &mut F, y: &[f64], f0: &[f64], t_end: f64, tol: Tolerance) -> f64
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let d0 = rms_scaled(y, y, tol);
    let d1 = rms_scaled(f0, y, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(t_end);
    let y1 = combine(y, h0, &[(1.0, f0)]);
    let h1 = match eval_field(field, &y1) {
        Some(f1) => {
            let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
            let d2 = rms_scaled(&diff, y, tol) / h0;
            let dmax = d1.max(d2);
            if dmax <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / dmax).powf(0.2)
            }
        }
        None => h0 * 1e-3,
    };
    (100.0 * h0).min(h1).min(t_end)
}
