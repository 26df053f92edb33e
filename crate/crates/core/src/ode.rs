//! Fixed-step classical Runge–Kutta and cumulative Simpson quadrature.

use crate::error::{Error, Result};

/// States beyond this magnitude count as blow-up.
pub const BLOW_UP: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

/// Number of uniform steps that best matches `step` over `[t0, t1]`.
pub fn step_count(t0: f64, t1: f64, step: f64) -> usize {
    (((t1 - t0) / step).round() as usize).max(1)
}

/// Integrates `dx/dt = rhs(t, x)` from `(t0, x0)` to `t1` in `n_steps` equal
/// steps, with compensated summation in the state update.
pub fn rk4<F>(mut rhs: F, t0: f64, x0: &[f64], t1: f64, n_steps: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if t0.is_nan() || t1.is_nan() || t1 <= t0 || n_steps == 0 {
        return Err(Error::invalid(format!(
            "integration needs t1 > t0 and at least one step (t0 = {t0}, t1 = {t1})"
        )));
    }
    let dim = x0.len();
    let h = (t1 - t0) / n_steps as f64;
    let mut x = x0.to_vec();
    let mut carry = vec![0.0; dim];
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut probe = vec![0.0; dim];

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    times.push(t0);
    states.push(x.clone());

    let fail = |t: f64, reason: String| Error::IntegrationFailure {
        last_good_t: t,
        reason,
    };

    for step in 0..n_steps {
        let t = t0 + step as f64 * h;
        let stage = |rhs: &mut F, tt: f64, state: &[f64], out: &mut [f64]| {
            rhs(tt, state, out).map_err(|e| fail(t, e.to_string()))
        };
        stage(&mut rhs, t, &x, &mut k1)?;
        for i in 0..dim {
            probe[i] = x[i] + 0.5 * h * k1[i];
        }
        stage(&mut rhs, t + 0.5 * h, &probe, &mut k2)?;
        for i in 0..dim {
            probe[i] = x[i] + 0.5 * h * k2[i];
        }
        stage(&mut rhs, t + 0.5 * h, &probe, &mut k3)?;
        for i in 0..dim {
            probe[i] = x[i] + h * k3[i];
        }
        stage(&mut rhs, t + h, &probe, &mut k4)?;

        for i in 0..dim {
            let increment = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            let y = increment - carry[i];
            let sum = x[i] + y;
            carry[i] = (sum - x[i]) - y;
            x[i] = sum;
        }
        if let Some(bad) = x.iter().find(|v| !v.is_finite() || v.abs() > BLOW_UP) {
            return Err(fail(t, format!("state component reached {bad}")));
        }
        times.push(if step + 1 == n_steps {
            t1
        } else {
            t0 + (step + 1) as f64 * h
        });
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Running integral `F_k = ∫_{t_0}^{t_k} g` of samples `g_k` on a uniform
/// grid of spacing `h`. Even nodes use composite Simpson from `t_0`; odd
/// nodes start from a quadratic-fit first panel and continue with Simpson.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    out[1] = h / 12.0 * (5.0 * values[0] + 8.0 * values[1] - values[2]);
    for k in 2..n {
        out[k] = out[k - 2] + h / 3.0 * (values[k - 2] + 4.0 * values[k - 1] + values[k]);
    }
    out
}
