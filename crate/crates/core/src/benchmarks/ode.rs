//! Fixed-step classical Runge–Kutta integration.

use crate::error::{Error, Result};

/// Magnitude beyond which a trajectory counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Integrates `y' = rhs(t, y)` from `t = 0` over `steps` steps of size `dt`,
/// calling `observe(k, t_k, y_k)` for `k = 0..=steps`.
/// Returns a divergence error (without the input, which the caller fills in)
/// as soon as any state component leaves `±DIVERGENCE_LIMIT`.
pub fn rk4<R, O>(y: &mut [f64], dt: f64, steps: usize, mut rhs: R, mut observe: O) -> Result<()>
where
    R: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(usize, f64, &[f64]),
{
    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    observe(0, 0.0, y);
    for step in 0..steps {
        let t = step as f64 * dt;
        rhs(t, y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, &tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = (step + 1) as f64 * dt;
        if let Some(m) = y.iter().map(|v| v.abs()).find(|m| !(*m <= DIVERGENCE_LIMIT)) {
            return Err(Error::Divergence {
                time: t_next,
                magnitude: m,
                input: Vec::new(),
            });
        }
        observe(step + 1, t_next, y);
    }
    Ok(())
}

/// Step count and step size covering `horizon` with steps no longer than `max_dt`.
pub fn uniform_steps(horizon: f64, max_dt: f64) -> (usize, f64) {
    let steps = (horizon / max_dt - 1e-9).ceil().max(1.0) as usize;
    (steps, horizon / steps as f64)
}

/// Attaches the offending input to a divergence error.
pub(crate) fn with_input(err: Error, x: &[f64]) -> Error {
    match err {
        Error::Divergence { time, magnitude, .. } => Error::Divergence {
            time,
            magnitude,
            input: x.to_vec(),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_is_fourth_order() {
        let err = |steps: usize| {
            let mut y = [1.0];
            rk4(&mut y, 1.0 / steps as f64, steps, |_, y, d| d[0] = y[0], |_, _, _| {}).unwrap();
            (y[0] - 1f64.exp()).abs()
        };
        let ratio = err(20) / err(40);
        assert!((14.0..18.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn divergence_is_reported() {
        let mut y = [1.0];
        let e = rk4(&mut y, 0.1, 1000, |_, y, d| d[0] = 10.0 * y[0], |_, _, _| {}).unwrap_err();
        assert!(matches!(e, Error::Divergence { magnitude, .. } if magnitude > DIVERGENCE_LIMIT));
    }

    #[test]
    fn step_counts() {
        assert_eq!(uniform_steps(25.0, 0.1), (250, 0.1));
        let (n, dt) = uniform_steps(1.0, 0.3);
        assert_eq!(n, 4);
        assert!((dt - 0.25).abs() < 1e-15);
    }
}
