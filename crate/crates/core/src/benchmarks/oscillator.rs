//! Randomly forced nonlinear oscillator `ü + δu̇ + F(u) = ξ(t)`.

use serde::{Deserialize, Serialize};

use super::kl::{Forcing, KlExpansion};
use super::ode::{rk4, uniform_steps, with_input};
use crate::density::trapezoid;
use crate::error::{check_dim, Error, Result};

/// Restoring force `F(u)`, odd in `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RestoringForce {
    /// `αu + βu³`.
    Cubic { alpha: f64, beta: f64 },
    /// `αu` up to `u1`, held at `αu1` up to `u2`, then `α(|u| - u2 + u1)` with the sign of `u`.
    Plateau { alpha: f64, u1: f64, u2: f64 },
}

impl RestoringForce {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Self::Cubic { alpha, beta } => alpha * u + beta * u * u * u,
            Self::Plateau { alpha, u1, u2 } => {
                let a = u.abs();
                let mag = if a <= u1 {
                    alpha * a
                } else if a <= u2 {
                    alpha * u1
                } else {
                    alpha * (a - u2 + u1)
                };
                mag.copysign(u)
            }
        }
    }

    /// Stiffness at rest, `F'(0)`.
    pub fn linear_stiffness(&self) -> f64 {
        match *self {
            Self::Cubic { alpha, .. } | Self::Plateau { alpha, .. } => alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Cubic { alpha, beta } => alpha > 0.0 && beta.is_finite() && alpha.is_finite(),
            Self::Plateau { alpha, u1, u2 } => {
                alpha > 0.0 && u1 > 0.0 && u2 > u1 && [alpha, u1, u2].iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("force", format!("invalid restoring force {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorSpec {
    pub damping: f64,
    pub horizon: f64,
    /// Forcing standard deviation `σ_ξ`.
    pub sigma: f64,
    /// Forcing correlation length `ℓ_ξ`.
    pub ell: f64,
    pub n_inputs: usize,
    pub kl_grid: usize,
    pub force: RestoringForce,
}

impl Default for OscillatorSpec {
    fn default() -> Self {
        super::embedded_defaults().oscillator
    }
}

impl OscillatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::config("damping", "must be finite and ≥ 0"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", "must be finite and > 0"));
        }
        if self.n_inputs == 0 {
            return Err(Error::config("n_inputs", "must be ≥ 1"));
        }
        self.force.validate()
    }
}

/// Oscillator ready for evaluation: KL modes and step size are fixed at construction.
#[derive(Debug, Clone)]
pub struct Oscillator {
    spec: OscillatorSpec,
    kl: KlExpansion,
    steps: usize,
    dt: f64,
}

impl Oscillator {
    pub fn new(spec: OscillatorSpec) -> Result<Self> {
        let omega = spec.force.linear_stiffness().sqrt();
        let max_dt = spec.ell.min(2.0 * std::f64::consts::PI / omega) / 40.0;
        Self::with_max_step(spec, max_dt)
    }

    /// Same model with a caller-chosen step bound.
    pub fn with_max_step(spec: OscillatorSpec, max_dt: f64) -> Result<Self> {
        spec.validate()?;
        let kl = KlExpansion::build(spec.sigma, spec.ell, spec.horizon, spec.kl_grid, spec.n_inputs)?;
        let (steps, dt) = uniform_steps(spec.horizon, max_dt);
        Ok(Self { spec, kl, steps, dt })
    }

    pub fn spec(&self) -> &OscillatorSpec {
        &self.spec
    }

    pub fn kl(&self) -> &KlExpansion {
        &self.kl
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn input_dim(&self) -> usize {
        self.spec.n_inputs
    }

    /// Time average of `u` over the horizon for whitened KL coefficients `x`.
    pub fn qoi(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        self.respond(&self.kl.sampled(x)).map_err(|e| with_input(e, x))
    }

    /// Time average of `u` under an arbitrary forcing path.
    pub fn respond(&self, forcing: &Forcing) -> Result<f64> {
        let delta = self.spec.damping;
        let force = self.spec.force;
        let mut u = vec![0.0; self.steps + 1];
        rk4(
            &mut [0.0, 0.0],
            self.dt,
            self.steps,
            |t, y, d| {
                d[0] = y[1];
                d[1] = forcing.at(t) - delta * y[1] - force.eval(y[0]);
            },
            |k, _, y| u[k] = y[0],
        )?;
        Ok(trapezoid(&u, self.dt) / self.spec.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    fn linear(omega2: f64) -> OscillatorSpec {
        OscillatorSpec {
            force: RestoringForce::Cubic {
                alpha: omega2,
                beta: 0.0,
            },
            ..OscillatorSpec::default()
        }
    }

    #[test]
    fn defaults_load() {
        let spec = OscillatorSpec::default();
        assert_eq!(spec.n_inputs, 2);
        let osc = Oscillator::new(spec).unwrap();
        assert!((osc.dt() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero() {
        assert_eq!(
            Oscillator::new(OscillatorSpec::default())
                .unwrap()
                .qoi(&[0.0, 0.0])
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn plateau_force_shape() {
        let f = RestoringForce::Plateau {
            alpha: 1.0,
            u1: 1.2,
            u2: 3.5,
        };
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.eval(-2.0), -1.2);
        assert!((f.eval(4.0) - 1.7).abs() < 1e-15);
        assert!((f.eval(-4.0) + 1.7).abs() < 1e-15);
    }

    #[test]
    fn linear_constant_forcing_matches_closed_form() {
        let (w2, c) = (1.7, 0.8);
        let osc = Oscillator::new(linear(w2)).unwrap();
        let delta = osc.spec().damping;
        let t_end = osc.spec().horizon;
        let a = 0.5 * delta;
        let wd = (w2 - a * a).sqrt();
        let u = |t: f64| c / w2 * (1.0 - (-a * t).exp() * ((wd * t).cos() + a / wd * (wd * t).sin()));
        // composite Simpson on a fine grid
        let n = 200_000;
        let h = t_end / n as f64;
        let simpson: f64 = (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * u(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0;
        let oracle = simpson / t_end;
        let y = osc.respond(&Forcing::constant(c)).unwrap();
        assert!((y / oracle - 1.0).abs() < 1e-4, "{y} vs {oracle}");
    }

    #[test]
    fn step_halving_changes_little() {
        let spec = OscillatorSpec::default();
        let a = Oscillator::new(spec.clone()).unwrap();
        let b = Oscillator::with_max_step(spec, a.dt() / 2.0).unwrap();
        let mut rng = rng_for(3, &[]);
        for _ in 0..5 {
            let x: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (ya, yb) = (a.qoi(&x).unwrap(), b.qoi(&x).unwrap());
            assert!((ya - yb).abs() < 1e-4 * ya.abs(), "{x:?}: {ya} vs {yb}");
        }
    }

    #[test]
    fn output_is_heavy_tailed() {
        let osc = Oscillator::new(OscillatorSpec::default()).unwrap();
        let mut rng = rng_for(5, &[]);
        let y: Vec<f64> = (0..10_000)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                osc.qoi(&x).unwrap()
            })
            .collect();
        let m = y.len() as f64;
        let mean = y.iter().sum::<f64>() / m;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let kurt = y.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m / (var * var) - 3.0;
        assert!(kurt > 1.0, "excess kurtosis {kurt}");
    }

    #[test]
    fn continuous_in_the_input() {
        let osc = Oscillator::new(OscillatorSpec::default()).unwrap();
        let x = [0.7, -1.1];
        let y0 = osc.qoi(&x).unwrap();
        let y1 = osc.qoi(&[0.7 + 1e-6, -1.1]).unwrap();
        assert!((y1 - y0).abs() < 1e-5);
        assert_eq!(y0, osc.qoi(&x).unwrap());
    }

    #[test]
    fn divergence_carries_input() {
        let spec = OscillatorSpec {
            force: RestoringForce::Cubic { alpha: 1.0, beta: -0.5 },
            ..OscillatorSpec::default()
        };
        let osc = Oscillator::new(spec).unwrap();
        match osc.qoi(&[3.0, 3.0]) {
            Err(Error::Divergence { input, .. }) => assert_eq!(input, vec![3.0, 3.0]),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = OscillatorSpec {
            force: RestoringForce::Plateau {
                alpha: 1.0,
                u1: 2.0,
                u2: 1.0,
            },
            ..OscillatorSpec::default()
        };
        assert!(matches!(Oscillator::new(bad), Err(Error::Config { .. })));
        let bad = OscillatorSpec {
            damping: -1.0,
            ..OscillatorSpec::default()
        };
        assert!(Oscillator::new(bad).is_err());
    }
}
