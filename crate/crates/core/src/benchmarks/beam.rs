//! Modal beam model under a random axial load `P(t)` and transverse loads `R_j(t)`:
//! `f̈_j + 2ζω₀ḟ_j + ω_j²[1 - P(t)/c_j] f_j = R_j(t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::kl::{Forcing, KlExpansion};
use super::ode::{rk4, uniform_steps, with_input};
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    pub zeta: f64,
    pub omega0: f64,
    pub length: f64,
    /// Number of modes `J`.
    pub modes: usize,
    /// KL terms per load process `n_KL`.
    pub kl_per_load: usize,
    pub horizon: f64,
    pub sigma: f64,
    pub ell: f64,
    pub kl_grid: usize,
}

impl Default for BeamSpec {
    fn default() -> Self {
        super::embedded_defaults().beam
    }
}

impl BeamSpec {
    /// `c_j = (jπ/l)⁴`.
    pub fn c(&self, j: usize) -> f64 {
        (j as f64 * PI / self.length).powi(4)
    }

    /// `ω_j² = ω₀² c_j`.
    pub fn omega_sq(&self, j: usize) -> f64 {
        self.omega0 * self.omega0 * self.c(j)
    }

    /// `n_KL` coefficients for the axial load plus `n_KL` per mode.
    pub fn input_dim(&self) -> usize {
        self.kl_per_load * (self.modes + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("zeta", self.zeta),
            ("omega0", self.omega0),
            ("length", self.length),
            ("horizon", self.horizon),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be finite and > 0"));
            }
        }
        if self.modes == 0 {
            return Err(Error::config("modes", "must be ≥ 1"));
        }
        if self.kl_per_load == 0 {
            return Err(Error::config("kl_per_load", "must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Beam {
    spec: BeamSpec,
    kl: KlExpansion,
    steps: usize,
    dt: f64,
}

impl Beam {
    pub fn new(spec: BeamSpec) -> Result<Self> {
        spec.validate()?;
        let omega_max = spec.omega_sq(spec.modes).sqrt();
        let max_dt = spec.ell.min(2.0 * PI / omega_max) / 40.0;
        Self::with_max_step(spec, max_dt)
    }

    pub fn with_max_step(spec: BeamSpec, max_dt: f64) -> Result<Self> {
        spec.validate()?;
        let kl = KlExpansion::build(spec.sigma, spec.ell, spec.horizon, spec.kl_grid, spec.kl_per_load)?;
        let (steps, dt) = uniform_steps(spec.horizon, max_dt);
        Ok(Self { spec, kl, steps, dt })
    }

    pub fn spec(&self) -> &BeamSpec {
        &self.spec
    }

    pub fn kl(&self) -> &KlExpansion {
        &self.kl
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    /// Peak displacement magnitude at `l/4`. `x` holds the axial-load
    /// coefficients first, then those of `R_1, …, R_J`.
    pub fn qoi(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        let n = self.spec.kl_per_load;
        let axial = self.kl.sampled(&x[..n]);
        let transverse: Vec<Forcing> = x[n..].chunks_exact(n).map(|c| self.kl.sampled(c)).collect();
        self.respond(&axial, &transverse).map_err(|e| with_input(e, x))
    }

    /// Peak of `|Σ_j sin(jπ/4) f_j(t)|` over the step times.
    pub fn respond(&self, axial: &Forcing, transverse: &[Forcing]) -> Result<f64> {
        let modes = self.spec.modes;
        check_dim(modes, transverse.len())?;
        let damping = 2.0 * self.spec.zeta * self.spec.omega0;
        let omega_sq: Vec<f64> = (1..=modes).map(|j| self.spec.omega_sq(j)).collect();
        let c: Vec<f64> = (1..=modes).map(|j| self.spec.c(j)).collect();
        let shape: Vec<f64> = (1..=modes).map(|j| (j as f64 * PI / 4.0).sin()).collect();
        let mut peak = 0.0f64;
        let mut y = vec![0.0; 2 * modes];
        rk4(
            &mut y,
            self.dt,
            self.steps,
            |t, y, d| {
                let p = axial.at(t);
                for j in 0..modes {
                    let (f, v) = (y[2 * j], y[2 * j + 1]);
                    d[2 * j] = v;
                    d[2 * j + 1] = transverse[j].at(t) - damping * v - omega_sq[j] * (1.0 - p / c[j]) * f;
                }
            },
            |_, _, y| {
                let w: f64 = (0..modes).map(|j| shape[j] * y[2 * j]).sum();
                peak = peak.max(w.abs());
            },
        )?;
        Ok(peak)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn defaults_and_dimensions() {
        let spec = BeamSpec::default();
        assert_eq!(spec.input_dim(), 2);
        assert!((spec.c(1) - 25.0).abs() < 1e-9);
        assert!((spec.omega_sq(1) - 6.25).abs() < 1e-9);
        let three = BeamSpec {
            modes: 3,
            kl_per_load: 2,
            ..spec
        };
        assert_eq!(three.input_dim(), 8);
        assert!((three.c(2) / three.c(1) - 16.0).abs() < 1e-12);
    }

    #[test]
    fn zero_input_gives_zero() {
        assert_eq!(Beam::new(BeamSpec::default()).unwrap().qoi(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn step_response_matches_closed_form() {
        let beam = Beam::new(BeamSpec::default()).unwrap();
        let spec = beam.spec();
        let r = 3.0;
        let w2 = spec.omega_sq(1);
        let a = spec.zeta * spec.omega0;
        let wd = (w2 - a * a).sqrt();
        // first overshoot of the underdamped step response, inside the horizon
        let t_peak = PI / wd;
        assert!(t_peak < spec.horizon);
        let f_peak = r / w2 * (1.0 + (-a * t_peak).exp());
        let oracle = f_peak * (PI / 4.0).sin();
        let y = beam.respond(&Forcing::zero(), &[Forcing::constant(r)]).unwrap();
        assert!((y / oracle - 1.0).abs() < 1e-3, "{y} vs {oracle}");
    }

    #[test]
    fn output_has_heavy_right_tail() {
        let beam = Beam::new(BeamSpec::default()).unwrap();
        let mut rng = rng_for(8, &[]);
        let y: Vec<f64> = (0..10_000)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
                beam.qoi(&x).unwrap()
            })
            .collect();
        let m = y.len() as f64;
        let mean = y.iter().sum::<f64>() / m;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let skew = y.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / m / var.powf(1.5);
        assert!(skew > 0.5, "skewness {skew}");
    }

    #[test]
    fn step_halving_changes_little() {
        let spec = BeamSpec::default();
        let a = Beam::new(spec.clone()).unwrap();
        let b = Beam::with_max_step(spec, a.dt() / 2.0).unwrap();
        for x in [[0.3, -1.2], [1.5, 0.8], [-0.4, 2.0]] {
            let (ya, yb) = (a.qoi(&x).unwrap(), b.qoi(&x).unwrap());
            assert!((ya - yb).abs() < 1e-4 * ya.abs(), "{x:?}: {ya} vs {yb}");
        }
    }

    #[test]
    fn continuous_in_the_input() {
        let beam = Beam::new(BeamSpec::default()).unwrap();
        let y0 = beam.qoi(&[0.5, 0.5]).unwrap();
        let y1 = beam.qoi(&[0.5 + 1e-6, 0.5]).unwrap();
        assert!((y1 - y0).abs() < 1e-5);
    }

    #[test]
    fn strong_axial_load_diverges() {
        let spec = BeamSpec {
            sigma: 200.0,
            ..BeamSpec::default()
        };
        let beam = Beam::new(spec).unwrap();
        assert!(matches!(beam.qoi(&[4.0, 1.0]), Err(Error::Divergence { .. })));
    }
}
