use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Beam, BeamSpec, Oscillator, OscillatorSpec};
use crate::acquisition::{InputPool, SearchBox};
use crate::error::{check_dim, Result};

/// Candidate search box half-width in whitened coordinates.
pub const DEFAULT_BOX_HALFWIDTH: f64 = 4.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec {
    Oscillator(OscillatorSpec),
    Beam(BeamSpec),
}

impl ProblemSpec {
    pub fn build(&self, name: &str) -> Result<BenchmarkProblem> {
        BenchmarkProblem::new(name, self.clone())
    }
}

#[derive(Debug, Clone)]
enum Truth {
    Oscillator(Oscillator),
    Beam(Beam),
}

/// A truth map with a standard-normal input law and a search box.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    name: String,
    spec: ProblemSpec,
    truth: Truth,
    halfwidth: f64,
}

impl BenchmarkProblem {
    pub fn new(name: &str, spec: ProblemSpec) -> Result<Self> {
        let truth = match &spec {
            ProblemSpec::Oscillator(s) => Truth::Oscillator(Oscillator::new(s.clone())?),
            ProblemSpec::Beam(s) => Truth::Beam(Beam::new(s.clone())?),
        };
        Ok(Self {
            name: name.to_string(),
            spec,
            truth,
            halfwidth: DEFAULT_BOX_HALFWIDTH,
        })
    }

    pub fn oscillator() -> Self {
        Self::new("oscillator", ProblemSpec::Oscillator(OscillatorSpec::default())).expect("default oscillator")
    }

    pub fn beam() -> Self {
        Self::new("beam", ProblemSpec::Beam(BeamSpec::default())).expect("default beam")
    }

    pub fn with_box_halfwidth(mut self, halfwidth: f64) -> Self {
        self.halfwidth = halfwidth;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        match &self.truth {
            Truth::Oscillator(o) => o.input_dim(),
            Truth::Beam(b) => b.input_dim(),
        }
    }

    pub fn truth(&self, x: &[f64]) -> Result<f64> {
        match &self.truth {
            Truth::Oscillator(o) => o.qoi(x),
            Truth::Beam(b) => b.qoi(x),
        }
    }

    /// Truth at many row-major points, in order.
    pub fn truth_batch(&self, points: &[f64]) -> Vec<Result<f64>> {
        let dim = self.input_dim();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            points.par_chunks_exact(dim).map(|x| self.truth(x)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            points.chunks_exact(dim).map(|x| self.truth(x)).collect()
        }
    }

    /// `m` row-major draws from `p_x = N(0, I)`.
    pub fn sample_inputs<R: Rng + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<f64> {
        (0..m * self.input_dim()).map(|_| StandardNormal.sample(rng)).collect()
    }

    pub fn input_logpdf(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.input_dim(), x.len())?;
        Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * x.len() as f64 * LN_2PI)
    }

    pub fn search_box(&self) -> SearchBox {
        SearchBox::cube(self.input_dim(), -self.halfwidth, self.halfwidth).expect("positive half-width")
    }

    pub fn pool(&self, m: usize, seed: u64) -> Result<InputPool> {
        InputPool::standard_normal(self.input_dim(), m, seed)
    }
}
