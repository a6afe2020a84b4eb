//! One-dimensional active-learning playground for the browser.
//!
//! The truth is `f(x) = x + 0.3·x³·exp(-x²/8)` with `x ~ N(0, 1)`: a mildly
//! non-linear map whose output pdf has heavier tails than the input.

use owal::acquisition::{AcquisitionContext, Criterion, CriterionKind, InputPool, SearchBox};
use owal::density::{
    empirical_quantile, estimate_density, log_pdf_distance, DensityEstimate, GridSpec, KdeOptions, OutputGrid,
};
use owal::gpr::{fit, Dataset, FitOptions, GprPosterior, HyperBounds};
use owal::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const HALFWIDTH: f64 = 4.0;
const POOL_SIZE: usize = 1000;
const REFERENCE_SIZE: usize = 20_000;
const GRID_POINTS: usize = 200;
const PLOT_POINTS: usize = 161;
const NOISE_VARIANCE: f64 = 1e-6;
const QUANTILE_LEVEL: f64 = 0.95;

pub fn truth(x: f64) -> f64 {
    x + 0.3 * x.powi(3) * (-x * x / 8.0).exp()
}

/// Curves for one redraw; the acquisition is evaluated over the box.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub x: Vec<f64>,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub acquisition: Vec<f64>,
    pub data_x: Vec<f64>,
    pub data_y: Vec<f64>,
    pub pdf_s: Vec<f64>,
    pub pdf_truth: Vec<f64>,
    pub pdf_model: Vec<f64>,
    pub error: f64,
    pub criterion: String,
    pub signal_std: f64,
    pub lengthscale: f64,
}

/// A growing design on the 1-D problem with a refitted surrogate.
#[derive(Debug, Clone)]
pub struct Playground {
    seed: u64,
    step: u64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    reference_inputs: Vec<f64>,
    s_star: f64,
    reference: DensityEstimate,
    posterior: Option<GprPosterior>,
}

impl Playground {
    /// Starts from three fixed design points.
    pub fn new(seed: u64) -> Result<Self> {
        let inputs = InputPool::standard_normal(1, REFERENCE_SIZE, seed ^ 0x5eed)?
            .points()
            .to_vec();
        let outputs: Vec<f64> = inputs.iter().map(|&x| truth(x)).collect();
        let span = OutputGrid::spanning(&outputs, GRID_POINTS)?;
        let reference = estimate_density(&outputs, GridSpec::Fixed(span), &KdeOptions::default())?;
        let mut s = Self {
            seed,
            step: 0,
            xs: Vec::new(),
            ys: Vec::new(),
            reference_inputs: inputs,
            s_star: empirical_quantile(&outputs, QUANTILE_LEVEL)?,
            reference,
            posterior: None,
        };
        for x in [-1.0, 0.0, 1.0] {
            s.push(x)?;
        }
        Ok(s)
    }

    pub fn samples(&self) -> usize {
        self.xs.len()
    }

    /// Observes the truth at `x`, clamped to the box, and refits.
    pub fn observe(&mut self, x: f64) -> Result<()> {
        self.push(x.clamp(-HALFWIDTH, HALFWIDTH))
    }

    /// Observes the point `criterion` picks next and returns it.
    pub fn step(&mut self, criterion: &str) -> Result<f64> {
        let pick = self.context()?.select_next(self.kind(criterion)?, POOL_SIZE + 200)?;
        let x = pick.point[0];
        self.push(x)?;
        Ok(x)
    }

    pub fn snapshot(&self, criterion: &str) -> Result<Snapshot> {
        let post = self.posterior()?;
        let ctx = self.context()?;
        let kind = self.kind(criterion)?;
        let x: Vec<f64> = (0..PLOT_POINTS)
            .map(|i| -HALFWIDTH + 2.0 * HALFWIDTH * i as f64 / (PLOT_POINTS - 1) as f64)
            .collect();
        let mut mean = Vec::with_capacity(x.len());
        let mut std = Vec::with_capacity(x.len());
        let mut acquisition = Vec::with_capacity(x.len());
        for &xi in &x {
            let (m, v) = post.predict(&[xi])?;
            mean.push(m);
            std.push(v.max(0.0).sqrt());
            acquisition.push(ctx.acquisition_value(kind, &[xi]).unwrap_or(f64::NAN));
        }
        let means = post.predict_means(&self.reference_inputs)?;
        let opts = KdeOptions {
            bandwidth: self.reference.bandwidth,
            floor: self.reference.floor,
        };
        let model = estimate_density(&means, GridSpec::Fixed(self.reference.grid), &opts)?;
        Ok(Snapshot {
            truth: x.iter().map(|&v| truth(v)).collect(),
            x,
            mean,
            std,
            acquisition,
            data_x: self.xs.clone(),
            data_y: self.ys.clone(),
            pdf_s: self.reference.grid.points(),
            pdf_truth: self.reference.pdf.clone(),
            error: log_pdf_distance(&model, &self.reference)?,
            pdf_model: model.pdf,
            criterion: criterion.to_string(),
            signal_std: post.params().signal_variance.sqrt(),
            lengthscale: post.params().lengthscale,
        })
    }

    fn posterior(&self) -> Result<&GprPosterior> {
        self.posterior.as_ref().ok_or(Error::InsufficientSamples {
            needed: 2,
            got: self.xs.len(),
        })
    }

    fn push(&mut self, x: f64) -> Result<()> {
        self.xs.push(x);
        self.ys.push(truth(x));
        self.step += 1;
        if self.xs.len() < 2 {
            return Ok(());
        }
        let data = Dataset::new(1, self.xs.clone(), self.ys.clone())?;
        let spread = self.ys.iter().fold(0.0f64, |a, y| a.max(y.abs())).max(1.0);
        let noise = NOISE_VARIANCE.sqrt();
        let bounds = HyperBounds {
            signal_std: [1e-2 * spread, 1e2 * spread],
            lengthscale: [0.1, 20.0],
            noise_std: [noise, noise],
        };
        let opts = FitOptions {
            n_starts: 4,
            max_evals: 150,
            seed: self.seed.wrapping_add(self.step),
        };
        self.posterior = Some(fit(&data, &bounds, &opts)?);
        Ok(())
    }

    fn context(&self) -> Result<AcquisitionContext> {
        let pool = InputPool::standard_normal(1, POOL_SIZE, self.seed.wrapping_add(1000 + self.step))?;
        let bounds = SearchBox::cube(1, -HALFWIDTH, HALFWIDTH)?;
        AcquisitionContext::new(
            self.posterior()?.clone(),
            pool,
            GridSpec::Auto,
            bounds,
            &KdeOptions::default(),
        )
    }

    fn kind(&self, criterion: &str) -> Result<CriterionKind> {
        let name: Criterion = criterion.parse()?;
        Ok(CriterionKind::from_name(name, self.s_star))
    }
}

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Browser handle around [`Playground`].
#[wasm_bindgen]
pub struct Session(Playground);

#[wasm_bindgen]
impl Session {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> std::result::Result<Session, JsError> {
        Playground::new(seed).map(Session).map_err(js_err)
    }

    pub fn samples(&self) -> usize {
        self.0.samples()
    }

    pub fn observe(&mut self, x: f64) -> std::result::Result<(), JsError> {
        self.0.observe(x).map_err(js_err)
    }

    /// `criterion` is one of US, IVR-IW, IVR-LW, B, QUANTILE.
    pub fn step(&mut self, criterion: &str) -> std::result::Result<f64, JsError> {
        self.0.step(criterion).map_err(js_err)
    }

    /// Plot data as JSON.
    pub fn snapshot(&self, criterion: &str) -> std::result::Result<String, JsError> {
        let snap = self.0.snapshot(criterion).map_err(js_err)?;
        Ok(serde_json::to_string(&snap).expect("snapshot serializes"))
    }
}
