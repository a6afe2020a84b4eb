//! Acquisition criteria and the next-point optimizer.
//!
//! Integrals over `x` are Monte Carlo sums over an input pool. When the pool is
//! drawn from `p_x` the input density cancels, so IVR-IW weights are 1 and the
//! remaining weights only involve the output pdf.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::density::{estimate_density, DensityEstimate, GridSpec, KdeOptions};
use crate::error::{check_dim, Error, Result};
use crate::gpr::GprPosterior;
use crate::rng::{rng_for, stream};
use crate::simplex::{minimize, SimplexOptions};

pub const MIN_POOL_SIZE: usize = 1000;
pub const DEFAULT_TOP_CANDIDATES: usize = 10;
pub const DEFAULT_POLISH_EVALS: usize = 50;
/// Fraction of floored pool pdf values that triggers the ill-conditioning warning.
pub const FLOOR_WARNING_FRACTION: f64 = 0.5;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SCREEN_BLOCK: usize = 256;

/// Monte Carlo sample of the input space with log-densities of the target
/// distribution `p_x` and of the sampling distribution `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPool {
    dim: usize,
    points: Vec<f64>,
    log_px: Vec<f64>,
    log_q: Vec<f64>,
    seed: u64,
}

impl InputPool {
    pub fn new(dim: usize, points: Vec<f64>, log_px: Vec<f64>, log_q: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "pool of {} coordinates does not split into points of dimension {dim}",
                points.len()
            )));
        }
        let m = points.len() / dim;
        check_dim(m, log_px.len())?;
        check_dim(m, log_q.len())?;
        if m < MIN_POOL_SIZE {
            return Err(Error::InsufficientSamples {
                needed: MIN_POOL_SIZE,
                got: m,
            });
        }
        if points.iter().chain(&log_px).chain(&log_q).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("pool values must be finite".into()));
        }
        Ok(Self {
            dim,
            points,
            log_px,
            log_q,
            seed,
        })
    }

    /// `m` draws from `N(0, I_dim)`.
    pub fn standard_normal(dim: usize, m: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[stream::POOL]);
        let points: Vec<f64> = (0..m * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let log_px: Vec<f64> = points
            .chunks_exact(dim.max(1))
            .map(|x| -0.5 * x.iter().map(|v| v * v).sum::<f64>() - 0.5 * dim as f64 * LN_2PI)
            .collect();
        Self::new(dim, points, log_px.clone(), log_px, seed)
    }

    /// `m` draws from the uniform law on the box.
    pub fn uniform(bounds: &SearchBox, m: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, &[stream::POOL]);
        let dists: Vec<Uniform<f64>> = bounds
            .lo
            .iter()
            .zip(&bounds.hi)
            .map(|(&a, &b)| Uniform::new_inclusive(a, b).expect("validated box"))
            .collect();
        let points: Vec<f64> = (0..m)
            .flat_map(|_| dists.iter().map(|d| d.sample(&mut rng)).collect::<Vec<_>>())
            .collect();
        let log_vol = -bounds.lo.iter().zip(&bounds.hi).map(|(a, b)| (b - a).ln()).sum::<f64>();
        Self::new(bounds.dim(), points, vec![log_vol; m], vec![log_vol; m], seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.log_px.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_px.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, m: usize) -> &[f64] {
        &self.points[m * self.dim..(m + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn log_px(&self) -> &[f64] {
        &self.log_px
    }

    /// Importance ratio `p_x / q`; 1 for pools drawn from `p_x`.
    pub fn importance(&self, m: usize) -> f64 {
        (self.log_px[m] - self.log_q[m]).exp()
    }
}

/// Axis-aligned box for candidate inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SearchBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.is_empty()
            || lo
                .iter()
                .zip(&hi)
                .any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b))
        {
            return Err(Error::InvalidArgument(
                "search box needs finite lo < hi in every dimension".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(v, (a, b))| v.clamp(*a, *b))
            .collect()
    }
}

/// Criterion name as written in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Criterion {
    Us,
    IvrIw,
    IvrLw,
    B,
    Quantile,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [Self::Us, Self::IvrIw, Self::IvrLw, Self::B, Self::Quantile];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Us => "US",
            Self::IvrIw => "IVR-IW",
            Self::IvrLw => "IVR-LW",
            Self::B => "B",
            Self::Quantile => "QUANTILE",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::UnknownCriterion(s.to_string()))
    }
}

impl TryFrom<String> for Criterion {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Criterion> for String {
    fn from(c: Criterion) -> Self {
        c.as_str().to_string()
    }
}

/// A criterion with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionKind {
    Us,
    IvrIw,
    IvrLw,
    B,
    /// Level-set criterion around `s_star`; `band = None` picks 0.1·std of the pool means.
    Quantile {
        s_star: f64,
        band: Option<f64>,
    },
}

impl CriterionKind {
    pub fn name(&self) -> Criterion {
        match self {
            Self::Us => Criterion::Us,
            Self::IvrIw => Criterion::IvrIw,
            Self::IvrLw => Criterion::IvrLw,
            Self::B => Criterion::B,
            Self::Quantile { .. } => Criterion::Quantile,
        }
    }

    /// Resolves a name; `s_star` is only used by QUANTILE.
    pub fn from_name(name: Criterion, s_star: f64) -> Self {
        match name {
            Criterion::Us => Self::Us,
            Criterion::IvrIw => Self::IvrIw,
            Criterion::IvrLw => Self::IvrLw,
            Criterion::B => Self::B,
            Criterion::Quantile => Self::Quantile { s_star, band: None },
        }
    }

    /// Exponent of `σ̄` in the integrand.
    fn power(&self) -> Power {
        match self {
            Self::B | Self::Quantile { .. } => Power::Std,
            _ => Power::Var,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Power {
    Std,
    Var,
}

impl Power {
    #[inline]
    fn apply(self, var: f64) -> f64 {
        match self {
            Power::Std => var.sqrt(),
            Power::Var => var,
        }
    }
}

/// Per-pool-point weights with an optional conditioning warning.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub warning: Option<String>,
}

/// Limits for [`AcquisitionContext::select_next`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub top: usize,
    pub polish_evals: usize,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            top: DEFAULT_TOP_CANDIDATES,
            polish_evals: DEFAULT_POLISH_EVALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Everything the criteria need about the current surrogate, cached over the pool.
#[derive(Debug, Clone)]
pub struct AcquisitionContext {
    posterior: GprPosterior,
    pool: InputPool,
    bounds: SearchBox,
    means: Vec<f64>,
    variances: Vec<f64>,
    /// `L⁻¹ K(X, P)`, one column per pool point.
    whitened: DMatrix<f64>,
    pdf: DensityEstimate,
    pdf_values: Vec<f64>,
    d_pdf_values: Vec<f64>,
    in_domain: Vec<bool>,
}

impl AcquisitionContext {
    pub fn new(
        posterior: GprPosterior,
        pool: InputPool,
        grid: GridSpec,
        bounds: SearchBox,
        kde: &KdeOptions,
    ) -> Result<Self> {
        check_dim(posterior.dim(), pool.dim())?;
        check_dim(posterior.dim(), bounds.dim())?;
        let means = posterior.predict_means(pool.points())?;
        let whitened = posterior.whitened_batch(pool.points());
        let variances = whitened
            .column_iter()
            .map(|c| posterior.variance_from_whitened(&c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        let pdf = estimate_density(&means, grid, kde)?;
        let (pdf_values, d_pdf_values): (Vec<f64>, Vec<f64>) = means.iter().map(|&s| pdf.evaluate(s)).unzip();
        let in_domain = means.iter().map(|&s| pdf.grid.contains(s)).collect();
        Ok(Self {
            posterior,
            pool,
            bounds,
            means,
            variances,
            whitened,
            pdf,
            pdf_values,
            d_pdf_values,
            in_domain,
        })
    }

    pub fn posterior(&self) -> &GprPosterior {
        &self.posterior
    }

    pub fn pool(&self) -> &InputPool {
        &self.pool
    }

    pub fn bounds(&self) -> &SearchBox {
        &self.bounds
    }

    /// `ȳ(x_m)` over the pool.
    pub fn surrogate_means(&self) -> &[f64] {
        &self.means
    }

    /// `σ̄²(x_m)` over the pool.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Density of the surrogate means over the pool.
    pub fn pdf(&self) -> &DensityEstimate {
        &self.pdf
    }

    /// `p_ȳ(ȳ(x_m))`, floored.
    pub fn pdf_values(&self) -> &[f64] {
        &self.pdf_values
    }

    pub fn d_pdf_values(&self) -> &[f64] {
        &self.d_pdf_values
    }

    /// Whether `ȳ(x_m)` lies inside the output grid.
    pub fn in_domain(&self) -> &[bool] {
        &self.in_domain
    }

    fn floor_warning(&self) -> Option<String> {
        let floored = self.pdf_values.iter().filter(|&&p| p <= self.pdf.floor).count();
        let fraction = floored as f64 / self.pool.len() as f64;
        (fraction > FLOOR_WARNING_FRACTION).then(|| {
            format!(
                "ill-conditioned weights: output pdf is at its floor {:e} for {floored} of {} pool points",
                self.pdf.floor,
                self.pool.len()
            )
        })
    }

    fn quantile_band(&self, band: Option<f64>) -> Result<f64> {
        match band {
            Some(b) if b > 0.0 && b.is_finite() => Ok(b),
            Some(b) => Err(Error::InvalidArgument(format!(
                "quantile band must be positive, got {b}"
            ))),
            None => {
                let m = self.means.len() as f64;
                let mean = self.means.iter().sum::<f64>() / m;
                let std = (self.means.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / m).sqrt();
                if std > 0.0 {
                    Ok(0.1 * std)
                } else {
                    Ok(0.01 * (self.pdf.grid.hi - self.pdf.grid.lo))
                }
            }
        }
    }

    /// Integrand weights after cancelling the pool sampling density.
    pub fn weight_vector(&self, kind: CriterionKind) -> Result<WeightVector> {
        let m = self.pool.len();
        let weights: Vec<f64> = match kind {
            CriterionKind::Us => {
                return Err(Error::InvalidArgument("US has no integrand weights".into()));
            }
            CriterionKind::IvrIw => (0..m).map(|i| self.pool.importance(i)).collect(),
            CriterionKind::IvrLw => (0..m)
                .map(|i| self.masked(i, || self.pool.importance(i) / self.pdf_values[i]))
                .collect(),
            CriterionKind::B => (0..m)
                .map(|i| {
                    self.masked(i, || {
                        let p = self.pdf_values[i];
                        self.pool.importance(i) * self.d_pdf_values[i].abs() / (p * p)
                    })
                })
                .collect(),
            CriterionKind::Quantile { s_star, band } => {
                if !s_star.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "quantile level must be finite, got {s_star}"
                    )));
                }
                let band = self.quantile_band(band)?;
                let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * band);
                (0..m)
                    .map(|i| {
                        let z = (s_star - self.means[i]) / band;
                        self.pool.importance(i) * norm * (-0.5 * z * z).exp()
                    })
                    .collect()
            }
        };
        let warning = match kind {
            CriterionKind::IvrLw | CriterionKind::B => self.floor_warning(),
            _ => None,
        };
        Ok(WeightVector { weights, warning })
    }

    #[inline]
    fn masked(&self, i: usize, w: impl FnOnce() -> f64) -> f64 {
        if self.in_domain[i] {
            w()
        } else {
            0.0
        }
    }

    /// Criterion value at candidate `h`; lower is better for every kind.
    /// A degenerate candidate yields `+∞`.
    pub fn acquisition_value(&self, kind: CriterionKind, h: &[f64]) -> Result<f64> {
        check_dim(self.pool.dim(), h.len())?;
        if kind == CriterionKind::Us {
            return Ok(-self.posterior.predict_var(h)?);
        }
        let w = self.weight_vector(kind)?;
        Ok(self.integral(&w.weights, kind.power(), h))
    }

    fn integral(&self, weights: &[f64], power: Power, h: &[f64]) -> f64 {
        let vh = self.posterior.whitened(h);
        let denom = match self
            .posterior
            .variance_from_whitened(&vh)
            .and_then(|v| self.posterior.candidate_denominator(v))
        {
            Ok(d) => d,
            Err(e) => {
                log::debug!("candidate {h:?} rejected: {e}");
                return f64::INFINITY;
            }
        };
        let cross = self.whitened.tr_mul(&vh);
        let params = self.posterior.params();
        let total: f64 = (0..self.pool.len())
            .filter(|&m| weights[m] != 0.0)
            .map(|m| {
                let kbar = params.eval(self.pool.point(m), h) - cross[m];
                let var = self.variances[m];
                weights[m] * power.apply((var - kbar * kbar / denom).clamp(0.0, var))
            })
            .sum();
        total / self.pool.len() as f64
    }

    /// Criterion value with every pool point as the candidate.
    pub fn screen(&self, kind: CriterionKind) -> Result<Vec<f64>> {
        if kind == CriterionKind::Us {
            return Ok(self.variances.iter().map(|v| -v).collect());
        }
        let weights = self.weight_vector(kind)?.weights;
        let power = kind.power();
        let m = self.pool.len();
        let params = self.posterior.params();
        let active: Vec<usize> = (0..m).filter(|&i| weights[i] != 0.0).collect();
        let whitened_active = self.whitened.select_columns(&active);
        let mut out = Vec::with_capacity(m);
        for start in (0..m).step_by(SCREEN_BLOCK) {
            let cols: Vec<usize> = (start..(start + SCREEN_BLOCK).min(m)).collect();
            // posterior covariance between active pool points and this block of candidates
            let mut kbar = DMatrix::from_fn(active.len(), cols.len(), |a, c| {
                params.eval(self.pool.point(active[a]), self.pool.point(cols[c]))
            });
            kbar.gemm_tr(-1.0, &whitened_active, &self.whitened.select_columns(&cols), 1.0);
            for (c, &j) in cols.iter().enumerate() {
                let denom = match self.posterior.candidate_denominator(self.variances[j]) {
                    Ok(d) => d,
                    Err(_) => {
                        out.push(f64::INFINITY);
                        continue;
                    }
                };
                let total: f64 = active
                    .iter()
                    .enumerate()
                    .map(|(a, &i)| {
                        let k = kbar[(a, c)];
                        let var = self.variances[i];
                        weights[i] * power.apply((var - k * k / denom).clamp(0.0, var))
                    })
                    .sum();
                out.push(total / m as f64);
            }
        }
        Ok(out)
    }

    /// Screens the pool, then polishes the best candidates with a bounded simplex search.
    /// `budget` counts criterion evaluations and must cover the pool.
    pub fn select_next(&self, kind: CriterionKind, budget: usize) -> Result<Selection> {
        self.select_next_with(kind, budget, &SelectOptions::default())
    }

    pub fn select_next_with(&self, kind: CriterionKind, budget: usize, opts: &SelectOptions) -> Result<Selection> {
        let m = self.pool.len();
        if budget < m {
            return Err(Error::InvalidArgument(format!(
                "evaluation budget {budget} is smaller than the pool size {m}"
            )));
        }
        let screened = self.screen(kind)?;
        let mut order: Vec<usize> = (0..m).filter(|&i| screened[i].is_finite()).collect();
        if order.is_empty() {
            return Err(Error::NoValidCandidate);
        }
        order.sort_by(|&a, &b| screened[a].total_cmp(&screened[b]).then(a.cmp(&b)));
        order.truncate(opts.top.max(1));

        let weights = match kind {
            CriterionKind::Us => None,
            _ => Some(self.weight_vector(kind)?.weights),
        };
        let objective = |x: &[f64]| -> f64 {
            let h = self.bounds.clamp(x);
            match &weights {
                None => self.posterior.predict_var(&h).map_or(f64::INFINITY, |v| -v),
                Some(w) => self.integral(w, kind.power(), &h),
            }
        };

        let per_start = opts.polish_evals.min((budget - m) / order.len());
        let step: Vec<f64> = self
            .bounds
            .lo
            .iter()
            .zip(&self.bounds.hi)
            .map(|(a, b)| 0.05 * (b - a))
            .collect();
        let mut evaluations = m;
        let mut best = Selection {
            point: Vec::new(),
            value: f64::INFINITY,
            evaluations: 0,
        };
        for &start in &order {
            let x0 = self.bounds.clamp(self.pool.point(start));
            let (x, value) = if per_start > 0 {
                let found = minimize(objective, &x0, &SimplexOptions::new(per_start, step.clone()));
                evaluations += found.evals;
                (self.bounds.clamp(&found.x), found.value)
            } else if x0 == self.pool.point(start) {
                (x0, screened[start])
            } else {
                evaluations += 1;
                let v = objective(&x0);
                (x0, v)
            };
            if value < best.value {
                best.point = x;
                best.value = value;
            }
        }
        if !best.value.is_finite() {
            return Err(Error::NoValidCandidate);
        }
        best.evaluations = evaluations;
        Ok(best)
    }

    /// `[(1/M) Σ (p_x/q) p'² / p³]^½` over in-domain pool points.
    pub fn bound_constant_c(&self) -> Result<(f64, Option<String>)> {
        let m = self.pool.len();
        let sum: f64 = (0..m)
            .map(|i| {
                self.masked(i, || {
                    let (p, dp) = (self.pdf_values[i], self.d_pdf_values[i]);
                    self.pool.importance(i) * dp * dp / (p * p * p)
                })
            })
            .sum();
        Ok(((sum / m as f64).sqrt(), self.floor_warning()))
    }

    /// `C_N = (1/M) Σ σ̄²(x_m) / p_ȳ(ȳ(x_m))` at the current posterior.
    pub fn convergence_diagnostic(&self) -> f64 {
        let m = self.pool.len();
        let sum: f64 = (0..m)
            .map(|i| self.masked(i, || self.pool.importance(i) * self.variances[i] / self.pdf_values[i]))
            .sum();
        sum / m as f64
    }

    /// Integral of the current (non-augmented) posterior spread under a criterion's weights.
    pub fn current_integral(&self, kind: CriterionKind) -> Result<f64> {
        if kind == CriterionKind::Us {
            return Err(Error::InvalidArgument("US has no integrand weights".into()));
        }
        let w = self.weight_vector(kind)?.weights;
        let power = kind.power();
        Ok(w.iter()
            .zip(&self.variances)
            .map(|(w, v)| w * power.apply(*v))
            .sum::<f64>()
            / self.pool.len() as f64)
    }

    #[doc(hidden)]
    pub fn whitened_pool(&self) -> &DMatrix<f64> {
        &self.whitened
    }

    #[doc(hidden)]
    pub fn whitened_candidate(&self, h: &[f64]) -> DVector<f64> {
        self.posterior.whitened(h)
    }
}
