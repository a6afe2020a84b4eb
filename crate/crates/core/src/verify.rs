//! Numerical checks of the library against independent oracles.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acquisition::{AcquisitionContext, CriterionKind, InputPool};
use crate::benchmarks::BenchmarkProblem;
use crate::density::{estimate_density, log_pdf_distance, DensityEstimate, GridSpec, KdeOptions, OutputGrid};
use crate::error::Result;
use crate::gpr::{fit, Dataset, FitOptions, GprPosterior, HyperBounds, KernelParams};
use crate::rng::rng_for;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

/// Rank-one variance update under test: `(posterior, h, x) -> σ̄²(x; h)`.
pub type RankOneUpdate = fn(&GprPosterior, &[f64], &[f64]) -> Result<f64>;

/// The library update.
pub fn library_update(g: &GprPosterior, h: &[f64], x: &[f64]) -> Result<f64> {
    g.augmented_var(h, x)
}

/// A plausible bug for negative controls: the noise term is dropped from the denominator.
pub fn corrupted_update(g: &GprPosterior, h: &[f64], x: &[f64]) -> Result<f64> {
    let kbar = g.posterior_cov(x, h)?;
    let var_h = g.predict_var(h)?.max(1e-300);
    Ok((g.predict_var(x)? - kbar * kbar / var_h).max(0.0))
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub level: Level,
    pub seed: u64,
    pub update: RankOneUpdate,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            level: Level::Fast,
            seed: 7,
            update: library_update,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({:.1} s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &'static str, check: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let started = Instant::now();
    let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name,
        passed,
        detail,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs the checks of `opts.level`, in a fixed order.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckOutcome> {
    let seed = opts.seed;
    let mut out = vec![
        timed("gpr-exactness", || gpr_exactness(seed)),
        timed("rank-one-update", || rank_one_oracle(seed, 1000, opts.update)),
        timed("density-metric", density_metric_oracle),
        timed("cauchy-schwarz", || cauchy_schwarz(seed, 10)),
    ];
    if opts.level == Level::Full {
        out.push(timed("pdf-perturbation-slope", || pdf_perturbation_slope(seed)));
        out.push(timed("asymptotic-error", || asymptotic_error(seed)));
    }
    out
}

/// Jittered-grid inputs: random, yet never closer than `spacing / 2`.
fn stratified(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    (0..n)
        .map(|i| lo + w * (i as f64 + rng.random_range(0.25..0.75)))
        .collect()
}

struct Dense {
    params: KernelParams,
    xs: Vec<Vec<f64>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    alpha: DVector<f64>,
    mean: f64,
}

impl Dense {
    /// Direct LU solve of the predictive equations with centered outputs.
    fn new(params: KernelParams, xs: Vec<Vec<f64>>, ys: &[f64]) -> Self {
        let n = xs.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            params.eval(&xs[i], &xs[j]) + if i == j { params.noise_variance } else { 0.0 }
        });
        let mean = ys.iter().sum::<f64>() / n as f64;
        let lu = k.lu();
        let alpha = lu
            .solve(&DVector::from_iterator(n, ys.iter().map(|y| y - mean)))
            .expect("invertible Gram");
        Self {
            params,
            xs,
            lu,
            alpha,
            mean,
        }
    }

    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let kx = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|p| self.params.eval(p, x)));
        let var = self.params.signal_variance - kx.dot(&self.lu.solve(&kx).expect("invertible Gram"));
        (self.mean + kx.dot(&self.alpha), var)
    }
}

/// Noiseless posteriors interpolate and agree with a dense solve.
pub fn gpr_exactness(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng_for(seed, &[1]);
    let (mut interp, mut var_at_data, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..20 {
        let dim = 1 + case % 2;
        let n = rng.random_range(5..=50usize);
        let (xs, ls): (Vec<Vec<f64>>, f64) = if dim == 1 {
            let xs = stratified(&mut rng, n, -3.0, 3.0);
            (xs.into_iter().map(|x| vec![x]).collect(), 6.0 / n as f64)
        } else {
            let side = (n as f64).sqrt().ceil() as usize;
            let cols = stratified(&mut rng, side, -3.0, 3.0);
            let rows = stratified(&mut rng, side, -3.0, 3.0);
            let pts = cols
                .iter()
                .flat_map(|&a| rows.iter().map(move |&b| vec![a, b]))
                .take(n)
                .collect();
            (pts, 6.0 / side as f64)
        };
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.iter().map(|v| (1.7 * v).sin()).sum::<f64>())
            .collect();
        // lengthscales near the spacing keep the Gram matrix well conditioned
        let params = KernelParams::new(rng.random_range(0.5..2.0), ls * rng.random_range(0.5..1.0), 0.0)?;
        let mean = ys.iter().sum::<f64>() / n as f64;
        let g = GprPosterior::condition_with_offset(params, Dataset::from_points(&xs, &ys)?, mean)?;
        for (x, y) in xs.iter().zip(&ys) {
            interp = interp.max((g.predict_mean(x)? - y).abs());
            var_at_data = var_at_data.max(g.predict_var(x)?);
        }
        let dense = Dense::new(params, xs, &ys);
        for _ in 0..20 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.5..3.5)).collect();
            let (m, v) = dense.predict(&x);
            oracle = oracle
                .max((g.predict_mean(&x)? - m).abs())
                .max((g.predict_var(&x)? - v.max(0.0)).abs());
        }
    }
    let passed = interp < 1e-8 && var_at_data < 1e-8 && oracle < 1e-10;
    Ok((
        passed,
        format!("max interpolation error {interp:.1e}, max variance at data {var_at_data:.1e}, max dense-solve gap {oracle:.1e}"),
    ))
}

/// The rank-one update against a full refit at fixed hyperparameters.
pub fn rank_one_oracle(seed: u64, pairs: usize, update: RankOneUpdate) -> Result<(bool, String)> {
    let mut rng = rng_for(seed, &[2]);
    let mut worst = 0.0f64;
    let per_posterior = 50;
    for p in 0..pairs.div_ceil(per_posterior) {
        let dim = 1 + p % 2;
        let n = rng.random_range(3..=30usize);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.5..2.5)).collect())
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v.cos()).sum::<f64>()).collect();
        let noise = [1e-6, 1e-4, 1e-3, 1e-2][p % 4];
        let params = KernelParams::new(rng.random_range(0.5..2.0), rng.random_range(0.4..1.5), noise)?;
        let g = GprPosterior::condition(params, Dataset::from_points(&xs, &ys)?)?;
        for _ in 0..per_posterior.min(pairs - p * per_posterior) {
            let h: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let refit = GprPosterior::condition(params, g.data().with_sample(&h, g.predict_mean(&h)?)?)?;
            worst = worst.max((update(&g, &h, &x)? - refit.predict_var(&x)?).abs());
        }
    }
    Ok((
        worst < 1e-9,
        format!("max |rank-one - refit| over {pairs} pairs: {worst:.1e}"),
    ))
}

/// The log-pdf distance of two normals against a fine independent quadrature.
pub fn density_metric_oracle() -> Result<(bool, String)> {
    let grid = OutputGrid::new(-5.0, 5.0, 200)?;
    let floor = crate::density::DEFAULT_PDF_FLOOR;
    let normal = |mu: f64| {
        DensityEstimate::from_fn(
            grid,
            floor,
            move |s| INV_SQRT_2PI * (-0.5 * (s - mu) * (s - mu)).exp(),
            move |s| -(s - mu) * INV_SQRT_2PI * (-0.5 * (s - mu) * (s - mu)).exp(),
        )
    };
    let (p, q) = (normal(0.0), normal(0.5));
    let value = log_pdf_distance(&p, &q)?;
    let n = 10_000;
    let ds = 10.0 / (n - 1) as f64;
    let quad: f64 = (0..n)
        .map(|i| {
            let s = -5.0 + i as f64 * ds;
            let f = |mu: f64| (INV_SQRT_2PI * (-0.5 * (s - mu) * (s - mu)).exp()).max(floor).ln();
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * (f(0.0) - f(0.5)).abs() * ds
        })
        .sum();
    let rel = (value / quad - 1.0).abs();
    Ok((
        rel < 0.01,
        format!("metric {value:.5} vs quadrature {quad:.5} (relative gap {rel:.1e})"),
    ))
}

/// `B(h) ≤ c·√IVR-LW(h)` on every pool candidate of random oscillator posteriors.
pub fn cauchy_schwarz(seed: u64, posteriors: usize) -> Result<(bool, String)> {
    let problem = BenchmarkProblem::oscillator();
    let mut rng = rng_for(seed, &[5]);
    let (mut checked, mut violations, mut tightest) = (0usize, 0usize, f64::INFINITY);
    for k in 0..posteriors {
        let n = rng.random_range(4..=25usize);
        let xs = problem.sample_inputs(&mut rng, n);
        let ys: Vec<f64> = xs.chunks_exact(2).map(|x| problem.truth(x)).collect::<Result<_>>()?;
        let bounds = HyperBounds {
            signal_std: [1e-2, 1e2],
            lengthscale: [0.4, 80.0],
            noise_std: [1e-3, 1e-1],
        };
        let g = fit(
            &Dataset::new(2, xs, ys)?,
            &bounds,
            &FitOptions {
                seed: k as u64,
                ..Default::default()
            },
        )?;
        let pool = problem.pool(1000, rng.random())?;
        let ctx = AcquisitionContext::new(g, pool, GridSpec::Auto, problem.search_box(), &KdeOptions::default())?;
        let (c, _) = ctx.bound_constant_c()?;
        let b = ctx.screen(CriterionKind::B)?;
        let lw = ctx.screen(CriterionKind::IvrLw)?;
        let scale = b.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
        for (bv, lv) in b.iter().zip(&lw).filter(|(bv, _)| bv.is_finite()) {
            checked += 1;
            let bound = c * lv.sqrt();
            if *bv > bound + 1e-9 * scale {
                violations += 1;
            }
            if bound > 0.0 {
                tightest = tightest.min(bound / bv.max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok((
        violations == 0 && checked > 0,
        format!("{violations} violations over {checked} candidates; smallest bound/B ratio {tightest:.3}"),
    ))
}

/// KDE on a fixed grid with optional per-sample weights, plus the weighted derivative sum.
fn kde_sums(samples: &[f64], weights: Option<&[f64]>, grid: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let m = samples.len() as f64;
    let norm = INV_SQRT_2PI / (h * m);
    let mut pdf = vec![0.0; grid.len()];
    let mut deriv = vec![0.0; grid.len()];
    for (i, &y) in samples.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for (j, &s) in grid.iter().enumerate() {
            let z = (s - y) / h;
            if z.abs() < 12.0 {
                let k = norm * (-0.5 * z * z).exp();
                pdf[j] += w * k;
                deriv[j] -= w * k * z / h;
            }
        }
    }
    (pdf, deriv)
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// For `y = sin x` perturbed by `ε cos x`, the pdf difference minus its first-order
/// term `-d/ds E[Δy δ(s - y)]` shrinks like `ε²`.
pub fn pdf_perturbation_slope(seed: u64) -> Result<(bool, String)> {
    let mut rng = rng_for(seed, &[3]);
    let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
    let g: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
    let (n, lo, hi, h) = (301, -1.5, 1.5, 0.05);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let ds = grid[1] - grid[0];
    let (base, _) = kde_sums(&y, None, &grid, h);
    let (_, flux_slope) = kde_sums(&y, Some(&g), &grid, h);
    let eps = [0.08, 0.04, 0.02, 0.01];
    let residuals: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let moved: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a + e * b).collect();
            let (pdf, _) = kde_sums(&moved, None, &grid, h);
            let gaps: Vec<f64> = (0..n).map(|j| (pdf[j] - base[j] + e * flux_slope[j]).abs()).collect();
            crate::density::trapezoid(&gaps, ds)
        })
        .collect();
    let slope = loglog_slope(&eps, &residuals);
    let listed: Vec<String> = eps
        .iter()
        .zip(&residuals)
        .map(|(e, r)| format!("ε={e}: {r:.2e}"))
        .collect();
    Ok((
        (1.7..=2.3).contains(&slope),
        format!("fitted slope {slope:.3} ({})", listed.join(", ")),
    ))
}

/// Measured log-pdf error of noiseless fits to `y = k(·, z)/√k(z, z)` against
/// `∫ p_x |p'_y| / p_y² σ̄ dx`, for growing sample counts.
pub fn asymptotic_error(seed: u64) -> Result<(bool, String)> {
    let params = KernelParams::new(1.0, 1.0, 0.0)?;
    let z = [0.7];
    let truth = |x: f64| params.eval(&[x], &z) / params.signal_variance.sqrt();
    let pool = InputPool::standard_normal(1, 100_000, crate::rng::derive_seed(seed, &[4]))?;
    let ys: Vec<f64> = pool.points().iter().map(|&x| truth(x)).collect();
    let grid = OutputGrid::spanning(&ys, 400)?;
    let reference = estimate_density(&ys, GridSpec::Fixed(grid), &KdeOptions::default())?;
    let kde = KdeOptions {
        bandwidth: reference.bandwidth,
        ..KdeOptions::default()
    };
    let std_y = {
        let m = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / m;
        (ys.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt()
    };
    let (lo, hi) = pool
        .points()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    let mut gated = true;
    for n in [10usize, 20, 40] {
        // evenly spaced over the pool's extent
        let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let data = Dataset::new(1, xs.clone(), xs.iter().map(|&x| truth(x)).collect())?;
        let g = GprPosterior::condition(params, data)?;
        let means = g.predict_means(pool.points())?;
        let surrogate = estimate_density(&means, GridSpec::Fixed(grid), &kde)?;
        let measured = log_pdf_distance(&surrogate, &reference)?;
        let mut bound = 0.0;
        let mut max_sd = 0.0f64;
        for (m, (&x, &mean)) in pool.points().iter().zip(&means).enumerate() {
            let sd = g.predict_var(&[x])?.sqrt();
            max_sd = max_sd.max(sd);
            if grid.contains(mean) {
                let (p, dp) = reference.evaluate(mean);
                bound += pool.importance(m) * dp.abs() / (p * p) * sd;
            }
        }
        bound /= pool.len() as f64;
        let gate = max_sd < 0.05 * std_y;
        gated &= gate;
        let gap = (measured / bound - 1.0).abs();
        gaps.push(gap);
        rows.push(format!(
            "N={n}: measured {measured:.3e}, predicted {bound:.3e}, gap {:.0}%, max σ̄/std(y) {:.1e}{}",
            100.0 * gap,
            max_sd / std_y,
            if gate { "" } else { " (gate not met)" }
        ));
    }
    let within = gaps.iter().all(|g| *g <= 0.3);
    let improving = gaps.windows(2).all(|w| w[1] <= w[0]);
    Ok((gated && within && improving, rows.join("; ")))
}
