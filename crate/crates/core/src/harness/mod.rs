//! Active-learning trials and their aggregation into campaigns.

mod output;

use std::time::Instant;

use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::acquisition::{AcquisitionContext, Criterion, CriterionKind, SelectOptions};
use crate::benchmarks::BenchmarkProblem;
use crate::config::{CampaignConfig, NoiseMode, RunConfig};
use crate::density::{
    empirical_quantile, estimate_density, exceedance_prob, log_pdf_distance, DensityEstimate, GridSpec, KdeOptions,
    OutputGrid,
};
use crate::error::{Error, Result};
use crate::gpr::{fit, Dataset, FitOptions, GprPosterior, HyperBounds};
use crate::rng::{derive_seed, rng_for, stream};

pub use output::{
    read_summary_csv, write_run, SummaryCsvRow, MANIFEST_FILE, REFERENCE_PDF_FILE, SUMMARY_FILE, TRIALS_FILE,
};

/// Campaigns with a larger failed fraction are flagged unreliable.
pub const UNRELIABLE_FAILURE_FRACTION: f64 = 0.2;
/// Lengthscale bounds as multiples of the search-box width.
pub const LENGTHSCALE_BOX_FRACTION: [f64; 2] = [0.05, 10.0];
/// Signal standard deviation bounds as multiples of `std(Y)`.
pub const SIGNAL_STD_FRACTION: [f64; 2] = [1e-3, 1e3];
/// Learned noise standard deviation bounds as multiples of `std(Y)`.
pub const LEARNED_NOISE_FRACTION: [f64; 2] = [1e-4, 1.0];

/// Stable 64-bit tag for a problem name (FNV-1a).
pub fn name_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The truth-model output density every trial of a problem is scored against.
#[derive(Debug, Clone)]
pub struct ReferenceDensity {
    pub seed: u64,
    /// Row-major inputs whose truth evaluation succeeded.
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
    pub failed: usize,
    pub pdf: DensityEstimate,
    pub quantile_level: f64,
    /// Output level at `quantile_level`.
    pub s_star: f64,
    pub exceedance: f64,
}

impl ReferenceDensity {
    pub fn compute(
        problem: &BenchmarkProblem,
        samples: usize,
        master_seed: u64,
        grid_points: usize,
        quantile_level: f64,
    ) -> Result<Self> {
        let seed = derive_seed(master_seed, &[stream::REFERENCE, name_tag(problem.name())]);
        let dim = problem.input_dim();
        let drawn = problem.sample_inputs(&mut rng_for(seed, &[]), samples);
        let (mut inputs, mut outputs, mut failed) = (Vec::with_capacity(drawn.len()), Vec::with_capacity(samples), 0);
        for (x, y) in drawn.chunks_exact(dim).zip(problem.truth_batch(&drawn)) {
            match y {
                Ok(y) => {
                    inputs.extend_from_slice(x);
                    outputs.push(y);
                }
                Err(e) => {
                    log::warn!("reference sample dropped: {e}");
                    failed += 1;
                }
            }
        }
        let grid = OutputGrid::spanning(&outputs, grid_points)?;
        let pdf = estimate_density(&outputs, GridSpec::Fixed(grid), &KdeOptions::default())?;
        let s_star = empirical_quantile(&outputs, quantile_level)?;
        let exceedance = exceedance_prob(&outputs, s_star)?;
        Ok(Self {
            seed,
            inputs,
            outputs,
            failed,
            pdf,
            quantile_level,
            s_star,
            exceedance,
        })
    }

    pub fn grid(&self) -> OutputGrid {
        self.pdf.grid
    }

    pub fn bandwidth(&self) -> f64 {
        self.pdf.bandwidth.expect("reference pdf is a KDE")
    }

    /// Log-pdf error and exceedance-probability error of a surrogate, evaluated
    /// on the reference inputs with the reference bandwidth.
    pub fn score(&self, posterior: &GprPosterior) -> Result<(f64, f64)> {
        let means = posterior.predict_means(&self.inputs)?;
        let opts = KdeOptions {
            bandwidth: Some(self.bandwidth()),
            floor: self.pdf.floor,
        };
        let pdf = estimate_density(&means, GridSpec::Fixed(self.grid()), &opts)?;
        let error = log_pdf_distance(&pdf, &self.pdf)?;
        let exceed = exceedance_prob(&means, self.s_star)?;
        Ok((error, (exceed - self.exceedance).abs()))
    }
}

/// Everything one campaign (a problem and a criterion) needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub criterion: CriterionKind,
    pub n_init: usize,
    pub n_iter: usize,
    pub n_trials: usize,
    pub pool_size: usize,
    pub noise: NoiseMode,
    pub noise_variance: f64,
    pub master_seed: u64,
    pub select: SelectOptions,
    pub fit_starts: usize,
    pub fit_evals: usize,
    /// Check `B ≤ c·√IVR-LW` on every pool candidate at every iteration.
    pub check_bound: bool,
}

impl ExperimentConfig {
    pub fn from_campaign(
        c: &CampaignConfig,
        criterion: Criterion,
        problem: &BenchmarkProblem,
        reference: &ReferenceDensity,
    ) -> Self {
        Self {
            criterion: CriterionKind::from_name(criterion, reference.s_star),
            n_init: c.n_init.resolve(problem.input_dim()),
            n_iter: c.iterations,
            n_trials: c.trials,
            pool_size: c.pool_size,
            noise: c.noise,
            noise_variance: c.noise_variance,
            master_seed: c.seed,
            select: SelectOptions {
                top: c.select_top,
                polish_evals: c.polish_evals,
            },
            fit_starts: c.fit_starts,
            fit_evals: c.fit_evals,
            check_bound: c.check_bound,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_init < 2 || self.n_trials == 0 {
            return Err(Error::InvalidArgument(format!(
                "need n_init ≥ 2 and n_trials ≥ 1, got {} and {}",
                self.n_init, self.n_trials
            )));
        }
        Ok(())
    }

    fn budget(&self) -> usize {
        self.pool_size + self.select.top * self.select.polish_evals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// Acquired points so far; 0 is the initial design.
    pub iteration: usize,
    pub n_samples: usize,
    pub signal_std: f64,
    pub lengthscale: f64,
    pub noise_std: f64,
    pub error: f64,
    pub exceedance_error: f64,
    pub c_n: f64,
    /// Point chosen at this iteration (absent after the last one).
    pub selected: Option<Vec<f64>>,
    pub observed: Option<f64>,
    pub acquisition_value: Option<f64>,
    pub warning: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub criterion: Criterion,
    pub iterations: Vec<IterationRecord>,
    pub failure: Option<String>,
    /// 99th percentile over the final pool of `|ȳ - y| / σ̄` (noiseless runs only).
    pub kappa: Option<f64>,
}

impl TrialRecord {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

fn std_dev(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m).sqrt()
}

fn hyper_bounds(cfg: &ExperimentConfig, outputs: &[f64], box_width: f64) -> HyperBounds {
    let sd = std_dev(outputs);
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let noise_std = match cfg.noise {
        NoiseMode::Zero => [0.0, 0.0],
        NoiseMode::Fixed => [cfg.noise_variance.sqrt(); 2],
        NoiseMode::Learned => [LEARNED_NOISE_FRACTION[0] * sd, LEARNED_NOISE_FRACTION[1] * sd],
    };
    HyperBounds {
        signal_std: [SIGNAL_STD_FRACTION[0] * sd, SIGNAL_STD_FRACTION[1] * sd],
        lengthscale: [
            LENGTHSCALE_BOX_FRACTION[0] * box_width,
            LENGTHSCALE_BOX_FRACTION[1] * box_width,
        ],
        noise_std,
    }
}

pub fn trial_seed(master_seed: u64, problem: &BenchmarkProblem, trial: usize) -> u64 {
    derive_seed(master_seed, &[stream::TRIAL, name_tag(problem.name()), trial as u64])
}

struct Observer {
    noise: Option<Normal<f64>>,
    rng: crate::rng::Rng,
}

impl Observer {
    fn observe(&mut self, problem: &BenchmarkProblem, x: &[f64]) -> Result<f64> {
        let y = problem.truth(x)?;
        Ok(match &self.noise {
            Some(n) => y + n.sample(&mut self.rng),
            None => y,
        })
    }
}

/// Runs one randomized experiment; failures are recorded, not propagated.
pub fn run_trial(
    problem: &BenchmarkProblem,
    cfg: &ExperimentConfig,
    reference: &ReferenceDensity,
    trial: usize,
) -> TrialRecord {
    let seed = trial_seed(cfg.master_seed, problem, trial);
    let mut record = TrialRecord {
        trial,
        seed,
        criterion: cfg.criterion.name(),
        iterations: Vec::with_capacity(cfg.n_iter + 1),
        failure: None,
        kappa: None,
    };
    if let Err(e) = trial_loop(problem, cfg, reference, seed, &mut record) {
        let e = Error::Trial {
            trial,
            iteration: record.iterations.len(),
            source: Box::new(e),
        };
        log::warn!("{} {}: {e}", problem.name(), cfg.criterion.name());
        record.failure = Some(e.to_string());
    }
    record
}

fn trial_loop(
    problem: &BenchmarkProblem,
    cfg: &ExperimentConfig,
    reference: &ReferenceDensity,
    seed: u64,
    record: &mut TrialRecord,
) -> Result<()> {
    cfg.validate()?;
    let dim = problem.input_dim();
    let bounds = problem.search_box();
    let box_width = bounds.hi[0] - bounds.lo[0];
    let mut observer = Observer {
        noise: match cfg.noise {
            NoiseMode::Zero => None,
            _ => Some(Normal::new(0.0, cfg.noise_variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?),
        },
        rng: rng_for(seed, &[stream::NOISE]),
    };
    let init = problem.sample_inputs(&mut rng_for(seed, &[stream::INIT]), cfg.n_init);
    let mut outputs = Vec::with_capacity(cfg.n_init + cfg.n_iter);
    for x in init.chunks_exact(dim) {
        outputs.push(observer.observe(problem, x)?);
    }
    let mut data = Dataset::new(dim, init, outputs)?;

    for iteration in 0..=cfg.n_iter {
        let started = Instant::now();
        let posterior = fit(
            &data,
            &hyper_bounds(cfg, data.outputs(), box_width),
            &FitOptions {
                n_starts: cfg.fit_starts,
                max_evals: cfg.fit_evals,
                seed: derive_seed(seed, &[stream::FIT, iteration as u64]),
            },
        )?;
        let (error, exceedance_error) = reference.score(&posterior)?;
        let pool = problem.pool(cfg.pool_size, derive_seed(seed, &[stream::POOL, iteration as u64]))?;
        let ctx = AcquisitionContext::new(
            posterior.clone(),
            pool,
            GridSpec::Fixed(reference.grid()),
            bounds.clone(),
            &KdeOptions::default(),
        )?;
        let c_n = ctx.convergence_diagnostic();
        if cfg.check_bound {
            check_bound(&ctx)?;
        }
        let params = posterior.params();
        let mut it = IterationRecord {
            iteration,
            n_samples: data.len(),
            signal_std: params.signal_variance.sqrt(),
            lengthscale: params.lengthscale,
            noise_std: params.noise_variance.sqrt(),
            error,
            exceedance_error,
            c_n,
            selected: None,
            observed: None,
            acquisition_value: None,
            warning: None,
            wall_seconds: 0.0,
        };
        if !(error.is_finite() && error >= 0.0 && c_n.is_finite() && c_n >= 0.0) {
            return Err(Error::Numerical(format!(
                "non-finite error {error} or diagnostic {c_n}"
            )));
        }
        if iteration < cfg.n_iter {
            if matches!(cfg.criterion, CriterionKind::B | CriterionKind::IvrLw) {
                it.warning = ctx.weight_vector(cfg.criterion)?.warning;
            }
            let pick = ctx.select_next_with(cfg.criterion, cfg.budget(), &cfg.select)?;
            let y = observer.observe(problem, &pick.point)?;
            data.push(&pick.point, y)?;
            it.selected = Some(pick.point);
            it.observed = Some(y);
            it.acquisition_value = Some(pick.value);
        } else if cfg.noise == NoiseMode::Zero {
            record.kappa = Some(kappa(problem, &ctx)?);
        }
        it.wall_seconds = started.elapsed().as_secs_f64();
        record.iterations.push(it);
    }
    Ok(())
}

fn check_bound(ctx: &AcquisitionContext) -> Result<()> {
    let (c, _) = ctx.bound_constant_c()?;
    let b = ctx.screen(CriterionKind::B)?;
    let lw = ctx.screen(CriterionKind::IvrLw)?;
    let scale = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (m, (bv, lv)) in b.iter().zip(&lw).enumerate() {
        if *bv > c * lv.sqrt() + 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "bound violated at pool point {m}: B = {bv:e} > c·√IVR-LW = {:e}",
                c * lv.sqrt()
            )));
        }
    }
    Ok(())
}

/// 99th percentile of `|ȳ - y| / σ̄` over the pool.
fn kappa(problem: &BenchmarkProblem, ctx: &AcquisitionContext) -> Result<f64> {
    let truth = problem.truth_batch(ctx.pool().points());
    let ratios: Vec<f64> = truth
        .into_iter()
        .zip(ctx.surrogate_means().iter().zip(ctx.variances()))
        .filter_map(|(y, (m, v))| {
            let y = y.ok()?;
            (*v > 0.0).then(|| (m - y).abs() / v.sqrt())
        })
        .collect();
    if ratios.is_empty() {
        return Ok(0.0);
    }
    empirical_quantile(&ratios, 0.99)
}

/// Aggregated curve for one criterion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub iteration: usize,
    pub median_error: f64,
    pub mad_half: f64,
    pub median_cn: f64,
    pub median_exceedance_error: f64,
    pub trials_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub criterion: Criterion,
    pub rows: Vec<SummaryRow>,
    pub trials: usize,
    pub failed: usize,
    pub unreliable: bool,
    pub median_kappa: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median.
pub fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    median(&values.iter().map(|v| (v - m).abs()).collect::<Vec<_>>())
}

/// Per-iteration medians over the completed trials.
pub fn summarize(criterion: Criterion, n_iter: usize, records: &[TrialRecord]) -> CampaignSummary {
    let done: Vec<&TrialRecord> = records.iter().filter(|r| r.completed()).collect();
    let rows = (0..=n_iter)
        .map(|i| {
            let pick =
                |f: fn(&IterationRecord) -> f64| -> Vec<f64> { done.iter().map(|r| f(&r.iterations[i])).collect() };
            let errors = pick(|r| r.error);
            SummaryRow {
                iteration: i,
                median_error: median(&errors),
                mad_half: 0.5 * mad(&errors),
                median_cn: median(&pick(|r| r.c_n)),
                median_exceedance_error: median(&pick(|r| r.exceedance_error)),
                trials_ok: done.len(),
            }
        })
        .collect();
    let failed = records.len() - done.len();
    let kappas: Vec<f64> = done.iter().filter_map(|r| r.kappa).collect();
    CampaignSummary {
        criterion,
        rows,
        trials: records.len(),
        failed,
        unreliable: failed as f64 > UNRELIABLE_FAILURE_FRACTION * records.len() as f64,
        median_kappa: (!kappas.is_empty()).then(|| median(&kappas)),
    }
}

/// Runs every trial of one campaign; trials run in parallel when enabled.
pub fn run_campaign(
    problem: &BenchmarkProblem,
    cfg: &ExperimentConfig,
    reference: &ReferenceDensity,
) -> (CampaignSummary, Vec<TrialRecord>) {
    let trials: Vec<usize> = (0..cfg.n_trials).collect();
    #[cfg(feature = "parallel")]
    let records: Vec<TrialRecord> = {
        use rayon::prelude::*;
        trials
            .par_iter()
            .map(|&t| run_trial(problem, cfg, reference, t))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let records: Vec<TrialRecord> = trials.iter().map(|&t| run_trial(problem, cfg, reference, t)).collect();
    (summarize(cfg.criterion.name(), cfg.n_iter, &records), records)
}

/// Results of all campaigns on one problem.
#[derive(Debug, Clone)]
pub struct ProblemRun {
    pub name: String,
    pub input_dim: usize,
    pub reference: ReferenceDensity,
    pub campaigns: Vec<(CampaignSummary, Vec<TrialRecord>)>,
}

/// Runs every (problem, criterion) pair of a config.
pub fn run_config(cfg: &RunConfig) -> Result<Vec<ProblemRun>> {
    let c = &cfg.campaign;
    let mut runs = Vec::new();
    for name in &c.problems {
        let problem = cfg.problems[name].build(name)?.with_box_halfwidth(c.box_halfwidth);
        log::info!(
            "{name}: computing reference density from {} samples",
            c.reference_samples
        );
        let reference =
            ReferenceDensity::compute(&problem, c.reference_samples, c.seed, c.grid_points, c.quantile_level)?;
        let mut campaigns = Vec::new();
        for &criterion in &c.criteria {
            log::info!(
                "{name}: running {criterion} ({} trials × {} iterations)",
                c.trials,
                c.iterations
            );
            let exp = ExperimentConfig::from_campaign(c, criterion, &problem, &reference);
            let started = Instant::now();
            let out = run_campaign(&problem, &exp, &reference);
            log::info!(
                "{name}: {criterion} done in {:.1} s, {} of {} trials failed",
                started.elapsed().as_secs_f64(),
                out.0.failed,
                out.0.trials
            );
            campaigns.push(out);
        }
        runs.push(ProblemRun {
            name: name.clone(),
            input_dim: problem.input_dim(),
            reference,
            campaigns,
        });
    }
    Ok(runs)
}
