//! Gaussian process regression with an isotropic squared-exponential kernel.
//!
//! The posterior keeps a lower-triangular factor `L` of `K(X,X) + σ_n² I` and the
//! weight vector `α = (K + σ_n² I)⁻¹ (Y - offset)`. Everything downstream (means,
//! variances, the rank-one augmented variance used by the acquisition functions)
//! is computed from those two pieces.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng;
use crate::simplex::{self, SimplexOptions};

/// Variances in `[-NEGATIVE_VARIANCE_TOL·σ_k², 0)` are roundoff and clamp to zero.
pub const NEGATIVE_VARIANCE_TOL: f64 = 1e-10;
/// Smallest admissible `σ̄²(h) + σ_n²` (relative to `σ_k²`) for a hypothetical sample.
pub const DEGENERATE_CANDIDATE_TOL: f64 = 1e-12;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscale: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        if !(signal_variance > 0.0 && signal_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "signal variance must be positive, got {signal_variance}"
            )));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        Ok(Self {
            signal_variance,
            lengthscale,
            noise_variance,
        })
    }

    /// `σ_k² exp(-‖a-b‖² / 2λ²)`. Callers guarantee equal dimensions.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.eval_sq_dist(sq_dist(a, b))
    }

    #[inline]
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        self.signal_variance * (-0.5 * d2 / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// Kernel value with a dimension check.
pub fn kernel_eval(params: &KernelParams, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(x.len(), x2.len())?;
    Ok(params.eval(x, x2))
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Labeled samples `{X, Y}`; inputs are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be >= 1".into()));
        }
        if inputs.len() != dim * outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "{} input values do not form {} points of dimension {dim}",
                inputs.len(),
                outputs.len()
            )));
        }
        if outputs.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if inputs.iter().chain(&outputs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(Self { dim, inputs, outputs })
    }

    pub fn from_points(points: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        for p in points {
            check_dim(dim, p.len())?;
        }
        Self::new(dim, points.concat(), outputs.to_vec())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim)
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite sample".into()));
        }
        self.inputs.extend_from_slice(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn with_sample(&self, x: &[f64], y: f64) -> Result<Self> {
        let mut out = self.clone();
        out.push(x, y)?;
        Ok(out)
    }

    fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.len() {
            for j in 0..i {
                best = best.min(sq_dist(self.point(i), self.point(j)));
            }
        }
        best.sqrt()
    }
}

fn gram(params: &KernelParams, data: &Dataset) -> DMatrix<f64> {
    let n = data.len();
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = params.eval(data.point(i), data.point(j));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(j, j)] += params.noise_variance;
    }
    k
}

/// Cholesky factor with jitter escalation from `1e-10·σ_k²` up to `1e-4·σ_k²`.
fn factorize(gram: &DMatrix<f64>, signal_variance: f64) -> Option<(DMatrix<f64>, f64)> {
    let mut jitter = 0.0;
    loop {
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            if jitter > 0.0 {
                log::debug!("gram factorization needed jitter {jitter:e}");
            }
            return Some((ch.unpack(), jitter));
        }
        jitter = if jitter == 0.0 {
            JITTER_START * signal_variance
        } else {
            jitter * 10.0
        };
        if jitter > JITTER_MAX * signal_variance * (1.0 + 1e-9) {
            return None;
        }
    }
}

fn clamp_variance(raw: f64, signal_variance: f64) -> Result<f64> {
    if raw < -NEGATIVE_VARIANCE_TOL * signal_variance || raw.is_nan() {
        return Err(Error::Numerical(format!(
            "predictive variance {raw:e} is negative beyond roundoff"
        )));
    }
    Ok(raw.clamp(0.0, signal_variance))
}

/// A GPR model conditioned on a dataset at fixed hyperparameters. Immutable.
#[derive(Debug, Clone)]
pub struct GprPosterior {
    params: KernelParams,
    data: Dataset,
    offset: f64,
    jitter: f64,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GprPosterior {
    /// Conditions a zero-mean GP prior on `data`.
    pub fn condition(params: KernelParams, data: Dataset) -> Result<Self> {
        Self::condition_with_offset(params, data, 0.0)
    }

    /// Conditions a GP prior with constant mean `offset` on `data`.
    pub fn condition_with_offset(params: KernelParams, data: Dataset, offset: f64) -> Result<Self> {
        let k = gram(&params, &data);
        let (factor, jitter) = factorize(&k, params.signal_variance).ok_or_else(|| {
            Error::Numerical(format!(
                "gram matrix not positive definite after jitter escalation \
                 (N = {}, dim = {}, min pairwise distance = {:e}, params = {:?})",
                data.len(),
                data.dim(),
                data.min_pairwise_distance(),
                params
            ))
        })?;
        let centered = DVector::from_iterator(data.len(), data.outputs().iter().map(|y| y - offset));
        let alpha = solve_gram(&factor, &centered)?;
        Ok(Self {
            params,
            data,
            offset,
            jitter,
            factor,
            alpha,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Diagonal jitter added on top of `σ_n²` to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Noise variance actually on the diagonal of the factored Gram matrix.
    pub fn effective_noise(&self) -> f64 {
        self.params.noise_variance + self.jitter
    }

    pub fn gram_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.data.len(), self.data.points().map(|p| self.params.eval(p, x)))
    }

    /// `L⁻¹ k(X, x)`.
    pub(crate) fn whitened(&self, x: &[f64]) -> DVector<f64> {
        let mut v = self.cross(x);
        self.factor.solve_lower_triangular_mut(&mut v);
        v
    }

    /// `L⁻¹ k(X, P)` for row-major points `P`, one column per point.
    pub(crate) fn whitened_batch(&self, points: &[f64]) -> DMatrix<f64> {
        let dim = self.dim();
        let m = points.len() / dim;
        let mut k = DMatrix::zeros(self.data.len(), m);
        for (j, p) in points.chunks_exact(dim).enumerate() {
            for (i, x) in self.data.points().enumerate() {
                k[(i, j)] = self.params.eval(x, p);
            }
        }
        self.factor.solve_lower_triangular_mut(&mut k);
        k
    }

    pub(crate) fn variance_from_whitened(&self, v: &DVector<f64>) -> Result<f64> {
        clamp_variance(
            self.params.signal_variance - v.norm_squared(),
            self.params.signal_variance,
        )
    }

    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.mean_unchecked(x))
    }

    #[inline]
    fn mean_unchecked(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .data
                .points()
                .zip(self.alpha.iter())
                .map(|(p, a)| a * self.params.eval(p, x))
                .sum::<f64>()
    }

    /// Means at many row-major points.
    pub fn predict_means(&self, points: &[f64]) -> Result<Vec<f64>> {
        if !points.len().is_multiple_of(self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: points.len() % self.dim(),
            });
        }
        Ok(points
            .chunks_exact(self.dim())
            .map(|x| self.mean_unchecked(x))
            .collect())
    }

    /// Latent posterior variance `σ̄²(x)`, clamped to `[0, σ_k²]`.
    pub fn predict_var(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        self.variance_from_whitened(&self.whitened(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        Ok((self.predict_mean(x)?, self.predict_var(x)?))
    }

    /// Posterior covariance `k̄(a, b)`.
    pub fn posterior_cov(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(self.params.eval(a, b) - self.whitened(a).dot(&self.whitened(b)))
    }

    /// Posterior variance at `x` after hypothetically observing `(h, ȳ(h))` with
    /// the model's noise level: `σ̄²(x) - k̄(x,h)² / (σ̄²(h) + σ_n²)`.
    pub fn augmented_var(&self, h: &[f64], x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        check_dim(self.dim(), x.len())?;
        let vh = self.whitened(h);
        let var_h = self.variance_from_whitened(&vh)?;
        let denom = self.candidate_denominator(var_h)?;
        let vx = self.whitened(x);
        let var_x = self.variance_from_whitened(&vx)?;
        let kbar = self.params.eval(x, h) - vx.dot(&vh);
        Ok((var_x - kbar * kbar / denom).clamp(0.0, var_x))
    }

    pub(crate) fn candidate_denominator(&self, var_h: f64) -> Result<f64> {
        let denom = var_h + self.effective_noise();
        if denom < DEGENERATE_CANDIDATE_TOL * self.params.signal_variance {
            Err(Error::DegenerateCandidate(denom))
        } else {
            Ok(denom)
        }
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.data.len() as f64;
        let centered: f64 = self
            .data
            .outputs()
            .iter()
            .zip(self.alpha.iter())
            .map(|(y, a)| (y - self.offset) * a)
            .sum();
        let log_det: f64 = self.factor.diagonal().iter().map(|d| d.ln()).sum();
        -0.5 * centered - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

fn solve_gram(factor: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let mut x = rhs.clone();
    if !factor.solve_lower_triangular_mut(&mut x) || !factor.tr_solve_lower_triangular_mut(&mut x) {
        return Err(Error::Numerical("triangular solve with zero pivot".into()));
    }
    Ok(x)
}

/// Box constraints for hyperparameter fitting, in standard-deviation units.
/// `noise_std = [0, 0]` means a noiseless model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub signal_std: [f64; 2],
    pub lengthscale: [f64; 2],
    pub noise_std: [f64; 2],
}

impl HyperBounds {
    fn validate(&self) -> Result<()> {
        let ok = |b: &[f64; 2], allow_zero: bool| {
            b[0].is_finite()
                && b[1].is_finite()
                && b[0] <= b[1]
                && (b[0] > 0.0 || (allow_zero && b[0] == 0.0 && b[1] == 0.0))
        };
        if !ok(&self.signal_std, false) || !ok(&self.lengthscale, false) || !ok(&self.noise_std, true) {
            return Err(Error::InvalidArgument(format!(
                "hyperparameter bounds must be finite positive intervals: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub n_starts: usize,
    pub max_evals: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evals: 200,
            seed: 0,
        }
    }
}

/// Maximizes the log marginal likelihood over `(log σ_k, log λ, log σ_n)` inside
/// `bounds` with a multi-start simplex search, then conditions on `data`.
///
/// Outputs are centered on their sample mean before fitting.
pub fn fit(data: &Dataset, bounds: &HyperBounds, opts: &FitOptions) -> Result<GprPosterior> {
    if data.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: data.len(),
        });
    }
    bounds.validate()?;
    let n = data.len();
    let offset = data.outputs().iter().sum::<f64>() / n as f64;
    let centered = DVector::from_iterator(n, data.outputs().iter().map(|y| y - offset));
    let mut d2 = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = sq_dist(data.point(i), data.point(j));
            d2[(i, j)] = v;
            d2[(j, i)] = v;
        }
    }

    // log-space boxes; a degenerate interval pins the parameter
    let boxes = [bounds.signal_std, bounds.lengthscale, bounds.noise_std];
    let free: Vec<usize> = (0..3).filter(|&i| boxes[i][0] < boxes[i][1]).collect();
    let log_box = |i: usize| (boxes[i][0].ln(), boxes[i][1].ln());
    let to_params = |u: &[f64]| -> [f64; 3] {
        let mut p = [boxes[0][0], boxes[1][0], boxes[2][0]];
        for (slot, &i) in free.iter().enumerate() {
            let (lo, hi) = log_box(i);
            p[i] = u[slot].clamp(lo, hi).exp();
        }
        p
    };

    let nll = |u: &[f64]| -> f64 {
        let [sk, ls, sn] = to_params(u);
        let sv = sk * sk;
        let inv = -0.5 / (ls * ls);
        let mut k = d2.map(|d| sv * (d * inv).exp());
        for i in 0..n {
            k[(i, i)] += sn * sn;
        }
        let Some((l, _)) = factorize(&k, sv) else {
            return f64::INFINITY;
        };
        let mut a = centered.clone();
        l.solve_lower_triangular_mut(&mut a);
        0.5 * a.norm_squared() + l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    };

    let mut rng = rng::rng_for(opts.seed, &[rng::stream::FIT]);
    let y_std = {
        let var = centered.norm_squared() / n as f64;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    };
    let mut best: Option<simplex::Minimum> = None;
    for start in 0..opts.n_starts.max(1) {
        let x0: Vec<f64> = free
            .iter()
            .map(|&i| {
                let (lo, hi) = log_box(i);
                if start == 0 {
                    // data-driven first start: σ_k from the output spread, mid-box otherwise
                    match i {
                        0 => y_std.ln().clamp(lo, hi),
                        _ => 0.5 * (lo + hi),
                    }
                } else {
                    rng.random_range(lo..=hi)
                }
            })
            .collect();
        let step: Vec<f64> = free
            .iter()
            .map(|&i| {
                let (lo, hi) = log_box(i);
                (0.1 * (hi - lo)).max(0.05)
            })
            .collect();
        let mut sopts = SimplexOptions::new(opts.max_evals, step);
        sopts.f_tol = 1e-9;
        sopts.x_tol = 1e-6;
        let m = simplex::minimize(&nll, &x0, &sopts);
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best = best.expect("at least one start");
    if !best.value.is_finite() {
        return Err(Error::Numerical(format!(
            "no hyperparameters in {bounds:?} give a positive-definite gram matrix \
             (N = {n}, min pairwise distance = {:e})",
            data.min_pairwise_distance()
        )));
    }
    let [sk, ls, sn] = to_params(&best.x);
    let params = KernelParams::new(sk * sk, ls, sn * sn)?;
    GprPosterior::condition_with_offset(params, data.clone(), offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(sv: f64, ls: f64, nv: f64) -> KernelParams {
        KernelParams::new(sv, ls, nv).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let p = params(2.0, 1.0, 0.0);
        assert_eq!(kernel_eval(&p, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 2.0);
        let p = params(1.0, 1.0, 0.0);
        let v = kernel_eval(&p, &[0.0, 0.0], &[2f64.sqrt(), 0.0]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        let p = params(1.0, 2.0, 0.0);
        let v = kernel_eval(&p, &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        assert!(matches!(
            kernel_eval(&p, &[0.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(KernelParams::new(0.0, 1.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, -1.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, 1.0, -1e-3).is_err());
    }

    fn toy_1d() -> Dataset {
        Dataset::new(1, vec![-2.0, -0.5, 0.7, 1.9], vec![0.3, -1.0, 0.8, 2.0]).unwrap()
    }

    #[test]
    fn noiseless_interpolation() {
        let g = GprPosterior::condition(params(1.0, 0.8, 0.0), toy_1d()).unwrap();
        for (x, y) in g.data().points().zip(g.data().outputs()) {
            assert!((g.predict_mean(x).unwrap() - y).abs() < 1e-8);
            assert!(g.predict_var(x).unwrap() < 1e-8);
        }
    }

    #[test]
    fn far_field_reverts_to_prior() {
        // zero-mean data so the far-field mean is the prior mean
        let data = Dataset::new(1, vec![-1.0, 0.0, 1.0], vec![0.5, -1.0, 0.5]).unwrap();
        let g = GprPosterior::condition(params(1.7, 0.5, 0.0), data).unwrap();
        assert!(g.predict_mean(&[40.0]).unwrap().abs() < 1e-6);
        assert!((g.predict_var(&[40.0]).unwrap() - 1.7).abs() < 1e-6);
    }

    #[test]
    fn gram_factor_reconstructs() {
        let g = GprPosterior::condition(params(1.3, 0.6, 1e-3), toy_1d()).unwrap();
        let l = g.gram_factor();
        let k = gram(g.params(), g.data());
        let err = (l * l.transpose() - &k).norm() / k.norm();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..12)
            .map(|i| -3.0 + 0.5 * i as f64 + rng.random_range(-0.1..0.1))
            .collect();
        let ys: Vec<f64> = xs.iter().map(|x| (1.3 * x).sin()).collect();
        let p = params(1.4, 0.9, 1e-4);
        let g = GprPosterior::condition(p, Dataset::new(1, xs.clone(), ys.clone()).unwrap()).unwrap();
        let n = xs.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            p.eval(&[xs[i]], &[xs[j]]) + if i == j { 1e-4 } else { 0.0 }
        });
        let lu = k.lu();
        let alpha = lu.solve(&DVector::from_vec(ys)).unwrap();
        for _ in 0..20 {
            let x = rng.random_range(-4.0..4.0);
            let kx = DVector::from_fn(n, |i, _| p.eval(&[xs[i]], &[x]));
            let mean = kx.dot(&alpha);
            let var = p.signal_variance - kx.dot(&lu.solve(&kx).unwrap());
            assert!((g.predict_mean(&[x]).unwrap() - mean).abs() < 1e-10);
            assert!((g.predict_var(&[x]).unwrap() - var.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn augmented_variance_examples() {
        let g = GprPosterior::condition(params(1.0, 0.7, 0.0), toy_1d()).unwrap();
        let h = [0.1];
        assert!(g.augmented_var(&h, &h).unwrap() < 1e-8);
        let far = [30.0];
        let before = g.predict_var(&far).unwrap();
        assert!((g.augmented_var(&h, &far).unwrap() - before).abs() < 1e-8);
        // an existing noiseless sample is a degenerate candidate
        assert!(matches!(
            g.augmented_var(&[-0.5], &[0.0]),
            Err(Error::DegenerateCandidate(_))
        ));
    }

    #[test]
    fn augmented_variance_matches_refit() {
        let g = GprPosterior::condition(params(0.9, 0.8, 1e-3), toy_1d()).unwrap();
        for (h, x) in [(0.2, 0.4), (-3.0, -2.5), (1.0, -1.0), (2.5, 2.5)] {
            let yh = g.predict_mean(&[h]).unwrap();
            let refit = GprPosterior::condition(*g.params(), g.data().with_sample(&[h], yh).unwrap()).unwrap();
            let direct = refit.predict_var(&[x]).unwrap();
            assert!((g.augmented_var(&[h], &[x]).unwrap() - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_zero_outputs_give_zero_mean() {
        let data = Dataset::new(2, vec![0.0, 0.0, 1.0, 0.5, -1.0, 2.0], vec![0.0; 3]).unwrap();
        let bounds = HyperBounds {
            signal_std: [1e-3, 1e3],
            lengthscale: [0.1, 10.0],
            noise_std: [1e-4, 1.0],
        };
        let g = fit(&data, &bounds, &FitOptions::default()).unwrap();
        for x in [[0.3, 0.2], [5.0, -5.0], [1.0, 0.5]] {
            assert_eq!(g.predict_mean(&x).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_point_fit_interpolates() {
        let data = Dataset::new(1, vec![-0.4, 1.1], vec![2.0, -0.5]).unwrap();
        let bounds = HyperBounds {
            signal_std: [1e-2, 1e2],
            lengthscale: [0.05, 20.0],
            noise_std: [1e-8, 1e-8],
        };
        let g = fit(&data, &bounds, &FitOptions::default()).unwrap();
        assert!((g.predict_mean(&[-0.4]).unwrap() - 2.0).abs() < 1e-6);
        assert!((g.predict_mean(&[1.1]).unwrap() + 0.5).abs() < 1e-6);
    }

    #[test]
    fn fit_recovers_lengthscale_of_gp_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let truth = params(1.0, 1.0, 1e-4);
        let data0 = Dataset::new(1, xs.clone(), vec![0.0; n]).unwrap();
        let l = gram(&truth, &data0).cholesky().unwrap().unpack();
        let z = DVector::from_fn(n, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
        });
        let ys: Vec<f64> = (l * z).iter().copied().collect();
        let bounds = HyperBounds {
            signal_std: [1e-2, 1e2],
            lengthscale: [0.05, 20.0],
            noise_std: [1e-3, 1.0],
        };
        let g = fit(&Dataset::new(1, xs, ys).unwrap(), &bounds, &FitOptions::default()).unwrap();
        let ls = g.params().lengthscale;
        assert!((0.5..=2.0).contains(&ls), "fitted lengthscale {ls}");
    }

    #[test]
    fn fit_rejects_single_point() {
        let data = Dataset::new(1, vec![0.0], vec![1.0]).unwrap();
        let bounds = HyperBounds {
            signal_std: [0.1, 10.0],
            lengthscale: [0.1, 10.0],
            noise_std: [0.0, 0.0],
        };
        assert!(matches!(
            fit(&data, &bounds, &FitOptions::default()),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let data = toy_1d();
        let bounds = HyperBounds {
            signal_std: [1e-2, 1e2],
            lengthscale: [0.05, 20.0],
            noise_std: [1e-4, 1.0],
        };
        let opts = FitOptions {
            seed: 5,
            ..Default::default()
        };
        let a = fit(&data, &bounds, &opts).unwrap();
        let b = fit(&data, &bounds, &opts).unwrap();
        assert_eq!(a.params(), b.params());
    }
}
