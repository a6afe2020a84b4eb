//! Karhunen–Loève expansion of a stationary Gaussian process on `[0, T]`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance on negative eigenvalues, relative to the largest one.
const NEGATIVE_EIGEN_TOL: f64 = 1e-10;

/// Leading eigenpairs of `σ² exp(-(t-t')²/2ℓ²)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KlExpansion {
    sigma: f64,
    ell: f64,
    horizon: f64,
    times: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Sum of the full discrete spectrum.
    trace: f64,
    /// Grid values of the modes, one column per mode.
    modes: DMatrix<f64>,
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

impl KlExpansion {
    /// Nyström discretization with trapezoid weights; modes are orthonormal
    /// under the same weights and signed so that `Φ_i(0) ≥ 0`.
    pub fn build(sigma: f64, ell: f64, horizon: f64, grid_size: usize, n: usize) -> Result<Self> {
        if !(sigma > 0.0 && ell > 0.0 && horizon > 0.0) || ![sigma, ell, horizon].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "KL needs positive σ, ℓ, T; got σ = {sigma}, ℓ = {ell}, T = {horizon}"
            )));
        }
        if grid_size < 2 || n == 0 || n > grid_size {
            return Err(Error::InvalidArgument(format!(
                "KL needs 1 ≤ n ≤ grid size and grid size ≥ 2; got n = {n}, grid = {grid_size}"
            )));
        }
        let h = horizon / (grid_size - 1) as f64;
        let times: Vec<f64> = (0..grid_size).map(|i| i as f64 * h).collect();
        let weights = trapezoid_weights(grid_size, h);
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let var = sigma * sigma;
        let a = DMatrix::from_fn(grid_size, grid_size, |i, j| {
            let d = times[i] - times[j];
            sw[i] * var * (-0.5 * d * d / (ell * ell)).exp() * sw[j]
        });
        let eig = SymmetricEigen::new(a);
        let trace = eig.eigenvalues.sum();
        let mut order: Vec<usize> = (0..grid_size).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let top = eig.eigenvalues[order[0]];
        let mut eigenvalues = Vec::with_capacity(n);
        let mut modes = DMatrix::zeros(grid_size, n);
        for (k, &idx) in order.iter().take(n).enumerate() {
            let lambda = eig.eigenvalues[idx];
            if lambda < -NEGATIVE_EIGEN_TOL * top {
                return Err(Error::Numerical(format!(
                    "KL eigenvalue {k} is {lambda:e}; correlation matrix is not positive semidefinite"
                )));
            }
            eigenvalues.push(lambda.max(0.0));
            let psi = eig.eigenvectors.column(idx);
            let sign = if psi[0] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..grid_size {
                modes[(i, k)] = sign * psi[i] / sw[i];
            }
        }
        Ok(Self {
            sigma,
            ell,
            horizon,
            times,
            weights,
            eigenvalues,
            trace,
            modes,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Trapezoid quadrature weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Sum of every eigenvalue of the discretized operator.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.modes.column(k).iter().copied().collect()
    }

    /// Grid values of `Σ x_k √λ_k Φ_k` for whitened coefficients `x`.
    pub fn path(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_modes());
        let mut out = vec![0.0; self.times.len()];
        for (k, (&xk, &lk)) in x.iter().zip(&self.eigenvalues).enumerate() {
            let scale = xk * lk.sqrt();
            if scale == 0.0 {
                continue;
            }
            for (o, phi) in out.iter_mut().zip(self.modes.column(k).iter()) {
                *o += scale * phi;
            }
        }
        out
    }

    pub fn sampled(&self, x: &[f64]) -> Forcing {
        Forcing {
            step: self.times[1],
            values: self.path(x),
        }
    }
}

/// Piecewise-linear interpolant of a path on a uniform grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    step: f64,
    values: Vec<f64>,
}

impl Forcing {
    pub fn zero() -> Self {
        Self {
            step: 1.0,
            values: vec![0.0, 0.0],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            step: 1.0,
            values: vec![c, c],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `t`; constant extrapolation beyond the grid.
    pub fn at(&self, t: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = (t / self.step).max(0.0);
        let i = pos.floor() as usize;
        if i >= last {
            return self.values[last];
        }
        let frac = pos - i as f64;
        if frac == 0.0 {
            self.values[i]
        } else {
            self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(kl: &KlExpansion, a: &[f64], b: &[f64]) -> f64 {
        kl.weights().iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
    }

    #[test]
    fn fully_correlated_process_has_one_flat_mode() {
        let kl = KlExpansion::build(1.0, 1e4, 5.0, 101, 3).unwrap();
        assert!((kl.eigenvalues()[0] / 5.0 - 1.0).abs() < 1e-6);
        assert!(kl.eigenvalues()[1] < 1e-6);
        let phi = kl.mode(0);
        let flat = 1.0 / 5.0f64.sqrt();
        assert!(phi.iter().all(|p| (p - flat).abs() < 1e-4));
    }

    #[test]
    fn modes_are_orthonormal_and_signed() {
        let kl = KlExpansion::build(20.0, 0.1, 5.0, 201, 6).unwrap();
        for i in 0..6 {
            assert!(kl.mode(i)[0] >= 0.0);
            for j in 0..6 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((inner(&kl, &kl.mode(i), &kl.mode(j)) - expected).abs() < 1e-8);
            }
        }
        assert!(kl.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigenvalues_survive_fourfold_refinement() {
        let coarse = KlExpansion::build(20.0, 0.1, 5.0, 201, 5).unwrap();
        let fine = KlExpansion::build(20.0, 0.1, 5.0, 801, 5).unwrap();
        for (a, b) in coarse.eigenvalues().iter().zip(fine.eigenvalues()) {
            assert!((a / b - 1.0).abs() < 0.01, "{a} vs {b}");
        }
    }

    #[test]
    fn trace_matches_variance_times_horizon() {
        let kl = KlExpansion::build(20.0, 0.1, 5.0, 201, 1).unwrap();
        assert!((kl.trace() / (400.0 * 5.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_with_95_percent_of_trace() {
        let (sigma, ell, t) = (1.0, 4.0, 25.0);
        let grid = 201;
        let full = KlExpansion::build(sigma, ell, t, grid, grid).unwrap();
        let mut acc = 0.0;
        let n = full
            .eigenvalues()
            .iter()
            .position(|l| {
                acc += l;
                acc >= 0.95 * full.trace()
            })
            .unwrap()
            + 1;
        let kl = KlExpansion::build(sigma, ell, t, grid, n).unwrap();
        let (mut err, mut norm) = (0.0, 0.0);
        for i in 0..grid {
            for j in 0..grid {
                let d = kl.times()[i] - kl.times()[j];
                let c = sigma * sigma * (-0.5 * d * d / (ell * ell)).exp();
                let r: f64 = (0..n)
                    .map(|k| kl.eigenvalues()[k] * kl.mode(k)[i] * kl.mode(k)[j])
                    .sum();
                err += (c - r).powi(2);
                norm += c * c;
            }
        }
        assert!((err / norm).sqrt() < 0.05, "{}", (err / norm).sqrt());
    }

    #[test]
    fn invalid_requests() {
        assert!(KlExpansion::build(1.0, 1.0, 1.0, 10, 11).is_err());
        assert!(KlExpansion::build(0.0, 1.0, 1.0, 10, 1).is_err());
    }

    #[test]
    fn forcing_interpolates_linearly() {
        let f = Forcing {
            step: 0.5,
            values: vec![0.0, 1.0, 3.0],
        };
        assert_eq!(f.at(0.25), 0.5);
        assert_eq!(f.at(0.75), 2.0);
        assert_eq!(f.at(2.0), 3.0);
        assert_eq!(Forcing::constant(2.0).at(17.0), 2.0);
    }
}
