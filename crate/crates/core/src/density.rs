//! Output-pdf estimation on a fixed grid and the log-pdf distance.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_PDF_FLOOR: f64 = 1e-16;
pub const MIN_GRID_POINTS: usize = 64;
pub const MIN_SAMPLES: usize = 100;
pub const AUTO_GRID_POINTS: usize = 200;

/// Kernel contributions beyond this many bandwidths are below any sensible floor.
const KERNEL_CUTOFF: f64 = 12.0;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Uniform grid over the output domain `S_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl OutputGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidArgument(format!("grid needs lo < hi, got [{lo}, {hi}]")));
        }
        if n_points < MIN_GRID_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        Ok(Self { lo, hi, n_points })
    }

    /// `[min - 0.1·range, max + 0.1·range]` of the samples.
    pub fn spanning(samples: &[f64], n_points: usize) -> Result<Self> {
        let (min, max) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
        let range = max - min;
        if !(range > 0.0) {
            return Err(Error::DegenerateDistribution);
        }
        Self::new(min - 0.1 * range, max + 0.1 * range, n_points)
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.lo && s <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Auto,
    Fixed(OutputGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeOptions {
    /// Overrides Silverman's rule when set.
    pub bandwidth: Option<f64>,
    pub floor: f64,
}

impl Default for KdeOptions {
    fn default() -> Self {
        Self {
            bandwidth: None,
            floor: DEFAULT_PDF_FLOOR,
        }
    }
}

/// Gridded pdf with its derivative. `pdf` is already floored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: OutputGrid,
    pub pdf: Vec<f64>,
    pub d_pdf: Vec<f64>,
    /// KDE bandwidth; `None` for tabulated densities.
    pub bandwidth: Option<f64>,
    pub floor: f64,
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Silverman's rule `0.9·min(std, IQR/1.34)·m^(-1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let (_, std) = mean_std(samples);
    if !(std > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { std.min(iqr / 1.34) } else { std };
    Ok(0.9 * spread * (samples.len() as f64).powf(-0.2))
}

/// Gaussian KDE of `samples` on a grid, with the analytic KDE derivative.
pub fn estimate_density(samples: &[f64], grid: GridSpec, opts: &KdeOptions) -> Result<DensityEstimate> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    if !(opts.floor > 0.0) {
        return Err(Error::InvalidArgument("pdf floor must be positive".into()));
    }
    if opts.bandwidth.is_none() && !(mean_std(samples).1 > 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let grid = match grid {
        GridSpec::Auto => OutputGrid::spanning(samples, AUTO_GRID_POINTS)?,
        GridSpec::Fixed(g) => g,
    };
    let h = match opts.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(samples)?,
    };

    let (p, dp) = kernel_sums(samples, &grid, h);
    let norm = INV_SQRT_2PI / (samples.len() as f64 * h);
    let pdf = p.iter().map(|v| (v * norm).max(opts.floor)).collect();
    let d_pdf = dp.iter().map(|v| v * norm / h).collect();
    Ok(DensityEstimate {
        grid,
        pdf,
        d_pdf,
        bandwidth: Some(h),
        floor: opts.floor,
    })
}

/// `Σ_v exp(-z²/2)` and `Σ_v -z exp(-z²/2)` with `z = (s_i - v)/h` at every grid node.
///
/// Walks outward from the node nearest each sample using the exact ratio
/// recurrence of Gaussians on a uniform grid: three exponentials per sample.
fn kernel_sums(samples: &[f64], grid: &OutputGrid, h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid.n_points;
    let d = grid.spacing() / h;
    let q = (-d * d).exp();
    let reach = (KERNEL_CUTOFF / d).ceil() as isize;
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for &v in samples {
        let pos = (v - grid.lo) / grid.spacing();
        let j0 = pos.round();
        let z0 = (j0 - pos) * d;
        let k0 = (-0.5 * z0 * z0).exp();
        let j0 = j0 as isize;
        let lo = (j0 - reach).max(0);
        let hi = (j0 + reach).min(n as isize - 1);
        // upward from j0 (inclusive)
        let (mut k, mut r, mut z) = (k0, (-z0 * d - 0.5 * d * d).exp(), z0);
        let mut j = j0;
        while j <= hi {
            if j >= lo {
                p[j as usize] += k;
                dp[j as usize] -= z * k;
            }
            k *= r;
            r *= q;
            z += d;
            j += 1;
        }
        // downward from j0 - 1
        let down = (z0 * d - 0.5 * d * d).exp();
        let (mut k, mut r, mut z) = (k0 * down, down * q, z0 - d);
        let mut j = j0 - 1;
        while j >= lo {
            if j <= hi {
                p[j as usize] += k;
                dp[j as usize] -= z * k;
            }
            k *= r;
            r *= q;
            z -= d;
            j -= 1;
        }
    }
    (p, dp)
}

impl DensityEstimate {
    /// Tabulates a known density and its derivative on `grid`.
    pub fn from_fn(grid: OutputGrid, floor: f64, pdf: impl Fn(f64) -> f64, d_pdf: impl Fn(f64) -> f64) -> Self {
        let pts = grid.points();
        Self {
            grid,
            pdf: pts.iter().map(|&s| pdf(s).max(floor)).collect(),
            d_pdf: pts.iter().map(|&s| d_pdf(s)).collect(),
            bandwidth: None,
            floor,
        }
    }

    /// Log-pdf slope at node `i`; zero where the pdf sits on the floor.
    fn log_slope(&self, i: usize) -> f64 {
        if self.pdf[i] <= self.floor {
            0.0
        } else {
            self.d_pdf[i] / self.pdf[i]
        }
    }

    /// Cubic Hermite interpolation of `log p` using the stored derivative.
    /// Returns `(p(s), p'(s))`; outside the grid the pdf is the floor with zero slope.
    pub fn evaluate(&self, s: f64) -> (f64, f64) {
        if !self.grid.contains(s) || !s.is_finite() {
            return (self.floor, 0.0);
        }
        let dx = self.grid.spacing();
        let pos = (s - self.grid.lo) / dx;
        let i = (pos.floor() as usize).min(self.grid.n_points - 2);
        let t = pos - i as f64;
        let (l0, l1) = (self.pdf[i].ln(), self.pdf[i + 1].ln());
        let (m0, m1) = (self.log_slope(i) * dx, self.log_slope(i + 1) * dx);
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let log_p = h00 * l0 + h10 * m0 + h01 * l1 + h11 * m1;
        let dlog = ((6.0 * t2 - 6.0 * t) * l0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * l1
            + (3.0 * t2 - 2.0 * t) * m1)
            / dx;
        let p = log_p.exp();
        if p <= self.floor {
            (self.floor, 0.0)
        } else {
            (p, p * dlog)
        }
    }

    pub fn pdf_at(&self, s: f64) -> f64 {
        self.evaluate(s).0
    }

    pub fn d_pdf_at(&self, s: f64) -> f64 {
        self.evaluate(s).1
    }

    /// Trapezoid integral of the (floored) pdf over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.pdf, self.grid.spacing())
    }

    /// Columnar text: header line then `s pdf d_pdf` per grid point.
    pub fn write_columns<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# grid lo={:e} hi={:e} n={} bandwidth={} floor={:e}",
            self.grid.lo,
            self.grid.hi,
            self.grid.n_points,
            self.bandwidth.map_or("none".to_string(), |h| format!("{h:e}")),
            self.floor
        )?;
        writeln!(w, "s pdf d_pdf")?;
        for (i, (p, dp)) in self.pdf.iter().zip(&self.d_pdf).enumerate() {
            writeln!(w, "{:.12e} {:.12e} {:.12e}", self.grid.point(i), p, dp)?;
        }
        Ok(())
    }

    /// Parses the output of [`DensityEstimate::write_columns`].
    pub fn read_columns(text: &str, source: &str) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: source.to_string(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty density file".into()))?;
        let field = |key: &str| -> Result<String> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(&format!("{key}=")).map(str::to_string))
                .ok_or_else(|| bad(format!("header lacks `{key}`")))
        };
        let num = |key: &str| -> Result<f64> { field(key)?.parse().map_err(|_| bad(format!("bad `{key}` in header"))) };
        let grid = OutputGrid::new(num("lo")?, num("hi")?, num("n")? as usize)?;
        let bandwidth = match field("bandwidth")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("bad bandwidth".into()))?),
        };
        let floor = num("floor")?;
        match lines.next() {
            Some(cols) if cols.split_whitespace().eq(["s", "pdf", "d_pdf"]) => {}
            _ => return Err(bad("missing `s pdf d_pdf` column header".into())),
        }
        let (mut pdf, mut d_pdf) = (Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("unparsable row `{line}`")))?;
            if vals.len() != 3 {
                return Err(bad(format!("expected 3 columns in `{line}`")));
            }
            pdf.push(vals[1]);
            d_pdf.push(vals[2]);
        }
        if pdf.len() != grid.n_points {
            return Err(bad(format!("expected {} rows, found {}", grid.n_points, pdf.len())));
        }
        Ok(Self {
            grid,
            pdf,
            d_pdf,
            bandwidth,
            floor,
        })
    }
}

pub(crate) fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// `∫_{S_y} |log p1(s) - log p2(s)| ds` by the trapezoid rule on the shared grid.
pub fn log_pdf_distance(p1: &DensityEstimate, p2: &DensityEstimate) -> Result<f64> {
    if p1.grid != p2.grid {
        return Err(Error::InvalidArgument(format!(
            "densities live on different grids: {:?} vs {:?}",
            p1.grid, p2.grid
        )));
    }
    let diffs: Vec<f64> = p1
        .pdf
        .iter()
        .zip(&p2.pdf)
        .map(|(a, b)| (a.max(p1.floor).ln() - b.max(p2.floor).ln()).abs())
        .collect();
    Ok(trapezoid(&diffs, p1.grid.spacing()))
}

/// Fraction of samples strictly above `s_star`.
pub fn exceedance_prob(samples: &[f64], s_star: f64) -> Result<f64> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    Ok(samples.iter().filter(|&&s| s > s_star).count() as f64 / samples.len() as f64)
}

/// Empirical quantile (linear interpolation between order statistics).
pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("bad quantile request q = {q}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(m: usize, seed: u64, shift: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z + shift
            })
            .collect()
    }

    fn phi(s: f64) -> f64 {
        (-0.5 * s * s).exp() * INV_SQRT_2PI
    }

    #[test]
    fn grid_validation() {
        assert!(OutputGrid::new(1.0, 1.0, 100).is_err());
        assert!(OutputGrid::new(0.0, 1.0, 63).is_err());
        let g = OutputGrid::new(-1.0, 1.0, 101).unwrap();
        assert!((g.spacing() - 0.02).abs() < 1e-15);
        assert_eq!(g.point(100), 1.0);
    }

    #[test]
    fn standard_normal_density_and_slope() {
        let samples = normals(1_000_000, 1, 0.0);
        let grid = OutputGrid::new(-4.0, 4.0, 201).unwrap();
        let d = estimate_density(&samples, GridSpec::Fixed(grid), &KdeOptions::default()).unwrap();
        let mid = 100;
        assert_eq!(grid.point(mid), 0.0);
        assert!((d.pdf[mid] - 0.3989).abs() < 0.01, "{}", d.pdf[mid]);
        assert!(d.d_pdf[mid].abs() < 0.01, "{}", d.d_pdf[mid]);
        let mass = d.mass();
        assert!((0.9..=1.01).contains(&mass), "{mass}");
    }

    #[test]
    fn chi_square_push_forward() {
        let samples: Vec<f64> = normals(100_000, 2, 0.0).iter().map(|x| x * x).collect();
        let d = estimate_density(&samples, GridSpec::Auto, &KdeOptions::default()).unwrap();
        let expected = (-0.5f64).exp() * INV_SQRT_2PI;
        assert!((d.pdf_at(1.0) - expected).abs() < 0.02, "{}", d.pdf_at(1.0));
    }

    #[test]
    fn auto_grid_spans_samples() {
        let samples = normals(500, 3, 2.0);
        let d = estimate_density(&samples, GridSpec::Auto, &KdeOptions::default()).unwrap();
        assert_eq!(d.grid.n_points, AUTO_GRID_POINTS);
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
        assert!((d.grid.lo - (lo - 0.1 * (hi - lo))).abs() < 1e-12);
        assert!(d.pdf.iter().all(|&p| p >= d.floor));
        assert!((0.9..=1.01).contains(&d.mass()));
    }

    #[test]
    fn estimate_errors() {
        assert!(matches!(
            estimate_density(&[1.0; 50], GridSpec::Auto, &KdeOptions::default()),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            estimate_density(&[1.0; 200], GridSpec::Auto, &KdeOptions::default()),
            Err(Error::DegenerateDistribution)
        ));
        let grid = OutputGrid::new(0.0, 2.0, 101).unwrap();
        let opts = KdeOptions {
            bandwidth: Some(0.1),
            ..KdeOptions::default()
        };
        let d = estimate_density(&[1.0; 200], GridSpec::Fixed(grid), &opts).unwrap();
        assert!((d.pdf[50] - INV_SQRT_2PI / 0.1).abs() < 1e-12);
    }

    #[test]
    fn analytic_derivative_matches_finite_differences() {
        let samples = normals(2000, 4, 0.0);
        let worst = |n: usize| {
            let grid = OutputGrid::new(-3.0, 3.0, n).unwrap();
            let d = estimate_density(&samples, GridSpec::Fixed(grid), &KdeOptions::default()).unwrap();
            let dx = grid.spacing();
            (1..n - 1)
                .map(|i| ((d.pdf[i + 1] - d.pdf[i - 1]) / (2.0 * dx) - d.d_pdf[i]).abs())
                .fold(0.0f64, f64::max)
        };
        let (coarse, fine) = (worst(301), worst(601));
        assert!(coarse < 1e-3, "{coarse}");
        let order = (coarse / fine).log2();
        assert!((1.8..=2.2).contains(&order), "observed order {order}");
    }

    #[test]
    fn hermite_interpolation_is_exact_for_gaussian_log_density() {
        let grid = OutputGrid::new(-6.0, 6.0, 97).unwrap();
        let d = DensityEstimate::from_fn(grid, DEFAULT_PDF_FLOOR, phi, |s| -s * phi(s));
        for s in [-5.33, -1.01, 0.0, 0.377, 2.9, 5.99] {
            let (p, dp) = d.evaluate(s);
            assert!((p / phi(s) - 1.0).abs() < 1e-10, "{s}");
            assert!((dp + s * phi(s)).abs() < 1e-10 * phi(s).max(1e-300) + 1e-14);
        }
        assert_eq!(d.evaluate(7.0), (DEFAULT_PDF_FLOOR, 0.0));
    }

    #[test]
    fn distance_identity_and_mismatch() {
        let samples = normals(1000, 5, 0.0);
        let d = estimate_density(&samples, GridSpec::Auto, &KdeOptions::default()).unwrap();
        assert_eq!(log_pdf_distance(&d, &d).unwrap(), 0.0);
        let other = estimate_density(&normals(1000, 6, 0.0), GridSpec::Auto, &KdeOptions::default()).unwrap();
        assert!(matches!(log_pdf_distance(&d, &other), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn distance_of_locally_scaled_density() {
        // ratio e on [-1, 1], so |log ratio| = 1 over an interval of length 2
        let grid = OutputGrid::new(-4.0, 4.0, 801).unwrap();
        let p1 = DensityEstimate::from_fn(grid, DEFAULT_PDF_FLOOR, phi, |s| -s * phi(s));
        let e = std::f64::consts::E;
        let p2 = DensityEstimate::from_fn(
            grid,
            DEFAULT_PDF_FLOOR,
            |s| if (-1.0..=1.0).contains(&s) { e * phi(s) } else { phi(s) },
            |s| -s * phi(s),
        );
        let d = log_pdf_distance(&p1, &p2).unwrap();
        assert!((d - 2.0).abs() <= grid.spacing() + 1e-12, "{d}");
    }

    #[test]
    fn shifted_normal_kdes_match_quadrature() {
        // |log φ(s) - log φ(s - 0.5)| = |0.125 - 0.5 s|, integrated on a 10⁴-point grid
        let fine = 10_000;
        let h = 10.0 / (fine - 1) as f64;
        let vals: Vec<f64> = (0..fine).map(|i| (0.125 - 0.5 * (-5.0 + i as f64 * h)).abs()).collect();
        let oracle = trapezoid(&vals, h);
        let grid = OutputGrid::new(-5.0, 5.0, 201).unwrap();
        let opts = KdeOptions::default();
        let a = estimate_density(&normals(1_000_000, 7, 0.0), GridSpec::Fixed(grid), &opts).unwrap();
        let b = estimate_density(&normals(1_000_000, 8, 0.5), GridSpec::Fixed(grid), &opts).unwrap();
        let d = log_pdf_distance(&a, &b).unwrap();
        println!("kde distance {d}, quadrature {oracle}");
        assert!((d / oracle - 1.0).abs() < 0.01, "kde {d} vs quadrature {oracle}");
    }

    #[test]
    fn exceedance_examples() {
        let s = normals(1_000_000, 9, 0.0);
        assert!((exceedance_prob(&s, 0.0).unwrap() - 0.5).abs() < 0.002);
        assert!((exceedance_prob(&s, 1.2816).unwrap() - 0.10).abs() < 0.002);
        assert_eq!(exceedance_prob(&s, -100.0).unwrap(), 1.0);
        assert!(exceedance_prob(&s[..10], 0.0).is_err());
    }

    #[test]
    fn columnar_round_trip() {
        let d = estimate_density(&normals(400, 10, 0.0), GridSpec::Auto, &KdeOptions::default()).unwrap();
        let mut buf = Vec::new();
        d.write_columns(&mut buf).unwrap();
        let back = DensityEstimate::read_columns(std::str::from_utf8(&buf).unwrap(), "mem").unwrap();
        assert_eq!(back.grid, d.grid);
        for (a, b) in back.pdf.iter().zip(&d.pdf) {
            assert!((a / b - 1.0).abs() < 1e-11);
        }
        assert!(DensityEstimate::read_columns("# grid lo=0\n", "mem").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn estimate(seed: u64, shift: f64, grid: OutputGrid) -> DensityEstimate {
            estimate_density(
                &normals(300, seed, shift),
                GridSpec::Fixed(grid),
                &KdeOptions::default(),
            )
            .unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn metric_axioms(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000,
                             m1 in -1.0f64..1.0, m2 in -1.0f64..1.0) {
                let grid = OutputGrid::new(-5.0, 5.0, 128).unwrap();
                let (p, q, r) = (estimate(s1, 0.0, grid), estimate(s2, m1, grid), estimate(s3, m2, grid));
                let pq = log_pdf_distance(&p, &q).unwrap();
                prop_assert_eq!(pq, log_pdf_distance(&q, &p).unwrap());
                prop_assert!(pq >= 0.0);
                let pr = log_pdf_distance(&p, &r).unwrap();
                let qr = log_pdf_distance(&q, &r).unwrap();
                prop_assert!(pr <= pq + qr + 1e-12);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn more_samples_do_not_move_away_from_truth(seed in 0u64..10_000) {
                let grid = OutputGrid::new(-3.0, 3.0, 128).unwrap();
                let truth = DensityEstimate::from_fn(grid, DEFAULT_PDF_FLOOR, phi, |s| -s * phi(s));
                let mut last = f64::INFINITY;
                for m in [2_000, 4_000, 8_000, 16_000] {
                    let d = estimate_density(&normals(m, seed, 0.0), GridSpec::Fixed(grid), &KdeOptions::default()).unwrap();
                    let dist = log_pdf_distance(&d, &truth).unwrap();
                    prop_assert!(dist <= last, "m = {}: {} > {}", m, dist, last);
                    last = dist;
                }
            }
        }
    }
}
