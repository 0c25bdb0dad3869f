//! Continuous-Poisson modeling of sums of log probabilities.
//!
//! The negative log of a product of uniform probabilities, `x = -sum ln
//! p_i`, has mean `n` and variance `n`. Its distribution is modeled here
//! with the continuous-Poisson density `lambda^x e^-x / Gamma(x+1)`,
//! extended with an abscissa scale, a translation for interval-limited
//! probabilities, and a fitted vertical normalization.

use crate::rng::Rand48;
use crate::{Error, Result};

/// Lanczos g=7, n=9 coefficients (Godfrey's set).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const SQRT_TWO_PI: f64 = 2.506_628_274_631_000_5;

/// Natural log of the gamma function for positive arguments.
///
/// Lanczos approximation, accurate to at least ten significant digits;
/// arguments below 1/2 go through the reflection formula.
pub fn log_gamma(x: f64) -> Result<f64> {
    if x <= 0.0 || x.is_nan() {
        return Err(Error::LogGammaDomain(x));
    }
    Ok(log_gamma_unchecked(x))
}

fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // ln Gamma(x) = ln(pi / sin(pi x)) - ln Gamma(1 - x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - log_gamma_unchecked(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (z + 0.5) * t.ln() - t + (SQRT_TWO_PI * acc).ln()
}

/// Continuous-Poisson model with abscissa scale, translation and
/// vertical normalization.
///
/// With `x_scale = 1`, `x_shift = 0`, `norm = 1` the density is exactly
/// `lambda^x e^-x / Gamma(x+1)`. The density is unnormalized by
/// construction; `norm` absorbs the lambda-dependent constant during
/// fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CPoissonModel {
    /// Poisson parameter, taken as the chain length and never fitted.
    pub lambda: f64,
    /// Abscissa scaling applied before evaluating the density.
    pub x_scale: f64,
    /// Translation added to the abscissa before scaling; for
    /// probabilities bounded by `p_max` this is `n ln p_max`.
    pub x_shift: f64,
    /// Vertical normalization.
    pub norm: f64,
}

impl CPoissonModel {
    /// Unit model: the bare density at this lambda.
    pub fn unit(lambda: f64) -> Self {
        debug_assert!(lambda > 0.0);
        CPoissonModel {
            lambda,
            x_scale: 1.0,
            x_shift: 0.0,
            norm: 1.0,
        }
    }

    /// Translate the model for probabilities drawn from `(0, p_max]`:
    /// sets `x_shift = n ln(p_max)`.
    pub fn with_pmax_shift(mut self, n: usize, p_max: f64) -> Self {
        debug_assert!(p_max > 0.0 && p_max <= 1.0);
        self.x_shift = n as f64 * p_max.ln();
        self
    }

    /// Density at `x >= 0`:
    /// `norm * exp(x' ln(lambda) - x' - ln Gamma(x' + 1))` with
    /// `x' = x_scale * (x + x_shift)`. Zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        let xp = self.x_scale * (x + self.x_shift);
        if xp < 0.0 {
            return 0.0;
        }
        self.norm * (xp * self.lambda.ln() - xp - log_gamma_unchecked(xp + 1.0)).exp()
    }

    /// Abscissa of the density maximum, located by golden-section search
    /// over the support.
    pub fn mode(&self) -> f64 {
        // the unshifted bump sits near lambda; search a generous bracket
        let hi_xp = 3.0 * self.lambda + 10.0;
        let (mut a, mut b) = (0.0, hi_xp / self.x_scale - self.x_shift);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if self.density(c) < self.density(d) {
                a = c;
            } else {
                b = d;
            }
        }
        0.5 * (a + b)
    }
}

/// Mean positions of a sum-log distribution without and with additive
/// bipolar noise of amplitude `e` on each probability.
///
/// Noise of amplitude `e` has standard deviation `e / sqrt(3)`; it acts
/// like a virtual elongation of the chain, moving the mean of the log
/// product from `n ln(p_mean)` to `n ln(p_mean + e/sqrt(3))`.
pub fn noise_elongation_shift(n: usize, p_mean: f64, e: f64) -> (f64, f64) {
    debug_assert!(p_mean > 0.0 && e >= 0.0);
    let sigma_e = e / 3f64.sqrt();
    (
        n as f64 * p_mean.ln(),
        n as f64 * (p_mean + sigma_e).ln(),
    )
}

/// Histogram with uniform bins.
#[derive(Debug, Clone)]
pub struct Histogram {
    /// Bin edges, length `counts.len() + 1`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bin values with the Freedman-Diaconis rule; falls back to Scott's
    /// rule when the interquartile range degenerates. A single bin is
    /// produced when all values coincide.
    pub fn freedman_diaconis(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len();
        let lo = sorted[0];
        let hi = sorted[n - 1];
        let iqr = sorted[(3 * n) / 4] - sorted[n / 4];
        let width = if iqr > 0.0 {
            2.0 * iqr / (n as f64).cbrt()
        } else {
            // Scott's rule
            let mean = sorted.iter().sum::<f64>() / n as f64;
            let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64)
                .sqrt();
            3.49 * sd / (n as f64).cbrt()
        };
        if width <= 0.0 || hi == lo {
            return Histogram {
                edges: vec![lo, lo + 1.0],
                counts: vec![n as u64],
            };
        }
        Self::with_width(values, lo, hi, width)
    }

    /// Bin values into uniform bins of the given width starting at `lo`.
    pub fn with_width(values: &[f64], lo: f64, hi: f64, width: f64) -> Self {
        assert!(width > 0.0 && hi >= lo);
        let bins = (((hi - lo) / width).ceil() as usize).max(1);
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn non_empty_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

/// Sample of sums of negative log probabilities at fixed chain length.
#[derive(Debug, Clone)]
pub struct SumLogSample {
    pub n: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Values `x = -sum ln p_i`, all at least `-n ln(p_max)`.
    pub values: Vec<f64>,
    pub histogram: Histogram,
}

/// Draw `count` values of `-sum ln p_i` with `p_i` uniform on
/// `(p_min, p_max]`. Zero draws are rejected.
pub fn sample_sum_log(
    n: usize,
    p_min: f64,
    p_max: f64,
    count: usize,
    rng: &mut Rand48,
) -> Result<SumLogSample> {
    if !(0.0..1.0).contains(&p_min) || p_max <= p_min || p_max > 1.0 {
        return Err(Error::EmptyInterval(p_min, p_max));
    }
    let span = p_max - p_min;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let mut sum = 0.0f64;
        for _ in 0..n {
            let p = loop {
                // 1 - u maps [0,1) onto (0,1], so p lands in (p_min, p_max]
                let p = p_min + span * (1.0 - rng.next_uniform());
                if p > 0.0 {
                    break p;
                }
            };
            sum -= p.ln();
        }
        values.push(sum);
    }
    let histogram = Histogram::freedman_diaconis(&values);
    Ok(SumLogSample {
        n,
        p_min,
        p_max,
        values,
        histogram,
    })
}

/// A fitted model with its goodness of fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: CPoissonModel,
    /// Pearson reduced chi-square of model counts against bin counts.
    pub chi2_red: f64,
    /// Bins that entered the chi-square (count >= 5).
    pub bins_used: usize,
}

/// Bins with at least this many counts enter the chi-square.
const CHI2_MIN_COUNT: u64 = 5;

/// Weighted least-squares norm and chi-square for a fixed scale.
/// Variance per bin is the observed count.
fn norm_and_chi2(
    centers: &[f64],
    counts: &[u64],
    lambda: f64,
    x_scale: f64,
    x_shift: f64,
) -> Option<(f64, f64, usize)> {
    let shape = CPoissonModel {
        lambda,
        x_scale,
        x_shift,
        norm: 1.0,
    };
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut used = Vec::new();
    for (&c, &count) in centers.iter().zip(counts) {
        if count < CHI2_MIN_COUNT {
            continue;
        }
        let g = shape.density(c);
        let var = count as f64;
        num += count as f64 * g / var;
        den += g * g / var;
        used.push((count as f64, g, var));
    }
    if used.len() < 5 || den <= 0.0 {
        return None;
    }
    let norm = num / den;
    if !norm.is_finite() || norm <= 0.0 {
        return None;
    }
    let chi2: f64 = used
        .iter()
        .map(|&(c, g, var)| {
            let d = c - norm * g;
            d * d / var
        })
        .sum();
    let dof = used.len().saturating_sub(2).max(1);
    Some((norm, chi2 / dof as f64, used.len()))
}

fn scale_objective(samples: &[(&SumLogSample, f64)], s: f64) -> f64 {
    let mut total = 0.0;
    for &(sample, lambda) in samples {
        let shift = sample.n as f64 * sample.p_max.ln();
        match norm_and_chi2(
            &sample.histogram.centers(),
            &sample.histogram.counts,
            lambda,
            s,
            shift,
        ) {
            Some((_, chi2_red, _)) => total += chi2_red,
            None => return f64::INFINITY,
        }
    }
    total
}

/// Golden-section refinement around the best point of a coarse scan.
fn best_scale(samples: &[(&SumLogSample, f64)]) -> Result<f64> {
    // coarse scan over a generous log-spaced bracket
    let grid: Vec<f64> = (0..80)
        .map(|i| 0.05 * (100.0f64).powf(i as f64 / 79.0))
        .collect();
    let mut best_idx = None;
    let mut best_val = f64::INFINITY;
    for (i, &s) in grid.iter().enumerate() {
        let v = scale_objective(samples, s);
        if v < best_val {
            best_val = v;
            best_idx = Some(i);
        }
    }
    let Some(best_idx) = best_idx else {
        return Err(Error::FitFailed("no usable scale candidate".into()));
    };
    if !best_val.is_finite() {
        return Err(Error::FitFailed("objective not finite".into()));
    }
    let mut a = grid[best_idx.saturating_sub(1)];
    let mut b = grid[(best_idx + 1).min(grid.len() - 1)];
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..120 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if scale_objective(samples, c) < scale_objective(samples, d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

fn fit_with_scale(sample: &SumLogSample, lambda: f64, x_scale: f64) -> Result<FitResult> {
    let x_shift = sample.n as f64 * sample.p_max.ln();
    let (norm, chi2_red, bins_used) = norm_and_chi2(
        &sample.histogram.centers(),
        &sample.histogram.counts,
        lambda,
        x_scale,
        x_shift,
    )
    .ok_or_else(|| Error::FitFailed("fewer than 5 usable bins".into()))?;
    Ok(FitResult {
        model: CPoissonModel {
            lambda,
            x_scale,
            x_shift,
            norm,
        },
        chi2_red,
        bins_used,
    })
}

/// Least-squares fit of `(x_scale, norm)` to one histogram, with lambda
/// fixed and the translation fixed by the sample's `p_max`.
///
/// Fails when the histogram has fewer than five non-empty bins.
pub fn fit_cpoiss(sample: &SumLogSample, lambda: f64) -> Result<FitResult> {
    if sample.histogram.non_empty_bins() < 5 {
        return Err(Error::FitFailed(format!(
            "histogram has {} non-empty bins, need at least 5",
            sample.histogram.non_empty_bins()
        )));
    }
    let pairs = [(sample, lambda)];
    let s = best_scale(&pairs)?;
    fit_with_scale(sample, lambda, s)
}

/// Fit one shared `x_scale` across several histograms, with a separate
/// norm per histogram. Returns the shared scale and the per-sample fits.
pub fn fit_shared_scale(
    samples: &[SumLogSample],
    lambdas: &[f64],
) -> Result<(f64, Vec<FitResult>)> {
    assert_eq!(samples.len(), lambdas.len());
    for sample in samples {
        if sample.histogram.non_empty_bins() < 5 {
            return Err(Error::FitFailed(format!(
                "histogram has {} non-empty bins, need at least 5",
                sample.histogram.non_empty_bins()
            )));
        }
    }
    let pairs: Vec<(&SumLogSample, f64)> = samples.iter().zip(lambdas.iter().copied()).collect();
    let s = best_scale(&pairs)?;
    let fits = samples
        .iter()
        .zip(lambdas)
        .map(|(sample, &lambda)| fit_with_scale(sample, lambda, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((s, fits))
}

/// Histogram plus fitted-curve CSV: `bin_center,count,model_density`.
pub fn overlay_csv(sample: &SumLogSample, fit: &FitResult) -> String {
    let mut out = String::from("bin_center,count,model_density\n");
    for (c, &count) in sample.histogram.centers().iter().zip(&sample.histogram.counts) {
        out.push_str(&format!("{},{},{}\n", c, count, fit.model.density(*c)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_closed_forms() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-13);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-13);
        // ln Gamma(1/2) = ln sqrt(pi)
        let half = log_gamma(0.5).unwrap();
        assert!((half - 0.572_364_942_924_700_1).abs() < 1e-10);
        // Gamma(5) = 24
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_gamma_rejects_non_positive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn density_at_zero_with_unit_parameters_is_one() {
        for lambda in [1.0, 11.0, 41.0] {
            let d = CPoissonModel::unit(lambda).density(0.0);
            assert!((d - 1.0).abs() < 1e-12, "lambda {lambda}: {d}");
        }
    }

    #[test]
    fn density_at_lambda_one_decreases_from_the_origin() {
        let model = CPoissonModel::unit(1.0);
        let mut last = model.density(0.0);
        for i in 1..=40 {
            let d = model.density(i as f64 * 0.25);
            assert!(d < last, "not decreasing at {}", i as f64 * 0.25);
            last = d;
        }
    }

    #[test]
    fn density_matches_discrete_poisson_shape_at_integers() {
        // at integer m with unit parameters: lambda^m e^-m / m!
        let lambda = 6.0f64;
        let model = CPoissonModel::unit(lambda);
        let mut factorial = 1.0f64;
        for m in 0..=10u32 {
            if m > 0 {
                factorial *= m as f64;
            }
            let x = m as f64;
            let expected = lambda.powi(m as i32) * (-x).exp() / factorial;
            let got = model.density(x);
            assert!(
                (got / expected - 1.0).abs() < 1e-10,
                "m={m}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn pmax_shift_examples() {
        let m = CPoissonModel::unit(11.0).with_pmax_shift(11, 1.0);
        assert_eq!(m.x_shift, 0.0);
        let m = CPoissonModel::unit(11.0).with_pmax_shift(11, 0.84);
        assert!((m.x_shift - (-1.917_887_258_592_555_8)).abs() < 1e-12);
        let m = CPoissonModel::unit(21.0).with_pmax_shift(21, 0.58);
        assert!((m.x_shift - (-11.439_270_684_275_116)).abs() < 1e-12);
    }

    #[test]
    fn noise_elongation_examples() {
        let (a, b) = noise_elongation_shift(5, 0.4, 0.0);
        assert_eq!(a, b);
        let (_, shifted) = noise_elongation_shift(10, 0.5, 0.3);
        // sigma_e = 0.3/sqrt(3) = 0.17320..., 10 ln(0.67320...) = -3.9575
        assert!((shifted - (-3.957_495_8)).abs() < 1e-6, "{shifted}");
    }

    #[test]
    fn sample_sum_log_rejects_bad_intervals() {
        let mut rng = Rand48::seed(1);
        assert!(sample_sum_log(3, 0.5, 0.5, 10, &mut rng).is_err());
        assert!(sample_sum_log(3, 0.9, 0.2, 10, &mut rng).is_err());
        assert!(sample_sum_log(3, 0.0, 1.2, 10, &mut rng).is_err());
    }

    #[test]
    fn sample_sum_log_support_bound() {
        let mut rng = Rand48::seed(17);
        let s = sample_sum_log(4, 0.0, 0.7, 5_000, &mut rng).unwrap();
        let bound = -(4.0 * 0.7f64.ln());
        for &v in &s.values {
            assert!(v >= bound - 1e-12, "{v} < {bound}");
        }
    }

    #[test]
    fn sample_sum_log_mean_unit_interval() {
        let mut rng = Rand48::seed(23);
        let count = 200_000;
        let s = sample_sum_log(1, 0.0, 1.0, count, &mut rng).unwrap();
        let mean = s.values.iter().sum::<f64>() / count as f64;
        assert!((mean - 1.0).abs() < 3.0 / (count as f64).sqrt(), "{mean}");
    }

    #[test]
    fn sample_sum_log_mean_restricted_interval() {
        // E[-ln p] over (0, 1/2] is 1 - ln(1/2); times the chain length
        let mut rng = Rand48::seed(29);
        let count = 200_000;
        let s = sample_sum_log(3, 0.0, 0.5, count, &mut rng).unwrap();
        let mean = s.values.iter().sum::<f64>() / count as f64;
        let expected = 3.0 * (1.0 - 0.5f64.ln());
        let tol = 3.0 * (3.0f64 / count as f64).sqrt();
        assert!((mean - expected).abs() < tol, "{mean} vs {expected}");
    }

    #[test]
    fn fit_recovers_scale_from_model_generated_data() {
        // inverse-CDF sample from the model itself, then fit
        let true_scale = 0.8;
        let lambda = 15.0;
        let model = CPoissonModel {
            lambda,
            x_scale: true_scale,
            x_shift: 0.0,
            norm: 1.0,
        };
        // tabulate the normalized CDF on a fine grid
        let grid_max = 80.0;
        let steps = 16_000;
        let dx = grid_max / steps as f64;
        let mut cdf = Vec::with_capacity(steps + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for i in 1..=steps {
            let x0 = (i - 1) as f64 * dx;
            let x1 = i as f64 * dx;
            acc += 0.5 * (model.density(x0) + model.density(x1)) * dx;
            cdf.push(acc);
        }
        let total = *cdf.last().unwrap();
        let mut rng = Rand48::seed(31);
        let values: Vec<f64> = (0..120_000)
            .map(|_| {
                let u = rng.next_uniform() * total;
                let idx = cdf.partition_point(|&c| c < u).max(1);
                let (c0, c1) = (cdf[idx - 1], cdf[idx]);
                let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
                ((idx - 1) as f64 + frac) * dx
            })
            .collect();
        let histogram = Histogram::freedman_diaconis(&values);
        let sample = SumLogSample {
            n: 15,
            p_min: 0.0,
            p_max: 1.0,
            values,
            histogram,
        };
        let fit = fit_cpoiss(&sample, lambda).unwrap();
        assert!(
            (fit.model.x_scale / true_scale - 1.0).abs() < 0.02,
            "recovered {} vs {}",
            fit.model.x_scale,
            true_scale
        );
    }

    #[test]
    fn degenerate_histogram_fails_to_fit() {
        let values = vec![3.25; 100];
        let histogram = Histogram::freedman_diaconis(&values);
        let sample = SumLogSample {
            n: 3,
            p_min: 0.0,
            p_max: 1.0,
            values,
            histogram,
        };
        assert!(matches!(fit_cpoiss(&sample, 3.0), Err(Error::FitFailed(_))));
    }

    #[test]
    fn overlay_csv_shape() {
        let mut rng = Rand48::seed(37);
        let sample = sample_sum_log(5, 0.0, 1.0, 20_000, &mut rng).unwrap();
        let fit = fit_cpoiss(&sample, 5.0).unwrap();
        let csv = overlay_csv(&sample, &fit);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "bin_center,count,model_density");
        assert_eq!(csv.lines().count(), 1 + sample.histogram.counts.len());
    }
}
