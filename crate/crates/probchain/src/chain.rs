//! Error propagation in products of probabilities.
//!
//! A chain of `n` estimated probabilities is multiplied once with its
//! true values and once with additive noise on every factor; the relative
//! difference between the two products, averaged with a ratio-of-sums
//! estimator, quantifies how the per-factor estimation error blows up
//! with chain length. The module produces single curves over the noise
//! amplitude as well as the full amplitude × chain-length tables for
//! uniform and Gaussian noise, truncated or not.

use rayon::prelude::*;

use crate::rng::{NoiseFamily, NoiseSpec, Rand48};
use crate::{Error, Result};

/// Stream-salt constants keep work-unit indices from different
/// experiment shapes disjoint under one master seed.
const CURVE_SALT: u64 = 0;
const TABLE_SALT: u64 = 1 << 56;

/// Parameters of one Monte-Carlo error sweep at fixed chain length.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    /// Number of probabilities multiplied per sample.
    pub n: usize,
    /// Noise family and truncation; the amplitude field is ignored by
    /// sweeps, which scan the amplitude grid below.
    pub noise: NoiseSpec,
    /// Probability vectors drawn per repetition and amplitude.
    pub samples: usize,
    /// Independent repetitions averaged into one curve.
    pub repetitions: usize,
    /// Amplitude grid step.
    pub amplitude_step: f64,
    /// Number of amplitudes, starting at zero.
    pub amplitude_count: usize,
}

impl ChainSpec {
    /// Full-scale defaults: 100k samples, 20 repetitions, amplitudes
    /// 0.00..0.99 in steps of 0.01.
    pub fn paper(n: usize, noise: NoiseSpec) -> Self {
        ChainSpec {
            n,
            noise,
            samples: 100_000,
            repetitions: 20,
            amplitude_step: 0.01,
            amplitude_count: 100,
        }
    }

    /// Desk-scale defaults for quick runs: 10k samples, 5 repetitions.
    pub fn desk(n: usize, noise: NoiseSpec) -> Self {
        ChainSpec {
            samples: 10_000,
            repetitions: 5,
            ..ChainSpec::paper(n, noise)
        }
    }

    fn amplitudes(&self) -> Vec<f64> {
        (0..self.amplitude_count)
            .map(|k| k as f64 * self.amplitude_step)
            .collect()
    }
}

/// A probability product carried in two representations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainProduct {
    /// Sum of natural logs; `-inf` if any factor is zero. This is the
    /// authoritative value when the two representations disagree beyond
    /// underflow.
    pub log: f64,
    /// Direct product in the widest native binary float (f64 here).
    pub direct: f64,
}

/// True product of a probability chain, in log and direct form.
pub fn product_true(p: &[f64]) -> ChainProduct {
    debug_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    let mut log = 0.0f64;
    let mut direct = 1.0f64;
    for &x in p {
        log += if x == 0.0 { f64::NEG_INFINITY } else { x.ln() };
        direct *= x;
    }
    ChainProduct { log, direct }
}

/// Product of the chain after adding one noise draw to every factor.
///
/// Truncated mode folds each perturbed factor into `[0, 1]` before
/// multiplying; untruncated factors may go negative or exceed one, and
/// the sign carries through to the product.
pub fn product_perturbed(p: &[f64], noise: &NoiseSpec, rng: &mut Rand48) -> f64 {
    let mut prod = 1.0f64;
    for &x in p {
        let mut factor = x + noise.draw(rng);
        if noise.truncated {
            factor = factor.clamp(0.0, 1.0);
        }
        prod *= factor;
    }
    prod
}

/// Analytic relative error `|1 - (1 + eps/p)^n|` of a constant chain
/// `p^n` whose every factor is off by a fixed `eps`.
pub fn analytic_rel_error(p: f64, eps: f64, n: u32) -> Result<f64> {
    if p <= 0.0 {
        return Err(Error::NonPositiveBase(p));
    }
    Ok((1.0 - (1.0 + eps / p).powi(n as i32)).abs())
}

/// One point of an error curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub amplitude: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean relative error of the probability product as a function of the
/// noise amplitude, at fixed chain length.
#[derive(Debug, Clone)]
pub struct ErrorCurve {
    pub family: NoiseFamily,
    pub truncated: bool,
    pub n: usize,
    pub points: Vec<CurvePoint>,
}

/// Ratio-of-sums relative error over `samples` chains of length `n`:
/// `sum |p_true - p_perturbed| / sum p_true`.
///
/// The per-sample ratio diverges as the true product approaches zero,
/// so the sums are accumulated first and divided once.
fn one_repetition(n: usize, noise: &NoiseSpec, samples: usize, rng: &mut Rand48) -> f64 {
    let mut p = vec![0.0f64; n];
    let mut sum_diff = 0.0f64;
    let mut sum_true = 0.0f64;
    for _ in 0..samples {
        for slot in p.iter_mut() {
            *slot = rng.next_uniform();
        }
        let target = product_true(&p).direct;
        let measured = product_perturbed(&p, noise, rng);
        sum_diff += (target - measured).abs();
        sum_true += target;
    }
    sum_diff / sum_true
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo error curve over the amplitude grid of `spec`.
///
/// Every (amplitude, repetition) cell runs on its own derived stream, so
/// the result is independent of the degree of parallelism.
pub fn relative_error_mc(spec: &ChainSpec, master_seed: u32) -> ErrorCurve {
    let amplitudes = spec.amplitudes();
    let reps = spec.repetitions;
    let ratios: Vec<f64> = (0..amplitudes.len() * reps)
        .into_par_iter()
        .map(|unit| {
            let amp_idx = unit / reps;
            let noise = spec
                .noise
                .with_amplitude(amplitudes[amp_idx])
                .expect("grid amplitude in range");
            let mut rng = Rand48::derive(master_seed, CURVE_SALT | unit as u64);
            one_repetition(spec.n, &noise, spec.samples, &mut rng)
        })
        .collect();

    let points = amplitudes
        .iter()
        .enumerate()
        .map(|(i, &amplitude)| {
            let (mean, stderr) = mean_and_stderr(&ratios[i * reps..(i + 1) * reps]);
            CurvePoint {
                amplitude,
                mean,
                stderr,
            }
        })
        .collect();

    ErrorCurve {
        family: spec.noise.family,
        truncated: spec.noise.truncated,
        n: spec.n,
        points,
    }
}

/// Amplitude grid of the published error tables: 0.00..=0.30 step 0.01.
pub const TABLE_AMPLITUDE_COUNT: usize = 31;
/// Chain lengths of the published error tables: 1, 3, .., 39.
pub const TABLE_CHAIN_LENGTHS: [usize; 20] = [
    1, 3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 33, 35, 37, 39,
];

/// Mean relative error over the amplitude × chain-length grid.
#[derive(Debug, Clone)]
pub struct ErrorTable {
    pub family: NoiseFamily,
    pub truncated: bool,
    pub amplitudes: Vec<f64>,
    pub chain_lengths: Vec<usize>,
    /// Raw means, indexed `[amplitude][chain]`.
    pub means: Vec<Vec<f64>>,
    /// Standard error over repetitions, same indexing.
    pub stderrs: Vec<Vec<f64>>,
}

/// Round half away from zero to one decimal, the table presentation.
pub fn round_one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl ErrorTable {
    /// Cell rounded to the one-decimal presentation.
    pub fn rounded(&self, amp_idx: usize, chain_idx: usize) -> f64 {
        round_one_decimal(self.means[amp_idx][chain_idx])
    }

    /// Long-form CSV: one row per (family, truncated, e, n) cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,truncated,e,n,mean_rel_error,stderr\n");
        for (i, &e) in self.amplitudes.iter().enumerate() {
            for (j, &n) in self.chain_lengths.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    self.family.label(),
                    self.truncated,
                    e,
                    n,
                    self.means[i][j],
                    self.stderrs[i][j],
                ));
            }
        }
        out
    }

    /// Gnuplot-style plot data for one chain-length column: `e rel_error`
    /// lines.
    pub fn plot_column(&self, chain_idx: usize) -> String {
        let mut out = String::new();
        for (i, &e) in self.amplitudes.iter().enumerate() {
            out.push_str(&format!("{} {}\n", e, self.means[i][chain_idx]));
        }
        out
    }

    /// Fixed-width text rendering of the rounded table.
    pub fn to_text(&self) -> String {
        let mut out = String::from("e \\ n");
        for n in &self.chain_lengths {
            out.push_str(&format!("{n:>5}"));
        }
        out.push('\n');
        for (i, &e) in self.amplitudes.iter().enumerate() {
            out.push_str(&format!("{e:>5.2}"));
            for j in 0..self.chain_lengths.len() {
                out.push_str(&format!("{:>5.1}", self.rounded(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Full error table for one noise family and truncation mode over the
/// published grid.
///
/// Gaussian amplitudes scale the base sigma `sqrt(1/12)`, so the `e`
/// axis is shared with the uniform tables. Every (chain, amplitude,
/// repetition) cell uses its own derived stream.
pub fn error_table(
    family: NoiseFamily,
    truncated: bool,
    samples: usize,
    repetitions: usize,
    master_seed: u32,
) -> ErrorTable {
    let amplitudes: Vec<f64> = (0..TABLE_AMPLITUDE_COUNT).map(|k| k as f64 * 0.01).collect();
    let chain_lengths = TABLE_CHAIN_LENGTHS.to_vec();
    let n_amps = amplitudes.len();
    let n_chains = chain_lengths.len();

    let ratios: Vec<f64> = (0..n_chains * n_amps * repetitions)
        .into_par_iter()
        .map(|unit| {
            let rep_block = unit / repetitions;
            let chain_idx = rep_block / n_amps;
            let amp_idx = rep_block % n_amps;
            let noise = NoiseSpec::new(family, truncated, amplitudes[amp_idx])
                .expect("grid amplitude in range");
            let mut rng = Rand48::derive(master_seed, TABLE_SALT | unit as u64);
            one_repetition(chain_lengths[chain_idx], &noise, samples, &mut rng)
        })
        .collect();

    let mut means = vec![vec![0.0; n_chains]; n_amps];
    let mut stderrs = vec![vec![0.0; n_chains]; n_amps];
    for chain_idx in 0..n_chains {
        for amp_idx in 0..n_amps {
            let base = (chain_idx * n_amps + amp_idx) * repetitions;
            let (mean, stderr) = mean_and_stderr(&ratios[base..base + repetitions]);
            means[amp_idx][chain_idx] = mean;
            stderrs[amp_idx][chain_idx] = stderr;
        }
    }

    ErrorTable {
        family,
        truncated,
        amplitudes,
        chain_lengths,
        means,
        stderrs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_untruncated(e: f64) -> NoiseSpec {
        NoiseSpec::new(NoiseFamily::Uniform, false, e).unwrap()
    }

    #[test]
    fn product_of_ones_is_one() {
        let p = [1.0, 1.0, 1.0];
        let prod = product_true(&p);
        assert_eq!(prod.direct, 1.0);
        assert_eq!(prod.log, 0.0);
    }

    #[test]
    fn product_of_halves_is_exact_power_of_two() {
        let p = [0.5; 10];
        let prod = product_true(&p);
        assert_eq!(prod.direct, 0.0009765625);
        assert!((prod.log - (-10.0 * std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn long_chain_of_near_ones() {
        // 0.999^20000 is about 2e-9
        let p = vec![0.999; 20000];
        let prod = product_true(&p);
        let expected = (20000.0 * 0.999f64.ln()).exp();
        assert!((prod.direct / expected - 1.0).abs() < 1e-6);
        assert!(prod.direct > 1.9e-9 && prod.direct < 2.1e-9);
    }

    #[test]
    fn zero_factor_gives_log_neg_infinity() {
        let prod = product_true(&[0.5, 0.0, 0.5]);
        assert_eq!(prod.direct, 0.0);
        assert!(prod.log.is_infinite() && prod.log < 0.0);
    }

    #[test]
    fn perturbed_with_zero_amplitude_equals_true() {
        let mut rng = Rand48::seed(5);
        let p: Vec<f64> = (0..8).map(|_| rng.next_uniform()).collect();
        let noise = uniform_untruncated(0.0);
        let measured = product_perturbed(&p, &noise, &mut rng);
        assert_eq!(measured, product_true(&p).direct);
    }

    #[test]
    fn truncation_clamps_factors_to_unit_interval() {
        // with p = 0.99 and a huge positive draw the factor folds to 1.0
        let noise = NoiseSpec::new(NoiseFamily::Uniform, true, 1.0).unwrap();
        let mut rng = Rand48::seed(11);
        // single factor: product equals the clamped factor
        for _ in 0..200 {
            let v = product_perturbed(&[0.99], &noise, &mut rng);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn single_perturbed_factor_stays_in_range() {
        let noise = uniform_untruncated(0.3);
        let mut rng = Rand48::seed(13);
        for _ in 0..200 {
            let v = product_perturbed(&[0.5], &noise, &mut rng);
            assert!((0.2..=0.8).contains(&v), "{v}");
        }
    }

    #[test]
    fn analytic_error_examples() {
        assert_eq!(analytic_rel_error(0.7, 0.0, 23).unwrap(), 0.0);
        let one_step = analytic_rel_error(0.5, 0.05, 1).unwrap();
        assert!((one_step - 0.1).abs() < 1e-12);
        // 1.1^10 = 2.5937424601 in exact rational arithmetic
        let ten = analytic_rel_error(0.5, 0.05, 10).unwrap();
        assert!((ten - 1.5937424601).abs() < 1e-9);
        assert!(analytic_rel_error(0.0, 0.1, 3).is_err());
    }

    #[test]
    fn analytic_matches_constant_chain_simulation() {
        // For constant chains and deterministic eps the ratio
        // |P^n - (P+eps)^n| / P^n must equal the closed form.
        for &(p, eps, n) in &[(0.5, 0.05, 10u32), (0.8, -0.1, 7), (0.3, 0.02, 20)] {
            let p: f64 = p;
            let t = p.powi(n as i32);
            let m = (p + eps).powi(n as i32);
            let direct = (t - m).abs() / t;
            let analytic = analytic_rel_error(p, eps, n).unwrap();
            assert!(
                (direct - analytic).abs() <= 1e-12 * analytic.max(1.0),
                "p={p} eps={eps} n={n}: {direct} vs {analytic}"
            );
        }
    }

    #[test]
    fn zero_amplitude_curve_point_is_zero() {
        let spec = ChainSpec {
            n: 6,
            noise: uniform_untruncated(0.0),
            samples: 500,
            repetitions: 2,
            amplitude_step: 0.05,
            amplitude_count: 3,
        };
        let curve = relative_error_mc(&spec, 21);
        assert!(curve.points[0].mean < 1e-12);
        // amplitudes strictly increasing
        for w in curve.points.windows(2) {
            assert!(w[1].amplitude > w[0].amplitude);
        }
    }

    #[test]
    fn curve_is_independent_of_thread_count() {
        let spec = ChainSpec {
            n: 4,
            noise: uniform_untruncated(0.0),
            samples: 300,
            repetitions: 3,
            amplitude_step: 0.1,
            amplitude_count: 4,
        };
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let c1 = pool1.install(|| relative_error_mc(&spec, 77));
        let c4 = pool4.install(|| relative_error_mc(&spec, 77));
        for (a, b) in c1.points.iter().zip(&c4.points) {
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.stderr, b.stderr);
        }
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_one_decimal(0.25), 0.3);
        assert_eq!(round_one_decimal(0.24999), 0.2);
        assert_eq!(round_one_decimal(1.349999), 1.3);
        assert_eq!(round_one_decimal(0.0), 0.0);
    }

    #[test]
    fn tiny_table_zero_row_and_csv_shape() {
        let table = error_table(NoiseFamily::Uniform, true, 200, 2, 5);
        for j in 0..table.chain_lengths.len() {
            assert!(table.means[0][j] < 1e-12, "zero-amplitude cell not zero");
        }
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "family,truncated,e,n,mean_rel_error,stderr");
        assert_eq!(lines.len(), 1 + 31 * 20);
        let plot = table.plot_column(0);
        assert_eq!(plot.lines().count(), 31);
        assert!(plot.lines().next().unwrap().starts_with("0 "));
    }
}
