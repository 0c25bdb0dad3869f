//! Discrete-observation hidden-Markov machinery for the
//! transition-flattening test.
//!
//! The question answered here is whether temporal structure carries any
//! class information for a given problem: classify labeled sequences by
//! likelihood under the true models and again under models whose
//! transition matrix has been replaced by the uniform matrix. A collapse
//! in accuracy means sequence modeling was essential; no drop means the
//! emission distributions alone carry the classes.

use rayon::prelude::*;

use crate::rng::Rand48;
use crate::{Error, Result};

const HMM_SALT: u64 = 5 << 56;

/// Row-stochasticity tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Discrete HMM: `k` hidden states emitting symbols from an alphabet of
/// size `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    k: usize,
    l: usize,
    /// k×k transition matrix, row-stochastic.
    a: Vec<Vec<f64>>,
    /// k×l emission matrix, row-stochastic.
    b: Vec<Vec<f64>>,
    /// Initial state distribution of length k.
    pi: Vec<f64>,
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(0.0..=1.0 + STOCHASTIC_TOL).contains(&p)) {
        return Err(Error::NotStochastic(format!(
            "{what} has an entry outside [0, 1]"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl DiscreteHmm {
    /// Validating constructor: every row of `a` and `b` and the initial
    /// distribution must sum to one within `1e-12` with non-negative
    /// entries.
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, pi: Vec<f64>) -> Result<Self> {
        let k = pi.len();
        if k == 0 || a.len() != k || b.len() != k {
            return Err(Error::NotStochastic(
                "matrix shapes do not agree with the initial distribution".into(),
            ));
        }
        let l = b[0].len();
        if l == 0 {
            return Err(Error::NotStochastic("empty emission alphabet".into()));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != k {
                return Err(Error::NotStochastic(format!("A row {i} has wrong length")));
            }
            check_row(row, &format!("A row {i}"))?;
        }
        for (i, row) in b.iter().enumerate() {
            if row.len() != l {
                return Err(Error::NotStochastic(format!("B row {i} has wrong length")));
            }
            check_row(row, &format!("B row {i}"))?;
        }
        check_row(&pi, "pi")?;
        Ok(DiscreteHmm { k, l, a, b, pi })
    }

    pub fn state_count(&self) -> usize {
        self.k
    }

    pub fn alphabet_size(&self) -> usize {
        self.l
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn emissions(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn initial(&self) -> &[f64] {
        &self.pi
    }

    /// Two-step transition probability `sum_r A[i][r] A[r][j]`, the
    /// (i, j) entry of A squared.
    pub fn two_step_transition(&self, i: usize, j: usize) -> f64 {
        (0..self.k).map(|r| self.a[i][r] * self.a[r][j]).sum()
    }

    /// Log-likelihood of a symbol sequence under the model, by the
    /// scaled forward recursion: the forward vector is normalized each
    /// step and the log scale factors accumulate. Returns `-inf` for
    /// sequences of probability zero.
    pub fn forward_loglik(&self, seq: &[usize]) -> f64 {
        self.forward_scaled(seq, None)
    }

    /// Forward log-likelihood with zero probabilities replaced by a
    /// back-off floor constant at evaluation time. The floor substitutes
    /// estimated zeros in both the transition and emission lookups; it
    /// deliberately breaks strict stochasticity, which is the point of
    /// having it togglable.
    pub fn forward_loglik_floored(&self, seq: &[usize], floor: f64) -> f64 {
        self.forward_scaled(seq, Some(floor))
    }

    fn forward_scaled(&self, seq: &[usize], floor: Option<f64>) -> f64 {
        assert!(!seq.is_empty(), "empty observation sequence");
        assert!(seq.iter().all(|&o| o < self.l), "symbol outside alphabet");
        let backed = |p: f64| match floor {
            Some(f) if p == 0.0 => f,
            _ => p,
        };
        let mut alpha: Vec<f64> = (0..self.k)
            .map(|i| self.pi[i] * backed(self.b[i][seq[0]]))
            .collect();
        let mut loglik = 0.0;
        let mut next = vec![0.0; self.k];
        for (t, &obs) in seq.iter().enumerate() {
            if t > 0 {
                for (j, slot) in next.iter_mut().enumerate() {
                    let trans: f64 = (0..self.k)
                        .map(|i| alpha[i] * backed(self.a[i][j]))
                        .sum();
                    *slot = trans * backed(self.b[j][obs]);
                }
                std::mem::swap(&mut alpha, &mut next);
            }
            let scale: f64 = alpha.iter().sum();
            if scale <= 0.0 {
                return f64::NEG_INFINITY;
            }
            alpha.iter_mut().for_each(|v| *v /= scale);
            loglik += scale.ln();
        }
        loglik
    }

    /// Model with the transition matrix replaced by the uniform matrix;
    /// emissions and the initial distribution are untouched.
    pub fn flatten_transitions(&self) -> DiscreteHmm {
        let uniform = vec![vec![1.0 / self.k as f64; self.k]; self.k];
        DiscreteHmm {
            a: uniform,
            ..self.clone()
        }
    }

    /// Sample `count` i.i.d. sequences of the given length.
    pub fn generate(&self, length: usize, count: usize, rng: &mut Rand48) -> Vec<Vec<usize>> {
        assert!(length >= 1);
        let pick = |dist: &[f64], rng: &mut Rand48| -> usize {
            let u = rng.next_uniform();
            let mut acc = 0.0;
            for (i, &p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            dist.len() - 1
        };
        (0..count)
            .map(|_| {
                let mut state = pick(&self.pi, rng);
                let mut seq = Vec::with_capacity(length);
                seq.push(pick(&self.b[state], rng));
                for _ in 1..length {
                    state = pick(&self.a[state], rng);
                    seq.push(pick(&self.b[state], rng));
                }
                seq
            })
            .collect()
    }

    /// Textual model format: a `k L` header, then the initial
    /// distribution and the A and B rows as decimal numbers.
    pub fn format(&self) -> String {
        let join = |row: &[f64]| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let mut out = format!("k {}\nL {}\npi {}\n", self.k, self.l, join(&self.pi));
        for row in &self.a {
            out.push_str(&format!("A {}\n", join(row)));
        }
        for row in &self.b {
            out.push_str(&format!("B {}\n", join(row)));
        }
        out
    }

    /// Parse the textual model format produced by [`DiscreteHmm::format`].
    /// Blank lines and lines starting with '#' are ignored; stochasticity
    /// is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut k: Option<usize> = None;
        let mut l: Option<usize> = None;
        let mut pi: Option<Vec<f64>> = None;
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<Vec<f64>> = Vec::new();
        let parse_row = |rest: &[&str]| -> Result<Vec<f64>> {
            rest.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::ModelParse(format!("bad number {t:?}: {e}")))
                })
                .collect()
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "k" => {
                    k = Some(tokens.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| {
                        Error::ModelParse("k line needs one integer".into())
                    })?)
                }
                "L" => {
                    l = Some(tokens.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| {
                        Error::ModelParse("L line needs one integer".into())
                    })?)
                }
                "pi" => pi = Some(parse_row(&tokens[1..])?),
                "A" => a.push(parse_row(&tokens[1..])?),
                "B" => b.push(parse_row(&tokens[1..])?),
                other => {
                    return Err(Error::ModelParse(format!("unknown line tag {other:?}")));
                }
            }
        }
        let k = k.ok_or_else(|| Error::ModelParse("missing k line".into()))?;
        let l = l.ok_or_else(|| Error::ModelParse("missing L line".into()))?;
        let pi = pi.ok_or_else(|| Error::ModelParse("missing pi line".into()))?;
        if a.len() != k || b.len() != k {
            return Err(Error::ModelParse(format!(
                "expected {k} A rows and {k} B rows, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        if b.iter().any(|row| row.len() != l) {
            return Err(Error::ModelParse("B row length disagrees with L".into()));
        }
        DiscreteHmm::new(a, b, pi)
    }
}

/// Labeled sequences: `labels[i]` is the index of the model that
/// generated `sequences[i]`.
#[derive(Debug, Clone)]
pub struct SequenceDataset {
    pub sequences: Vec<Vec<usize>>,
    pub labels: Vec<usize>,
}

impl SequenceDataset {
    /// Generate `count_per_model` sequences from every model, labeled by
    /// model index, each model on its own derived stream.
    pub fn from_models(
        models: &[DiscreteHmm],
        length: usize,
        count_per_model: usize,
        master_seed: u32,
    ) -> Self {
        let mut sequences = Vec::with_capacity(models.len() * count_per_model);
        let mut labels = Vec::with_capacity(models.len() * count_per_model);
        for (m, model) in models.iter().enumerate() {
            let mut rng = Rand48::derive(master_seed, HMM_SALT | m as u64);
            sequences.extend(model.generate(length, count_per_model, &mut rng));
            labels.extend(std::iter::repeat(m).take(count_per_model));
        }
        SequenceDataset { sequences, labels }
    }
}

/// Accuracies of likelihood classification with true and flattened
/// transition matrices.
#[derive(Debug, Clone, Copy)]
pub struct FlatteningReport {
    pub accuracy_true: f64,
    pub accuracy_flat: f64,
}

impl FlatteningReport {
    /// Accuracy lost by flattening.
    pub fn drop(&self) -> f64 {
        self.accuracy_true - self.accuracy_flat
    }

    pub fn to_csv(&self, model_set: &str) -> String {
        format!(
            "model_set,accuracy_true,accuracy_flat,drop\n{},{},{},{}\n",
            model_set,
            self.accuracy_true,
            self.accuracy_flat,
            self.drop()
        )
    }
}

fn classify_accuracy(models: &[DiscreteHmm], data: &SequenceDataset) -> f64 {
    let hits: usize = data
        .sequences
        .par_iter()
        .zip(&data.labels)
        .map(|(seq, &label)| {
            // strict greater-than keeps the lowest model index on ties
            let mut best = f64::NEG_INFINITY;
            let mut best_idx = 0;
            for (m, model) in models.iter().enumerate() {
                let ll = model.forward_loglik(seq);
                if ll > best {
                    best = ll;
                    best_idx = m;
                }
            }
            (best_idx == label) as usize
        })
        .sum();
    hits as f64 / data.sequences.len() as f64
}

/// Classify every sequence by argmax log-likelihood over the true models
/// and over the flattened models, and report both accuracies.
pub fn markov_necessity_test(
    models: &[DiscreteHmm],
    data: &SequenceDataset,
) -> Result<FlatteningReport> {
    if models.len() < 2 {
        return Err(Error::NeedTwoModels(models.len()));
    }
    let flattened: Vec<DiscreteHmm> = models.iter().map(|m| m.flatten_transitions()).collect();
    Ok(FlatteningReport {
        accuracy_true: classify_accuracy(models, data),
        accuracy_flat: classify_accuracy(&flattened, data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_model() -> DiscreteHmm {
        DiscreteHmm::new(
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.1, 0.4, 0.5], vec![0.6, 0.3, 0.1]],
            vec![0.6, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn constructor_validates_stochasticity() {
        assert!(DiscreteHmm::new(
            vec![vec![0.7, 0.4], vec![0.4, 0.6]],
            vec![vec![1.0], vec![1.0]],
            vec![0.5, 0.5],
        )
        .is_err());
        assert!(DiscreteHmm::new(
            vec![vec![1.1, -0.1], vec![0.4, 0.6]],
            vec![vec![1.0], vec![1.0]],
            vec![0.5, 0.5],
        )
        .is_err());
    }

    #[test]
    fn two_step_transition_identity_and_uniform() {
        let eye = DiscreteHmm::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert_eq!(eye.two_step_transition(0, 0), 1.0);
        assert_eq!(eye.two_step_transition(0, 1), 0.0);

        let uni = eye.flatten_transitions();
        for i in 0..2 {
            for j in 0..2 {
                assert!((uni.two_step_transition(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_step_matches_matrix_square() {
        let m = demo_model();
        let k = m.state_count();
        for i in 0..k {
            for j in 0..k {
                let direct: f64 = (0..k)
                    .map(|r| m.transitions()[i][r] * m.transitions()[r][j])
                    .sum();
                assert!((m.two_step_transition(i, j) - direct).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_state_likelihood_is_emission_product() {
        let m = DiscreteHmm::new(
            vec![vec![1.0]],
            vec![vec![0.2, 0.3, 0.5]],
            vec![1.0],
        )
        .unwrap();
        let seq = vec![0, 2, 1, 2];
        let expected: f64 = [0.2f64, 0.5, 0.3, 0.5].iter().map(|p| p.ln()).sum();
        assert!((m.forward_loglik(&seq) - expected).abs() < 1e-12);
    }

    #[test]
    fn length_one_likelihood() {
        let m = demo_model();
        let ll = m.forward_loglik(&[1]);
        let expected = (0.6 * 0.4 + 0.4 * 0.3f64).ln();
        assert!((ll - expected).abs() < 1e-12);
    }

    /// Oracle: exhaustive sum over all k^T state paths.
    fn brute_force_loglik(m: &DiscreteHmm, seq: &[usize]) -> f64 {
        let k = m.state_count();
        let t = seq.len();
        let mut total = 0.0f64;
        let paths = (k as u64).pow(t as u32);
        for code in 0..paths {
            let mut rest = code;
            let mut states = Vec::with_capacity(t);
            for _ in 0..t {
                states.push((rest % k as u64) as usize);
                rest /= k as u64;
            }
            let mut p = m.initial()[states[0]] * m.emissions()[states[0]][seq[0]];
            for step in 1..t {
                p *= m.transitions()[states[step - 1]][states[step]]
                    * m.emissions()[states[step]][seq[step]];
            }
            total += p;
        }
        total.ln()
    }

    #[test]
    fn forward_matches_brute_force() {
        let m = DiscreteHmm::new(
            vec![
                vec![0.5, 0.3, 0.2],
                vec![0.2, 0.5, 0.3],
                vec![0.3, 0.2, 0.5],
            ],
            vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5]],
            vec![0.3, 0.3, 0.4],
        )
        .unwrap();
        let mut rng = Rand48::seed(19);
        for len in 1..=8 {
            let seq = m.generate(len, 1, &mut rng).remove(0);
            let fast = m.forward_loglik(&seq);
            let slow = brute_force_loglik(&m, &seq);
            assert!((fast - slow).abs() < 1e-9, "len {len}: {fast} vs {slow}");
        }
    }

    #[test]
    fn likelihoods_normalize_over_all_sequences() {
        // L=2, T=3: the eight sequence probabilities sum to one
        let m = DiscreteHmm::new(
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.25, 0.75], vec![0.9, 0.1]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let mut total = 0.0;
        for code in 0..8usize {
            let seq = vec![code & 1, (code >> 1) & 1, (code >> 2) & 1];
            total += m.forward_loglik(&seq).exp();
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn impossible_sequence_has_neg_infinite_loglik() {
        let m = DiscreteHmm::new(
            vec![vec![1.0]],
            vec![vec![1.0, 0.0]],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(m.forward_loglik(&[1]), f64::NEG_INFINITY);
        // with a back-off floor the sequence becomes representable
        assert!(m.forward_loglik_floored(&[1], 1e-6).is_finite());
    }

    #[test]
    fn flattening_is_idempotent_and_preserves_rest() {
        let m = demo_model();
        let f1 = m.flatten_transitions();
        let f2 = f1.flatten_transitions();
        assert_eq!(f1, f2);
        assert_eq!(f1.emissions(), m.emissions());
        assert_eq!(f1.initial(), m.initial());
        for row in f1.transitions() {
            for &v in row {
                assert_eq!(v, 0.5);
            }
        }
    }

    #[test]
    fn uniform_transition_model_is_unchanged_by_flattening() {
        let third = 1.0 / 3.0;
        let m = DiscreteHmm::new(
            vec![vec![third; 3]; 3],
            vec![vec![0.9, 0.1], vec![0.1, 0.9], vec![0.5, 0.5]],
            vec![third; 3],
        )
        .unwrap();
        let f = m.flatten_transitions();
        let mut rng = Rand48::seed(7);
        let seqs = m.generate(12, 50, &mut rng);
        for seq in &seqs {
            assert_eq!(m.forward_loglik(seq), f.forward_loglik(seq));
        }
    }

    #[test]
    fn deterministic_model_generates_one_sequence() {
        let m = DiscreteHmm::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let mut rng = Rand48::seed(23);
        let seqs = m.generate(6, 20, &mut rng);
        for seq in &seqs {
            assert_eq!(seq, &vec![0, 1, 0, 1, 0, 1]);
        }
    }

    #[test]
    fn generated_symbols_match_stationary_mixture() {
        // uniform transitions: stationary state mix is uniform, symbol
        // marginals are the mean of the emission rows
        let m = DiscreteHmm::new(
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.9, 0.1], vec![0.3, 0.7]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let mut rng = Rand48::seed(29);
        let seqs = m.generate(50, 2_000, &mut rng);
        let mut count0 = 0usize;
        let mut total = 0usize;
        for seq in &seqs {
            count0 += seq.iter().filter(|&&s| s == 0).count();
            total += seq.len();
        }
        let freq = count0 as f64 / total as f64;
        let expected = 0.5 * (0.9 + 0.3);
        let se = (expected * (1.0 - expected) / total as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * se, "{freq} vs {expected}");
    }

    #[test]
    fn symbols_stay_in_alphabet() {
        let m = demo_model();
        let mut rng = Rand48::seed(31);
        for seq in m.generate(30, 100, &mut rng) {
            assert!(seq.iter().all(|&s| s < m.alphabet_size()));
        }
    }

    #[test]
    fn emission_only_classes_survive_flattening() {
        let third = 1.0 / 3.0;
        let mk = |b: Vec<Vec<f64>>| {
            DiscreteHmm::new(vec![vec![third; 3]; 3], b, vec![third; 3]).unwrap()
        };
        let m0 = mk(vec![
            vec![0.8, 0.1, 0.1],
            vec![0.7, 0.2, 0.1],
            vec![0.6, 0.3, 0.1],
        ]);
        let m1 = mk(vec![
            vec![0.1, 0.1, 0.8],
            vec![0.1, 0.2, 0.7],
            vec![0.1, 0.3, 0.6],
        ]);
        let models = vec![m0, m1];
        let data = SequenceDataset::from_models(&models, 15, 300, 41);
        let report = markov_necessity_test(&models, &data).unwrap();
        assert_eq!(report.accuracy_true, report.accuracy_flat);
        assert!(report.accuracy_true > 0.95);
    }

    #[test]
    fn needs_two_models() {
        let m = demo_model();
        let data = SequenceDataset::from_models(std::slice::from_ref(&m), 5, 10, 1);
        assert!(matches!(
            markov_necessity_test(&[m], &data),
            Err(Error::NeedTwoModels(1))
        ));
    }

    #[test]
    fn format_parse_round_trip() {
        let m = demo_model();
        let text = m.format();
        let parsed = DiscreteHmm::parse(&text).unwrap();
        assert_eq!(m, parsed);
    }

    #[test]
    fn parse_rejects_bad_models() {
        assert!(DiscreteHmm::parse("k 2\nL 2\npi 0.5 0.5\nA 1 0\nB 1 0\nB 0 1\n").is_err());
        assert!(DiscreteHmm::parse("k 1\nL 1\npi 1\nA 0.9\nB 1\n").is_err());
        assert!(DiscreteHmm::parse("L 1\npi 1\nA 1\nB 1\n").is_err());
        assert!(DiscreteHmm::parse("k 1\nL 1\npi 1\nA 1\nB 1\nQ 3\n").is_err());
    }

    #[test]
    fn parse_accepts_comments_and_blanks() {
        let text = "# a model\n\nk 1\nL 2\npi 1\nA 1\nB 0.5 0.5\n";
        let m = DiscreteHmm::parse(text).unwrap();
        assert_eq!(m.state_count(), 1);
        assert_eq!(m.alphabet_size(), 2);
    }
}
