//! Sequence-free word classification from letter counts.
//!
//! Every word maps to a 62-dimensional vector of character counts
//! (upper case, lower case, digits), discarding all ordering. A
//! nearest-neighbor matcher between two lightly-noised copies of a word
//! sample then measures how much of a lexicon is recoverable without any
//! sequence information; words sharing a count vector (anagram classes)
//! bound the attainable accuracy, and an exact oracle computes that
//! bound.

use std::collections::HashMap;

use rayon::prelude::*;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::rng::Rand48;
use crate::{Error, Result};

const LEXICON_SALT: u64 = 4 << 56;

/// Dimensionality of the letter-count space: A-Z, a-z, 0-9.
pub const ALPHABET_SIZE: usize = 62;

/// Largest admissible count noise; at `1/124` the total perturbation
/// over all 62 dimensions reaches half a count step.
pub const MAX_COUNT_NOISE: f64 = 1.0 / 124.0;

/// Character-count signature of one word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LetterCountVector {
    /// Counts indexed 0-25 = 'A'-'Z', 26-51 = 'a'-'z', 52-61 = '0'-'9'.
    pub counts: [u32; ALPHABET_SIZE],
    /// The word the counts were taken from.
    pub label: String,
}

fn slot(c: char) -> Option<usize> {
    match c {
        'A'..='Z' => Some(c as usize - 'A' as usize),
        'a'..='z' => Some(26 + c as usize - 'a' as usize),
        '0'..='9' => Some(52 + c as usize - '0' as usize),
        _ => None,
    }
}

/// Transliteration of letters that do not decompose into an ASCII base
/// plus combining marks. Case is preserved; everything else goes through
/// Unicode decomposition with the marks stripped.
fn transliterate_special(c: char) -> Option<&'static str> {
    Some(match c {
        'ß' => "ss",
        'ẞ' => "SS",
        'æ' => "ae",
        'Æ' => "AE",
        'œ' => "oe",
        'Œ' => "OE",
        'ø' => "o",
        'Ø' => "O",
        'đ' | 'ð' => "d",
        'Đ' | 'Ð' => "D",
        'ħ' => "h",
        'Ħ' => "H",
        'ı' => "i",
        'ł' => "l",
        'Ł' => "L",
        'ŋ' => "n",
        'Ŋ' => "N",
        'þ' => "th",
        'Þ' => "Th",
        _ => return None,
    })
}

/// Count vector of a word: international characters transliterate to
/// their nearest ASCII form (é→e, ü→u, ß→ss), case is preserved, ASCII
/// letters and digits are counted, everything else is dropped.
///
/// Fails when nothing remains to count.
pub fn vectorize(word: &str) -> Result<LetterCountVector> {
    let mut counts = [0u32; ALPHABET_SIZE];
    let mut total = 0u32;
    let mut bump = |c: char| {
        if let Some(i) = slot(c) {
            counts[i] += 1;
            total += 1;
        }
    };
    for c in word.chars() {
        match transliterate_special(c) {
            Some(rep) => rep.chars().for_each(&mut bump),
            None => c
                .nfd()
                .filter(|d| !is_combining_mark(*d))
                .for_each(&mut bump),
        }
    }
    if total == 0 {
        return Err(Error::EmptyWord(word.to_string()));
    }
    Ok(LetterCountVector {
        counts,
        label: word.to_string(),
    })
}

/// A named list of vectorized words.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub name: String,
    pub entries: Vec<LetterCountVector>,
}

impl Lexicon {
    /// Vectorize a word list. Fails on the first uncountable word.
    pub fn from_words<I, S>(name: &str, words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let entries = words
            .into_iter()
            .map(|w| vectorize(w.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Lexicon {
            name: name.to_string(),
            entries,
        })
    }

    /// Parse lexicon text: one word per line, blank lines and lines
    /// starting with '#' ignored.
    pub fn parse(name: &str, text: &str) -> Result<Self> {
        Self::from_words(
            name,
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Anagram classes over the given entry indices: groups of words
    /// with identical count vectors.
    pub fn anagram_classes(&self, indices: &[usize]) -> HashMap<[u32; ALPHABET_SIZE], Vec<usize>> {
        let mut classes: HashMap<[u32; ALPHABET_SIZE], Vec<usize>> = HashMap::new();
        for &i in indices {
            classes
                .entry(self.entries[i].counts)
                .or_default()
                .push(i);
        }
        classes
    }
}

/// A sampled word set with two independently noised real-valued copies
/// of each count vector.
#[derive(Debug, Clone)]
pub struct NoisySets {
    /// Lexicon indices of the sampled words.
    pub indices: Vec<usize>,
    /// Reference copies, aligned with `indices`.
    pub reference: Vec<Vec<f64>>,
    /// Test copies, aligned with `indices`.
    pub test: Vec<Vec<f64>>,
}

/// Draw `sample_size` words without replacement and produce reference
/// and test copies with per-element bipolar noise of amplitude
/// `noise_a`.
///
/// The amplitude must stay below `1/124` so the perturbation can never
/// bridge the unit gap between distinct integer count vectors.
pub fn build_sets(
    lexicon: &Lexicon,
    sample_size: usize,
    noise_a: f64,
    rng: &mut Rand48,
) -> Result<NoisySets> {
    if sample_size > lexicon.len() {
        return Err(Error::SampleTooLarge {
            requested: sample_size,
            available: lexicon.len(),
        });
    }
    if noise_a >= MAX_COUNT_NOISE {
        return Err(Error::NoiseTooLarge(noise_a));
    }
    // partial Fisher-Yates for a without-replacement sample
    let mut pool: Vec<usize> = (0..lexicon.len()).collect();
    for i in 0..sample_size {
        let remaining = pool.len() - i;
        let j = i + (rng.next_uniform() * remaining as f64) as usize;
        pool.swap(i, j.min(pool.len() - 1));
    }
    pool.truncate(sample_size);

    let noised = |rng: &mut Rand48, indices: &[usize]| -> Vec<Vec<f64>> {
        indices
            .iter()
            .map(|&i| {
                lexicon.entries[i]
                    .counts
                    .iter()
                    .map(|&c| c as f64 + rng.next_bipolar(noise_a))
                    .collect()
            })
            .collect()
    };
    let reference = noised(rng, &pool);
    let test = noised(rng, &pool);
    Ok(NoisySets {
        indices: pool,
        reference,
        test,
    })
}

/// Index of the Euclidean-nearest reference vector, first index winning
/// ties. Squared distances with an early exit once the running sum
/// exceeds the best.
fn nearest(reference: &[Vec<f64>], probe: &[f64]) -> usize {
    let mut best = f64::INFINITY;
    let mut best_idx = 0;
    for (i, r) in reference.iter().enumerate() {
        let mut acc = 0.0;
        for (a, b) in r.iter().zip(probe) {
            let d = a - b;
            acc += d * d;
            if acc >= best {
                break;
            }
        }
        if acc < best {
            best = acc;
            best_idx = i;
        }
    }
    best_idx
}

/// Fraction of test vectors whose nearest reference vector carries the
/// same word. The reference set is read-only, so the search runs in
/// parallel over test vectors.
pub fn nn_classify(lexicon: &Lexicon, sets: &NoisySets) -> f64 {
    let hits: usize = sets
        .test
        .par_iter()
        .enumerate()
        .map(|(t, probe)| {
            let r = nearest(&sets.reference, probe);
            let same = lexicon.entries[sets.indices[r]].label
                == lexicon.entries[sets.indices[t]].label;
            same as usize
        })
        .sum();
    hits as f64 / sets.test.len() as f64
}

/// Exact expected nearest-neighbor accuracy of a realized sample: words
/// with an identical count vector have an equal probability of the hit,
/// so each word contributes one over its anagram-class size.
pub fn expected_accuracy(lexicon: &Lexicon, indices: &[usize]) -> f64 {
    let classes = lexicon.anagram_classes(indices);
    let total: f64 = indices
        .iter()
        .map(|&i| 1.0 / classes[&lexicon.entries[i].counts].len() as f64)
        .sum();
    total / indices.len() as f64
}

/// Aggregated experiment output.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub lexicon_name: String,
    pub lexicon_size: usize,
    pub sample_size: usize,
    pub repeats: usize,
    pub mean_accuracy_pct: f64,
    pub sd_pct: f64,
    /// Mean anagram-class oracle expectation over the realized samples.
    pub oracle_pct: f64,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        format!(
            "lexicon_name,lexicon_size,sample_size,mean_accuracy_percent,sd_percent,oracle_expectation_percent\n{},{},{},{},{},{}\n",
            self.lexicon_name,
            self.lexicon_size,
            self.sample_size,
            self.mean_accuracy_pct,
            self.sd_pct,
            self.oracle_pct,
        )
    }
}

/// Repeat (sample, noise, classify) and aggregate accuracy. Each repeat
/// runs on its own derived stream.
pub fn run_experiment(
    lexicon: &Lexicon,
    repeats: usize,
    sample_size: usize,
    noise_a: f64,
    master_seed: u32,
) -> Result<ExperimentResult> {
    assert!(repeats >= 1);
    let mut accs = Vec::with_capacity(repeats);
    let mut oracles = Vec::with_capacity(repeats);
    for rep in 0..repeats {
        let mut rng = Rand48::derive(master_seed, LEXICON_SALT | rep as u64);
        let sets = build_sets(lexicon, sample_size, noise_a, &mut rng)?;
        accs.push(nn_classify(lexicon, &sets) * 100.0);
        oracles.push(expected_accuracy(lexicon, &sets.indices) * 100.0);
    }
    let mean = accs.iter().sum::<f64>() / repeats as f64;
    let sd = if repeats > 1 {
        (accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (repeats as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ExperimentResult {
        lexicon_name: lexicon.name.clone(),
        lexicon_size: lexicon.len(),
        sample_size,
        repeats,
        mean_accuracy_pct: mean,
        sd_pct: sd,
        oracle_pct: oracles.iter().sum::<f64>() / repeats as f64,
    })
}
