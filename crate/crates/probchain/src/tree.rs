//! Synthetic lexical search over balanced probability trees.
//!
//! A balanced tree of depth `d` and fan-out `b` carries a random
//! transition probability on every edge. The root-to-leaf path with the
//! largest probability product is the target; all other paths are
//! distractors. Perturbing every edge with bipolar noise and asking for
//! the argmax path again measures how fast the error in the probability
//! destroys the classification.

use rayon::prelude::*;

use crate::rng::Rand48;
use crate::{Error, Result};

const SWEEP_SALT: u64 = 3 << 56;

/// Default cap on the number of root-to-leaf paths a tree may have.
pub const DEFAULT_PATH_BUDGET: u64 = 10_000_000;

/// Balanced tree of transition probabilities.
///
/// Level `l` (0-based) holds `b^(l+1)` edge probabilities; the edges of
/// the node reached by choices `c_0..c_l` start at index
/// `(parent index) * b` of level `l`.
#[derive(Debug, Clone)]
pub struct LetterTree {
    depth: usize,
    breadth: usize,
    levels: Vec<Vec<f64>>,
}

impl LetterTree {
    /// Generate a tree with i.i.d. uniform (0,1) edge probabilities.
    ///
    /// Fails when `b^d` exceeds `max_paths` or the shape is degenerate.
    pub fn generate(
        depth: usize,
        breadth: usize,
        max_paths: u64,
        rng: &mut Rand48,
    ) -> Result<Self> {
        if depth < 1 || breadth < 2 {
            return Err(Error::TreeShape { depth, breadth });
        }
        let paths = (breadth as u64)
            .checked_pow(depth as u32)
            .ok_or(Error::PathBudget {
                paths: u64::MAX,
                budget: max_paths,
            })?;
        if paths > max_paths {
            return Err(Error::PathBudget {
                paths,
                budget: max_paths,
            });
        }
        let mut levels = Vec::with_capacity(depth);
        let mut width = breadth;
        for _ in 0..depth {
            let mut level = Vec::with_capacity(width);
            for _ in 0..width {
                // open interval: redraw the (measure-zero) exact zero
                let p = loop {
                    let p = rng.next_uniform();
                    if p > 0.0 {
                        break p;
                    }
                };
                level.push(p);
            }
            levels.push(level);
            width *= breadth;
        }
        Ok(LetterTree {
            depth,
            breadth,
            levels,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn breadth(&self) -> usize {
        self.breadth
    }

    /// Number of root-to-leaf paths, `b^d`.
    pub fn paths(&self) -> u64 {
        (self.breadth as u64).pow(self.depth as u32)
    }

    /// Edge probabilities per level (level `l` has `b^(l+1)` entries).
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    /// The path with the maximum sum of log edge probabilities.
    ///
    /// Ties resolve to the lexicographically smallest path; with
    /// continuous probabilities they have probability zero.
    pub fn target_path(&self) -> Vec<u32> {
        argmax_path(&self.levels, self.breadth, Score::LogSum)
    }
}

/// Path scoring used by the argmax walker.
#[derive(Clone, Copy)]
enum Score {
    /// Sum of natural logs; requires positive edge values.
    LogSum,
    /// Plain product; signs carry through, as perturbed values may be
    /// negative.
    Product,
}

/// Depth-first argmax over all root-to-leaf paths, visiting children in
/// index order and replacing the best only on strictly greater score, so
/// the first-found maximum (the lexicographically smallest) wins ties.
/// Partial scores accumulate down the recursion: O(edges) time, O(d)
/// extra space.
fn argmax_path(levels: &[Vec<f64>], breadth: usize, score: Score) -> Vec<u32> {
    struct Walk<'a> {
        levels: &'a [Vec<f64>],
        breadth: usize,
        score: Score,
        current: Vec<u32>,
        best: Vec<u32>,
        best_score: f64,
    }
    impl Walk<'_> {
        fn descend(&mut self, level: usize, node: usize, acc: f64) {
            let base = node * self.breadth;
            for choice in 0..self.breadth {
                let edge = self.levels[level][base + choice];
                let acc = match self.score {
                    Score::LogSum => acc + edge.ln(),
                    Score::Product => acc * edge,
                };
                self.current.push(choice as u32);
                if level + 1 == self.levels.len() {
                    if acc > self.best_score {
                        self.best_score = acc;
                        self.best.clear();
                        self.best.extend_from_slice(&self.current);
                    }
                } else {
                    self.descend(level + 1, base + choice, acc);
                }
                self.current.pop();
            }
        }
    }
    let mut walk = Walk {
        levels,
        breadth,
        score,
        current: Vec::with_capacity(levels.len()),
        best: Vec::new(),
        best_score: f64::NEG_INFINITY,
    };
    let seed = match score {
        Score::LogSum => 0.0,
        Score::Product => 1.0,
    };
    walk.descend(0, 0, seed);
    walk.best
}

/// Outcome of the perturbation trials on one tree.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyOutcome {
    /// F measure in [0, 1]: with micro-averaging over paths-as-classes,
    /// precision equals recall equals the fraction of trials whose
    /// argmax path survived the perturbation.
    pub f_measure: f64,
    /// Fraction of trials in which at least one perturbed edge went
    /// negative (diagnostic).
    pub negative_fraction: f64,
}

/// Perturb every edge with bipolar noise of amplitude `eps` and check
/// whether the argmax path is preserved, over `trials` trials.
///
/// Perturbed probabilities are not truncated; path scores are plain
/// products in f64 so negative factors keep their sign, and the argmax
/// runs over the signed products.
pub fn perturb_and_classify(
    tree: &LetterTree,
    eps: f64,
    trials: usize,
    rng: &mut Rand48,
) -> ClassifyOutcome {
    debug_assert!(eps >= 0.0);
    let target = tree.target_path();
    let mut perturbed: Vec<Vec<f64>> = tree.levels.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut correct = 0usize;
    let mut negative_trials = 0usize;
    for _ in 0..trials {
        let mut any_negative = false;
        for (level, out) in tree.levels.iter().zip(perturbed.iter_mut()) {
            for (&p, slot) in level.iter().zip(out.iter_mut()) {
                let v = p + rng.next_bipolar(eps);
                any_negative |= v < 0.0;
                *slot = v;
            }
        }
        if any_negative {
            negative_trials += 1;
        }
        let predicted = argmax_path(&perturbed, tree.breadth, Score::Product);
        if predicted == target {
            correct += 1;
        }
    }
    ClassifyOutcome {
        f_measure: correct as f64 / trials as f64,
        negative_fraction: negative_trials as f64 / trials as f64,
    }
}

/// One row of the sweep table: mean and sd of the per-model F measure
/// over all (breadth, model) combinations at fixed depth and eps.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub depth: usize,
    pub eps: f64,
    pub mean_f_pct: f64,
    pub sd_pct: f64,
    pub negative_fraction: f64,
    pub models: usize,
}

/// Full sweep output.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub depths: Vec<usize>,
    pub eps_values: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Per-eps mean and sd pooled over every (depth, breadth, model).
    pub pooled: Vec<SweepRow>,
    /// (depth, breadth) combinations skipped for exceeding the path
    /// budget.
    pub skipped: Vec<(usize, usize)>,
}

fn row_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Sweep depths × breadths × eps values with `models` random trees per
/// topology and `trials` perturbation trials per model and eps.
///
/// Each (depth, breadth, model) is an independent work unit with its own
/// derived stream; the tree is generated once and reused across all eps
/// values, trials running sequentially on the unit's stream. Topologies
/// whose path count exceeds `max_paths` are skipped and reported.
pub fn sweep(
    depths: &[usize],
    breadths: &[usize],
    eps_values: &[f64],
    models: usize,
    trials: usize,
    max_paths: u64,
    master_seed: u32,
) -> Sweep {
    assert!(!depths.is_empty() && !breadths.is_empty() && !eps_values.is_empty());
    let mut units = Vec::new();
    let mut skipped = Vec::new();
    for (di, &d) in depths.iter().enumerate() {
        for &b in breadths {
            let fits = (b as u64)
                .checked_pow(d as u32)
                .map(|p| p <= max_paths)
                .unwrap_or(false);
            if !fits {
                skipped.push((d, b));
                continue;
            }
            for m in 0..models {
                units.push((di, d, b, m));
            }
        }
    }

    // per unit: F per eps, plus negative fractions
    let results: Vec<(usize, Vec<ClassifyOutcome>)> = units
        .par_iter()
        .enumerate()
        .map(|(unit_idx, &(di, d, b, _m))| {
            let mut rng = Rand48::derive(master_seed, SWEEP_SALT | unit_idx as u64);
            let tree = LetterTree::generate(d, b, max_paths, &mut rng)
                .expect("budget checked before scheduling");
            let outcomes = eps_values
                .iter()
                .map(|&eps| perturb_and_classify(&tree, eps, trials, &mut rng))
                .collect();
            (di, outcomes)
        })
        .collect();

    let mut rows = Vec::new();
    for (di, &d) in depths.iter().enumerate() {
        for (ei, &eps) in eps_values.iter().enumerate() {
            let fs: Vec<f64> = results
                .iter()
                .filter(|(rdi, _)| *rdi == di)
                .map(|(_, o)| o[ei].f_measure * 100.0)
                .collect();
            if fs.is_empty() {
                continue;
            }
            let negs: f64 = results
                .iter()
                .filter(|(rdi, _)| *rdi == di)
                .map(|(_, o)| o[ei].negative_fraction)
                .sum::<f64>()
                / fs.len() as f64;
            let (mean, sd) = row_stats(&fs);
            rows.push(SweepRow {
                depth: d,
                eps,
                mean_f_pct: mean,
                sd_pct: sd,
                negative_fraction: negs,
                models: fs.len(),
            });
        }
    }

    let pooled = eps_values
        .iter()
        .enumerate()
        .map(|(ei, &eps)| {
            let fs: Vec<f64> = results.iter().map(|(_, o)| o[ei].f_measure * 100.0).collect();
            let negs: f64 = results
                .iter()
                .map(|(_, o)| o[ei].negative_fraction)
                .sum::<f64>()
                / fs.len().max(1) as f64;
            let (mean, sd) = row_stats(&fs);
            SweepRow {
                depth: 0,
                eps,
                mean_f_pct: mean,
                sd_pct: sd,
                negative_fraction: negs,
                models: fs.len(),
            }
        })
        .collect();

    Sweep {
        depths: depths.to_vec(),
        eps_values: eps_values.to_vec(),
        rows,
        pooled,
        skipped,
    }
}

impl Sweep {
    /// Row lookup by depth and eps index.
    pub fn row(&self, depth: usize, eps: f64) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.depth == depth && r.eps == eps)
    }

    /// CSV: one row per (d, eps) cell plus the pooled rows with d=0.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("d,eps,mean_F_percent,sd_percent,negative_trial_fraction,models\n");
        for r in self.rows.iter().chain(self.pooled.iter()) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.depth, r.eps, r.mean_f_pct, r.sd_pct, r.negative_fraction, r.models
            ));
        }
        out
    }

    /// Text table: depth rows by eps columns, mean and sd per cell, with
    /// a pooled means row labeled `m`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("D \\ eps");
        for eps in &self.eps_values {
            out.push_str(&format!("{eps:>8}      sd"));
        }
        out.push('\n');
        for &d in &self.depths {
            out.push_str(&format!("D={d:<5}"));
            for &eps in &self.eps_values {
                match self.row(d, eps) {
                    Some(r) => {
                        out.push_str(&format!("{:>8.1}{:>8.1}", r.mean_f_pct, r.sd_pct))
                    }
                    None => out.push_str(&format!("{:>8}{:>8}", "-", "-")),
                }
            }
            out.push('\n');
        }
        out.push_str("m      ");
        for r in &self.pooled {
            out.push_str(&format!("{:>8.1}{:>8.1}", r.mean_f_pct, r.sd_pct));
        }
        out.push('\n');
        if !self.skipped.is_empty() {
            out.push_str("skipped (over path budget):");
            for (d, b) in &self.skipped {
                out.push_str(&format!(" d={d},b={b}"));
            }
            out.push('\n');
        }
        out
    }
}
