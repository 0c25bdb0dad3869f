//! Monte-Carlo machinery for studying how estimation errors propagate
//! through products of probabilities, and for testing whether sequence
//! information is needed at all in lexical classification.
//!
//! The crate is organized around five experiments:
//!
//! * [`chain`] — true vs. noise-perturbed probability products, analytic
//!   relative-error bounds and the amplitude × chain-length error tables.
//! * [`cpoisson`] — the distribution of sums of log probabilities and its
//!   continuous-Poisson model fit.
//! * [`tree`] — synthetic lexical search over balanced probability trees
//!   with perturbed transition probabilities.
//! * [`lexicon`] — order-free word classification from letter-count
//!   vectors with a nearest-neighbor matcher and an exact anagram-class
//!   accuracy oracle.
//! * [`hmm`] — minimal discrete-observation HMM machinery for the
//!   transition-matrix flattening test.
//!
//! All randomness flows through [`rng::Rand48`], a 48-bit LCG compatible
//! with the POSIX `drand48` family, so every experiment is reproducible
//! bit-for-bit from a 32-bit seed. Parallel sweeps derive one independent
//! stream per work unit, which makes results independent of thread count.

pub mod chain;
pub mod cpoisson;
pub mod hmm;
pub mod lexicon;
pub mod rng;
pub mod tree;

mod error;

pub use error::{Error, Result};
