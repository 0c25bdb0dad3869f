use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("noise amplitude {0} outside [0, 1]")]
    AmplitudeRange(f64),

    #[error("relative-error bound requires a positive base probability, got {0}")]
    NonPositiveBase(f64),

    #[error("log-gamma requires a positive argument, got {0}")]
    LogGammaDomain(f64),

    #[error("empty probability interval [{0}, {1}]")]
    EmptyInterval(f64, f64),

    #[error("invalid tree shape: depth {depth}, breadth {breadth} (need depth >= 1, breadth >= 2)")]
    TreeShape { depth: usize, breadth: usize },

    #[error("tree with {paths} paths exceeds the path budget {budget}")]
    PathBudget { paths: u64, budget: u64 },

    #[error("word {0:?} contains no countable characters")]
    EmptyWord(String),

    #[error("sample size {requested} exceeds lexicon size {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("noise amplitude {0} is too large; letter-count noise must stay well below one step (a < 1/124)")]
    NoiseTooLarge(f64),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("model is not row-stochastic: {0}")]
    NotStochastic(String),

    #[error("model file parse error: {0}")]
    ModelParse(String),

    #[error("flattening test needs at least two class models, got {0}")]
    NeedTwoModels(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
