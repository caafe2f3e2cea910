use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("pair {pair_id} has {count} trial(s); at least 2 are needed for a standard error")]
    InsufficientData { pair_id: usize, count: u64 },

    #[error(
        "anticorrelation premise violated: {violations} of {trials} equal-setting pilot trials gave A = B \
         (the Bell inequality derivation requires A_a = -B_a on every trial)"
    )]
    AnticorrelationViolated { violations: u64, trials: u64 },

    #[error(
        "continuous hidden variable cannot be reordered by value: reordering works only if the set of \
         values the source variable can assume is much smaller than the number of trials"
    )]
    ContinuousLambdaUnorderable,

    #[error("setting at {angle} rad is not present in the finite model's detector tables")]
    UnknownSetting { angle: f64 },

    #[error("enumeration needs 2^{log2_strategies} strategies, above the 2^{limit_log2} guard")]
    TooLarge {
        log2_strategies: u64,
        limit_log2: u64,
    },

    #[error("trial log: {0}")]
    Log(String),
}
