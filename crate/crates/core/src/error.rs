use thiserror::Error;

/// Errors raised by model construction, planning, learning, and reporting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row (h={level}, s={state}, a={action}) sums to {sum}, not 1")]
    InvalidRow {
        level: usize,
        state: usize,
        action: usize,
        sum: f64,
    },
    #[error("transition (h={level}, s={state}, a={action}) has invalid probability {value}")]
    InvalidProbability {
        level: usize,
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("reward (h={level}, s={state}, a={action}) = {value} lies outside [0, 1]")]
    RewardOutOfRange {
        level: usize,
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("initial state {initial} out of range for {num_states} states")]
    InvalidInitialState { initial: usize, num_states: usize },
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("models have different rewards or initial states")]
    RewardMismatch,
    #[error("policy entry (h={level}, s={state}) = {action} is not a valid action")]
    InvalidAction {
        level: usize,
        state: usize,
        action: usize,
    },
    #[error("instance too large: {policies} policies exceed the enumeration cap {cap}")]
    InstanceTooLarge { policies: f64, cap: u64 },
    #[error("invalid interval ({lo}, {hi}): need 0 <= lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sample budget exceeded: {name} = {required} exceeds budget {budget}")]
    BudgetExceeded {
        name: &'static str,
        required: f64,
        budget: u64,
    },
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
