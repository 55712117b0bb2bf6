use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid continuum grid: {0}")]
    InvalidGrid(String),

    #[error("invalid evolution settings: {0}")]
    InvalidEvolution(String),

    #[error(
        "run horizon {t_end} s exceeds the discretization recurrence time {recurrence_time} s"
    )]
    RecurrenceViolation { t_end: f64, recurrence_time: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate}, error {error})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("adaptive step size underflow at t = {t} s (h = {h} s)")]
    StepUnderflow { t: f64, h: f64 },

    #[error(
        "relative norm drift {drift:e} exceeds limit {limit:e} at t = {t} s \
         (N_A = {n_a}, N_B = {n_b}, N_C = {n_c}, steps = {steps})"
    )]
    NormDrift {
        t: f64,
        drift: f64,
        limit: f64,
        n_a: f64,
        n_b: f64,
        n_c: f64,
        steps: u64,
    },

    #[error("the exact propagator only applies to the bilinear (kappa = 0) model")]
    NonlinearPropagator,

    #[error("time series too short: covers {covered} s, need at least {required} s")]
    SeriesTooShort { covered: f64, required: f64 },

    #[error("analysis window [{0}, {1}] s is not covered by the series")]
    BadWindow(f64, f64),
}
