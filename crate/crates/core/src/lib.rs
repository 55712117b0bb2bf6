//! Two-mode double-well condensate outcoupled into a discretized waveguide
//! continuum: closed-form coefficients, bath discretization, mean-field
//! dynamics, and spectral/population observables.

pub mod discretization;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod observables;
pub mod quadrature;

pub use discretization::{build_grid, tail_shift, ContinuumGrid, GridSummary};
pub use dynamics::{
    init_state, integrate, rhs, simulate, AmplitudeState, CouplingSchedule, Couplings,
    EvolutionSpec, ExactPropagator, Frame, IntegratorKind, PulsedOutcoupling, Trajectory, C64,
};
pub use error::{Error, Result};
pub use model::{
    derive_params, josephson_coupling, josephson_landmarks, spectral_response, validity_report,
    DerivedParams, JosephsonLandmarks, PhysicalConfig, ValidityCheck, HBAR,
};
pub use observables::{
    detect_steady_state, detect_steady_state_with, find_peaks_and_dip, fit_decay,
    oscillation_frequency, spectrum_at, PeakAnalysis, PeakOptions, Spectrum, SteadyOptions,
    SteadyState, ThresholdBasis, TimeSeries,
};
