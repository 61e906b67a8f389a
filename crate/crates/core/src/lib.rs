//! Mean-field dynamics, stability and transport analysis of boundary-driven,
//! dissipative nonlinear cavity chains.

pub mod disorder;
pub mod error;
pub mod integrator;
pub mod model;
pub mod observables;
pub mod scaling;
pub mod seed;
pub mod stability;

pub use error::{Error, Result};
pub use integrator::{integrate, step, IntegratorConfig, Trajectory};
pub use model::{ChainParams, Complex, FieldState};
pub use observables::{ensemble_stats, EnsembleConfig, EnsembleStats, IcMode};
pub use scaling::{
    classify_decay, detect_threshold, fit_decay, length_sweep, threshold_scaling, DecayClass, DecayModel,
    LengthSweepResult, ScalingAxis, ScalingFit, ThresholdConfig, ThresholdReport,
};
pub use disorder::{disordered_sweep, phase_scan, sample_disorder, DisorderConfig, Phase, PhaseCell};
pub use stability::{analyze, assemble_bdg, growth_rate, solve_steady_state, stability_scan, BdgSpectrum, SteadyState};
