//! Key-rate bounds for continuous-variable quantum secret sharing with Gaussian
//! states, plus a Monte Carlo simulation of the homodyne protocol that serves as
//! an independent check on every analytic variance.
//!
//! Conventions: quadratures ordered `x₁, p₁, …, x_m, p_m`, `ħ = 1`, vacuum
//! variance 1/2, entropies and rates in bits.

pub mod channels;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod keyrate;
pub mod protocol;

pub use channels::{
    build_fig1_state, build_fig1_state_with, build_kn_state, pure_loss, two_mode_squeezed_vacuum, ChannelSpec,
    PartyLayout, PlayerFrame, ResourceConfig, Topology, DEALER,
};
pub use error::{Error, Result};
pub use estimation::{
    conditional_variance_fixed, conditional_variance_optimal, gaussian_mutual_information, ConditioningResult,
    JointVariable,
};
pub use gaussian::{squeezed_vacuum, vacuum, Diagnostics, GaussianState, Quadrature, SymplecticTransform};
pub use keyrate::{
    enumerate_structures, keyrate_dishonest, keyrate_eavesdropping, keyrate_eavesdropping_for, keyrate_qss,
    keyrate_qss_with_efficiency, KeyRateReport, ThresholdScheme,
};
pub use protocol::{
    empirical_conditional_variance, run_protocol, sample_outcomes, ProtocolConfig, ProtocolReport, SampleBatch,
};
