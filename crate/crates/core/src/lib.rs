//! Vector small-gain verification for networks of ISS subsystems.
//!
//! Gains are class-N₁ expression trees ([`GainFn`]); a [`GainMatrix`] collects them into
//! the MAX-preserving map `Γ`. On top of that sit the cyclic small-gain test, the
//! synthesis of composite gains, the discrete iteration `x⁺ = Γ(x)`, and simulation
//! plus trajectory-level validation for ODE, delay and sampled-data systems.

pub mod builtin;
pub mod error;
pub mod gain;
pub mod iteration;
pub mod network;
pub mod par;
pub mod repro;
pub mod sim;
pub mod synthesis;
pub mod validation;

pub use error::{Error, Result};
pub use gain::{
    check_contraction, compose_chain, invert, invert_auto, ContractionStatus, ContractionVerdict, GainFn, GridSpec,
};
pub use network::{
    check_small_gain, check_small_gain_with, enumerate_cycles, gamma_apply, q_operator, vec_max, GainMatrix, PlusVec,
    SmallGainReport,
};
pub use par::Exec;
pub use synthesis::{build_phi, build_theta, overall_gain, CompositeGain, SynthesisInput};
