//! Entanglement-constrained optimal quantum Fisher information for unitary
//! phase encoding.
//!
//! The crate covers phaseless probe states and their QFI ([`states`]), the
//! entanglement measures GGM, entropy and GM ([`measures`]), closed-form
//! optimal curves ([`laws`]), a stochastic-ranking evolution strategy with a
//! brute-force grid verifier ([`optimizer`]), the GM random-sampling
//! pipeline ([`sampler`]), curve fitting ([`fitting`]), file output
//! ([`report`]), and the acceptance checks ([`verify`]).

pub mod error;
pub mod fitting;
pub mod laws;
pub mod measures;
pub mod optimizer;
pub mod report;
pub mod sampler;
pub mod states;
pub mod verify;

pub use error::{QmetrixError, Result};
pub use measures::{EntanglementValue, GmSearchConfig, Measure};
pub use states::{Generator, GeneratorKind, ProbeState};
