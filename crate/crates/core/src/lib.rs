//! Photonic hybrid precoding for multiuser millimeter-wave radio-over-fiber
//! downlinks.
//!
//! The crate is organised bottom-up:
//!
//! - [`arrays`]: steering vectors, photonic and RF array gains, beam squint.
//! - [`channel`]: random path sets and per-carrier geometric channels.
//! - [`precoding`]: the photonic analog stage, ZF/MMSE baseband precoders,
//!   power normalisation and the residual against a fully digital precoder.
//! - [`metrics`]: SINR, spectral efficiency, BER and the closed-form bounds.
//! - [`montecarlo`]: the seeded, worker-count-invariant trial engine.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrays;
pub mod channel;
mod error;
pub mod metrics;
pub mod montecarlo;
pub mod precoding;

pub use error::{Error, Result};

/// Dense complex matrix used throughout.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;

pub use arrays::{ArrayGeometry, ArrayKind, BeamFocus, BeamPatternRow, CarrierPlan};
pub use channel::{ChannelRealization, GainModel, Path, PathSet};
pub use metrics::{LinkBudget, MetricsRecord, PowerLawBound};
pub use montecarlo::{Beamformer, Experiment, ScenarioConfig, TrialOutcome};
pub use precoding::{PhotonicBeamformer, PrecoderKind, PrecoderSet};
