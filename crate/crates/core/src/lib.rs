//! Underwater quantum key distribution link models: channel loss and noise,
//! analytic QBER for BB84, SARG04 and BBM92, entangled-state propagation
//! through Kraus channels, and Monte Carlo validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod channel_model;
pub mod cli;
pub mod error;
pub mod montecarlo;
pub mod protocol_analytics;
pub mod quantum_channel;

pub use error::{Error, Result};
