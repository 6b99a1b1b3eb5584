//! Multi-region climate-economy simulator with bilateral trade, tariffs and
//! negotiated commitments, plus the batch experiments that probe how its
//! actions reach rewards.

// Validation uses `!(x > 0.0)` so that NaN is rejected along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod cli;
pub mod climate;
pub mod economy;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod negotiation;
pub mod stats;
pub mod trade;
pub mod types;

pub use agents::{FixedLevels, Policy};
pub use engine::{reset, run_episode, run_summary, EpisodeRecord, EpisodeSummary, StepRecord, World};
pub use error::{Result, SimError};
pub use types::{
    level_to_rate, ActionDimension, ActionSet, ClimateState, RegionActions, RegionState, SimParams, VariantConfig,
};
