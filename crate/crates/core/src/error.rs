use thiserror::Error;

use crate::types::ActionDimension;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid action level {level} (expected 0..=9)")]
    InvalidAction { level: u8 },

    #[error("invalid action for region {region}: {reason}")]
    MalformedAction { region: usize, reason: String },

    #[error("config error in `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("region {region} chose {dimension} level {level}, which its action mask forbids")]
    MaskViolation {
        region: usize,
        dimension: ActionDimension,
        level: u8,
    },

    #[error("statistics error: {0}")]
    Stats(String),
}

impl SimError {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
