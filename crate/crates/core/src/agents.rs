//! Scripted policies used by the experiments.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Observation;
use crate::error::{Result, SimError};
use crate::negotiation::{masked_sample, ActionMask};
use crate::types::{ActionDimension, RegionActions, MAX_LEVEL};

/// The five action levels of a fixed policy. Import and tariff levels apply
/// to every partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedLevels {
    pub savings: u8,
    pub mitigation: u8,
    pub max_export: u8,
    pub desired_import: u8,
    pub tariff: u8,
}

impl FixedLevels {
    /// Mitigation 0.9, savings 0.3, desired import 0.9, maximum export 0.9, no tariffs.
    pub const IDEAL_TRADE: FixedLevels = FixedLevels {
        savings: 3,
        mitigation: 9,
        max_export: 9,
        desired_import: 9,
        tariff: 0,
    };

    pub fn level(&self, dim: ActionDimension) -> u8 {
        match dim {
            ActionDimension::Savings => self.savings,
            ActionDimension::Mitigation => self.mitigation,
            ActionDimension::MaxExport => self.max_export,
            ActionDimension::DesiredImport => self.desired_import,
            ActionDimension::Tariff => self.tariff,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for dim in ActionDimension::ALL {
            let level = self.level(dim);
            if level > MAX_LEVEL {
                return Err(SimError::InvalidAction { level });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// The same levels every step, raised to the mask floor when masked.
    FixedLevels(FixedLevels),
    /// Every level drawn uniformly from the permitted set.
    UniformRandom,
    /// Fixed levels except tariffs, which are drawn uniformly per partner each step.
    RandomTariffs(FixedLevels),
    /// Base policy with every other region's tariff toward `target` forced to `tariff_level`.
    PariahOverride {
        base: Box<Policy>,
        target: usize,
        tariff_level: u8,
    },
    /// One policy per region, indexed by region id.
    PerRegion(Vec<Policy>),
}

impl Policy {
    /// Chooses `region`'s actions for one step.
    pub fn act<R: Rng + ?Sized>(
        &self,
        region: usize,
        observation: &Observation,
        mask: &ActionMask,
        rng: &mut R,
    ) -> Result<RegionActions> {
        mask.validate()?;
        let n = observation.n_regions;
        match self {
            Policy::FixedLevels(levels) => fixed_actions(levels, region, n, mask),
            Policy::RandomTariffs(levels) => {
                let mut actions = fixed_actions(levels, region, n, mask)?;
                for (j, t) in actions.tariffs.iter_mut().enumerate() {
                    if j != region {
                        *t = masked_sample(mask, ActionDimension::Tariff, rng)?;
                    }
                }
                Ok(actions)
            }
            Policy::UniformRandom => {
                let mut draw = |dim| masked_sample(mask, dim, rng);
                let savings = draw(ActionDimension::Savings)?;
                let mitigation = draw(ActionDimension::Mitigation)?;
                let max_export = draw(ActionDimension::MaxExport)?;
                let mut row =
                    |dim| -> Result<Vec<u8>> { (0..n).map(|j| if j == region { Ok(0) } else { draw(dim) }).collect() };
                let desired_imports = row(ActionDimension::DesiredImport)?;
                let tariffs = row(ActionDimension::Tariff)?;
                Ok(RegionActions {
                    savings,
                    mitigation,
                    max_export,
                    desired_imports,
                    tariffs,
                })
            }
            Policy::PariahOverride {
                base,
                target,
                tariff_level,
            } => {
                let mut actions = base.act(region, observation, mask, rng)?;
                if region != *target && *target < n {
                    actions.tariffs[*target] = mask.snap(ActionDimension::Tariff, *tariff_level)?;
                }
                Ok(actions)
            }
            Policy::PerRegion(policies) => policies
                .get(region)
                .ok_or_else(|| SimError::MalformedAction {
                    region,
                    reason: format!("no policy for region (only {} given)", policies.len()),
                })?
                .act(region, observation, mask, rng),
        }
    }
}

fn fixed_actions(levels: &FixedLevels, region: usize, n: usize, mask: &ActionMask) -> Result<RegionActions> {
    levels.validate()?;
    let snap = |dim: ActionDimension| mask.snap(dim, levels.level(dim));
    let import = snap(ActionDimension::DesiredImport)?;
    let tariff = snap(ActionDimension::Tariff)?;
    Ok(RegionActions::uniform(
        n,
        region,
        snap(ActionDimension::Savings)?,
        snap(ActionDimension::Mitigation)?,
        snap(ActionDimension::MaxExport)?,
        import,
        tariff,
    ))
}
