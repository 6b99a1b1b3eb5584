//! Episode orchestration.
//!
//! A step runs, in order: mask check, per-region economy (damages use the
//! temperature at the start of the step), trade and consumption, rewards,
//! balances, the climate update and exogenous growth. When negotiation is
//! enabled, a propose/evaluate round at reset and after every step produces
//! the masks for the following step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::climate::step_climate;
use crate::economy::{damage_fraction, step_economy, EconomyStepOutput};
use crate::error::{Result, SimError};
use crate::negotiation::{negotiate, ActionMask};
use crate::trade::{compute_flows, consumption, import_budget_multiplier, step_balance, ConsumptionBreakdown};
use crate::types::{
    generate_regions, rate, ActionDimension, ActionSet, ClimateState, RegionProfile, RegionState, SimParams,
    VariantConfig,
};

const PROTOCOL_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;

/// What a scripted policy sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub n_regions: usize,
    pub step: usize,
    pub years_elapsed: f64,
    pub temperature: f64,
    pub region: RegionState,
    /// Mean of the other regions' previous mitigation rates.
    pub mean_others_mitigation: f64,
    pub commitment: Option<u8>,
}

impl Observation {
    /// An observation with placeholder state, for driving policies outside an episode.
    pub fn blank(n_regions: usize) -> Self {
        Self {
            n_regions,
            step: 0,
            years_elapsed: 0.0,
            temperature: 0.0,
            region: RegionState {
                capital: 1.0,
                labor: 1.0,
                productivity: 1.0,
                emission_intensity: 0.0,
                mitigation_prev: 0.0,
                balance: 0.0,
            },
            mean_others_mitigation: 0.0,
            commitment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub actions: ActionSet,
    /// Commitments in force for this step, when negotiating.
    pub commitments: Option<Vec<u8>>,
    pub economy: Vec<EconomyStepOutput>,
    pub consumption: Vec<ConsumptionBreakdown>,
    pub rewards: Vec<f64>,
    pub exports_scaled: Vec<f64>,
    pub imports_scaled: Vec<f64>,
    pub tariff_revenue: Vec<f64>,
    pub balance_before: Vec<f64>,
    pub balance_after: Vec<f64>,
    /// Import budget multiplier applied this step.
    pub import_multiplier: Vec<f64>,
    /// Temperature used for damages and the disaster check.
    pub temperature: f64,
    pub disaster_triggered: bool,
    /// Global emissions in GtC/yr.
    pub global_emissions: f64,
    /// Climate at the end of the step.
    pub climate: ClimateState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub observations: Vec<Observation>,
    /// Masks in force for the next step.
    pub masks: Vec<ActionMask>,
    pub record: StepRecord,
}

/// Complete simulator state; cloning it forks the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub params: SimParams,
    pub variant: VariantConfig,
    pub step: usize,
    pub regions: Vec<RegionState>,
    pub profiles: Vec<RegionProfile>,
    pub climate: ClimateState,
    pub import_multiplier: Vec<f64>,
    pub masks: Vec<ActionMask>,
    pub commitments: Option<Vec<u8>>,
    rng: ChaCha8Rng,
}

/// Builds the initial world. Regions come from `params.region_seed`; `seed`
/// drives the negotiation protocol.
pub fn reset(params: &SimParams, variant: &VariantConfig, seed: u64) -> Result<World> {
    params.validate()?;
    variant.validate()?;
    let n = params.n_regions;
    let (regions, profiles) = generate_regions(n, params.region_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROTOCOL_STREAM);
    let mut world = World {
        params: params.clone(),
        variant: *variant,
        step: 0,
        regions,
        profiles,
        climate: params.climate.initial_state(),
        import_multiplier: vec![1.0; n],
        masks: vec![ActionMask::full(); n],
        commitments: None,
        rng,
    };
    world.run_negotiation()?;
    Ok(world)
}

impl World {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_steps(&self) -> usize {
        self.params.n_steps()
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.n_steps()
    }

    pub fn years_elapsed(&self) -> f64 {
        (self.step as u64 * u64::from(self.params.dt_years)) as f64
    }

    fn run_negotiation(&mut self) -> Result<()> {
        if let Some(cfg) = self.params.negotiation {
            let round = negotiate(self.n_regions(), &cfg, &mut self.rng)?;
            self.masks = round.masks;
            self.commitments = Some(round.commitments);
        }
        Ok(())
    }

    pub fn observations(&self) -> Vec<Observation> {
        let n = self.n_regions();
        let total_mu: f64 = self.regions.iter().map(|r| r.mitigation_prev).sum();
        (0..n)
            .map(|i| Observation {
                n_regions: n,
                step: self.step,
                years_elapsed: self.years_elapsed(),
                temperature: self.climate.t_atmosphere,
                region: self.regions[i].clone(),
                mean_others_mitigation: (total_mu - self.regions[i].mitigation_prev) / (n - 1) as f64,
                commitment: self.commitments.as_ref().map(|c| c[i]),
            })
            .collect()
    }

    fn check_masks(&self, actions: &ActionSet) -> Result<()> {
        for (i, (a, mask)) in actions.regions.iter().zip(&self.masks).enumerate() {
            let scalars = [
                (ActionDimension::Savings, a.savings),
                (ActionDimension::Mitigation, a.mitigation),
                (ActionDimension::MaxExport, a.max_export),
            ];
            let partners = (0..a.tariffs.len()).filter(|&j| j != i);
            let vectors = partners.flat_map(|j| {
                [
                    (ActionDimension::DesiredImport, a.desired_imports[j]),
                    (ActionDimension::Tariff, a.tariffs[j]),
                ]
            });
            for (dimension, level) in scalars.into_iter().chain(vectors) {
                if !mask.permits(dimension, level) {
                    return Err(SimError::MaskViolation {
                        region: i,
                        dimension,
                        level,
                    });
                }
            }
        }
        Ok(())
    }

    fn utility(&self, c: f64) -> f64 {
        let eta = self.params.consumption_elasticity;
        if eta == 0.0 {
            c
        } else if (eta - 1.0).abs() < 1e-12 {
            c.max(f64::MIN_POSITIVE).ln()
        } else {
            (c.max(0.0).powf(1.0 - eta) - 1.0) / (1.0 - eta)
        }
    }

    /// Advances one step. On error the world is left unchanged.
    pub fn step(&mut self, actions: &ActionSet) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(SimError::Protocol("episode already finished".into()));
        }
        let n = self.n_regions();
        actions.validate(n)?;
        self.check_masks(actions)?;

        let temperature = self.climate.t_atmosphere;
        let mut economy = Vec::with_capacity(n);
        let mut next_regions = Vec::with_capacity(n);
        for (i, a) in actions.regions.iter().enumerate() {
            let (out, next) = step_economy(
                &self.regions[i],
                &self.profiles[i],
                rate(a.savings),
                rate(a.mitigation),
                temperature,
                &self.params,
                &self.variant,
            )?;
            economy.push(out);
            next_regions.push(next);
        }

        let y_gross: Vec<f64> = economy.iter().map(|e| e.gross_output).collect();
        let y_net: Vec<f64> = economy.iter().map(|e| e.net_output).collect();
        let investment: Vec<f64> = economy.iter().map(|e| e.investment).collect();
        let budget: Vec<f64> = self
            .import_multiplier
            .iter()
            .map(|m| self.params.import_budget * m)
            .collect();
        let flows = compute_flows(actions, &y_gross, &budget);
        let consumption = consumption(
            &y_net,
            &investment,
            &flows.scaled,
            &flows.tariffed,
            self.params.foreign_weight,
            &self.variant,
        );

        let disaster = self.variant.disaster.filter(|d| temperature > d.threshold_degc);
        let rewards: Vec<f64> = consumption
            .iter()
            .map(|c| self.utility(c.aggregate) - disaster.map_or(0.0, |d| d.penalty_magnitude))
            .collect();

        let dt = f64::from(self.params.dt_years);
        let balance_before: Vec<f64> = self.regions.iter().map(|r| r.balance).collect();
        let balance_after: Vec<f64> = (0..n)
            .map(|i| {
                step_balance(
                    balance_before[i],
                    flows.exports_scaled[i],
                    flows.imports_scaled[i],
                    flows.revenue[i],
                    &self.variant,
                    dt,
                )
            })
            .collect();
        let next_multiplier: Vec<f64> = balance_after
            .iter()
            .zip(&y_gross)
            .map(|(b, y)| import_budget_multiplier(*b, *y))
            .collect();

        let global_emissions =
            self.params.climate.gtc_per_emission_unit * economy.iter().map(|e| e.emissions).sum::<f64>();
        let climate = step_climate(
            &self.climate,
            global_emissions,
            dt,
            self.years_elapsed() + dt,
            &self.params.climate,
        )?;

        for (region, b) in next_regions.iter_mut().zip(&balance_after) {
            region.balance = *b;
        }

        let record = StepRecord {
            step: self.step,
            actions: actions.clone(),
            commitments: self.commitments.clone(),
            economy,
            consumption,
            rewards: rewards.clone(),
            exports_scaled: flows.exports_scaled,
            imports_scaled: flows.imports_scaled,
            tariff_revenue: flows.revenue,
            balance_before,
            balance_after,
            import_multiplier: std::mem::replace(&mut self.import_multiplier, next_multiplier),
            temperature,
            disaster_triggered: disaster.is_some(),
            global_emissions,
            climate,
        };

        self.regions = next_regions;
        self.climate = climate;
        self.step += 1;
        if !self.is_done() {
            self.run_negotiation()?;
        }

        Ok(StepOutcome {
            rewards,
            observations: self.observations(),
            masks: self.masks.clone(),
            record,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    /// Atmospheric temperature anomaly after the final step.
    pub delta_t_end: f64,
    /// Gross output summed over regions and integrated over the horizon.
    pub cumulative_gross_output: f64,
    /// Undiscounted reward per region.
    pub total_reward: Vec<f64>,
    /// Damage fraction implied by `delta_t_end`.
    pub damage_end: f64,
    /// `|ΣM_end − ΣM_0 − Σdt·E| / ΣM_end`.
    pub carbon_balance_error: f64,
}

impl EpisodeSummary {
    pub fn mean_reward(&self) -> f64 {
        self.total_reward.iter().sum::<f64>() / self.total_reward.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub steps: Vec<StepRecord>,
    pub summary: EpisodeSummary,
}

/// Runs a full episode with one policy driving every region, handing each
/// step record to `sink`.
pub fn rollout(
    params: &SimParams,
    variant: &VariantConfig,
    policy: &Policy,
    seed: u64,
    sink: impl FnMut(StepRecord),
) -> Result<EpisodeSummary> {
    rollout_from(reset(params, variant, seed)?, policy, seed, sink)
}

/// Runs `world` to the end of its horizon. Policy randomness is drawn from
/// `seed` on a stream separate from the negotiation protocol.
pub fn rollout_from(
    mut world: World,
    policy: &Policy,
    seed: u64,
    mut sink: impl FnMut(StepRecord),
) -> Result<EpisodeSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(POLICY_STREAM);
    let n = world.n_regions();
    let dt = f64::from(world.params.dt_years);
    let carbon_start = world.climate.total_carbon();
    let mut carbon_added = 0.0;
    let mut cumulative_gross_output = 0.0;
    let mut total_reward = vec![0.0; n];
    let mut observations = world.observations();

    while !world.is_done() {
        let actions = ActionSet::new(
            (0..n)
                .map(|i| policy.act(i, &observations[i], &world.masks[i], &mut rng))
                .collect::<Result<_>>()?,
        );
        let outcome = world.step(&actions)?;
        carbon_added += dt * outcome.record.global_emissions;
        cumulative_gross_output += dt * outcome.record.economy.iter().map(|e| e.gross_output).sum::<f64>();
        for (t, r) in total_reward.iter_mut().zip(&outcome.rewards) {
            *t += r;
        }
        observations = outcome.observations;
        sink(outcome.record);
    }

    let carbon_end = world.climate.total_carbon();
    let delta_t_end = world.climate.t_atmosphere;
    Ok(EpisodeSummary {
        seed,
        delta_t_end,
        cumulative_gross_output,
        total_reward,
        damage_end: damage_fraction(
            delta_t_end,
            world.variant.damage_kind,
            world.params.damage_linear,
            world.params.damage_quadratic,
        ),
        carbon_balance_error: ((carbon_end - carbon_start) - carbon_added).abs() / carbon_end,
    })
}

/// Runs a full episode and keeps every step.
pub fn run_episode(params: &SimParams, variant: &VariantConfig, policy: &Policy, seed: u64) -> Result<EpisodeRecord> {
    let mut steps = Vec::with_capacity(params.n_steps());
    let summary = rollout(params, variant, policy, seed, |s| steps.push(s))?;
    Ok(EpisodeRecord { steps, summary })
}

/// Runs a full episode keeping only the summary.
pub fn run_summary(params: &SimParams, variant: &VariantConfig, policy: &Policy, seed: u64) -> Result<EpisodeSummary> {
    rollout(params, variant, policy, seed, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::FixedLevels;
    use crate::negotiation::{NegotiatedDimension, NegotiationConfig};
    use crate::types::{DisasterPenalty, RegionActions};

    fn zero_actions(n: usize) -> ActionSet {
        ActionSet::new((0..n).map(|i| RegionActions::uniform(n, i, 0, 0, 0, 0, 0)).collect())
    }

    #[test]
    fn reset_is_deterministic() {
        let p = SimParams::default();
        let v = VariantConfig::default();
        assert_eq!(reset(&p, &v, 4).unwrap(), reset(&p, &v, 4).unwrap());
        let w = reset(&p, &v, 4).unwrap();
        assert_eq!(w.n_steps(), 20);
        assert_eq!(w.climate.carbon, [850.0, 460.0, 1740.0]);
        assert_eq!((w.climate.t_atmosphere, w.climate.t_lower_ocean), (1.1, 0.3));
    }

    #[test]
    fn two_region_world() {
        let p = SimParams {
            n_regions: 2,
            ..Default::default()
        };
        let w = reset(&p, &VariantConfig::default(), 0).unwrap();
        assert_eq!(w.n_regions(), 2);
    }

    #[test]
    fn invalid_config_rejected() {
        let p = SimParams {
            n_regions: 1,
            ..Default::default()
        };
        assert!(matches!(
            reset(&p, &VariantConfig::default(), 0),
            Err(SimError::Config { .. })
        ));
    }

    #[test]
    fn zero_actions_reward_net_output() {
        let p = SimParams::default();
        let mut w = reset(&p, &VariantConfig::default(), 0).unwrap();
        let out = w.step(&zero_actions(27)).unwrap();
        for (r, e) in out.rewards.iter().zip(&out.record.economy) {
            assert_eq!(*r, e.net_output);
        }
    }

    #[test]
    fn step_is_pure() {
        let p = SimParams::default();
        let w = reset(&p, &VariantConfig::default(), 0).unwrap();
        let a = ActionSet::new((0..27).map(|i| RegionActions::uniform(27, i, 3, 5, 9, 9, 4)).collect());
        let mut w1 = w.clone();
        let mut w2 = w.clone();
        assert_eq!(w1.step(&a).unwrap(), w2.step(&a).unwrap());
        assert_eq!(w1, w2);
    }

    #[test]
    fn disaster_penalty_is_exact() {
        let mut p = SimParams::default();
        p.climate.initial_t_atmosphere = 3.5;
        let on = VariantConfig {
            disaster: Some(DisasterPenalty {
                threshold_degc: 3.0,
                penalty_magnitude: 1e6,
            }),
            ..Default::default()
        };
        let a = ActionSet::new((0..27).map(|i| RegionActions::uniform(27, i, 3, 5, 9, 9, 4)).collect());
        let mut w_on = reset(&p, &on, 0).unwrap();
        let mut w_off = reset(&p, &VariantConfig::default(), 0).unwrap();
        let r_on = w_on.step(&a).unwrap();
        let r_off = w_off.step(&a).unwrap();
        assert!(r_on.record.disaster_triggered);
        for (x, y) in r_on.rewards.iter().zip(&r_off.rewards) {
            assert_eq!(*x, y - 1e6);
        }
    }

    #[test]
    fn rewards_equal_aggregate_consumption_without_disaster() {
        let p = SimParams::default();
        let rec = run_episode(&p, &VariantConfig::default(), &Policy::UniformRandom, 3).unwrap();
        for s in &rec.steps {
            for (r, c) in s.rewards.iter().zip(&s.consumption) {
                assert_eq!(*r, c.aggregate);
            }
        }
    }

    #[test]
    fn episode_deterministic() {
        let p = SimParams::default();
        let v = VariantConfig::default();
        let a = run_episode(&p, &v, &Policy::UniformRandom, 9).unwrap();
        let b = run_episode(&p, &v, &Policy::UniformRandom, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 20);
        assert_eq!(a.summary.delta_t_end, a.steps.last().unwrap().climate.t_atmosphere);
        assert!(a.summary.carbon_balance_error < 1e-9);
    }

    #[test]
    fn mask_violation_reported() {
        let p = SimParams {
            negotiation: Some(NegotiationConfig {
                dimension: NegotiatedDimension::Mitigation,
                ..Default::default()
            }),
            ..Default::default()
        };
        let mut w = reset(&p, &VariantConfig::default(), 1).unwrap();
        let committed = w.commitments.clone().unwrap();
        let (region, &level) = committed.iter().enumerate().find(|(_, c)| **c > 0).unwrap();
        let err = w.step(&zero_actions(27)).unwrap_err();
        assert!(
            matches!(
                err,
                SimError::MaskViolation {
                    dimension: ActionDimension::Mitigation,
                    ..
                }
            ),
            "{err}"
        );
        assert!(level > 0 && region < 27);
        assert_eq!(w.step, 0, "failed step must not advance the world");
    }

    #[test]
    fn masks_hold_over_an_episode() {
        let p = SimParams {
            negotiation: Some(NegotiationConfig {
                dimension: NegotiatedDimension::Both,
                ..Default::default()
            }),
            ..Default::default()
        };
        let rec = run_episode(&p, &VariantConfig::default(), &Policy::UniformRandom, 5).unwrap();
        for s in &rec.steps {
            let c = s.commitments.as_ref().unwrap();
            for (a, c) in s.actions.regions.iter().zip(c) {
                assert!(a.mitigation >= *c && a.savings >= *c);
            }
        }
    }

    #[test]
    fn fixed_policy_trade_does_not_move_climate() {
        let p = SimParams::default();
        let v = VariantConfig::default();
        let run = |x, m, t| {
            let levels = FixedLevels {
                savings: 3,
                mitigation: 4,
                max_export: x,
                desired_import: m,
                tariff: t,
            };
            run_summary(&p, &v, &Policy::FixedLevels(levels), 0).unwrap()
        };
        let a = run(0, 0, 0);
        let b = run(9, 9, 5);
        assert_eq!(a.delta_t_end, b.delta_t_end);
        assert_eq!(a.cumulative_gross_output, b.cumulative_gross_output);
        assert_ne!(a.total_reward, b.total_reward);
    }
}
