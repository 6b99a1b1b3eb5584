//! Batch experiments: the fixed-action sweep, the pariah tariff study, trade
//! and tariff effects, the damage horizon study and the masking demo.
//!
//! Every experiment is deterministic in its seed. Parallel runs are collected
//! in task order, so the worker count never changes the output.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{FixedLevels, Policy};
use crate::economy::calibrate_damage_coefficient;
use crate::engine::{reset, rollout_from, run_summary, EpisodeSummary, World};
use crate::error::{Result, SimError};
use crate::negotiation::{negotiate, NegotiationConfig};
use crate::stats::{mean_std, min_max, pearson, zscore_by_group};
use crate::types::{rate, ActionDimension, DamageKind, SimParams, VariantConfig, MAX_LEVEL, N_LEVELS};

/// Runs `f` on a pool of `workers` threads, or on the global pool when `None`.
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(SimError::config("workers", "must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| SimError::Domain(format!("cannot start worker pool: {e}"))),
    }
}

// ---------------------------------------------------------------------------
// Sweep

/// Number of evenly spaced levels per action dimension, in
/// [`ActionDimension::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid(pub [u8; 5]);

impl SweepGrid {
    pub fn uniform(levels: u8) -> Self {
        SweepGrid([levels; 5])
    }

    pub fn validate(&self) -> Result<()> {
        for (dim, &g) in ActionDimension::ALL.iter().zip(&self.0) {
            if !(1..=N_LEVELS as u8).contains(&g) {
                return Err(SimError::config("grid", format!("{dim} needs 1..=10 levels, got {g}")));
            }
        }
        Ok(())
    }

    /// The action levels sampled along one dimension: `0` alone for a single
    /// point, otherwise `g` levels from 0 to 9.
    pub fn levels(g: u8) -> Vec<u8> {
        if g <= 1 {
            return vec![0];
        }
        (0..g)
            .map(|k| (f64::from(k) * f64::from(MAX_LEVEL) / f64::from(g - 1)).round() as u8)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|&g| g as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid point, last dimension varying fastest.
    pub fn points(&self) -> Vec<FixedLevels> {
        let axes: Vec<Vec<u8>> = self.0.iter().map(|&g| Self::levels(g)).collect();
        let mut out = Vec::with_capacity(self.len());
        for &savings in &axes[0] {
            for &mitigation in &axes[1] {
                for &max_export in &axes[2] {
                    for &desired_import in &axes[3] {
                        for &tariff in &axes[4] {
                            out.push(FixedLevels {
                                savings,
                                mitigation,
                                max_export,
                                desired_import,
                                tariff,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub levels: FixedLevels,
    pub delta_t_end: f64,
    pub cumulative_gross_output: f64,
    pub mean_reward: f64,
    /// 1 at the coolest end state of the sweep, 0 at the hottest.
    pub climate_index: f64,
    /// 1 at the highest cumulative gross output of the sweep, 0 at the lowest.
    pub economic_index: f64,
}

pub const SWEEP_MEASURES: [&str; 3] = ["climate_index", "economic_index", "reward"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub seed: u64,
    pub grid: SweepGrid,
    pub rows: Vec<SweepRow>,
    /// Pearson r of each action level (rows, [`ActionDimension::ALL`] order)
    /// against [`SWEEP_MEASURES`]; `None` where a series is constant.
    pub correlations: [[Option<f64>; 3]; 5],
    /// Distinct (ΔT_end, Y_cum) pairs after rounding to 1e-9 relative.
    pub distinct_points: usize,
    pub max_carbon_balance_error: f64,
}

impl SweepTable {
    pub fn correlation(&self, dim: ActionDimension, measure: usize) -> Option<f64> {
        self.correlations[dim.index()][measure]
    }
}

/// Rounds to 10 significant digits, giving a hashable key.
fn relative_key(v: f64) -> String {
    format!("{v:.9e}")
}

/// Counts distinct pairs after rounding each coordinate to 1e-9 relative.
pub fn distinct_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> usize {
    pairs
        .into_iter()
        .map(|(a, b)| (relative_key(a), relative_key(b)))
        .collect::<HashSet<_>>()
        .len()
}

/// One rollout per grid point, every region playing the same fixed levels.
pub fn action_sweep(
    params: &SimParams,
    variant: &VariantConfig,
    grid: SweepGrid,
    seed: u64,
    workers: Option<usize>,
) -> Result<SweepTable> {
    grid.validate()?;
    params.validate()?;
    let points = grid.points();
    let summaries: Vec<EpisodeSummary> = with_workers(workers, || {
        points
            .par_iter()
            .map(|&levels| run_summary(params, variant, &Policy::FixedLevels(levels), seed))
            .collect::<Result<Vec<_>>>()
    })??;

    let temps: Vec<f64> = summaries.iter().map(|s| -s.delta_t_end).collect();
    let outputs: Vec<f64> = summaries.iter().map(|s| s.cumulative_gross_output).collect();
    let climate = min_max(&temps);
    let economic = min_max(&outputs);
    let rows: Vec<SweepRow> = points
        .iter()
        .zip(&summaries)
        .zip(climate.iter().zip(&economic))
        .map(|((&levels, s), (&climate_index, &economic_index))| SweepRow {
            levels,
            delta_t_end: s.delta_t_end,
            cumulative_gross_output: s.cumulative_gross_output,
            mean_reward: s.mean_reward(),
            climate_index,
            economic_index,
        })
        .collect();

    let mut correlations = [[None; 3]; 5];
    if rows.len() >= 2 {
        let rewards: Vec<f64> = rows.iter().map(|r| r.mean_reward).collect();
        let measures = [&climate, &economic, &rewards];
        for dim in ActionDimension::ALL {
            let xs: Vec<f64> = rows.iter().map(|r| f64::from(r.levels.level(dim))).collect();
            for (m, ys) in measures.iter().enumerate() {
                correlations[dim.index()][m] = pearson(&xs, ys)?;
            }
        }
    }

    Ok(SweepTable {
        seed,
        grid,
        distinct_points: distinct_pairs(rows.iter().map(|r| (r.delta_t_end, r.cumulative_gross_output))),
        max_carbon_balance_error: summaries.iter().map(|s| s.carbon_balance_error).fold(0.0, f64::max),
        rows,
        correlations,
    })
}

// ---------------------------------------------------------------------------
// Pariah

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PariahCondition {
    /// Every other region tariffs the subject at this level.
    Pariah(u8),
    /// Random tariffs toward everyone, subject included.
    Control,
    /// Random tariffs, except zero toward the subject.
    FreeTrade,
}

impl PariahCondition {
    pub fn label(&self) -> String {
        match self {
            PariahCondition::Pariah(level) => format!("pariah@{level}"),
            PariahCondition::Control => "control".into(),
            PariahCondition::FreeTrade => "free_trade".into(),
        }
    }

    /// Rate every other region applies toward the subject, when fixed.
    pub fn target_rate(&self) -> Option<f64> {
        match self {
            PariahCondition::Pariah(level) => Some(rate(*level)),
            PariahCondition::Control => None,
            PariahCondition::FreeTrade => Some(0.0),
        }
    }

    fn policy(&self, subject: usize) -> Policy {
        let base = Policy::RandomTariffs(FixedLevels::IDEAL_TRADE);
        let tariff_level = match self {
            PariahCondition::Control => return base,
            PariahCondition::Pariah(level) => *level,
            PariahCondition::FreeTrade => 0,
        };
        Policy::PariahOverride {
            base: Box::new(base),
            target: subject,
            tariff_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PariahSample {
    pub run: usize,
    pub subject: usize,
    /// Subject's undiscounted episode reward.
    pub reward: f64,
    /// `reward` standardized among all samples with the same subject.
    pub z: f64,
    /// Mean tariff rate the other regions applied to the subject.
    pub tariff_toward_subject: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PariahConditionResult {
    pub condition: PariahCondition,
    pub samples: Vec<PariahSample>,
    pub mean_z: f64,
    pub std_z: f64,
    pub realized_mean_tariff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PariahResult {
    pub seed: u64,
    pub conditions: Vec<PariahConditionResult>,
    pub max_carbon_balance_error: f64,
}

impl PariahResult {
    pub fn condition(&self, condition: PariahCondition) -> Option<&PariahConditionResult> {
        self.conditions.iter().find(|c| c.condition == condition)
    }
}

/// Tariff study with a random subject per run. Run `r` uses the same subject
/// and policy seed in every condition, so conditions differ only in the
/// tariffs aimed at the subject.
pub fn pariah_experiment(
    params: &SimParams,
    variant: &VariantConfig,
    runs: usize,
    tariff_levels: &[u8],
    seed: u64,
    workers: Option<usize>,
) -> Result<PariahResult> {
    if runs == 0 {
        return Err(SimError::config("pariah_runs", "must be at least 1"));
    }
    if let Some(&level) = tariff_levels.iter().find(|&&l| l > MAX_LEVEL) {
        return Err(SimError::config("tariff_levels", format!("level {level} exceeds 9")));
    }
    let template = reset(params, variant, seed)?;
    let n = template.n_regions();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(usize, u64)> = (0..runs).map(|_| (rng.gen_range(0..n), rng.gen())).collect();

    let mut conditions: Vec<PariahCondition> = tariff_levels.iter().map(|&l| PariahCondition::Pariah(l)).collect();
    conditions.extend([PariahCondition::Control, PariahCondition::FreeTrade]);

    let tasks: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..runs).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<(f64, f64, f64)> = with_workers(workers, || {
        tasks
            .par_iter()
            .map(|&(c, r)| {
                let (subject, run_seed) = draws[r];
                let world = reset(params, variant, run_seed)?;
                let mut tariff_sum = 0.0;
                let mut tariff_count = 0usize;
                let summary = rollout_from(world, &conditions[c].policy(subject), run_seed, |record| {
                    for (k, a) in record.actions.regions.iter().enumerate() {
                        if k != subject {
                            tariff_sum += rate(a.tariffs[subject]);
                            tariff_count += 1;
                        }
                    }
                })?;
                Ok((
                    summary.total_reward[subject],
                    tariff_sum / tariff_count.max(1) as f64,
                    summary.carbon_balance_error,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let rewards: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let subjects: Vec<usize> = tasks.iter().map(|&(_, r)| draws[r].0).collect();
    let z = zscore_by_group(&rewards, &subjects)?;

    let results = conditions
        .iter()
        .enumerate()
        .map(|(c, &condition)| {
            let samples: Vec<PariahSample> = (0..runs)
                .map(|r| {
                    let k = c * runs + r;
                    PariahSample {
                        run: r,
                        subject: subjects[k],
                        reward: rewards[k],
                        z: z[k],
                        tariff_toward_subject: outcomes[k].1,
                    }
                })
                .collect();
            let zs: Vec<f64> = samples.iter().map(|s| s.z).collect();
            let (mean_z, std_z) = mean_std(&zs);
            let tariffs: Vec<f64> = samples.iter().map(|s| s.tariff_toward_subject).collect();
            PariahConditionResult {
                condition,
                mean_z,
                std_z,
                realized_mean_tariff: mean_std(&tariffs).0,
                samples,
            }
        })
        .collect();

    Ok(PariahResult {
        seed,
        conditions: results,
        max_carbon_balance_error: outcomes.iter().map(|o| o.2).fold(0.0, f64::max),
    })
}

// ---------------------------------------------------------------------------
// Trade and tariff effects

fn run_from(template: &World, policy: &Policy, seed: u64) -> Result<EpisodeSummary> {
    rollout_from(template.clone(), policy, seed, |_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeEffect {
    pub seed: u64,
    pub tariff_level: u8,
    pub max_trade_reward: Vec<f64>,
    pub no_trade_reward: Vec<f64>,
    /// `no_trade_reward / max_trade_reward` per region.
    pub ratio: Vec<f64>,
}

/// Compares full trade (import and export levels 9) with none (levels 0)
/// at mitigation 0.9 and savings 0.3.
pub fn trade_effect_experiment(params: &SimParams, variant: &VariantConfig, seed: u64) -> Result<TradeEffect> {
    trade_effect_from(&reset(params, variant, seed)?, 0, seed)
}

/// [`trade_effect_experiment`] from a prepared initial world, with every
/// region applying `tariff_level` to every partner.
pub fn trade_effect_from(template: &World, tariff_level: u8, seed: u64) -> Result<TradeEffect> {
    let levels = |trade: u8| FixedLevels {
        max_export: trade,
        desired_import: trade,
        tariff: tariff_level,
        ..FixedLevels::IDEAL_TRADE
    };
    levels(0).validate()?;
    let max_trade = run_from(template, &Policy::FixedLevels(levels(MAX_LEVEL)), seed)?;
    let no_trade = run_from(template, &Policy::FixedLevels(levels(0)), seed)?;
    Ok(TradeEffect {
        seed,
        tariff_level,
        ratio: no_trade
            .total_reward
            .iter()
            .zip(&max_trade.total_reward)
            .map(|(a, b)| a / b)
            .collect(),
        max_trade_reward: max_trade.total_reward,
        no_trade_reward: no_trade.total_reward,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffEffect {
    pub seed: u64,
    /// Rewards under ideal trade with no tariffs.
    pub baseline_reward: Vec<f64>,
    /// Rewards when every region tariffs every partner at level 9.
    pub all_tariffed_reward: Vec<f64>,
    /// `all_tariffed_reward - baseline_reward`.
    pub total_change: Vec<f64>,
    /// Change in region i's reward when i alone tariffs all partners at 9.
    pub own_tariff_change: Vec<f64>,
    /// Change in region i's reward when all partners tariff i at 9 and i does not.
    pub received_tariff_change: Vec<f64>,
    /// Episode totals of scaled exports and imports in the baseline run.
    pub baseline_exports: Vec<f64>,
    pub baseline_imports: Vec<f64>,
}

/// Max-tariff against zero-tariff under ideal trade, split into the effect of
/// a region's own tariffs and of the tariffs it receives.
pub fn tariff_effect_experiment(params: &SimParams, variant: &VariantConfig, seed: u64) -> Result<TariffEffect> {
    let template = reset(params, variant, seed)?;
    let n = template.n_regions();
    let free = FixedLevels::IDEAL_TRADE;
    let tariffed = FixedLevels {
        tariff: MAX_LEVEL,
        ..free
    };

    let mut baseline_exports = vec![0.0; n];
    let mut baseline_imports = vec![0.0; n];
    let baseline = rollout_from(template.clone(), &Policy::FixedLevels(free), seed, |record| {
        for i in 0..n {
            baseline_exports[i] += record.exports_scaled[i];
            baseline_imports[i] += record.imports_scaled[i];
        }
    })?;
    let all = run_from(&template, &Policy::FixedLevels(tariffed), seed)?;

    let changes: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let alone = Policy::PerRegion(
                (0..n)
                    .map(|k| Policy::FixedLevels(if k == i { tariffed } else { free }))
                    .collect(),
            );
            let targeted = Policy::PariahOverride {
                base: Box::new(Policy::FixedLevels(free)),
                target: i,
                tariff_level: MAX_LEVEL,
            };
            let own = run_from(&template, &alone, seed)?.total_reward[i] - baseline.total_reward[i];
            let received = run_from(&template, &targeted, seed)?.total_reward[i] - baseline.total_reward[i];
            Ok((own, received))
        })
        .collect::<Result<_>>()?;

    Ok(TariffEffect {
        seed,
        total_change: all
            .total_reward
            .iter()
            .zip(&baseline.total_reward)
            .map(|(a, b)| a - b)
            .collect(),
        own_tariff_change: changes.iter().map(|c| c.0).collect(),
        received_tariff_change: changes.iter().map(|c| c.1).collect(),
        baseline_reward: baseline.total_reward,
        all_tariffed_reward: all.total_reward,
        baseline_exports,
        baseline_imports,
    })
}

// ---------------------------------------------------------------------------
// Horizon

/// Horizon used to calibrate the quadratic damage coefficient.
pub const CALIBRATION_YEARS: u32 = 100;
/// Damage fraction targeted at the end of the calibration run.
pub const CALIBRATION_DAMAGE: f64 = 0.085;

/// Savings 0.3, no mitigation, no trade.
pub const NO_MITIGATION: FixedLevels = FixedLevels {
    savings: 3,
    mitigation: 0,
    max_export: 0,
    desired_import: 0,
    tariff: 0,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub damage_quadratic: f64,
    /// End-of-run temperature of the calibration run under the fitted coefficient.
    pub t_ref: f64,
    pub d_ref: f64,
    pub iterations: usize,
}

/// Fits π2 so that the no-mitigation run over [`CALIBRATION_YEARS`] ends at
/// [`CALIBRATION_DAMAGE`]. The end temperature depends weakly on π2 through
/// capital, so the fit is iterated to a fixed point.
pub fn calibrate_damage(params: &SimParams, variant: &VariantConfig, seed: u64) -> Result<Calibration> {
    let mut p = SimParams {
        horizon_years: CALIBRATION_YEARS,
        damage_linear: 0.0,
        ..params.clone()
    };
    let variant = VariantConfig {
        damage_kind: DamageKind::DiceQuadratic,
        ..*variant
    };
    let policy = Policy::FixedLevels(NO_MITIGATION);
    for iterations in 1..=200 {
        let t_ref = run_summary(&p, &variant, &policy, seed)?.delta_t_end;
        let next = calibrate_damage_coefficient(t_ref, CALIBRATION_DAMAGE)?;
        let converged = (next - p.damage_quadratic).abs() <= 1e-14 * next;
        p.damage_quadratic = next;
        if converged {
            return Ok(Calibration {
                damage_quadratic: next,
                t_ref,
                d_ref: CALIBRATION_DAMAGE,
                iterations,
            });
        }
    }
    Err(SimError::Domain("damage calibration did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon_years: u32,
    pub delta_t_end: f64,
    pub damage_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub seed: u64,
    /// Present when the quadratic damage form was calibrated.
    pub calibration: Option<Calibration>,
    pub rows: Vec<HorizonRow>,
}

/// End-of-run damages of the no-mitigation policy at each horizon. With the
/// quadratic damage form, π2 is first calibrated on the 100-year run.
pub fn horizon_experiment(
    params: &SimParams,
    variant: &VariantConfig,
    horizons: &[u32],
    seed: u64,
) -> Result<HorizonResult> {
    let mut p = params.clone();
    let calibration = match variant.damage_kind {
        DamageKind::DiceQuadratic => {
            let c = calibrate_damage(params, variant, seed)?;
            p.damage_linear = 0.0;
            p.damage_quadratic = c.damage_quadratic;
            Some(c)
        }
        DamageKind::Weitzman => None,
    };
    let rows = horizons
        .iter()
        .map(|&horizon_years| {
            let q = SimParams {
                horizon_years,
                ..p.clone()
            };
            q.validate()?;
            let s = run_summary(&q, variant, &Policy::FixedLevels(NO_MITIGATION), seed)?;
            Ok(HorizonRow {
                horizon_years,
                delta_t_end: s.delta_t_end,
                damage_end: s.damage_end,
            })
        })
        .collect::<Result<_>>()?;
    Ok(HorizonResult {
        seed,
        calibration,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Masking

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingResult {
    pub seed: u64,
    pub n_regions: usize,
    pub episodes: usize,
    /// Commitment counts per level over every region and negotiation round.
    pub histogram: [u64; N_LEVELS],
    pub mean_commitment: f64,
    pub p_max_commitment: f64,
    /// Exact values for all-accept rounds with uniform proposals.
    pub analytic_mean_commitment: f64,
    pub analytic_p_max_commitment: f64,
    /// Mean mitigation rate chosen by uniformly random policies, with masks
    /// enforced and without. Absent for a single region, where only the
    /// protocol is simulated.
    pub mean_mitigation_masked: Option<f64>,
    pub mean_mitigation_unmasked: Option<f64>,
}

/// Expected maximum of `n` independent uniform draws over the action levels.
pub fn analytic_mean_commitment(n: usize) -> f64 {
    (1..N_LEVELS)
        .map(|k| 1.0 - (k as f64 / N_LEVELS as f64).powi(n as i32))
        .sum()
}

/// Probability that the maximum of `n` uniform draws is the top level.
pub fn analytic_p_max_commitment(n: usize) -> f64 {
    1.0 - ((N_LEVELS - 1) as f64 / N_LEVELS as f64).powi(n as i32)
}

/// Commitment statistics under uniformly random proposals. With two or more
/// regions, full episodes are run with uniformly random policies; a single
/// region runs only the protocol, one round per step.
pub fn masking_demo(params: &SimParams, episodes: usize, seed: u64, workers: Option<usize>) -> Result<MaskingResult> {
    if episodes == 0 {
        return Err(SimError::config("episodes", "must be at least 1"));
    }
    let config = params.negotiation.unwrap_or_default();
    config.validate()?;
    let n = params.n_regions;
    let mut histogram = [0u64; N_LEVELS];
    let mut mean_mitigation_masked = None;
    let mut mean_mitigation_unmasked = None;

    if n == 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..episodes * params.n_steps().max(1) {
            for &c in &negotiate(1, &config, &mut rng)?.commitments {
                histogram[c as usize] += 1;
            }
        }
    } else {
        let variant = VariantConfig::default();
        let run = |enforce_masks: bool| -> Result<([u64; N_LEVELS], f64)> {
            let p = SimParams {
                negotiation: Some(NegotiationConfig {
                    enforce_masks,
                    ..config
                }),
                ..params.clone()
            };
            let per_episode: Vec<([u64; N_LEVELS], f64, usize)> = with_workers(workers, || {
                (0..episodes as u64)
                    .into_par_iter()
                    .map(|e| {
                        let episode_seed = seed.wrapping_add(e);
                        let mut hist = [0u64; N_LEVELS];
                        let mut mitigation = 0.0;
                        let mut count = 0usize;
                        let world = reset(&p, &variant, episode_seed)?;
                        rollout_from(world, &Policy::UniformRandom, episode_seed, |record| {
                            for &c in record.commitments.iter().flatten() {
                                hist[c as usize] += 1;
                            }
                            for a in &record.actions.regions {
                                mitigation += rate(a.mitigation);
                                count += 1;
                            }
                        })?;
                        Ok((hist, mitigation, count))
                    })
                    .collect::<Result<Vec<_>>>()
            })??;
            let mut hist = [0u64; N_LEVELS];
            let (mut total, mut count) = (0.0, 0usize);
            for (h, m, c) in per_episode {
                for (a, b) in hist.iter_mut().zip(h) {
                    *a += b;
                }
                total += m;
                count += c;
            }
            Ok((hist, total / count as f64))
        };
        let (hist, masked) = run(true)?;
        let (_, unmasked) = run(false)?;
        histogram = hist;
        mean_mitigation_masked = Some(masked);
        mean_mitigation_unmasked = Some(unmasked);
    }

    let total: u64 = histogram.iter().sum();
    let weighted: f64 = histogram.iter().enumerate().map(|(k, &c)| k as f64 * c as f64).sum();
    Ok(MaskingResult {
        seed,
        n_regions: n,
        episodes,
        histogram,
        mean_commitment: weighted / total as f64,
        p_max_commitment: histogram[N_LEVELS - 1] as f64 / total as f64,
        analytic_mean_commitment: analytic_mean_commitment(n),
        analytic_p_max_commitment: analytic_p_max_commitment(n),
        mean_mitigation_masked,
        mean_mitigation_unmasked,
    })
}
