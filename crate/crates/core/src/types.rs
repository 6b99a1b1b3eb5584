//! Shared domain types: simulation parameters, per-region and climate state,
//! the discrete action encoding and procedural region generation.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::climate::ClimateParams;
use crate::error::{Result, SimError};
use crate::negotiation::NegotiationConfig;

/// Number of discrete levels per action dimension.
pub const N_LEVELS: usize = 10;

/// Highest admissible action level.
pub const MAX_LEVEL: u8 = (N_LEVELS - 1) as u8;

/// Maps a discrete action level onto its rate: `level / 10`.
///
/// Level 9 is the maximum (rate 0.9); there is no level that maps to 1.0.
pub fn level_to_rate(level: u8) -> Result<f64> {
    if level > MAX_LEVEL {
        return Err(SimError::InvalidAction { level });
    }
    Ok(f64::from(level) / N_LEVELS as f64)
}

pub(crate) fn rate(level: u8) -> f64 {
    debug_assert!(level <= MAX_LEVEL);
    f64::from(level) / N_LEVELS as f64
}

/// Global simulation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub n_regions: usize,
    pub dt_years: u32,
    pub horizon_years: u32,
    /// Seed for procedural region generation.
    pub region_seed: u64,
    /// Capital share γ in the Cobb-Douglas production function.
    pub output_elasticity: f64,
    /// Capital depreciation δ per year.
    pub depreciation: f64,
    /// Weight λ_for of foreign consumption in aggregate consumption.
    pub foreign_weight: f64,
    /// Import budget ρ as a fraction of gross output.
    pub import_budget: f64,
    /// Abatement cost exponent θ2.
    pub abatement_exponent: f64,
    /// Weight θ3 of the squared mitigation increment (transitional abatement).
    pub transition_cost: f64,
    /// Linear damage coefficient π1.
    pub damage_linear: f64,
    /// Quadratic damage coefficient π2.
    pub damage_quadratic: f64,
    /// Isoelastic utility elasticity applied to aggregate consumption; 0 means reward = consumption.
    pub consumption_elasticity: f64,
    pub climate: ClimateParams,
    /// Proposal/evaluation protocol run before every action step; `None` disables it.
    pub negotiation: Option<NegotiationConfig>,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n_regions: 27,
            dt_years: 5,
            horizon_years: 100,
            region_seed: 0,
            output_elasticity: 0.3,
            depreciation: 0.1,
            foreign_weight: 0.7,
            import_budget: 0.1,
            abatement_exponent: 2.6,
            transition_cost: 1.0,
            damage_linear: 0.0,
            damage_quadratic: 0.00236,
            consumption_elasticity: 0.0,
            climate: ClimateParams::default(),
            negotiation: None,
        }
    }
}

impl SimParams {
    pub fn n_steps(&self) -> usize {
        (self.horizon_years / self.dt_years.max(1)) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |key: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(SimError::config(key, format!("must lie in (0, 1), got {v}")))
            }
        };
        if self.n_regions < 2 {
            return Err(SimError::config(
                "n_regions",
                format!("must be at least 2, got {}", self.n_regions),
            ));
        }
        if self.dt_years < 1 {
            return Err(SimError::config("dt_years", "must be at least 1"));
        }
        if self.horizon_years == 0 || !self.horizon_years.is_multiple_of(self.dt_years) {
            return Err(SimError::config(
                "horizon_years",
                format!(
                    "must be a positive multiple of dt_years ({}), got {}",
                    self.dt_years, self.horizon_years
                ),
            ));
        }
        open_unit("output_elasticity", self.output_elasticity)?;
        open_unit("depreciation", self.depreciation)?;
        open_unit("import_budget", self.import_budget)?;
        if !(self.foreign_weight > 0.0 && self.foreign_weight <= 1.0) {
            return Err(SimError::config(
                "foreign_weight",
                format!("must lie in (0, 1], got {}", self.foreign_weight),
            ));
        }
        if !(self.abatement_exponent > 1.0) {
            return Err(SimError::config("abatement_exponent", "must exceed 1"));
        }
        if !(self.transition_cost >= 0.0) {
            return Err(SimError::config("transition_cost", "must be non-negative"));
        }
        if !(self.damage_linear >= 0.0) || !(self.damage_quadratic >= 0.0) {
            return Err(SimError::config(
                "damage_quadratic",
                "damage coefficients must be non-negative",
            ));
        }
        if !(self.consumption_elasticity >= 0.0) {
            return Err(SimError::config("consumption_elasticity", "must be non-negative"));
        }
        self.climate.validate()?;
        if let Some(neg) = &self.negotiation {
            neg.validate()?;
        }
        Ok(())
    }
}

/// Per-region economic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionState {
    pub capital: f64,
    pub labor: f64,
    pub productivity: f64,
    /// Emission intensity σ, emission units per unit of gross output.
    pub emission_intensity: f64,
    /// Mitigation rate chosen in the previous step.
    pub mitigation_prev: f64,
    /// Trade balance; signed.
    pub balance: f64,
}

impl RegionState {
    pub fn check_invariants(&self) -> Result<()> {
        if !(self.capital >= 0.0) {
            return Err(SimError::Domain(format!("capital must be >= 0, got {}", self.capital)));
        }
        if !(self.labor > 0.0) {
            return Err(SimError::Domain(format!("labor must be > 0, got {}", self.labor)));
        }
        if !(self.productivity > 0.0) {
            return Err(SimError::Domain(format!(
                "productivity must be > 0, got {}",
                self.productivity
            )));
        }
        if !(self.emission_intensity >= 0.0) {
            return Err(SimError::Domain("emission intensity must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.mitigation_prev) {
            return Err(SimError::Domain("previous mitigation must lie in [0, 1]".into()));
        }
        if !self.balance.is_finite() {
            return Err(SimError::Domain("balance must be finite".into()));
        }
        Ok(())
    }
}

/// Exogenous per-region rates, all per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionProfile {
    pub productivity_growth: f64,
    pub labor_growth: f64,
    pub intensity_decline: f64,
    /// Abatement cost scale θ1.
    pub abatement_scale: f64,
}

/// Carbon reservoirs (atmosphere, upper ocean, lower ocean) in GtC and the
/// two-box temperature anomalies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClimateState {
    pub carbon: [f64; 3],
    pub t_atmosphere: f64,
    pub t_lower_ocean: f64,
}

impl ClimateState {
    pub fn check_invariants(&self) -> Result<()> {
        if self.carbon.iter().any(|m| !(*m > 0.0)) {
            return Err(SimError::Domain(format!(
                "carbon stocks must be positive, got {:?}",
                self.carbon
            )));
        }
        if !self.t_atmosphere.is_finite() || !self.t_lower_ocean.is_finite() {
            return Err(SimError::Domain("temperature anomalies must be finite".into()));
        }
        Ok(())
    }

    pub fn total_carbon(&self) -> f64 {
        self.carbon.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionDimension {
    Savings,
    Mitigation,
    MaxExport,
    DesiredImport,
    Tariff,
}

impl ActionDimension {
    pub const ALL: [ActionDimension; 5] = [
        ActionDimension::Savings,
        ActionDimension::Mitigation,
        ActionDimension::MaxExport,
        ActionDimension::DesiredImport,
        ActionDimension::Tariff,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ActionDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ActionDimension::Savings => "savings",
            ActionDimension::Mitigation => "mitigation",
            ActionDimension::MaxExport => "max_export",
            ActionDimension::DesiredImport => "desired_import",
            ActionDimension::Tariff => "tariff",
        };
        f.write_str(name)
    }
}

/// One region's discrete choices for a step.
///
/// `desired_imports[j]` and `tariffs[j]` address partner `j`; the entry at the
/// region's own index is ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionActions {
    pub savings: u8,
    pub mitigation: u8,
    pub max_export: u8,
    pub desired_imports: Vec<u8>,
    pub tariffs: Vec<u8>,
}

impl RegionActions {
    /// Same import and tariff level toward every partner; own entries zero.
    pub fn uniform(
        n: usize,
        region: usize,
        savings: u8,
        mitigation: u8,
        max_export: u8,
        desired_import: u8,
        tariff: u8,
    ) -> Self {
        let row = |level: u8| (0..n).map(|j| if j == region { 0 } else { level }).collect();
        Self {
            savings,
            mitigation,
            max_export,
            desired_imports: row(desired_import),
            tariffs: row(tariff),
        }
    }

    fn validate(&self, region: usize, n: usize) -> Result<()> {
        let malformed = |reason: String| SimError::MalformedAction { region, reason };
        if self.desired_imports.len() != n || self.tariffs.len() != n {
            return Err(malformed(format!(
                "import/tariff vectors must have length {n}, got {}/{}",
                self.desired_imports.len(),
                self.tariffs.len()
            )));
        }
        let scalars = [self.savings, self.mitigation, self.max_export];
        for &level in scalars.iter().chain(&self.desired_imports).chain(&self.tariffs) {
            if level > MAX_LEVEL {
                return Err(malformed(format!("level {level} outside 0..=9")));
            }
        }
        Ok(())
    }
}

/// Joint actions of all regions for one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub regions: Vec<RegionActions>,
}

impl ActionSet {
    pub fn new(regions: Vec<RegionActions>) -> Self {
        Self { regions }
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.regions.len() != n {
            return Err(SimError::Protocol(format!(
                "expected actions for {n} regions, got {}",
                self.regions.len()
            )));
        }
        self.regions.iter().enumerate().try_for_each(|(i, a)| a.validate(i, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbatementKind {
    /// Cost depends on the current mitigation rate only.
    #[default]
    Persistent,
    /// Cost is driven by the increase over the previous mitigation rate.
    Transitional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageKind {
    #[default]
    DiceQuadratic,
    Weitzman,
}

/// Large fixed penalty applied to every region's reward once warming passes a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisasterPenalty {
    pub threshold_degc: f64,
    pub penalty_magnitude: f64,
}

/// Switchable model fixes and functional-form choices.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    /// Credit tariff revenue to the importer's balance.
    pub use_tariff_revenue: bool,
    /// Charge the exporter for output its partners tariffed away.
    pub overproduction_penalty: bool,
    pub abatement_kind: AbatementKind,
    pub damage_kind: DamageKind,
    pub disaster: Option<DisasterPenalty>,
}

impl VariantConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.disaster {
            if !(d.threshold_degc > 0.0) {
                return Err(SimError::config("disaster.threshold_degc", "must be positive"));
            }
            if !(d.penalty_magnitude >= 0.0) {
                return Err(SimError::config("disaster.penalty_magnitude", "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Ranges sampled by [`generate_regions`]. Growth and decline rates are per year.
pub mod ranges {
    pub const PRODUCTIVITY: (f64, f64) = (1.0, 6.0);
    pub const CAPITAL: (f64, f64) = (5.0, 200.0);
    pub const LABOR: (f64, f64) = (1.0, 50.0);
    pub const EMISSION_INTENSITY: (f64, f64) = (0.1, 0.6);
    pub const PRODUCTIVITY_GROWTH: (f64, f64) = (0.005, 0.015);
    pub const LABOR_GROWTH: (f64, f64) = (0.0, 0.01);
    pub const INTENSITY_DECLINE: (f64, f64) = (0.02, 0.03);
    pub const ABATEMENT_SCALE: (f64, f64) = (0.05, 0.15);
}

/// Procedurally generates `n` heterogeneous regions from `seed`.
pub fn generate_regions(n: usize, seed: u64) -> Result<(Vec<RegionState>, Vec<RegionProfile>)> {
    if n < 2 {
        return Err(SimError::config("n_regions", format!("must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| rng.gen_range(lo..=hi);
    let mut states = Vec::with_capacity(n);
    let mut profiles = Vec::with_capacity(n);
    for _ in 0..n {
        states.push(RegionState {
            productivity: draw(ranges::PRODUCTIVITY),
            capital: draw(ranges::CAPITAL),
            labor: draw(ranges::LABOR),
            emission_intensity: draw(ranges::EMISSION_INTENSITY),
            mitigation_prev: 0.0,
            balance: 0.0,
        });
        profiles.push(RegionProfile {
            productivity_growth: draw(ranges::PRODUCTIVITY_GROWTH),
            labor_growth: draw(ranges::LABOR_GROWTH),
            intensity_decline: draw(ranges::INTENSITY_DECLINE),
            abatement_scale: draw(ranges::ABATEMENT_SCALE),
        });
    }
    Ok((states, profiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn level_rates() {
        assert_eq!(level_to_rate(9).unwrap(), 0.9);
        assert_eq!(level_to_rate(0).unwrap(), 0.0);
        assert_eq!(level_to_rate(3).unwrap(), 0.3);
        assert_eq!(level_to_rate(10), Err(SimError::InvalidAction { level: 10 }));
    }

    #[test]
    fn level_rates_injective_and_monotone() {
        let rates: Vec<f64> = (0..=MAX_LEVEL).map(|l| level_to_rate(l).unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn regions_deterministic() {
        let a = generate_regions(27, 11).unwrap();
        let b = generate_regions(27, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_regions(27, 12).unwrap();
        assert_ne!(a.0, c.0);
        assert!(a.0.iter().zip(&c.0).all(|(x, y)| x.capital != y.capital));
    }

    #[test]
    fn two_regions() {
        let (states, profiles) = generate_regions(2, 5).unwrap();
        assert_eq!(states.len(), 2);
        assert_eq!(profiles.len(), 2);
        states.iter().for_each(|s| s.check_invariants().unwrap());
    }

    #[test]
    fn too_few_regions() {
        assert!(matches!(generate_regions(1, 0), Err(SimError::Config { .. })));
    }

    #[test]
    fn default_params_valid() {
        let p = SimParams::default();
        p.validate().unwrap();
        assert_eq!(p.n_steps(), 20);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = SimParams {
            horizon_years: 102,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(SimError::Config { key, .. }) if key == "horizon_years"));
        p.horizon_years = 100;
        p.foreign_weight = 1.2;
        assert!(matches!(p.validate(), Err(SimError::Config { key, .. }) if key == "foreign_weight"));
    }

    #[test]
    fn uniform_actions_zero_self() {
        let a = RegionActions::uniform(4, 2, 3, 9, 9, 9, 5);
        assert_eq!(a.desired_imports, vec![9, 9, 0, 9]);
        assert_eq!(a.tariffs, vec![5, 5, 0, 5]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn generated_regions_satisfy_invariants(seed in any::<u64>()) {
            let (states, profiles) = generate_regions(27, seed).unwrap();
            for (s, p) in states.iter().zip(&profiles) {
                prop_assert!(s.check_invariants().is_ok());
                prop_assert!((ranges::PRODUCTIVITY.0..=ranges::PRODUCTIVITY.1).contains(&s.productivity));
                prop_assert!((ranges::CAPITAL.0..=ranges::CAPITAL.1).contains(&s.capital));
                prop_assert!((ranges::LABOR.0..=ranges::LABOR.1).contains(&s.labor));
                prop_assert!((ranges::EMISSION_INTENSITY.0..=ranges::EMISSION_INTENSITY.1).contains(&s.emission_intensity));
                prop_assert!(p.abatement_scale > 0.0);
            }
        }
    }
}
