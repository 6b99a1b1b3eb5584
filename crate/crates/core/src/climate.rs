//! Three-reservoir carbon cycle, radiative forcing and two-box temperature.
//!
//! Defaults follow the DICE-2016 calibration with one step per five years.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::ClimateState;

/// Per-step carbon transfer fractions. Column `j` distributes the carbon held
/// in reservoir `j`, so every column must sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CarbonTransferMatrix(pub [[f64; 3]; 3]);

impl CarbonTransferMatrix {
    pub const IDENTITY: CarbonTransferMatrix =
        CarbonTransferMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Builds the matrix from the atmosphere→upper-ocean and upper→lower-ocean
    /// fractions plus the equilibrium stocks of each reservoir.
    pub fn from_exchange(b12: f64, b23: f64, equilibrium: [f64; 3]) -> Self {
        let [m_at, m_up, m_lo] = equilibrium;
        let b21 = b12 * m_at / m_up;
        let b32 = b23 * m_up / m_lo;
        CarbonTransferMatrix([
            [1.0 - b12, b21, 0.0],
            [b12, 1.0 - b21 - b23, b32],
            [0.0, b23, 1.0 - b32],
        ])
    }

    pub fn dice2016() -> Self {
        Self::from_exchange(0.12, 0.007, [588.0, 360.0, 1720.0])
    }

    pub fn validate(&self) -> Result<()> {
        for (j, col) in (0..3).map(|j| (j, self.0.iter().map(move |row| row[j]))) {
            let col: Vec<f64> = col.collect();
            if col.iter().any(|v| !(*v >= 0.0)) {
                return Err(SimError::config("climate.transfer", "entries must be non-negative"));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(SimError::config(
                    "climate.transfer",
                    format!("column {j} sums to {sum}; carbon would not be conserved"),
                ));
            }
        }
        Ok(())
    }

    pub fn apply(&self, m: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.0) {
            *o = row[0] * m[0] + row[1] * m[1] + row[2] * m[2];
        }
        out
    }
}

impl Default for CarbonTransferMatrix {
    fn default() -> Self {
        Self::dice2016()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimateParams {
    pub transfer: CarbonTransferMatrix,
    /// η, forcing per doubling of atmospheric carbon (W/m²).
    pub forcing_per_doubling: f64,
    /// Reference (preindustrial) atmospheric stock in GtC.
    pub reference_stock: f64,
    /// λ_T, climate feedback (W/m² per °C).
    pub feedback: f64,
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    /// Exogenous forcing at the start of the run (W/m²).
    pub exogenous_forcing_start: f64,
    /// Exogenous forcing reached after the ramp (W/m²), held constant afterwards.
    pub exogenous_forcing_end: f64,
    pub exogenous_forcing_ramp_years: f64,
    pub initial_carbon: [f64; 3],
    pub initial_t_atmosphere: f64,
    pub initial_t_lower_ocean: f64,
    /// GtC per region emission unit (σ·Y_g).
    pub gtc_per_emission_unit: f64,
    /// Lowest global emission rate accepted by the carbon step (GtC/yr).
    pub min_emissions: f64,
}

impl Default for ClimateParams {
    fn default() -> Self {
        Self {
            transfer: CarbonTransferMatrix::dice2016(),
            forcing_per_doubling: 3.6813,
            reference_stock: 588.0,
            feedback: 1.1875,
            c1: 0.1005,
            c3: 0.088,
            c4: 0.025,
            exogenous_forcing_start: 0.5,
            exogenous_forcing_end: 1.0,
            exogenous_forcing_ramp_years: 100.0,
            initial_carbon: [850.0, 460.0, 1740.0],
            initial_t_atmosphere: 1.1,
            initial_t_lower_ocean: 0.3,
            gtc_per_emission_unit: 0.01,
            min_emissions: 0.0,
        }
    }
}

impl ClimateParams {
    pub fn validate(&self) -> Result<()> {
        self.transfer.validate()?;
        let positive = [
            ("climate.forcing_per_doubling", self.forcing_per_doubling),
            ("climate.reference_stock", self.reference_stock),
            ("climate.feedback", self.feedback),
            ("climate.c1", self.c1),
            ("climate.c4", self.c4),
            ("climate.gtc_per_emission_unit", self.gtc_per_emission_unit),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.c3 >= 0.0) {
            return Err(SimError::config("climate.c3", "must be non-negative"));
        }
        if !(self.exogenous_forcing_ramp_years > 0.0) {
            return Err(SimError::config(
                "climate.exogenous_forcing_ramp_years",
                "must be positive",
            ));
        }
        if self.initial_carbon.iter().any(|m| !(*m > 0.0)) {
            return Err(SimError::config("climate.initial_carbon", "stocks must be positive"));
        }
        if !self.initial_t_atmosphere.is_finite() || !self.initial_t_lower_ocean.is_finite() {
            return Err(SimError::config(
                "climate.initial_t_atmosphere",
                "temperatures must be finite",
            ));
        }
        if self.min_emissions > 0.0 {
            return Err(SimError::config("climate.min_emissions", "floor must not be positive"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> ClimateState {
        ClimateState {
            carbon: self.initial_carbon,
            t_atmosphere: self.initial_t_atmosphere,
            t_lower_ocean: self.initial_t_lower_ocean,
        }
    }

    /// Linear ramp from start to end over the ramp period, flat afterwards.
    pub fn exogenous_forcing(&self, years_elapsed: f64) -> f64 {
        let frac = (years_elapsed / self.exogenous_forcing_ramp_years).clamp(0.0, 1.0);
        self.exogenous_forcing_start + (self.exogenous_forcing_end - self.exogenous_forcing_start) * frac
    }
}

/// Advances the carbon stocks one step: `M' = Φ·M + (dt·E, 0, 0)`.
pub fn step_carbon(
    m: [f64; 3],
    e_global: f64,
    dt: f64,
    transfer: &CarbonTransferMatrix,
    min_emissions: f64,
) -> Result<[f64; 3]> {
    if m.iter().any(|v| !(*v > 0.0)) {
        return Err(SimError::Domain(format!("carbon stocks must be positive, got {m:?}")));
    }
    if !(e_global >= min_emissions) || !e_global.is_finite() {
        return Err(SimError::Domain(format!(
            "global emissions {e_global} below floor {min_emissions}"
        )));
    }
    let mut next = transfer.apply(m);
    next[0] += dt * e_global;
    Ok(next)
}

/// `F = η·log2(M_at / M_ref) + F_ex`.
pub fn radiative_forcing(m_at: f64, eta: f64, m_ref: f64, f_ex: f64) -> Result<f64> {
    if !(m_at > 0.0) || !(m_ref > 0.0) {
        return Err(SimError::Domain(format!(
            "forcing needs positive stocks, got M_at={m_at}, M_ref={m_ref}"
        )));
    }
    Ok(eta * (m_at / m_ref).log2() + f_ex)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureCoefficients {
    pub c1: f64,
    pub c3: f64,
    pub c4: f64,
    pub feedback: f64,
}

impl From<&ClimateParams> for TemperatureCoefficients {
    fn from(p: &ClimateParams) -> Self {
        Self {
            c1: p.c1,
            c3: p.c3,
            c4: p.c4,
            feedback: p.feedback,
        }
    }
}

/// Two-box temperature update; returns `(T_at', T_lo')`.
pub fn step_temperature(t_at: f64, t_lo: f64, forcing: f64, k: TemperatureCoefficients) -> (f64, f64) {
    let t_at_next = t_at + k.c1 * (forcing - k.feedback * t_at - k.c3 * (t_at - t_lo));
    let t_lo_next = t_lo + k.c4 * (t_at - t_lo);
    (t_at_next, t_lo_next)
}

/// Full climate step: carbon, then forcing at the new stock, then temperature.
/// `years_elapsed` is the time at the end of the step.
pub fn step_climate(
    state: &ClimateState,
    e_global: f64,
    dt: f64,
    years_elapsed: f64,
    params: &ClimateParams,
) -> Result<ClimateState> {
    let carbon = step_carbon(state.carbon, e_global, dt, &params.transfer, params.min_emissions)?;
    let forcing = radiative_forcing(
        carbon[0],
        params.forcing_per_doubling,
        params.reference_stock,
        params.exogenous_forcing(years_elapsed),
    )?;
    let (t_atmosphere, t_lower_ocean) =
        step_temperature(state.t_atmosphere, state.t_lower_ocean, forcing, params.into());
    Ok(ClimateState {
        carbon,
        t_atmosphere,
        t_lower_ocean,
    })
}
