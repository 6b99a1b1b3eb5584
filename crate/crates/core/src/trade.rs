//! Bilateral trade: import demand, proportional export rationing, tariffs,
//! the domestic/foreign consumption split and trade balances.
//!
//! Every matrix is indexed `[importer][exporter]`. Two flows matter:
//! *scaled* imports are what the exporter actually ships after rationing,
//! *tariffed* imports are the part of that shipment the importer consumes
//! once its tariff has been taken out. Exporters pay for scaled imports out
//! of domestic consumption; importers consume tariffed imports. A tariff on
//! a region's goods therefore never reaches that region's consumption unless
//! the overproduction penalty is switched on.

use serde::{Deserialize, Serialize};

use crate::types::{rate, ActionSet, VariantConfig};

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeFlows {
    pub demand: Matrix,
    pub scaled: Matrix,
    pub tariffed: Matrix,
    /// Tariff revenue per importer.
    pub revenue: Vec<f64>,
    /// Scaled exports per exporter (column sums of `scaled`).
    pub exports_scaled: Vec<f64>,
    /// Scaled imports per importer (row sums of `scaled`).
    pub imports_scaled: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionBreakdown {
    pub domestic: f64,
    pub foreign: f64,
    pub aggregate: f64,
    /// Domestic consumption came out negative and was floored at zero.
    pub floored: bool,
}

/// Import demand matrix.
///
/// Importer `i` spends up to `budget[i]·Y_g[i]` on imports, allocated across
/// partners in proportion to their gross output and scaled by the desired
/// import rate toward each partner. With two regions this reduces to
/// `rate·ρ·Y_g[i]`.
pub fn build_demand(actions: &ActionSet, y_gross: &[f64], budget: &[f64]) -> Matrix {
    let n = y_gross.len();
    let world: f64 = y_gross.iter().sum();
    let mut dm = Matrix::zeros(n);
    for (i, region) in actions.regions.iter().enumerate() {
        let partners = world - y_gross[i];
        if !(partners > 0.0) || !(y_gross[i] > 0.0) {
            continue;
        }
        let spend = budget[i] * y_gross[i];
        for j in (0..n).filter(|&j| j != i) {
            let level = region.desired_imports[j];
            if level == 0 {
                continue;
            }
            dm.set(i, j, rate(level) * spend * (y_gross[j] / partners));
        }
    }
    dm
}

/// Scales each exporter's column down proportionally when total demand on it
/// exceeds its export capacity.
pub fn ration_exports(demand: &Matrix, capacity: &[f64]) -> Matrix {
    let n = demand.size();
    let mut scaled = demand.clone();
    for (j, &cap) in capacity.iter().enumerate().take(n) {
        let total = demand.col_sum(j);
        let factor = if total > 0.0 { (cap / total).min(1.0) } else { 0.0 };
        for i in 0..n {
            scaled.set(i, j, demand.get(i, j) * factor);
        }
    }
    scaled
}

/// Tariffed imports `Ms·(1−τ)` and importer revenue `Σ_j Ms·τ`.
pub fn apply_tariffs(scaled: &Matrix, actions: &ActionSet) -> (Matrix, Vec<f64>) {
    let n = scaled.size();
    let mut tariffed = Matrix::zeros(n);
    let mut revenue = vec![0.0; n];
    for (i, region) in actions.regions.iter().enumerate() {
        for j in (0..n).filter(|&j| j != i) {
            let ms = scaled.get(i, j);
            let tau = rate(region.tariffs[j]);
            tariffed.set(i, j, ms * (1.0 - tau));
            revenue[i] += ms * tau;
        }
    }
    (tariffed, revenue)
}

/// Per-region export capacity `rate(max_export)·Y_g`.
pub fn export_capacity(actions: &ActionSet, y_gross: &[f64]) -> Vec<f64> {
    actions
        .regions
        .iter()
        .zip(y_gross)
        .map(|(a, y)| rate(a.max_export) * y)
        .collect()
}

/// Demand, rationing and tariffs in one pass.
pub fn compute_flows(actions: &ActionSet, y_gross: &[f64], budget: &[f64]) -> TradeFlows {
    let n = y_gross.len();
    let demand = build_demand(actions, y_gross, budget);
    let scaled = ration_exports(&demand, &export_capacity(actions, y_gross));
    let (tariffed, revenue) = apply_tariffs(&scaled, actions);
    let exports_scaled = (0..n).map(|j| scaled.col_sum(j)).collect();
    let imports_scaled = (0..n).map(|i| scaled.row_sum(i)).collect();
    TradeFlows {
        demand,
        scaled,
        tariffed,
        revenue,
        exports_scaled,
        imports_scaled,
    }
}

/// Splits each region's consumption into domestic and foreign parts.
///
/// Domestic consumption is what remains of net output after investment and
/// scaled exports; foreign consumption is the sum of tariffed imports. With
/// the overproduction penalty the exporter also loses the output its partners
/// tariffed away.
pub fn consumption(
    y_net: &[f64],
    investment: &[f64],
    scaled: &Matrix,
    tariffed: &Matrix,
    foreign_weight: f64,
    variant: &VariantConfig,
) -> Vec<ConsumptionBreakdown> {
    let n = y_net.len();
    (0..n)
        .map(|i| {
            let mut domestic = y_net[i] - investment[i] - scaled.col_sum(i);
            if variant.overproduction_penalty {
                domestic -= (0..n).map(|k| scaled.get(k, i) - tariffed.get(k, i)).sum::<f64>();
            }
            let floored = domestic < 0.0;
            if floored {
                domestic = 0.0;
            }
            let foreign = tariffed.row_sum(i);
            ConsumptionBreakdown {
                domestic,
                foreign,
                aggregate: domestic + foreign_weight * foreign,
                floored,
            }
        })
        .collect()
}

/// `B' = B + dt·(exports − imports [+ revenue])`.
pub fn step_balance(
    balance: f64,
    exports_scaled: f64,
    imports_scaled: f64,
    revenue: f64,
    variant: &VariantConfig,
    dt: f64,
) -> f64 {
    let credited = if variant.use_tariff_revenue { revenue } else { 0.0 };
    balance + dt * (exports_scaled - imports_scaled + credited)
}

/// Multiplier on the next step's import budget, `clamp(1 + B/(10·Y_g), 0.5, 1.5)`.
pub fn import_budget_multiplier(balance: f64, y_gross: f64) -> f64 {
    if y_gross > 0.0 {
        (1.0 + balance / (10.0 * y_gross)).clamp(0.5, 1.5)
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RegionActions;
    use proptest::prelude::*;

    fn uniform(n: usize, import: u8, export: u8, tariff: u8) -> ActionSet {
        ActionSet::new(
            (0..n)
                .map(|i| RegionActions::uniform(n, i, 3, 9, export, import, tariff))
                .collect(),
        )
    }

    #[test]
    fn zero_import_levels_zero_demand() {
        let dm = build_demand(&uniform(3, 0, 9, 0), &[10.0, 20.0, 30.0], &[0.1; 3]);
        assert!(dm.is_zero());
    }

    #[test]
    fn demand_level_nine() {
        let dm = build_demand(&uniform(2, 9, 9, 0), &[100.0, 50.0], &[0.1; 2]);
        assert!((dm.get(0, 1) - 9.0).abs() < 1e-12);
        assert_eq!(dm.get(0, 0), 0.0);
    }

    #[test]
    fn zero_output_zero_row() {
        let dm = build_demand(&uniform(3, 9, 9, 0), &[0.0, 20.0, 30.0], &[0.1; 3]);
        assert!(dm.row(0).iter().all(|v| *v == 0.0));
        assert!(dm.get(1, 0) == 0.0 && dm.get(1, 2) > 0.0);
    }

    #[test]
    fn demand_respects_budget() {
        let y = [10.0, 20.0, 30.0, 40.0];
        let dm = build_demand(&uniform(4, 9, 9, 0), &y, &[0.1; 4]);
        for (i, yi) in y.iter().enumerate() {
            assert!((dm.row_sum(i) - 0.9 * 0.1 * yi).abs() < 1e-12);
        }
    }

    #[test]
    fn rationing_examples() {
        let dm = Matrix::from_rows(&[vec![0.0, 0.0, 40.0], vec![0.0, 0.0, 80.0], vec![0.0, 0.0, 0.0]]);
        let ms = ration_exports(&dm, &[100.0, 100.0, 60.0]);
        assert_eq!((ms.get(0, 2), ms.get(1, 2)), (20.0, 40.0));
        let ms = ration_exports(&dm, &[100.0, 100.0, 500.0]);
        assert_eq!(ms, dm);
        let ms = ration_exports(&dm, &[100.0, 100.0, 0.0]);
        assert_eq!(ms.col_sum(2), 0.0);
    }

    #[test]
    fn tariff_examples() {
        let ms = Matrix::from_rows(&[vec![0.0, 8.0], vec![8.0, 0.0]]);
        let (mt, r) = apply_tariffs(&ms, &uniform(2, 9, 9, 0));
        assert_eq!(mt, ms);
        assert_eq!(r, vec![0.0, 0.0]);
        let (mt, r) = apply_tariffs(&ms, &uniform(2, 9, 9, 5));
        assert_eq!(mt.get(0, 1), 4.0);
        assert_eq!(r[0], 4.0);
        let (mt, _) = apply_tariffs(&ms, &uniform(2, 9, 9, 9));
        assert!((mt.get(0, 1) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn consumption_example() {
        // region 0: Y_n=100, I=30, exports 10, tariffed imports 4
        let ms = Matrix::from_rows(&[vec![0.0, 8.0], vec![10.0, 0.0]]);
        let mt = Matrix::from_rows(&[vec![0.0, 4.0], vec![10.0, 0.0]]);
        let c = consumption(&[100.0, 50.0], &[30.0, 10.0], &ms, &mt, 0.7, &VariantConfig::default());
        assert_eq!(c[0].domestic, 60.0);
        assert_eq!(c[0].foreign, 4.0);
        assert!((c[0].aggregate - 62.8).abs() < 1e-12);
        assert!(!c[0].floored);
    }

    #[test]
    fn no_trade_consumption() {
        let zero = Matrix::zeros(2);
        let c = consumption(
            &[100.0, 50.0],
            &[30.0, 10.0],
            &zero,
            &zero,
            0.7,
            &VariantConfig::default(),
        );
        assert_eq!(c[0].aggregate, 70.0);
        assert_eq!(c[1].aggregate, 40.0);
    }

    #[test]
    fn negative_domestic_is_floored() {
        let ms = Matrix::from_rows(&[vec![0.0, 0.0], vec![90.0, 0.0]]);
        let c = consumption(&[100.0, 50.0], &[30.0, 10.0], &ms, &ms, 0.7, &VariantConfig::default());
        assert_eq!(c[0].domestic, 0.0);
        assert!(c[0].floored);
    }

    #[test]
    fn balance_examples() {
        let off = VariantConfig::default();
        let on = VariantConfig {
            use_tariff_revenue: true,
            ..Default::default()
        };
        assert_eq!(step_balance(3.0, 5.0, 5.0, 4.0, &off, 5.0), 3.0);
        assert_eq!(step_balance(3.0, 5.0, 5.0, 4.0, &on, 5.0), 23.0);
        let a = step_balance(1.5, 7.0, 2.0, 0.25, &off, 5.0);
        let b = step_balance(1.5, 7.0, 2.0, 0.25, &on, 5.0);
        assert_eq!(b - a, 5.0 * 0.25);
    }

    #[test]
    fn budget_multiplier_clamps() {
        assert_eq!(import_budget_multiplier(0.0, 10.0), 1.0);
        assert_eq!(import_budget_multiplier(1e9, 10.0), 1.5);
        assert_eq!(import_budget_multiplier(-1e9, 10.0), 0.5);
        assert_eq!(import_budget_multiplier(50.0, 100.0), 1.05);
    }

    fn flows_strategy() -> impl Strategy<Value = (ActionSet, Vec<f64>)> {
        (2usize..6).prop_flat_map(|n| {
            let region = (
                0u8..10,
                0u8..10,
                proptest::collection::vec(0u8..10, n),
                proptest::collection::vec(0u8..10, n),
            );
            (
                proptest::collection::vec(region, n),
                proptest::collection::vec(0.0f64..500.0, n),
            )
                .prop_map(move |(regions, y)| {
                    let regions = regions
                        .into_iter()
                        .enumerate()
                        .map(|(i, (s, x, mut imp, mut tar))| {
                            imp[i] = 0;
                            tar[i] = 0;
                            RegionActions {
                                savings: s,
                                mitigation: 0,
                                max_export: x,
                                desired_imports: imp,
                                tariffs: tar,
                            }
                        })
                        .collect();
                    (ActionSet::new(regions), y)
                })
        })
    }

    proptest! {
        #[test]
        fn flow_invariants((actions, y) in flows_strategy()) {
            let n = y.len();
            let flows = compute_flows(&actions, &y, &vec![0.1; n]);
            let cap = export_capacity(&actions, &y);
            for i in 0..n {
                prop_assert_eq!(flows.scaled.get(i, i), 0.0);
                let expected_revenue: f64 = (0..n).map(|j| flows.scaled.get(i, j) - flows.tariffed.get(i, j)).sum();
                prop_assert!((flows.revenue[i] - expected_revenue).abs() <= 1e-12 * (1.0 + expected_revenue));
                for j in 0..n {
                    let (dm, ms, mt) = (flows.demand.get(i, j), flows.scaled.get(i, j), flows.tariffed.get(i, j));
                    prop_assert!(0.0 <= mt && mt <= ms && ms <= dm);
                }
            }
            for (j, c) in cap.iter().enumerate() {
                prop_assert!(flows.exports_scaled[j] <= c * (1.0 + 1e-12));
            }
            let y_net: Vec<f64> = y.to_vec();
            let inv: Vec<f64> = y.iter().map(|v| 0.3 * v).collect();
            let c = consumption(&y_net, &inv, &flows.scaled, &flows.tariffed, 0.7, &VariantConfig::default());
            let foreign: f64 = c.iter().map(|b| b.foreign).sum();
            let exported: f64 = flows.exports_scaled.iter().sum();
            prop_assert!(foreign <= exported * (1.0 + 1e-12));
        }
    }
}
