//! Small batch statistics used by the experiments.

use std::collections::HashMap;

use crate::error::{Result, SimError};

/// Pearson correlation. `None` when either series has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    if xs.len() != ys.len() {
        return Err(SimError::Stats(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(SimError::Stats(format!("need at least 2 samples, got {}", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Mean and population standard deviation. Empty input gives `(0, 0)`.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardizes `values` within each group using the population standard
/// deviation. Members of groups with fewer than two values or no spread map to 0.
pub fn zscore_by_group(values: &[f64], groups: &[usize]) -> Result<Vec<f64>> {
    if values.len() != groups.len() {
        return Err(SimError::Stats(format!(
            "length mismatch: {} values vs {} group ids",
            values.len(),
            groups.len()
        )));
    }
    let mut members: HashMap<usize, Vec<f64>> = HashMap::new();
    for (&v, &g) in values.iter().zip(groups) {
        members.entry(g).or_default().push(v);
    }
    let moments: HashMap<usize, (f64, f64)> = members
        .into_iter()
        .map(|(g, vs)| {
            let (mean, std) = mean_std(&vs);
            (g, if vs.len() < 2 { (mean, 0.0) } else { (mean, std) })
        })
        .collect();
    Ok(values
        .iter()
        .zip(groups)
        .map(|(v, g)| {
            let (mean, std) = moments[g];
            if std > 0.0 {
                (v - mean) / std
            } else {
                0.0
            }
        })
        .collect())
}

/// Min-max normalization onto [0, 1]; a constant series maps to zeros.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}
