use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::OrderTag;

/// Accuracy per cell: `accuracy[o][r]` for `orders[o]` and
/// `redundancy_levels[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGrid {
    pub orders: Vec<OrderTag>,
    pub redundancy_levels: Vec<usize>,
    pub accuracy: Vec<Vec<f64>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VovError {
    #[error("accuracy grid is empty")]
    Empty,
    #[error("accuracy grid shape does not match its axis labels")]
    Ragged,
    #[error("accuracy grid contains a non-finite value")]
    NonFinite,
}

/// Variance of accuracy along each axis. A statistic over an axis with a
/// single entry is `None`, as is a normalized value whose baseline is not
/// positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VovReport {
    pub vov_o: Option<f64>,
    pub vov_r: Option<f64>,
    pub normalized_o: Option<f64>,
    pub normalized_r: Option<f64>,
    pub baseline: Option<String>,
    pub accuracy_grid: AccuracyGrid,
}

impl VovReport {
    /// Divides each statistic by the baseline's.
    pub fn normalized_against(mut self, name: impl Into<String>, baseline: &VovReport) -> Self {
        let div = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        self.normalized_o = div(self.vov_o, baseline.vov_o);
        self.normalized_r = div(self.vov_r, baseline.vov_r);
        self.baseline = Some(name.into());
        self
    }
}

/// Two-pass variance of values shifted by the first one, so a constant
/// sequence gives exactly zero.
fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let first = xs.clone().next().unwrap_or(0.0);
    let shifted = xs.map(move |x| x - first);
    let n = shifted.clone().count() as f64;
    let mean = shifted.clone().sum::<f64>() / n;
    shifted.map(|d| (d - mean) * (d - mean)).sum::<f64>() / n
}

/// `vov_o`: population variance over orders, averaged over redundancy
/// levels. `vov_r`: population variance over redundancy levels, averaged
/// over orders.
pub fn vov(grid: &AccuracyGrid) -> Result<VovReport, VovError> {
    let rows = grid.orders.len();
    let cols = grid.redundancy_levels.len();
    if rows == 0 || cols == 0 {
        return Err(VovError::Empty);
    }
    if grid.accuracy.len() != rows || grid.accuracy.iter().any(|r| r.len() != cols) {
        return Err(VovError::Ragged);
    }
    if grid.accuracy.iter().flatten().any(|x| !x.is_finite()) {
        return Err(VovError::NonFinite);
    }
    let a = &grid.accuracy;
    let vov_o = (rows >= 2).then(|| {
        (0..cols)
            .map(|c| population_variance(a.iter().map(move |row| row[c])))
            .sum::<f64>()
            / cols as f64
    });
    let vov_r = (cols >= 2).then(|| {
        a.iter()
            .map(|row| population_variance(row.iter().copied()))
            .sum::<f64>()
            / rows as f64
    });
    Ok(VovReport {
        vov_o,
        vov_r,
        normalized_o: None,
        normalized_r: None,
        baseline: None,
        accuracy_grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(acc: Vec<Vec<f64>>) -> AccuracyGrid {
        AccuracyGrid {
            orders: OrderTag::ALL[..acc.len()].to_vec(),
            redundancy_levels: (0..acc[0].len()).collect(),
            accuracy: acc,
        }
    }

    #[test]
    fn constant_grid_is_zero() {
        let r = vov(&grid(vec![vec![0.7; 4]; 3])).unwrap();
        assert_eq!((r.vov_o, r.vov_r), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn single_column() {
        let r = vov(&grid(vec![vec![1.0], vec![0.5], vec![0.0]])).unwrap();
        assert!((r.vov_o.unwrap() - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.vov_r, None);
    }

    #[test]
    fn two_by_two() {
        // columns: var{1,0}=0.25, var{1,1}=0; rows: var{1,1}=0, var{0,1}=0.25
        let r = vov(&grid(vec![vec![1.0, 1.0], vec![0.0, 1.0]])).unwrap();
        assert_eq!(r.vov_o, Some(0.125));
        assert_eq!(r.vov_r, Some(0.125));
    }

    #[test]
    fn self_normalization() {
        let r = vov(&grid(vec![vec![0.9, 0.4], vec![0.3, 0.8]])).unwrap();
        let n = r.clone().normalized_against("self", &r);
        assert_eq!((n.normalized_o, n.normalized_r), (Some(1.0), Some(1.0)));
        let zero = vov(&grid(vec![vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        assert_eq!(r.normalized_against("flat", &zero).normalized_o, None);
    }

    #[test]
    fn malformed_grids() {
        let mut g = grid(vec![vec![0.1, 0.2], vec![0.3]]);
        assert_eq!(vov(&g), Err(VovError::Ragged));
        g.accuracy = vec![vec![f64::NAN, 0.0], vec![0.0, 0.0]];
        assert_eq!(vov(&g), Err(VovError::NonFinite));
    }
}
