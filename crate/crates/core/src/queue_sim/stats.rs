use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fraction of samples strictly above each grid point.
pub fn ccdf_sorted(sorted: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    grid.iter()
        .map(|&d| {
            if n == 0 {
                return 0.0;
            }
            let at_most = sorted.partition_point(|&x| x <= d);
            (n - at_most) as f64 / n as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub sample_count: usize,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p99: f64,
    pub delay_grid: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub unstable: bool,
}

impl DelayStats {
    pub fn from_delays(mut delays: Vec<f64>, grid: &[f64], unstable: bool) -> Self {
        delays.sort_by(f64::total_cmp);
        DelayStats {
            sample_count: delays.len(),
            p25: quantile_sorted(&delays, 0.25),
            p50: quantile_sorted(&delays, 0.5),
            p75: quantile_sorted(&delays, 0.75),
            p99: quantile_sorted(&delays, 0.99),
            delay_grid: grid.to_vec(),
            ccdf: ccdf_sorted(&delays, grid),
            unstable,
        }
    }

    /// Columns `d,ccdf`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["d", "ccdf"])?;
        for (d, c) in self.delay_grid.iter().zip(&self.ccdf) {
            out.write_record([d.to_string(), c.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBox {
    pub d: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
    /// Values beyond 1.5 interquartile ranges from the box.
    pub outliers: Vec<f64>,
}

impl GridBox {
    pub fn from_values(d: f64, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let q25 = quantile_sorted(&values, 0.25);
        let q75 = quantile_sorted(&values, 0.75);
        let iqr = q75 - q25;
        let outliers = values.iter().copied().filter(|&v| v < q25 - 1.5 * iqr || v > q75 + 1.5 * iqr).collect();
        GridBox {
            d,
            median: quantile_sorted(&values, 0.5),
            q25,
            q75,
            min: values.first().copied().unwrap_or(f64::NAN),
            max: values.last().copied().unwrap_or(f64::NAN),
            outliers,
        }
    }
}

/// Distribution of the per-replication CCDFs at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub boxes: Vec<GridBox>,
    /// Per-replication sample count.
    pub sample_count: usize,
    pub unstable_replications: usize,
    pub runs: Vec<DelayStats>,
}

impl BoxStats {
    pub fn from_runs(grid: &[f64], runs: Vec<DelayStats>) -> Self {
        let boxes = grid
            .iter()
            .enumerate()
            .map(|(i, &d)| GridBox::from_values(d, runs.iter().map(|r| r.ccdf[i]).collect()))
            .collect();
        BoxStats {
            boxes,
            sample_count: runs.first().map_or(0, |r| r.sample_count),
            unstable_replications: runs.iter().filter(|r| r.unstable).count(),
            runs,
        }
    }

    /// Columns `d,median,q25,q75,min,max,outliers,sample_count`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["d", "median", "q25", "q75", "min", "max", "outliers", "sample_count"])?;
        for b in &self.boxes {
            out.write_record([
                b.d.to_string(),
                b.median.to_string(),
                b.q25.to_string(),
                b.q75.to_string(),
                b.min.to_string(),
                b.max.to_string(),
                b.outliers.len().to_string(),
                self.sample_count.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&x, 0.5), 2.5);
        assert_eq!(quantile_sorted(&x, 0.25), 1.75);
        assert_eq!(quantile_sorted(&x, 1.0), 4.0);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
        assert!(quantile_sorted(&[], 0.5).is_nan());
    }

    #[test]
    fn ccdf_is_strict_exceedance() {
        let x = [0.5, 1.0, 1.0, 2.0];
        assert_eq!(ccdf_sorted(&x, &[0.0, 1.0, 1.5, 2.0]), vec![1.0, 0.25, 0.25, 0.0]);
    }

    #[test]
    fn box_outliers() {
        let b = GridBox::from_values(0.0, vec![1.0, 1.1, 1.2, 1.3, 9.0]);
        assert_eq!(b.outliers, vec![9.0]);
        assert!(b.q25 <= b.median && b.median <= b.q75);
    }

    #[test]
    fn single_run_box_is_degenerate() {
        let run = DelayStats::from_delays(vec![1.0, 2.0, 3.0], &[0.5, 2.5], false);
        let b = BoxStats::from_runs(&[0.5, 2.5], vec![run]);
        for g in &b.boxes {
            assert_eq!(g.q25, g.median);
            assert_eq!(g.q75, g.median);
        }
    }
}
