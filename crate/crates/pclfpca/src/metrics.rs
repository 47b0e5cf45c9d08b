//! Evaluation metrics: per-curve IMSE, correlation reconstruction error,
//! adjusted Rand index, the clustering improvement index, and improvement
//! summaries against a baseline.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-curve mean squared error over the time grid:
/// `(1/T) sum_t (estimate_it - truth_it)^2`. Averaging over replicate
/// datasets is the harness's job.
pub fn imse(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<Vec<f64>> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {:?}, truth is {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let t_len = estimate.ncols() as f64;
    Ok((0..estimate.nrows())
        .map(|i| {
            (0..estimate.ncols())
                .map(|t| (estimate[(i, t)] - truth[(i, t)]).powi(2))
                .sum::<f64>()
                / t_len
        })
        .collect())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

fn pairwise_correlations(curves: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = curves.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| curves.row(i).iter().copied().collect()).collect();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for i2 in (i + 1)..n {
            let rho = pearson(&rows[i], &rows[i2]).ok_or_else(|| {
                Error::Numerical(format!(
                    "undefined correlation: curve {} or {} has zero variance",
                    i, i2
                ))
            })?;
            out.push(rho);
        }
    }
    Ok(out)
}

/// Euclidean norm of the vector of differences between all pairwise Pearson
/// correlations (over time) of estimated and true curves.
pub fn correlation_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension("shape mismatch".into()));
    }
    let est = pairwise_correlations(estimate)?;
    let tru = pairwise_correlations(truth)?;
    Ok(est
        .iter()
        .zip(&tru)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Root-mean variant of [`correlation_error`] (L2 norm divided by the
/// square root of the number of pairs), for scale-free reporting.
pub fn correlation_error_rms(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    let n = estimate.nrows();
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(correlation_error(estimate, truth)? / pairs.sqrt())
}

/// Hubert-Arabie adjusted Rand index from the pair-count contingency table.
pub fn ari(partition_a: &[usize], partition_b: &[usize]) -> Result<f64> {
    if partition_a.len() != partition_b.len() {
        return Err(Error::Dimension(format!(
            "partitions have lengths {} and {}",
            partition_a.len(),
            partition_b.len()
        )));
    }
    let n = partition_a.len();
    let max_a = partition_a.iter().max().map_or(0, |&m| m + 1);
    let max_b = partition_b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0u64; max_b]; max_a];
    for (&a, &b) in partition_a.iter().zip(partition_b) {
        table[a][b] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_cols: f64 = (0..max_b)
        .map(|b| choose2(table.iter().map(|row| row[b]).sum()))
        .sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index - expected).abs() < 1e-15 {
        // Degenerate: both partitions trivial; identical by construction.
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

/// Clustering improvement index: relative Frobenius-distance reduction of
/// the model PPM to the truth adjacency versus the standard-model PPM.
pub fn cii(ppm_new: &DMatrix<f64>, ppm_std: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    let n = ppm_new.nrows();
    for (name, m) in [("ppm_new", ppm_new), ("ppm_std", ppm_std), ("truth", truth)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension(format!("{name} is not {n}x{n}")));
        }
        for i in 0..n {
            for j in 0..n {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-9 {
                    return Err(Error::Dimension(format!("{name} is not symmetric")));
                }
            }
        }
    }
    let frob = |a: &DMatrix<f64>, b: &DMatrix<f64>| -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    };
    let d_std = frob(ppm_std, truth);
    if d_std == 0.0 {
        return Err(Error::Numerical(
            "CII undefined: standard-model PPM coincides with the truth".into(),
        ));
    }
    Ok((d_std - frob(ppm_new, truth)) / d_std)
}

/// Adjacency matrix of a partition (unit diagonal).
pub fn partition_adjacency(partition: &[usize]) -> DMatrix<f64> {
    let n = partition.len();
    DMatrix::from_fn(n, n, |i, j| if partition[i] == partition[j] { 1.0 } else { 0.0 })
}

/// Percentage improvement of a metric over a baseline, per curve, with the
/// summary statistics the simulation study reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub per_curve_percent: Vec<f64>,
    pub median: f64,
    /// (first quartile, third quartile).
    pub iqr: (f64, f64),
    pub fraction_improved: f64,
}

pub fn improvement_report(metric_new: &[f64], metric_baseline: &[f64]) -> Result<ImprovementReport> {
    if metric_new.len() != metric_baseline.len() {
        return Err(Error::Dimension("metric vectors differ in length".into()));
    }
    if let Some(idx) = metric_baseline.iter().position(|&b| b <= 0.0) {
        return Err(Error::Numerical(format!(
            "baseline metric for curve {idx} is not positive"
        )));
    }
    let per_curve: Vec<f64> = metric_new
        .iter()
        .zip(metric_baseline)
        .map(|(new, base)| 100.0 * (base - new) / base)
        .collect();
    let mut sorted = per_curve.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| crate::reconstruction::quantile_sorted(&sorted, p);
    let fraction_improved =
        per_curve.iter().filter(|&&x| x > 0.0).count() as f64 / per_curve.len() as f64;
    Ok(ImprovementReport {
        median: q(0.5),
        iqr: (q(0.25), q(0.75)),
        fraction_improved,
        per_curve_percent: per_curve,
    })
}

/// Flat evaluation report for one run, serializable to JSON and CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub imse: Vec<f64>,
    pub correlation_l2: f64,
    pub correlation_rms: f64,
    /// Per-dimension ARI against the true partitions, where available.
    pub ari: Vec<Option<f64>>,
    /// Per-dimension CII, where a baseline PPM and truth are available.
    pub cii: Vec<Option<f64>>,
    pub improvement_vs_baseline: Option<ImprovementReport>,
    pub baseline_name: Option<String>,
    /// How curve correlations were estimated (report metadata).
    pub correlation_estimator: String,
}

impl MetricReport {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(self)?)?;
        let mut csv = String::from("curve,imse,improvement_percent\n");
        for (i, v) in self.imse.iter().enumerate() {
            let imp = self
                .improvement_vs_baseline
                .as_ref()
                .map(|r| format!("{}", r.per_curve_percent[i]))
                .unwrap_or_default();
            csv.push_str(&format!("{i},{v},{imp}\n"));
        }
        fs::write(dir.join("metrics_per_curve.csv"), csv)?;
        Ok(())
    }
}
