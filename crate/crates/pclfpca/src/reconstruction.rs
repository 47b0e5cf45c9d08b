//! Posterior curve reconstruction with pointwise credible bands.
//!
//! Every stored snapshot yields `x_it = mean_t + sum_k xi_ik phi_kt`; the
//! posterior mean and empirical quantiles across snapshots (chains pooled)
//! give the summary. Quantiles use linear interpolation between order
//! statistics.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fpca::FpcaBasis;
use crate::model::PosteriorDraws;

#[derive(Debug, Clone)]
pub struct ReconstructionSummary {
    pub posterior_mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
    /// Credible level, e.g. 0.95.
    pub level: f64,
}

impl ReconstructionSummary {
    pub fn save_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_matrix(&self.posterior_mean, &dir.join("posterior_mean.csv"))?;
        write_matrix(&self.lower, &dir.join("lower.csv"))?;
        write_matrix(&self.upper, &dir.join("upper.csv"))?;
        Ok(())
    }
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|line| {
            line.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(e.to_string())))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Err(Error::Format("empty matrix file".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format("ragged matrix file".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Posterior mean reconstruction only. Linearity means the mean curve can be
/// built from the mean scores without touching individual snapshots.
pub fn posterior_mean(draws: &PosteriorDraws, basis: &FpcaBasis) -> Result<DMatrix<f64>> {
    check_consistency(draws, basis)?;
    let w = draws.total_snapshots() as f64;
    let mut mean_scores = DMatrix::zeros(draws.n_curves, basis.k);
    for state in draws.pooled() {
        mean_scores += &state.xi;
    }
    mean_scores /= w;
    crate::fpca::reconstruct_from_scores(basis, &mean_scores)
}

fn check_consistency(draws: &PosteriorDraws, basis: &FpcaBasis) -> Result<()> {
    if draws.total_snapshots() == 0 {
        return Err(Error::Dimension("no snapshots stored".into()));
    }
    if draws.model.k != basis.k || draws.n_points != basis.n_points() {
        return Err(Error::Dimension("draws and basis are inconsistent".into()));
    }
    Ok(())
}

/// Linear-interpolation quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Full reconstruction summary with symmetric pointwise credible bands at
/// the given level.
pub fn reconstruct(
    draws: &PosteriorDraws,
    basis: &FpcaBasis,
    level: f64,
) -> Result<ReconstructionSummary> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::Config(format!("credible level {level} outside (0,1)")));
    }
    check_consistency(draws, basis)?;

    let n = draws.n_curves;
    let t_len = basis.n_points();
    let w = draws.total_snapshots();
    let a = 1.0 - level;

    let posterior_mean = posterior_mean(draws, basis)?;
    let mut lower = DMatrix::zeros(n, t_len);
    let mut upper = DMatrix::zeros(n, t_len);

    // Process one curve at a time to bound memory at W x T.
    let mut samples = vec![vec![0.0_f64; w]; t_len];
    for i in 0..n {
        for (widx, state) in draws.pooled().enumerate() {
            for t in 0..t_len {
                let mut x = basis.mean_curve[t];
                for k in 0..basis.k {
                    x += state.xi[(i, k)] * basis.eigenfunctions[(k, t)];
                }
                samples[t][widx] = x;
            }
        }
        for t in 0..t_len {
            samples[t].sort_by(|x, y| x.partial_cmp(y).unwrap());
            lower[(i, t)] = quantile_sorted(&samples[t], a / 2.0);
            upper[(i, t)] = quantile_sorted(&samples[t], 1.0 - a / 2.0);
        }
    }

    // Guard the elementwise band ordering against interpolation roundoff.
    for i in 0..n {
        for t in 0..t_len {
            let m = posterior_mean[(i, t)];
            if lower[(i, t)] > m {
                lower[(i, t)] = m;
            }
            if upper[(i, t)] < m {
                upper[(i, t)] = m;
            }
        }
    }

    Ok(ReconstructionSummary { posterior_mean, lower, upper, level })
}
