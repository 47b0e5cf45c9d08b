//! Functional PCA of smoothed, centred curves.
//!
//! Eigendecomposition of the `T x T` sample covariance of the rows. The
//! eigenvectors are normalised to unit Euclidean norm in discrete time
//! (`sum_t phi_kt^2 = 1`), which keeps the sampler's conditional precisions
//! exact, and each is sign-flipped so its largest-magnitude entry is
//! positive so repeated runs are identical.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::CenteredDataset;
use crate::error::{Error, Result};

/// Rule deciding how many eigendimensions to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RetainRule {
    /// Smallest K whose cumulative variance fraction reaches the threshold.
    Threshold(f64),
    /// Exactly K components.
    Fixed(usize),
    /// Keep leading components each explaining more than `min_share`, and at
    /// least enough to reach the cumulative `threshold`.
    ThresholdAndMinShare { threshold: f64, min_share: f64 },
}

/// Mean curve, eigenfunctions, eigenvalues and empirical scores of a
/// functional dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaBasis {
    pub mean_curve: DVector<f64>,
    /// `K x T`, rows are unit-norm eigenfunctions.
    pub eigenfunctions: DMatrix<f64>,
    /// Descending, strictly positive.
    pub eigenvalues: DVector<f64>,
    /// `n x K` empirical scores `xi_ik = sum_t Ytilde_it phi_kt`.
    pub scores: DMatrix<f64>,
    pub total_variance: f64,
    pub k: usize,
    /// How the basis was produced, carried along for run manifests.
    pub provenance: FpcaProvenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FpcaProvenance {
    pub n_basis: usize,
    pub retain: RetainRule,
}

impl FpcaBasis {
    pub fn n_points(&self) -> usize {
        self.eigenfunctions.ncols()
    }

    pub fn n_curves(&self) -> usize {
        self.scores.nrows()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }
}

/// Eigendecomposition of the sample covariance (divisor n-1) with retention
/// per `retain`. `n_basis` is recorded as provenance only.
pub fn decompose(centered: &CenteredDataset, retain: RetainRule, n_basis: usize) -> Result<FpcaBasis> {
    let values = centered.values();
    let (n, t_len) = (values.nrows(), values.ncols());
    let cov = values.transpose() * values / (n as f64 - 1.0);

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..t_len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let total_variance: f64 = eig.eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    let tol = 1e-12 * eig.eigenvalues[order[0]].max(f64::MIN_POSITIVE);
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();

    let spectrum: Vec<f64> = order[..rank].iter().map(|&i| eig.eigenvalues[i]).collect();
    let k = choose_k(&spectrum, total_variance, retain)?;
    if k > rank {
        return Err(Error::Dimension(format!(
            "requested {k} components but covariance rank is {rank}"
        )));
    }

    let mut eigenfunctions = DMatrix::zeros(k, t_len);
    for (row, &idx) in order[..k].iter().enumerate() {
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        v /= v.norm();
        // Sign convention: largest-magnitude entry positive.
        let (mut max_abs, mut max_val) = (0.0_f64, 0.0_f64);
        for &x in v.iter() {
            if x.abs() > max_abs {
                max_abs = x.abs();
                max_val = x;
            }
        }
        if max_val < 0.0 {
            v = -v;
        }
        eigenfunctions.set_row(row, &v.transpose());
    }

    let eigenvalues = DVector::from_iterator(k, spectrum[..k].iter().copied());
    let scores = values * eigenfunctions.transpose();

    Ok(FpcaBasis {
        mean_curve: centered.mean_curve().clone(),
        eigenfunctions,
        eigenvalues,
        scores,
        total_variance,
        k,
        provenance: FpcaProvenance { n_basis, retain },
    })
}

fn choose_k(spectrum: &[f64], total: f64, retain: RetainRule) -> Result<usize> {
    match retain {
        RetainRule::Fixed(k) => {
            if k == 0 {
                return Err(Error::Config("cannot retain 0 components".into()));
            }
            Ok(k)
        }
        RetainRule::Threshold(frac) => {
            if !(0.0..=1.0).contains(&frac) {
                return Err(Error::Config(format!("threshold {frac} outside [0,1]")));
            }
            let mut cum = 0.0;
            for (i, &lambda) in spectrum.iter().enumerate() {
                cum += lambda / total;
                if cum >= frac {
                    return Ok(i + 1);
                }
            }
            Ok(spectrum.len())
        }
        RetainRule::ThresholdAndMinShare { threshold, min_share } => {
            let shares: Vec<f64> = spectrum.iter().map(|&l| l / total).collect();
            let leading = shares.iter().take_while(|&&s| s > min_share).count().max(1);
            let mut cum = 0.0;
            let mut by_threshold = shares.len();
            for (i, &s) in shares.iter().enumerate() {
                cum += s;
                if cum >= threshold {
                    by_threshold = i + 1;
                    break;
                }
            }
            Ok(leading.max(by_threshold).min(shares.len()))
        }
    }
}

/// `row i = mean_curve + sum_k scores_ik phi_k`, the Karhunen-Loeve
/// reconstruction for a given score matrix.
pub fn reconstruct_from_scores(basis: &FpcaBasis, scores: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if scores.ncols() != basis.k {
        return Err(Error::Dimension(format!(
            "scores have {} columns, basis has K={}",
            scores.ncols(),
            basis.k
        )));
    }
    let mut out = scores * &basis.eigenfunctions;
    for mut row in out.row_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += basis.mean_curve[j];
        }
    }
    Ok(out)
}
