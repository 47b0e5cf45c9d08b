//! Model and chain configuration plus the sampler state vector.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fpca::FpcaBasis;

/// Prior on a cluster's precision (or equivalently its standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScalePrior {
    /// `s_jk ~ Gamma(shape=z, rate)`; the shape is the `z` field of the
    /// dimension prior.
    GammaPrecision { rate: f64 },
    /// `sigma_jk ~ Uniform(0, upper]`, with `s = 1/sigma^2`.
    UniformSigma { upper: f64 },
}

/// Per-eigendimension hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionPrior {
    /// Cluster-mean precision, default `1/lambda_k`.
    pub r: f64,
    pub scale_prior: ScalePrior,
    /// Upper bound of the uniform prior on `alpha_k`.
    pub q: f64,
    /// Cluster-mean prior mean (fixed 0).
    pub v: f64,
    /// Precision-prior shape (fixed 1).
    pub z: f64,
}

impl DimensionPrior {
    /// Defaults keyed to the empirical eigenvalue: gamma precision with
    /// `rate = lambda` and `Q = 10` in the first dimension, uniform sigma
    /// with `upper = sqrt(lambda)` and `Q = 5` in the rest.
    pub fn default_for(dim_index: usize, eigenvalue: f64) -> Self {
        let scale_prior = if dim_index == 0 {
            ScalePrior::GammaPrecision { rate: eigenvalue }
        } else {
            ScalePrior::UniformSigma { upper: eigenvalue.sqrt() }
        };
        Self {
            r: 1.0 / eigenvalue,
            scale_prior,
            q: if dim_index == 0 { 10.0 } else { 5.0 },
            v: 0.0,
            z: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r <= 0.0 || self.q <= 0.0 {
            return Err(Error::Config("r and Q must be positive".into()));
        }
        match self.scale_prior {
            ScalePrior::GammaPrecision { rate } if rate <= 0.0 => {
                Err(Error::Config("gamma precision rate must be positive".into()))
            }
            ScalePrior::UniformSigma { upper } if upper <= 0.0 => {
                Err(Error::Config("uniform sigma upper bound must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Whether to fit the clustered model or its single-cluster, zero-mean
/// degenerate configuration (the standard Bayesian fPCA model).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    Pcl,
    StandardBfpca,
}

/// Which ordering constraint controls label switching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelRule {
    ByMean,
    ByWeight,
}

pub const DEFAULT_TRUNCATION: usize = 20;
pub const DEFAULT_NOISE_PRIOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Truncation level of the stick-breaking construction.
    pub j: usize,
    pub k: usize,
    pub dim_priors: Vec<DimensionPrior>,
    pub a_prime: f64,
    pub b_prime: f64,
    pub mode: ModelMode,
    pub relabel: RelabelRule,
}

impl ModelConfig {
    /// Default PCl configuration for a fitted basis: J=20, per-dimension
    /// priors keyed to the empirical eigenvalues.
    pub fn default_for(basis: &FpcaBasis) -> Self {
        Self {
            j: DEFAULT_TRUNCATION,
            k: basis.k,
            dim_priors: basis
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(k, &l)| DimensionPrior::default_for(k, l))
                .collect(),
            a_prime: DEFAULT_NOISE_PRIOR,
            b_prime: DEFAULT_NOISE_PRIOR,
            mode: ModelMode::Pcl,
            relabel: RelabelRule::ByMean,
        }
    }

    /// Same priors but the standard Bayesian fPCA degenerate configuration
    /// (J=1, cluster means pinned at zero).
    pub fn standard_for(basis: &FpcaBasis) -> Self {
        let mut cfg = Self::default_for(basis);
        cfg.mode = ModelMode::StandardBfpca;
        cfg.j = 1;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ModelMode::Pcl if self.j < 2 => {
                return Err(Error::Config("pcl mode needs truncation J >= 2".into()))
            }
            ModelMode::StandardBfpca if self.j != 1 => {
                return Err(Error::Config("standard_bfpca mode forces J = 1".into()))
            }
            _ => {}
        }
        if self.k == 0 {
            return Err(Error::Config("K must be positive".into()));
        }
        if self.dim_priors.len() != self.k {
            return Err(Error::Config(format!(
                "{} dimension priors for K={}",
                self.dim_priors.len(),
                self.k
            )));
        }
        if self.a_prime <= 0.0 || self.b_prime <= 0.0 {
            return Err(Error::Config("a' and b' must be positive".into()));
        }
        for p in &self.dim_priors {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub thinning: usize,
    pub chains: usize,
    pub seed: u64,
}

impl McmcConfig {
    /// Desk-scale settings used by CI and the acceptance suite.
    pub fn desk_scale(seed: u64) -> Self {
        Self { burn_in: 5_000, iterations: 10_000, thinning: 5, chains: 2, seed }
    }

    /// The full-scale batch preset (100k burn-in, 100k kept, thinning 5).
    pub fn paper_scale(seed: u64) -> Self {
        Self { burn_in: 100_000, iterations: 100_000, thinning: 5, chains: 3, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in == 0 || self.iterations == 0 || self.thinning == 0 || self.chains == 0 {
            return Err(Error::Config("all MCMC settings must be positive".into()));
        }
        if self.iterations % self.thinning != 0 {
            return Err(Error::Config(format!(
                "iterations {} not divisible by thinning {}",
                self.iterations, self.thinning
            )));
        }
        Ok(())
    }

    pub fn snapshots_per_chain(&self) -> usize {
        self.iterations / self.thinning
    }
}

/// One full parameter vector of the Gibbs sampler.
///
/// Cluster labels are 0-based internally; external CSV output keeps the same
/// convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcState {
    /// `n x K` fPC scores.
    pub xi: DMatrix<f64>,
    /// `c[k][i]` in `0..J`.
    pub c: Vec<Vec<usize>>,
    /// `mu[k][j]`.
    pub mu: Vec<Vec<f64>>,
    /// `s[k][j] > 0`.
    pub s: Vec<Vec<f64>>,
    /// Stick variables `p'[k][j]` in `(0,1]`.
    pub p_raw: Vec<Vec<f64>>,
    /// Mixture weights, each `p[k]` a simplex.
    pub p: Vec<Vec<f64>>,
    /// `alpha[k]` in `(0, Q_k]`.
    pub alpha: Vec<f64>,
    pub tau: f64,
}

impl McmcState {
    pub fn n_curves(&self) -> usize {
        self.xi.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.xi.ncols()
    }

    pub fn truncation(&self) -> usize {
        self.mu[0].len()
    }

    /// Cluster occupancy counts `n_jk` for dimension `k`.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.truncation()];
        for &label in &self.c[k] {
            counts[label] += 1;
        }
        counts
    }

    /// Checks the structural invariants: simplex columns, positivity, label
    /// ranges. Used by tests and the sampler's debug assertions.
    pub fn check_invariants(&self) -> Result<()> {
        let j = self.truncation();
        if self.tau <= 0.0 {
            return Err(Error::Numerical("tau must be positive".into()));
        }
        for k in 0..self.n_dims() {
            let sum: f64 = self.p[k].iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::Numerical(format!(
                    "weights of dimension {k} sum to {sum}"
                )));
            }
            if self.s[k].iter().any(|&s| s <= 0.0) {
                return Err(Error::Numerical(format!("non-positive precision in dimension {k}")));
            }
            if self.c[k].iter().any(|&l| l >= j) {
                return Err(Error::Numerical(format!("label out of range in dimension {k}")));
            }
        }
        Ok(())
    }
}

/// Stored post-burn-in, thinned snapshots for every chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub chains: Vec<Vec<McmcState>>,
    pub model: ModelConfig,
    pub mcmc: McmcConfig,
    pub n_curves: usize,
    pub n_points: usize,
    /// Not part of the persisted manifest hash.
    pub wall_clock_secs: f64,
}

impl PosteriorDraws {
    /// All snapshots with chains pooled.
    pub fn pooled(&self) -> impl Iterator<Item = &McmcState> {
        self.chains.iter().flatten()
    }

    pub fn total_snapshots(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }
}
