//! Clustering exploration and chain convergence checks.
//!
//! The three-step exploration of the clustering posterior: the distribution
//! of the number of non-empty clusters with a single-cluster Bayes factor,
//! per-cluster size posteriors, and the MAP partition alongside the pairwise
//! probability matrix. Convergence tooling: split-chain potential scale
//! reduction and an initial-monotone-sequence effective sample size.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, PosteriorDraws};
use crate::sampler::stick_weights;

/// Discrete histogram with probability masses derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<usize, usize>,
    pub total: usize,
}

impl Histogram {
    pub fn from_values(values: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for v in values {
            *counts.entry(v).or_insert(0) += 1;
            total += 1;
        }
        Self { counts, total }
    }

    pub fn mass(&self, value: usize) -> f64 {
        *self.counts.get(&value).unwrap_or(&0) as f64 / self.total.max(1) as f64
    }

    /// (value, mass) pairs in ascending value order.
    pub fn masses(&self) -> Vec<(usize, f64)> {
        self.counts
            .iter()
            .map(|(&v, &c)| (v, c as f64 / self.total as f64))
            .collect()
    }

    pub fn mode(&self) -> Option<usize> {
        self.counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&v, _)| v)
    }
}

/// Single-cluster Bayes factor with the Monte-Carlo pieces it was built
/// from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BayesFactor {
    pub value: f64,
    pub posterior_single: f64,
    pub prior_single: f64,
    pub prior_sims: usize,
    /// Binomial standard error of the prior single-cluster probability.
    pub prior_mc_se: f64,
}

/// Per-cluster occupancy summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizePosterior {
    pub empty_probability: f64,
    /// Histogram of occupancy counts over the snapshots where the cluster
    /// is non-empty; divide keys by `n_curves` for fractions.
    pub occupancy: Histogram,
    pub n_curves: usize,
}

/// Full clustering posterior for one eigendimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringPosterior {
    pub dimension: usize,
    pub jplus: Histogram,
    pub bayes_factor: BayesFactor,
    pub sizes: Vec<SizePosterior>,
    pub map: Vec<usize>,
    #[serde(skip)]
    pub ppm: DMatrix<f64>,
}

/// Convergence summary over a set of scalar parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub psrf: Vec<(String, f64)>,
    pub ess: Vec<(String, f64)>,
}

impl ChainDiagnostics {
    pub fn mean_psrf(&self) -> f64 {
        let finite: Vec<f64> = self.psrf.iter().map(|(_, v)| *v).filter(|v| v.is_finite()).collect();
        finite.iter().sum::<f64>() / finite.len().max(1) as f64
    }

    pub fn mean_ess(&self) -> f64 {
        let finite: Vec<f64> = self.ess.iter().map(|(_, v)| *v).filter(|v| v.is_finite()).collect();
        finite.iter().sum::<f64>() / finite.len().max(1) as f64
    }
}

/// A scalar coordinate of the sampler state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterSelector {
    Xi { curve: usize, dim: usize },
    Mu { cluster: usize, dim: usize },
    S { cluster: usize, dim: usize },
    Alpha { dim: usize },
    Tau,
}

impl ParameterSelector {
    pub fn name(&self) -> String {
        match self {
            Self::Xi { curve, dim } => format!("xi[{curve},{dim}]"),
            Self::Mu { cluster, dim } => format!("mu[{cluster},{dim}]"),
            Self::S { cluster, dim } => format!("s[{cluster},{dim}]"),
            Self::Alpha { dim } => format!("alpha[{dim}]"),
            Self::Tau => "tau".into(),
        }
    }
}

/// Extract one scalar trace per chain.
pub fn extract(draws: &PosteriorDraws, selector: ParameterSelector) -> Vec<Vec<f64>> {
    draws
        .chains
        .iter()
        .map(|chain| {
            chain
                .iter()
                .map(|state| match selector {
                    ParameterSelector::Xi { curve, dim } => state.xi[(curve, dim)],
                    ParameterSelector::Mu { cluster, dim } => state.mu[dim][cluster],
                    ParameterSelector::S { cluster, dim } => state.s[dim][cluster],
                    ParameterSelector::Alpha { dim } => state.alpha[dim],
                    ParameterSelector::Tau => state.tau,
                })
                .collect()
        })
        .collect()
}

fn distinct_labels(labels: &[usize]) -> usize {
    let mut seen = vec![false; labels.iter().max().map_or(0, |&m| m + 1)];
    let mut count = 0;
    for &l in labels {
        if !seen[l] {
            seen[l] = true;
            count += 1;
        }
    }
    count
}

/// Distribution of the number of distinct occupied labels per snapshot.
pub fn jplus_counts(draws: &PosteriorDraws, k: usize) -> Result<Histogram> {
    if draws.total_snapshots() == 0 {
        return Err(Error::Dimension("no snapshots stored".into()));
    }
    Ok(Histogram::from_values(
        draws.pooled().map(|state| distinct_labels(&state.c[k])),
    ))
}

/// Forward-simulate the prior probability that all n labels coincide:
/// `alpha ~ U(0,Q]`, sticks from Beta(1, alpha), then n categorical draws.
pub fn prior_single_cluster_probability(
    n: usize,
    j: usize,
    q: f64,
    sims: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if sims == 0 {
        return Err(Error::Config("prior_sims must be positive".into()));
    }
    let mut singles = 0usize;
    let mut raw = vec![0.0_f64; j];
    for _ in 0..sims {
        let alpha = rng.gen_range(0.0..q).max(q * 1e-12);
        let beta = Beta::new(1.0, alpha).map_err(|e| Error::Numerical(e.to_string()))?;
        for slot in raw.iter_mut().take(j - 1) {
            *slot = beta.sample(rng);
        }
        raw[j - 1] = 1.0;
        let weights = stick_weights(&raw);
        let first = categorical(&weights, rng);
        let mut all_same = true;
        for _ in 1..n {
            if categorical(&weights, rng) != first {
                all_same = false;
                break;
            }
        }
        if all_same {
            singles += 1;
        }
    }
    Ok(singles as f64 / sims as f64)
}

fn categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            return j;
        }
    }
    weights.len() - 1
}

/// Bayes factor for the clustering hypothesis `J+ > 1` against `J+ = 1`:
/// posterior odds of `J+ > 1` divided by its prior odds. Values above 1
/// favour the presence of clusters.
pub fn bayes_factor_single(
    draws: &PosteriorDraws,
    k: usize,
    model: &ModelConfig,
    prior_sims: usize,
    rng: &mut impl Rng,
) -> Result<BayesFactor> {
    if prior_sims < 10_000 {
        return Err(Error::Config("prior_sims must be at least 10^4".into()));
    }
    let jplus = jplus_counts(draws, k)?;
    let post_single = jplus.mass(1);
    let prior_single = prior_single_cluster_probability(
        draws.n_curves,
        model.j,
        model.dim_priors[k].q,
        prior_sims,
        rng,
    )?;
    let prior_mc_se = (prior_single * (1.0 - prior_single) / prior_sims as f64).sqrt();

    // BF = {prior(J+=1)/prior(J+>1)} x {post(J+>1)/post(J+=1)}.
    let value = if post_single == 0.0 || prior_single == 1.0 {
        f64::INFINITY
    } else if prior_single == 0.0 || post_single == 1.0 {
        0.0
    } else {
        (prior_single / (1.0 - prior_single)) * ((1.0 - post_single) / post_single)
    };
    Ok(BayesFactor {
        value,
        posterior_single: post_single,
        prior_single,
        prior_sims,
        prior_mc_se,
    })
}

/// Per-cluster empty probability and occupancy histogram given non-empty.
/// Assumes relabeled snapshots.
pub fn size_posteriors(draws: &PosteriorDraws, k: usize) -> Result<Vec<SizePosterior>> {
    if draws.total_snapshots() == 0 {
        return Err(Error::Dimension("no snapshots stored".into()));
    }
    let j = draws.model.j;
    let total = draws.total_snapshots();
    let n = draws.n_curves;
    let mut empty = vec![0usize; j];
    let mut occupied: Vec<Vec<usize>> = vec![Vec::new(); j];
    for state in draws.pooled() {
        let counts = state.counts(k);
        for cluster in 0..j {
            if counts[cluster] == 0 {
                empty[cluster] += 1;
            } else {
                occupied[cluster].push(counts[cluster]);
            }
        }
    }
    Ok((0..j)
        .map(|cluster| SizePosterior {
            empty_probability: empty[cluster] as f64 / total as f64,
            occupancy: Histogram::from_values(occupied[cluster].iter().copied()),
            n_curves: n,
        })
        .collect())
}

/// Most frequent label per curve; ties broken toward the smallest label.
pub fn map_partition(draws: &PosteriorDraws, k: usize) -> Result<Vec<usize>> {
    if draws.total_snapshots() == 0 {
        return Err(Error::Dimension("no snapshots stored".into()));
    }
    let n = draws.n_curves;
    let j = draws.model.j;
    let mut freq = vec![vec![0usize; j]; n];
    for state in draws.pooled() {
        for (i, &label) in state.c[k].iter().enumerate() {
            freq[i][label] += 1;
        }
    }
    Ok(freq
        .iter()
        .map(|counts| {
            let mut best = 0;
            for (label, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = label;
                }
            }
            best
        })
        .collect())
}

/// Pairwise probability matrix: entry (i, i') is the fraction of snapshots
/// in which the two curves share a label. Label-permutation invariant.
pub fn pairwise_probability_matrix(draws: &PosteriorDraws, k: usize) -> Result<DMatrix<f64>> {
    let total = draws.total_snapshots();
    if total == 0 {
        return Err(Error::Dimension("no snapshots stored".into()));
    }
    let n = draws.n_curves;
    let mut ppm = DMatrix::zeros(n, n);
    for state in draws.pooled() {
        let labels = &state.c[k];
        for i in 0..n {
            for i2 in (i + 1)..n {
                if labels[i] == labels[i2] {
                    ppm[(i, i2)] += 1.0;
                }
            }
        }
    }
    ppm /= total as f64;
    for i in 0..n {
        ppm[(i, i)] = 1.0;
        for i2 in 0..i {
            ppm[(i, i2)] = ppm[(i2, i)];
        }
    }
    Ok(ppm)
}

/// Split-chain Gelman-Rubin potential scale reduction for one scalar trace
/// per chain. Needs at least 2 chains of at least 10 draws; returns NaN
/// when the within-chain variance vanishes.
pub fn psrf(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Dimension("psrf needs at least 2 chains".into()));
    }
    let min_len = chains.iter().map(|c| c.len()).min().unwrap();
    if min_len < 10 {
        return Err(Error::Dimension("psrf needs at least 10 draws per chain".into()));
    }
    // Split each chain in half to expose within-chain trends.
    let half = min_len / 2;
    let mut split: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        split.push(&chain[..half]);
        split.push(&chain[half..2 * half]);
    }

    let m = split.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = split
        .iter()
        .zip(&means)
        .map(|(c, &mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    let grand = mean(&means);
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = mean(&vars);
    if within <= 0.0 {
        return Ok(f64::NAN);
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok((var_plus / within).sqrt())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Effective sample size of a single trace via Geyer's initial monotone
/// positive sequence on the empirical autocovariances. NaN for (near-)
/// constant chains.
pub fn ess_single(chain: &[f64]) -> Result<f64> {
    let n = chain.len();
    if n < 100 {
        return Err(Error::Dimension("ess needs at least 100 draws".into()));
    }
    let mu = mean(chain);
    let gamma0 = chain.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n as f64;
    if gamma0 <= f64::EPSILON * mu.abs().max(1.0) {
        return Ok(f64::NAN);
    }
    let autocov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (chain[t] - mu) * (chain[t + lag] - mu))
            .sum::<f64>()
            / n as f64
    };

    // Sum paired autocovariances while positive and monotone decreasing.
    let mut sum_pairs = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0usize;
    loop {
        let lag = 2 * m;
        if lag + 1 >= n {
            break;
        }
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum_pairs += pair;
        prev = pair;
        m += 1;
    }
    // IACT = 2 * sum(pairs)/gamma0 - 1 (the lag-0 term is inside the first
    // pair).
    let iact = (2.0 * sum_pairs / gamma0 - 1.0).max(1.0);
    Ok(n as f64 / iact)
}

/// Total ESS across chains (sum of per-chain estimates).
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    let mut any = false;
    for chain in chains {
        let e = ess_single(chain)?;
        if e.is_nan() {
            return Ok(f64::NAN);
        }
        total += e;
        any = true;
    }
    if any {
        Ok(total)
    } else {
        Err(Error::Dimension("no chains".into()))
    }
}

/// PSRF and ESS for a default parameter set: every fPC score plus tau.
pub fn chain_diagnostics(draws: &PosteriorDraws) -> Result<ChainDiagnostics> {
    let mut selectors = Vec::new();
    for i in 0..draws.n_curves {
        for k in 0..draws.model.k {
            selectors.push(ParameterSelector::Xi { curve: i, dim: k });
        }
    }
    selectors.push(ParameterSelector::Tau);

    let mut psrf_out = Vec::with_capacity(selectors.len());
    let mut ess_out = Vec::with_capacity(selectors.len());
    for sel in selectors {
        let traces = extract(draws, sel);
        let r = if traces.len() >= 2 { psrf(&traces)? } else { f64::NAN };
        let e = ess(&traces)?;
        psrf_out.push((sel.name(), r));
        ess_out.push((sel.name(), e));
    }
    Ok(ChainDiagnostics { psrf: psrf_out, ess: ess_out })
}

/// Run the full three-step exploration for one eigendimension.
pub fn clustering_posterior(
    draws: &PosteriorDraws,
    k: usize,
    prior_sims: usize,
    rng: &mut impl Rng,
) -> Result<ClusteringPosterior> {
    Ok(ClusteringPosterior {
        dimension: k,
        jplus: jplus_counts(draws, k)?,
        bayes_factor: bayes_factor_single(draws, k, &draws.model.clone(), prior_sims, rng)?,
        sizes: size_posteriors(draws, k)?,
        map: map_partition(draws, k)?,
        ppm: pairwise_probability_matrix(draws, k)?,
    })
}
