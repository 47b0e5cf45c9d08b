//! Blocked Gibbs sampler for the clustered functional PCA hierarchy.
//!
//! One sweep updates, in order: the fPC scores `xi`, the noise precision
//! `tau`, then per eigendimension the cluster means `mu`, precisions `s`,
//! labels `c`, stick variables `p'` (and the induced weights), and the
//! concentration `alpha`. All conditionals are conjugate except the uniform
//! sigma variant of the precision update, which is slice sampled, and the
//! truncated alpha draw, done by inverse CDF.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::dataset::CenteredDataset;
use crate::error::{Error, Result};
use crate::fpca::FpcaBasis;
use crate::model::{
    McmcConfig, McmcState, ModelConfig, ModelMode, PosteriorDraws, RelabelRule, ScalePrior,
};

/// Data summaries the sweeps run on. The sweep cost is independent of T:
/// everything enters through `data_proj = Ytilde * Phi'` and the eigenfunction
/// Gram matrix.
pub struct SuffStats {
    /// `n x K` projections `sum_t Ytilde_it phi_kt`.
    pub data_proj: DMatrix<f64>,
    /// `K x K` Gram matrix of the eigenfunctions (identity up to roundoff).
    pub gram: DMatrix<f64>,
    /// `sum_it Ytilde_it^2`.
    pub data_sq: f64,
    pub n: usize,
    pub t_len: usize,
}

impl SuffStats {
    pub fn new(centered: &CenteredDataset, basis: &FpcaBasis) -> Result<Self> {
        if centered.n_points() != basis.n_points() || centered.n_curves() != basis.n_curves() {
            return Err(Error::Dimension(
                "centered data and basis dimensions disagree".into(),
            ));
        }
        let phi_t = basis.eigenfunctions.transpose();
        Ok(Self {
            data_proj: centered.values() * &phi_t,
            gram: &basis.eigenfunctions * &phi_t,
            data_sq: centered.values().iter().map(|v| v * v).sum(),
            n: centered.n_curves(),
            t_len: centered.n_points(),
        })
    }

    /// Residual sum of squares `sum_it (Ytilde_it - sum_k xi_ik phi_kt)^2`
    /// expanded through the projections, so it costs O(nK^2).
    pub fn residual_ss(&self, xi: &DMatrix<f64>) -> f64 {
        let k = xi.ncols();
        let mut ss = self.data_sq;
        for i in 0..self.n {
            let mut quad = 0.0;
            for a in 0..k {
                ss -= 2.0 * xi[(i, a)] * self.data_proj[(i, a)];
                for b in 0..k {
                    quad += xi[(i, a)] * xi[(i, b)] * self.gram[(a, b)];
                }
            }
            ss += quad;
        }
        ss.max(0.0)
    }

    /// Projection of curve i's residual (all dimensions but k subtracted)
    /// onto eigenfunction k.
    pub fn residual_proj(&self, xi: &DMatrix<f64>, i: usize, k: usize) -> f64 {
        let mut proj = self.data_proj[(i, k)];
        for k2 in 0..xi.ncols() {
            if k2 != k {
                proj -= xi[(i, k2)] * self.gram[(k2, k)];
            }
        }
        proj
    }
}

/// Draw the initial state: scores at their empirical estimates, labels
/// uniform, everything else from its prior.
pub fn init_state(basis: &FpcaBasis, config: &ModelConfig, rng: &mut impl Rng) -> Result<McmcState> {
    config.validate()?;
    if config.k != basis.k {
        return Err(Error::Dimension(format!(
            "config K={} but basis K={}",
            config.k, basis.k
        )));
    }
    let n = basis.n_curves();
    let j = config.j;
    let standard = config.mode == ModelMode::StandardBfpca;

    let xi = basis.scores.clone();
    let mut c = Vec::with_capacity(config.k);
    let mut mu = Vec::with_capacity(config.k);
    let mut s = Vec::with_capacity(config.k);
    let mut p_raw = Vec::with_capacity(config.k);
    let mut p = Vec::with_capacity(config.k);
    let mut alpha = Vec::with_capacity(config.k);

    for prior in &config.dim_priors {
        if standard {
            c.push(vec![0usize; n]);
            mu.push(vec![0.0]);
            p_raw.push(vec![1.0]);
            p.push(vec![1.0]);
            alpha.push(prior.q);
        } else {
            c.push((0..n).map(|_| rng.gen_range(0..j)).collect());
            let mean_sd = (1.0 / prior.r).sqrt();
            let normal = Normal::new(prior.v, mean_sd).expect("valid normal");
            mu.push((0..j).map(|_| normal.sample(rng)).collect());
            let a = rng.gen_range(0.0..prior.q).max(f64::MIN_POSITIVE);
            alpha.push(a);
            let beta = Beta::new(1.0, a).map_err(|e| Error::Numerical(e.to_string()))?;
            let mut raw: Vec<f64> = (0..j - 1).map(|_| beta.sample(rng)).collect();
            raw.push(1.0);
            p.push(stick_weights(&raw));
            p_raw.push(raw);
        }
        s.push((0..j.max(1)).map(|_| draw_scale_prior(prior, rng)).collect());
    }

    let tau_dist = Gamma::new(config.a_prime, 1.0 / config.b_prime)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let tau = tau_dist.sample(rng).max(f64::MIN_POSITIVE);

    Ok(McmcState { xi, c, mu, s, p_raw, p, alpha, tau })
}

fn draw_scale_prior(prior: &crate::model::DimensionPrior, rng: &mut impl Rng) -> f64 {
    match prior.scale_prior {
        ScalePrior::GammaPrecision { rate } => {
            let g = Gamma::new(prior.z, 1.0 / rate).expect("valid gamma");
            g.sample(rng).max(f64::MIN_POSITIVE)
        }
        ScalePrior::UniformSigma { upper } => {
            let sigma = rng.gen_range(0.0..upper).max(upper * 1e-12);
            1.0 / (sigma * sigma)
        }
    }
}

/// Truncated stick-breaking weights from raw sticks (last stick = 1).
pub fn stick_weights(raw: &[f64]) -> Vec<f64> {
    let mut weights = Vec::with_capacity(raw.len());
    let mut remaining = 1.0;
    for &r in raw {
        weights.push(r * remaining);
        remaining *= 1.0 - r;
    }
    weights
}

/// `xi_ik | ...` normal update from the residual projection.
pub fn sample_xi(
    state: &mut McmcState,
    stats: &SuffStats,
    config: &ModelConfig,
    rng: &mut impl Rng,
) {
    let standard = config.mode == ModelMode::StandardBfpca;
    for i in 0..stats.n {
        for k in 0..config.k {
            let proj = stats.residual_proj(&state.xi, i, k);
            let j = state.c[k][i];
            let s_jk = state.s[k][j];
            let mu_jk = if standard { 0.0 } else { state.mu[k][j] };
            let precision = state.tau + s_jk;
            let mean = (state.tau * proj + s_jk * mu_jk) / precision;
            let normal = Normal::new(mean, precision.sqrt().recip()).expect("valid normal");
            state.xi[(i, k)] = normal.sample(rng);
        }
    }
}

/// Closed-form mean and variance of the `xi` conditional, exposed for the
/// oracle tests.
pub fn xi_conditional(tau: f64, s: f64, mu: f64, proj: f64) -> (f64, f64) {
    ((tau * proj + s * mu) / (tau + s), 1.0 / (tau + s))
}

/// `tau | ...` gamma update.
pub fn sample_tau(state: &mut McmcState, stats: &SuffStats, config: &ModelConfig, rng: &mut impl Rng) {
    let (shape, rate) = tau_conditional(stats, &state.xi, config.a_prime, config.b_prime);
    let g = Gamma::new(shape, 1.0 / rate).expect("valid gamma");
    state.tau = g.sample(rng).max(f64::MIN_POSITIVE);
}

pub fn tau_conditional(stats: &SuffStats, xi: &DMatrix<f64>, a_prime: f64, b_prime: f64) -> (f64, f64) {
    let ssr = stats.residual_ss(xi);
    ((stats.t_len * stats.n) as f64 / 2.0 + a_prime, ssr / 2.0 + b_prime)
}

/// `mu_jk | ...` normal update; empty clusters are refreshed from the prior.
pub fn sample_mu(state: &mut McmcState, config: &ModelConfig, rng: &mut impl Rng) {
    if config.mode == ModelMode::StandardBfpca {
        return; // means pinned at zero
    }
    for k in 0..config.k {
        let prior = &config.dim_priors[k];
        let counts = state.counts(k);
        let mut sums = vec![0.0; config.j];
        for (i, &label) in state.c[k].iter().enumerate() {
            sums[label] += state.xi[(i, k)];
        }
        for j in 0..config.j {
            let (mean, var) = mu_conditional(
                state.s[k][j],
                counts[j],
                sums[j],
                prior.v,
                prior.r,
            );
            let normal = Normal::new(mean, var.sqrt()).expect("valid normal");
            state.mu[k][j] = normal.sample(rng);
        }
    }
}

pub fn mu_conditional(s: f64, n_jk: usize, sum_xi: f64, v: f64, r: f64) -> (f64, f64) {
    let precision = n_jk as f64 * s + r;
    ((s * sum_xi + v * r) / precision, 1.0 / precision)
}

/// `s_jk | ...`: conjugate gamma, or slice-sampled sigma for the uniform
/// variant.
pub fn sample_scale(state: &mut McmcState, config: &ModelConfig, rng: &mut impl Rng) -> Result<()> {
    let standard = config.mode == ModelMode::StandardBfpca;
    for k in 0..config.k {
        let prior = &config.dim_priors[k];
        let counts = state.counts(k);
        let mut ss = vec![0.0; config.j];
        for (i, &label) in state.c[k].iter().enumerate() {
            let mu = if standard { 0.0 } else { state.mu[k][label] };
            let d = state.xi[(i, k)] - mu;
            ss[label] += d * d;
        }
        for j in 0..config.j {
            state.s[k][j] = match prior.scale_prior {
                ScalePrior::GammaPrecision { rate } => {
                    let shape = counts[j] as f64 / 2.0 + prior.z;
                    let g = Gamma::new(shape, 1.0 / (ss[j] / 2.0 + rate))
                        .expect("valid gamma");
                    g.sample(rng).max(f64::MIN_POSITIVE)
                }
                ScalePrior::UniformSigma { upper } => {
                    let sigma = slice_sample_sigma(counts[j], ss[j], upper, state_sigma(state.s[k][j]), rng)?;
                    1.0 / (sigma * sigma)
                }
            };
        }
    }
    Ok(())
}

fn state_sigma(s: f64) -> f64 {
    s.sqrt().recip()
}

/// Slice sampler for `sigma` with density proportional to
/// `sigma^(-n) exp(-ss/(2 sigma^2))` on `(0, upper]`. The support is
/// bounded, so the slice interval starts at the full support and shrinks
/// toward the current point; 100 shrink steps bound the work.
pub fn slice_sample_sigma(
    n_jk: usize,
    ss: f64,
    upper: f64,
    current: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    if n_jk == 0 {
        // Prior: Uniform(0, upper].
        return Ok(rng.gen_range(0.0..upper).max(upper * 1e-12));
    }
    let log_density = |sigma: f64| -> f64 {
        -(n_jk as f64) * sigma.ln() - ss / (2.0 * sigma * sigma)
    };
    let x0 = current.clamp(upper * 1e-12, upper);
    let log_y = log_density(x0) + rng.gen::<f64>().max(f64::MIN_POSITIVE).ln();
    let (mut lo, mut hi) = (0.0_f64, upper);
    for _ in 0..100 {
        let x = lo + rng.gen::<f64>() * (hi - lo);
        if x > 0.0 && log_density(x) >= log_y {
            return Ok(x);
        }
        if x < x0 {
            lo = x;
        } else {
            hi = x;
        }
    }
    Err(Error::Numerical(format!(
        "slice sampler for sigma did not converge (n_jk={n_jk}, ss={ss:.3e}, upper={upper:.3e})"
    )))
}

/// `c_ik | ...` categorical update, computed through log weights with
/// max subtraction.
pub fn sample_c(state: &mut McmcState, config: &ModelConfig, rng: &mut impl Rng) -> Result<()> {
    if config.mode == ModelMode::StandardBfpca {
        return Ok(());
    }
    let mut log_w = vec![0.0_f64; config.j];
    for k in 0..config.k {
        for i in 0..state.n_curves() {
            let xi = state.xi[(i, k)];
            for j in 0..config.j {
                let p = state.p[k][j];
                log_w[j] = if p > 0.0 {
                    let d = xi - state.mu[k][j];
                    p.ln() + 0.5 * state.s[k][j].ln() - 0.5 * state.s[k][j] * d * d
                } else {
                    f64::NEG_INFINITY
                };
            }
            state.c[k][i] = categorical_from_log_weights(&log_w, rng)?;
        }
    }
    Ok(())
}

pub fn categorical_from_log_weights(log_w: &[f64], rng: &mut impl Rng) -> Result<usize> {
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("all categorical log-weights are -inf".into()));
    }
    let mut total = 0.0;
    let weights: Vec<f64> = log_w.iter().map(|&w| {
        let e = (w - max).exp();
        total += e;
        e
    }).collect();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            return Ok(j);
        }
    }
    Ok(weights.len() - 1)
}

/// `p'_jk | ...` beta updates and the induced truncated stick weights.
pub fn sample_sticks(state: &mut McmcState, config: &ModelConfig, rng: &mut impl Rng) -> Result<()> {
    if config.mode == ModelMode::StandardBfpca {
        return Ok(());
    }
    for k in 0..config.k {
        let counts = state.counts(k);
        let mut tail: Vec<f64> = vec![0.0; config.j + 1];
        for j in (0..config.j).rev() {
            tail[j] = tail[j + 1] + counts[j] as f64;
        }
        for j in 0..config.j - 1 {
            let a = counts[j] as f64 + 1.0;
            let b = state.alpha[k] + tail[j + 1];
            let beta = Beta::new(a, b).map_err(|e| Error::Numerical(e.to_string()))?;
            state.p_raw[k][j] = beta.sample(rng).clamp(f64::MIN_POSITIVE, 1.0 - 1e-15);
        }
        state.p_raw[k][config.j - 1] = 1.0;
        state.p[k] = stick_weights(&state.p_raw[k]);
    }
    Ok(())
}

/// `alpha_k | ...` truncated `Gamma(J+1, rate)` draw on `(0, Q]` by inverse
/// CDF, with `rate = -sum_{j<J} log(1 - p'_jk)`.
pub fn sample_alpha(state: &mut McmcState, config: &ModelConfig, rng: &mut impl Rng) -> Result<()> {
    if config.mode == ModelMode::StandardBfpca {
        return Ok(());
    }
    for k in 0..config.k {
        let q = config.dim_priors[k].q;
        let rate: f64 = -state.p_raw[k][..config.j - 1]
            .iter()
            .map(|&p| (1.0 - p).ln())
            .sum::<f64>();
        state.alpha[k] = draw_truncated_gamma_alpha(config.j, rate, q, rng)?;
    }
    Ok(())
}

/// Draw from the density proportional to `a^J exp(-rate * a)` on `(0, q]`.
pub fn draw_truncated_gamma_alpha(j: usize, rate: f64, q: f64, rng: &mut impl Rng) -> Result<f64> {
    let shape = j as f64 + 1.0;
    if rate <= 0.0 || !rate.is_finite() {
        // Degenerate sticks leave no information in the rate; fall back to
        // the flat prior on (0, Q].
        return Ok(rng.gen_range(0.0..q).max(q * 1e-12));
    }
    let dist = GammaDist::new(shape, rate).map_err(|e| Error::Numerical(e.to_string()))?;
    let cdf_q = dist.cdf(q);
    if cdf_q <= 1e-300 {
        // The untruncated mass below Q underflows; on (0, Q] the density is
        // effectively a^J (the exponential factor is flat there), whose CDF
        // inverts to Q * u^(1/(J+1)).
        let u = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        return Ok(q * u.powf(1.0 / shape));
    }
    let u = rng.gen::<f64>() * cdf_q;
    let draw = dist.inverse_cdf(u.max(f64::MIN_POSITIVE));
    if !draw.is_finite() {
        // Inverse-CDF breakdown at extreme rates; the mass sits at the
        // untruncated mean, which is deep inside (0, q] whenever this happens.
        return Ok((shape / rate).clamp(f64::MIN_POSITIVE, q));
    }
    Ok(draw.clamp(f64::MIN_POSITIVE, q))
}

/// Reorder clusters per dimension so the ordering constraint holds:
/// non-empty clusters ascending in mean (or weight), empty ones after.
/// Labels are remapped consistently; the likelihood is untouched.
pub fn relabel(snapshot: &McmcState, rule: RelabelRule) -> McmcState {
    let mut out = snapshot.clone();
    let j = snapshot.truncation();
    for k in 0..snapshot.n_dims() {
        let counts = snapshot.counts(k);
        let key = |idx: usize| match rule {
            RelabelRule::ByMean => snapshot.mu[k][idx],
            RelabelRule::ByWeight => snapshot.p[k][idx],
        };
        let mut perm: Vec<usize> = (0..j).collect();
        perm.sort_by(|&a, &b| {
            let (ea, eb) = (counts[a] == 0, counts[b] == 0);
            ea.cmp(&eb)
                .then(key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal))
                .then(a.cmp(&b))
        });
        let mut inverse = vec![0usize; j];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        for new in 0..j {
            let old = perm[new];
            out.mu[k][new] = snapshot.mu[k][old];
            out.s[k][new] = snapshot.s[k][old];
            out.p[k][new] = snapshot.p[k][old];
            out.p_raw[k][new] = snapshot.p_raw[k][old];
        }
        for i in 0..snapshot.n_curves() {
            out.c[k][i] = inverse[snapshot.c[k][i]];
        }
    }
    out
}

/// One full Gibbs sweep.
pub fn sweep(
    state: &mut McmcState,
    stats: &SuffStats,
    config: &ModelConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    sample_xi(state, stats, config, rng);
    sample_tau(state, stats, config, rng);
    sample_mu(state, config, rng);
    sample_scale(state, config, rng)?;
    sample_c(state, config, rng)?;
    sample_sticks(state, config, rng)?;
    sample_alpha(state, config, rng)?;
    Ok(())
}

fn check_finite(state: &McmcState, sweep_idx: usize) -> Result<()> {
    if !state.tau.is_finite() {
        return Err(Error::NonFinite { sweep: sweep_idx, parameter: "tau".into() });
    }
    if state.xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { sweep: sweep_idx, parameter: "xi".into() });
    }
    for k in 0..state.n_dims() {
        if state.mu[k].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { sweep: sweep_idx, parameter: format!("mu[{k}]") });
        }
        if state.s[k].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { sweep: sweep_idx, parameter: format!("s[{k}]") });
        }
    }
    Ok(())
}

/// Run the full sampler: burn-in plus retained sweeps for every chain, with
/// relabeled snapshots stored every `thinning` post-burn-in sweeps. Chains
/// use independent RNG streams derived from the seed and run on their own
/// threads.
pub fn run(
    centered: &CenteredDataset,
    basis: &FpcaBasis,
    model: &ModelConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    model.validate()?;
    mcmc.validate()?;
    let stats = SuffStats::new(centered, basis)?;
    let start = std::time::Instant::now();

    // PCLFPCA_THREADS caps how many chains run at once; results are
    // identical either way because each chain has its own RNG stream.
    let max_parallel = std::env::var("PCLFPCA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or(mcmc.chains);

    let chain_ids: Vec<usize> = (0..mcmc.chains).collect();
    let mut chain_results: Vec<Result<Vec<McmcState>>> = Vec::with_capacity(mcmc.chains);
    for batch in chain_ids.chunks(max_parallel.max(1)) {
        let batch_results: Vec<Result<Vec<McmcState>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&chain_idx| {
                    let stats = &stats;
                    scope.spawn(move || run_chain(basis, model, mcmc, stats, chain_idx))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        });
        chain_results.extend(batch_results);
    }

    let mut chains = Vec::with_capacity(mcmc.chains);
    for result in chain_results {
        chains.push(result?);
    }

    Ok(PosteriorDraws {
        chains,
        model: model.clone(),
        mcmc: *mcmc,
        n_curves: centered.n_curves(),
        n_points: centered.n_points(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_chain(
    basis: &FpcaBasis,
    model: &ModelConfig,
    mcmc: &McmcConfig,
    stats: &SuffStats,
    chain_idx: usize,
) -> Result<Vec<McmcState>> {
    let mut rng = chain_rng(mcmc.seed, chain_idx);
    let mut state = init_state(basis, model, &mut rng)?;
    let total = mcmc.burn_in + mcmc.iterations;
    let mut snapshots = Vec::with_capacity(mcmc.snapshots_per_chain());
    for sweep_idx in 0..total {
        sweep(&mut state, stats, model, &mut rng)?;
        check_finite(&state, sweep_idx)?;
        if sweep_idx >= mcmc.burn_in && (sweep_idx - mcmc.burn_in + 1) % mcmc.thinning == 0 {
            snapshots.push(relabel(&state, model.relabel));
        }
    }
    Ok(snapshots)
}

/// Per-chain RNG: one ChaCha stream per chain over a shared seed.
pub fn chain_rng(seed: u64, chain_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_idx as u64 + 1);
    rng
}
