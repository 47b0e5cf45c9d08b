//! Command-line pipeline: simulate, fit, diagnose, evaluate.
//!
//! Every command is deterministic given its config and seed. Outputs land
//! under the given directory (prefixed by `PCLFPCA_OUT_ROOT` when set and
//! the path is relative); `PCLFPCA_THREADS` caps chain parallelism.
//!
//! Exit codes: 0 success, 2 validation or I/O error, 3 numerical failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use pclfpca::bspline::{smooth, BSplineBasis};
use pclfpca::dataset::{center, load_dataset, DataFormat, FunctionalDataset};
use pclfpca::diagnostics::{chain_diagnostics, clustering_posterior, ClusteringPosterior};
use pclfpca::fpca::{decompose, FpcaBasis, RetainRule};
use pclfpca::metrics;
use pclfpca::model::{McmcConfig, ModelConfig, ModelMode, PosteriorDraws, RelabelRule};
use pclfpca::reconstruction;
use pclfpca::simulation::{generate, DgpKind, DgpSpec, SimulatedDataset};
use pclfpca::{Error, Result};

#[derive(Parser)]
#[command(name = "pclfpca", about = "Clustered Bayesian functional PCA pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets with ground truth.
    Simulate {
        /// Generating process: 1, 2 or 3.
        #[arg(long)]
        dgp: u8,
        /// Signal-to-noise ratio.
        #[arg(long)]
        stn: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of curves.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Grid length.
        #[arg(long, default_value_t = 150)]
        t: usize,
        /// With more than one replicate, datasets go to rep000/, rep001/, ...
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth, decompose and sample the posterior per a JSON run config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Use the full-scale MCMC preset (100k burn-in, 100k kept, 3 chains).
        #[arg(long, default_value_t = false)]
        paper_scale: bool,
    },
    /// Clustering and convergence diagnostics for a fitted run.
    Diagnose {
        #[arg(long)]
        run: PathBuf,
        /// Defaults to `<run>/diagnostics`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prior simulations for the single-cluster Bayes factor.
        #[arg(long, default_value_t = 100_000)]
        prior_sims: usize,
    },
    /// Reconstruction accuracy and clustering metrics against ground truth.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Simulated dataset directory holding the ground truth.
        #[arg(long)]
        truth: PathBuf,
        /// Baseline run directory for improvement tables and CII.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Defaults to `<run>/evaluation`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Credible level for reconstruction bands.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
}

/// JSON fit configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    /// Dataset CSV, or a simulation directory containing `observed.csv`.
    input: PathBuf,
    out: PathBuf,
    /// B-spline basis size; 0 or absent picks `min(floor(T/2), 25)`.
    #[serde(default)]
    n_basis: usize,
    #[serde(default = "default_retain")]
    retain: RetainRule,
    /// Stick-breaking truncation override (default 20).
    #[serde(default)]
    truncation: Option<usize>,
    #[serde(default)]
    mode: Option<ModelMode>,
    #[serde(default)]
    relabel: Option<RelabelRule>,
    /// Full MCMC settings; absent means the desk-scale preset with `seed`.
    #[serde(default)]
    mcmc: Option<McmcConfig>,
    #[serde(default)]
    seed: u64,
    /// Baselines fitted alongside: "standard_bfpca" and/or "frequentist_fpca".
    #[serde(default)]
    baselines: Vec<String>,
}

fn default_retain() -> RetainRule {
    RetainRule::ThresholdAndMinShare { threshold: 0.9, min_share: 0.05 }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Numerical(_) | Error::NonFinite { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate { dgp, stn, seed, n, t, replicates, out } => {
            cmd_simulate(dgp, stn, seed, n, t, replicates, &rooted(&out))
        }
        Command::Fit { config, paper_scale } => cmd_fit(&config, paper_scale),
        Command::Diagnose { run, out, prior_sims } => {
            let run = rooted(&run);
            let out = out.map(|o| rooted(&o)).unwrap_or_else(|| run.join("diagnostics"));
            cmd_diagnose(&run, &out, prior_sims)
        }
        Command::Evaluate { run, truth, baseline, out, level } => {
            let run = rooted(&run);
            let out = out.map(|o| rooted(&o)).unwrap_or_else(|| run.join("evaluation"));
            cmd_evaluate(&run, &rooted(&truth), baseline.map(|b| rooted(&b)).as_deref(), &out, level)
        }
    }
}

/// Prefix relative paths with `PCLFPCA_OUT_ROOT` when set.
fn rooted(path: &Path) -> PathBuf {
    match std::env::var_os("PCLFPCA_OUT_ROOT") {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn cmd_simulate(
    dgp: u8,
    stn: f64,
    seed: u64,
    n: usize,
    t: usize,
    replicates: usize,
    out: &Path,
) -> Result<()> {
    let kind = match dgp {
        1 => DgpKind::Dgp1,
        2 => DgpKind::Dgp2,
        3 => DgpKind::Dgp3,
        other => return Err(Error::Config(format!("unknown DGP {other}; expected 1, 2 or 3"))),
    };
    if replicates == 0 {
        return Err(Error::Config("replicates must be positive".into()));
    }
    for rep in 0..replicates {
        let mut spec = DgpSpec::new(kind, stn, replicate_seed(seed, rep));
        spec.n = n;
        spec.t_len = t;
        let sim = generate(&spec)?;
        let dir = if replicates == 1 { out.to_path_buf() } else { out.join(format!("rep{rep:03}")) };
        sim.save(&dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

/// Per-replicate seed derived from the master seed and replicate index.
fn replicate_seed(master: u64, rep: usize) -> u64 {
    master.wrapping_add((rep as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn load_input(input: &Path) -> Result<FunctionalDataset> {
    let path = if input.is_dir() { input.join("observed.csv") } else { input.to_path_buf() };
    load_dataset(&path, DataFormat::Csv)
}

fn cmd_fit(config_path: &Path, paper_scale: bool) -> Result<()> {
    let text = fs::read_to_string(config_path)?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
    let out = rooted(&config.out);

    let dataset = load_input(&rooted(&config.input))?;
    let (basis, smoothed) = fit_basis(&dataset, &config)?;

    let mut mcmc = config.mcmc.unwrap_or_else(|| McmcConfig::desk_scale(config.seed));
    if paper_scale {
        mcmc = McmcConfig::paper_scale(mcmc.seed);
    }
    let model = model_from(&config, &basis, None)?;

    fit_one(&smoothed, &basis, &model, &mcmc, &out)?;
    fs::write(out.join("config_used.json"), serde_json::to_string_pretty(&config)?)?;
    println!("fit written to {}", out.display());

    for baseline in &config.baselines {
        match baseline.as_str() {
            "standard_bfpca" => {
                let std_model = model_from(&config, &basis, Some(ModelMode::StandardBfpca))?;
                let dir = out.join("baseline_standard");
                fit_one(&smoothed, &basis, &std_model, &mcmc, &dir)?;
                println!("baseline fit written to {}", dir.display());
            }
            "frequentist_fpca" => {
                // Point estimate only: empirical scores through the basis.
                let rec =
                    pclfpca::fpca::reconstruct_from_scores(&basis, &basis.scores)?;
                let dir = out.join("baseline_frequentist");
                fs::create_dir_all(&dir)?;
                reconstruction::write_matrix(&rec, &dir.join("reconstruction.csv"))?;
                println!("baseline estimate written to {}", dir.display());
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown baseline '{other}'; expected standard_bfpca or frequentist_fpca"
                )))
            }
        }
    }
    Ok(())
}

fn fit_basis(dataset: &FunctionalDataset, config: &RunConfig) -> Result<(FpcaBasis, FunctionalDataset)> {
    let spline = if config.n_basis == 0 {
        BSplineBasis::default_for(dataset.grid())?
    } else {
        let order = 4;
        if config.n_basis < order {
            return Err(Error::Config(format!(
                "n_basis {} below the cubic spline minimum of {order}",
                config.n_basis
            )));
        }
        BSplineBasis::cubic(dataset.grid(), config.n_basis - order)?
    };
    let smoothed = smooth(dataset, &spline)?;
    let centered = center(&smoothed);
    let basis = decompose(&centered, config.retain, spline.n_basis())?;
    Ok((basis, smoothed))
}

fn model_from(config: &RunConfig, basis: &FpcaBasis, force_mode: Option<ModelMode>) -> Result<ModelConfig> {
    let mode = force_mode.or(config.mode).unwrap_or(ModelMode::Pcl);
    let mut model = match mode {
        ModelMode::Pcl => ModelConfig::default_for(basis),
        ModelMode::StandardBfpca => ModelConfig::standard_for(basis),
    };
    if mode == ModelMode::Pcl {
        if let Some(j) = config.truncation {
            model.j = j;
        }
    }
    if let Some(relabel) = config.relabel {
        model.relabel = relabel;
    }
    model.validate()?;
    Ok(model)
}

fn fit_one(
    smoothed: &FunctionalDataset,
    basis: &FpcaBasis,
    model: &ModelConfig,
    mcmc: &McmcConfig,
    out: &Path,
) -> Result<()> {
    let centered = center(smoothed);
    let draws = pclfpca::sampler::run(&centered, basis, model, mcmc)?;
    fs::create_dir_all(out)?;
    pclfpca::draws::save(&draws, out)?;
    fs::write(out.join("basis.json"), basis.to_json()?)?;
    smoothed.save_csv(&out.join("smoothed.csv"))?;
    Ok(())
}

fn load_run(run: &Path) -> Result<(PosteriorDraws, FpcaBasis)> {
    let draws = pclfpca::draws::load(run)?;
    let basis = FpcaBasis::from_json(&fs::read_to_string(run.join("basis.json"))?)?;
    Ok((draws, basis))
}

#[derive(Serialize)]
struct DiagnosticsReport {
    dimensions: Vec<ClusteringPosterior>,
    chains: pclfpca::diagnostics::ChainDiagnostics,
    mean_psrf: f64,
    mean_ess: f64,
}

fn cmd_diagnose(run: &Path, out: &Path, prior_sims: usize) -> Result<()> {
    let (draws, _) = load_run(run)?;
    fs::create_dir_all(out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(draws.mcmc.seed ^ 0xd1a6);

    let mut dimensions = Vec::with_capacity(draws.model.k);
    for k in 0..draws.model.k {
        let post = clustering_posterior(&draws, k, prior_sims, &mut rng)?;
        reconstruction::write_matrix(&post.ppm, &out.join(format!("ppm_dim{k}.csv")))?;
        dimensions.push(post);
    }
    let chains = chain_diagnostics(&draws)?;
    let report = DiagnosticsReport {
        mean_psrf: chains.mean_psrf(),
        mean_ess: chains.mean_ess(),
        dimensions,
        chains,
    };
    fs::write(out.join("diagnostics.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(out.join("report.txt"), render_report(&report))?;
    println!("diagnostics written to {}", out.display());
    Ok(())
}

fn render_report(report: &DiagnosticsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dim  BF(J+>1)    P(J+=1|data)  P(J+=1|prior)  mode(J+)");
    for d in &report.dimensions {
        let _ = writeln!(
            s,
            "{:<4} {:<11.4} {:<13.4} {:<14.4} {}",
            d.dimension + 1,
            d.bayes_factor.value,
            d.bayes_factor.posterior_single,
            d.bayes_factor.prior_single,
            d.jplus.mode().unwrap_or(0),
        );
    }
    let _ = writeln!(s);
    for d in &report.dimensions {
        let _ = writeln!(s, "dim {} J+ distribution:", d.dimension + 1);
        for (jplus, mass) in d.jplus.masses() {
            let _ = writeln!(s, "  J+={jplus}: {mass:.4}");
        }
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "mean PSRF: {:.4}", report.mean_psrf);
    let _ = writeln!(s, "mean ESS:  {:.1}", report.mean_ess);
    s
}

fn cmd_evaluate(
    run: &Path,
    truth_dir: &Path,
    baseline: Option<&Path>,
    out: &Path,
    level: f64,
) -> Result<()> {
    let (draws, basis) = load_run(run)?;
    let truth = SimulatedDataset::load(truth_dir)?;
    if truth.truth.nrows() != draws.n_curves || truth.truth.ncols() != draws.n_points {
        return Err(Error::Dimension(format!(
            "run is {}x{} but truth is {}x{}",
            draws.n_curves,
            draws.n_points,
            truth.truth.nrows(),
            truth.truth.ncols()
        )));
    }

    fs::create_dir_all(out)?;
    let rec = reconstruction::reconstruct(&draws, &basis, level)?;
    rec.save_csv(&out.join("reconstruction"))?;

    let imse = metrics::imse(&rec.posterior_mean, &truth.truth)?;
    let correlation_l2 = metrics::correlation_error(&rec.posterior_mean, &truth.truth)?;
    let correlation_rms = metrics::correlation_error_rms(&rec.posterior_mean, &truth.truth)?;

    let mut ari = Vec::with_capacity(draws.model.k);
    for k in 0..draws.model.k {
        let value = match truth.true_partitions.get(k) {
            Some(part) if !part.is_empty() => {
                let map = pclfpca::diagnostics::map_partition(&draws, k)?;
                Some(metrics::ari(&map, part)?)
            }
            _ => None,
        };
        ari.push(value);
    }

    let mut cii = vec![None; draws.model.k];
    let mut improvement = None;
    let mut baseline_name = None;
    if let Some(base_dir) = baseline {
        let (base_draws, base_basis) = load_run(base_dir)?;
        let base_mean = reconstruction::posterior_mean(&base_draws, &base_basis)?;
        let base_imse = metrics::imse(&base_mean, &truth.truth)?;
        improvement = Some(metrics::improvement_report(&imse, &base_imse)?);
        baseline_name = Some(base_dir.display().to_string());
        for k in 0..draws.model.k.min(base_draws.model.k) {
            if let Some(part) = truth.true_partitions.get(k).filter(|p| !p.is_empty()) {
                let ppm_new = pclfpca::diagnostics::pairwise_probability_matrix(&draws, k)?;
                let ppm_std = pclfpca::diagnostics::pairwise_probability_matrix(&base_draws, k)?;
                let adjacency = metrics::partition_adjacency(part);
                cii[k] = Some(metrics::cii(&ppm_new, &ppm_std, &adjacency)?);
            }
        }
    }

    let report = metrics::MetricReport {
        imse,
        correlation_l2,
        correlation_rms,
        ari,
        cii,
        improvement_vs_baseline: improvement,
        baseline_name,
        correlation_estimator: "pearson_over_time".into(),
    };
    report.save(out)?;
    println!("evaluation written to {}", out.display());
    Ok(())
}
