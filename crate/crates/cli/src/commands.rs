//! Subcommand implementations. Each returns the in-memory result alongside
//! writing its file so callers (and tests) can inspect both.

use std::path::{Path, PathBuf};

use loopdet::{
    condition_diagnostics, confidence, count_distribution_coherent, count_distribution_mixture,
    forward_counts, optimize_coupling, params_digest, poisson_pmf, reconstruct_probabilities,
    reconstruct_svd, response_matrix, simulate_coherent, simulate_distribution, simulate_fock,
    simulate_mixture, ConditioningReport, CountDistribution, CountHistogram, CouplingOptimum,
    DetectorParams, Error, LossPolicy, PhotonNumberDistribution, ReconstructionResult, SimOptions,
};
use serde::{Deserialize, Serialize};

use crate::config::{InputSpec, RunConfig, DEFAULT_N_MAX, DEFAULT_SEED, DEFAULT_TRIALS};
use crate::error::CliError;
use crate::formats::{self, fmt_f64, Metadata};

/// Absolute slack added to `3σ` when comparing estimates whose propagated
/// variance is zero up to roundoff.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub n_max: Option<usize>,
    pub workers: Option<usize>,
    pub sv_threshold: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            if t == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            cfg.trials = t;
        }
        if let Some(n) = self.n_max {
            cfg.n_max = n;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(CliError::Usage("--workers must be at least 1".into()));
            }
            cfg.workers = Some(w);
        }
        if let Some(t) = self.sv_threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(CliError::Usage("--sv-threshold must lie in (0, 1)".into()));
            }
            cfg.sv_threshold = t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub detector: DetectorParams,
    pub params_digest: String,
    pub input: Option<String>,
    pub source: String,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub n_max: usize,
    pub sv_threshold: f64,
}

impl RunMetadata {
    fn new(cfg: &RunConfig, source: &str) -> Self {
        Self {
            tool: concat!("loopdet ", env!("CARGO_PKG_VERSION")).to_string(),
            detector: cfg.detector,
            params_digest: params_digest(&cfg.detector),
            input: cfg.input.as_ref().map(|i| i.to_string()),
            source: source.to_string(),
            seed: None,
            trials: None,
            n_max: cfg.n_max,
            sv_threshold: cfg.sv_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub metadata: RunMetadata,
    pub reconstruction: ReconstructionResult,
    pub conditioning: ConditioningReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckDocument {
    pub metadata: RunMetadata,
    pub conditioning: ConditioningReport,
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        workers: cfg.workers,
    }
}

fn input_metadata(cfg: &RunConfig) -> Metadata {
    let mut meta = formats::detector_metadata(&cfg.detector);
    if let Some(i) = &cfg.input {
        meta.push(("input".into(), i.to_string()));
    }
    meta
}

/// Photon-number distribution of the configured input, truncated at
/// `n_max` and renormalised.
pub fn prior_for(input: &InputSpec, n_max: usize) -> Result<PhotonNumberDistribution, CliError> {
    Ok(match input {
        InputSpec::Coherent(i) => PhotonNumberDistribution::poisson(*i, n_max)?,
        InputSpec::Fock(n) => PhotonNumberDistribution::fock(*n, n_max)?,
        InputSpec::Distribution(p) => formats::read_distribution(p)?,
        InputSpec::Mixture(p) => {
            let mixture = formats::read_mixture(p)?;
            let mut rho = vec![0.0; n_max + 1];
            for (w, i) in mixture {
                for (acc, q) in rho.iter_mut().zip(poisson_pmf(i, n_max)?) {
                    *acc += w * q;
                }
            }
            let total: f64 = rho.iter().sum();
            rho.iter_mut().for_each(|r| *r /= total);
            PhotonNumberDistribution::new(rho)?
        }
    })
}

/// Exact count distribution of the configured input.
pub fn exact_counts(cfg: &RunConfig, input: &InputSpec) -> Result<CountDistribution, CliError> {
    let params = &cfg.detector;
    Ok(match input {
        InputSpec::Coherent(i) => count_distribution_coherent(params, *i)?,
        InputSpec::Fock(n) => {
            let rho = PhotonNumberDistribution::fock(*n, *n)?;
            forward_counts(&response_matrix(params, *n)?, &rho)?
        }
        InputSpec::Distribution(p) => {
            let rho = formats::read_distribution(p)?;
            forward_counts(&response_matrix(params, rho.n_max())?, &rho)?
        }
        InputSpec::Mixture(p) => count_distribution_mixture(params, &formats::read_mixture(p)?)?,
    })
}

pub fn simulate_input(cfg: &RunConfig, input: &InputSpec) -> Result<CountHistogram, CliError> {
    let (params, n, seed, opts) = (&cfg.detector, cfg.trials, cfg.seed, sim_options(cfg));
    Ok(match input {
        InputSpec::Coherent(i) => simulate_coherent(params, *i, n, seed, opts)?,
        InputSpec::Fock(k) => simulate_fock(params, *k, n, seed, opts)?,
        InputSpec::Distribution(p) => {
            simulate_distribution(params, &formats::read_distribution(p)?, n, seed, opts)?
        }
        InputSpec::Mixture(p) => {
            simulate_mixture(params, &formats::read_mixture(p)?, n, seed, opts)?
        }
    })
}

pub fn response(cfg: &RunConfig, out: Option<&Path>) -> Result<loopdet::ResponseMatrix, CliError> {
    let w = response_matrix(&cfg.detector, cfg.n_max)?;
    formats::write_text(
        out.or(cfg.output.matrix.as_deref()),
        &formats::matrix_to_string(&w),
    )?;
    Ok(w)
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<CountHistogram, CliError> {
    let input = cfg.require_input()?;
    let hist = simulate_input(cfg, input)?;
    let text = formats::histogram_to_string(&hist, &input_metadata(cfg));
    formats::write_text(out.or(cfg.output.histogram.as_deref()), &text)?;
    Ok(hist)
}

#[derive(Debug, Clone)]
pub enum ReconstructSource {
    Histogram(PathBuf),
    /// `k,probability` file of exact count probabilities.
    ExactFile(PathBuf),
    /// Exact probabilities of the configured input.
    ExactModel,
}

pub fn reconstruct(
    cfg: &RunConfig,
    source: &ReconstructSource,
    strict: bool,
    out: Option<&Path>,
) -> Result<ResultDocument, CliError> {
    let w = response_matrix(&cfg.detector, cfg.n_max)?;
    let mut meta = RunMetadata::new(cfg, "histogram");
    let reconstruction = match source {
        ReconstructSource::Histogram(path) => {
            let hist = formats::read_histogram(path)?;
            if !hist.params_digest.is_empty() && hist.params_digest != meta.params_digest {
                eprintln!(
                    "warning: {} was produced with detector {} but the config describes {}",
                    path.display(),
                    hist.params_digest,
                    meta.params_digest
                );
            }
            meta.seed = Some(hist.seed);
            meta.trials = Some(hist.trials);
            reconstruct_svd(&w, &hist, cfg.sv_threshold)?
        }
        ReconstructSource::ExactFile(path) => {
            meta.source = "exact".into();
            reconstruct_probabilities(
                &w,
                &formats::read_probabilities(path)?,
                None,
                cfg.sv_threshold,
            )?
        }
        ReconstructSource::ExactModel => {
            meta.source = "exact".into();
            let p = exact_counts(cfg, cfg.require_input()?)?;
            reconstruct_probabilities(&w, p.probs(), None, cfg.sv_threshold)?
        }
    };
    let doc = ResultDocument {
        metadata: meta,
        conditioning: condition_diagnostics(&w, cfg.sv_threshold)?,
        reconstruction,
    };
    formats::write_text(
        out.or(cfg.output.result.as_deref()),
        &formats::to_json(&doc),
    )?;
    if strict && doc.reconstruction.rank_deficient {
        return Err(CliError::RankDeficient(format!(
            "numerical rank {} < {} columns",
            doc.reconstruction.numerical_rank,
            cfg.n_max + 1
        )));
    }
    Ok(doc)
}

pub fn check(cfg: &RunConfig, strict: bool, out: Option<&Path>) -> Result<CheckDocument, CliError> {
    let w = response_matrix(&cfg.detector, cfg.n_max)?;
    let doc = CheckDocument {
        metadata: RunMetadata::new(cfg, "response"),
        conditioning: condition_diagnostics(&w, cfg.sv_threshold)?,
    };
    formats::write_text(out, &formats::to_json(&doc))?;
    if strict && !doc.conditioning.invertible {
        return Err(CliError::RankDeficient(format!(
            "numerical rank {} < {} columns",
            doc.conditioning.numerical_rank,
            cfg.n_max + 1
        )));
    }
    Ok(doc)
}

fn load_prior(cfg: &RunConfig, prior: Option<&Path>) -> Result<PhotonNumberDistribution, CliError> {
    match prior {
        Some(p) => formats::read_distribution(p),
        None => prior_for(cfg.require_input()?, cfg.n_max),
    }
}

/// `C_k` for `k = 0..=k_max`; undefined events come back as `None`.
pub fn confidence_table(
    cfg: &RunConfig,
    prior: Option<&Path>,
    k_max: Option<usize>,
    out: Option<&Path>,
) -> Result<Vec<(usize, Option<f64>)>, CliError> {
    let prior = load_prior(cfg, prior)?;
    let w = response_matrix(&cfg.detector, prior.n_max())?;
    let k_max = k_max.unwrap_or(prior.n_max().min(cfg.detector.roundtrips));
    let mut table = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        match confidence(&w, &prior, k) {
            Ok(c) => table.push((k, Some(c))),
            Err(Error::UndefinedEvent(_)) => table.push((k, None)),
            Err(e) => return Err(e.into()),
        }
    }
    let mut meta = input_metadata(cfg);
    meta.push(("prior_n_max".into(), prior.n_max().to_string()));
    let rows: Vec<(String, f64)> = table
        .iter()
        .map(|&(k, c)| (k.to_string(), c.unwrap_or(f64::NAN)))
        .collect();
    let text = formats::pairs_to_string("loopdet confidence C_k", &meta, "k,confidence", &rows);
    formats::write_text(out, &text)?;
    Ok(table)
}

pub fn optimize(
    cfg: &RunConfig,
    k: Option<usize>,
    grid: Option<usize>,
    policy: Option<LossPolicy>,
    prior: Option<&Path>,
    out: Option<&Path>,
) -> Result<CouplingOptimum, CliError> {
    let spec = cfg.optimize.as_ref();
    let k = k
        .or(spec.map(|s| s.k))
        .ok_or_else(|| CliError::Usage("optimize needs a target click count (--k)".into()))?;
    let grid = grid
        .or(spec.map(|s| s.grid))
        .unwrap_or(crate::config::DEFAULT_GRID);
    let policy = policy
        .or(spec.map(|s| s.policy))
        .unwrap_or(LossPolicy::FixedExcessLoss(cfg.detector.excess_loss()));
    let prior = load_prior(cfg, prior)?;
    let opt = optimize_coupling(&cfg.detector, &prior, k, policy, grid)?;

    let mut meta = input_metadata(cfg);
    meta.push(("k".into(), k.to_string()));
    meta.push(("policy".into(), format!("{policy:?}")));
    meta.push(("grid".into(), grid.to_string()));
    meta.push(("t_c_star".into(), fmt_f64(opt.t_c)));
    meta.push(("confidence_star".into(), fmt_f64(opt.confidence)));
    meta.push(("plateau".into(), opt.plateau.to_string()));
    let rows: Vec<(String, f64)> = opt.curve.iter().map(|&(t, c)| (fmt_f64(t), c)).collect();
    let text = formats::pairs_to_string("loopdet coupling scan", &meta, "t_c,confidence", &rows);
    formats::write_text(out, &text)?;
    Ok(opt)
}

/// Settings of the two-panel demonstration: coherent input of mean one
/// photon and a single-photon Fock state through the same detector.
#[derive(Debug, Clone)]
pub struct Fig2Options {
    pub detector: DetectorParams,
    pub seed: u64,
    pub trials: u64,
    pub n_max: usize,
    pub sv_threshold: f64,
    pub workers: Option<usize>,
}

impl Default for Fig2Options {
    fn default() -> Self {
        Self {
            detector: DetectorParams {
                t_r: 0.72,
                t_c: 0.2,
                eta: 0.8,
                p_d: 0.0,
                roundtrips: 50,
            },
            seed: DEFAULT_SEED,
            trials: DEFAULT_TRIALS,
            n_max: DEFAULT_N_MAX,
            sv_threshold: loopdet::DEFAULT_SV_THRESHOLD,
            workers: None,
        }
    }
}

impl Fig2Options {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            detector: cfg.detector,
            seed: cfg.seed,
            trials: cfg.trials,
            n_max: cfg.n_max,
            sv_threshold: cfg.sv_threshold,
            workers: cfg.workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub exact: f64,
    pub rho_hat: f64,
    pub std_error: f64,
    pub within_3_sigma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Panel {
    pub input: String,
    pub histogram: Vec<u64>,
    pub reconstruction: ReconstructionResult,
    pub comparison: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Report {
    pub metadata: RunMetadata,
    pub conditioning: ConditioningReport,
    pub coherent: Fig2Panel,
    pub fock: Fig2Panel,
}

fn panel(input: &str, hist: &CountHistogram, r: ReconstructionResult, exact: &[f64]) -> Fig2Panel {
    let comparison = (0..=r.n_max)
        .map(|n| {
            let (est, err) = (r.rho_hat[n], r.std_errors[n]);
            ComparisonRow {
                n,
                exact: exact[n],
                rho_hat: est,
                std_error: err,
                within_3_sigma: (est - exact[n]).abs() <= 3.0 * err + SIGMA_FLOOR,
            }
        })
        .collect();
    Fig2Panel {
        input: input.to_string(),
        histogram: hist.tallies.clone(),
        reconstruction: r,
        comparison,
    }
}

/// Simulate both panels, reconstruct, and write histograms, the response
/// matrix, a comparison table and a JSON report into `out_dir`.
pub fn fig2(opts: &Fig2Options, out_dir: &Path) -> Result<Fig2Report, CliError> {
    let cfg = RunConfig {
        detector: opts.detector,
        input: None,
        trials: opts.trials,
        seed: opts.seed,
        n_max: opts.n_max,
        sv_threshold: opts.sv_threshold,
        workers: opts.workers,
        output: Default::default(),
        optimize: None,
    };
    let w = response_matrix(&cfg.detector, cfg.n_max)?;
    let sim = sim_options(&cfg);
    let coherent_hist = simulate_coherent(&cfg.detector, 1.0, cfg.trials, cfg.seed, sim)?;
    let fock_hist = simulate_fock(&cfg.detector, 1, cfg.trials, cfg.seed, sim)?;

    let coherent_exact = poisson_pmf(1.0, cfg.n_max)?;
    let fock_exact = PhotonNumberDistribution::fock(1, cfg.n_max.max(1))?
        .probs()
        .to_vec();

    let coherent = panel(
        "coherent 1",
        &coherent_hist,
        reconstruct_svd(&w, &coherent_hist, cfg.sv_threshold)?,
        &coherent_exact,
    );
    let fock = panel(
        "fock 1",
        &fock_hist,
        reconstruct_svd(&w, &fock_hist, cfg.sv_threshold)?,
        &fock_exact,
    );
    let mut metadata = RunMetadata::new(&cfg, "fig2");
    metadata.seed = Some(cfg.seed);
    metadata.trials = Some(cfg.trials);
    let report = Fig2Report {
        metadata,
        conditioning: condition_diagnostics(&w, cfg.sv_threshold)?,
        coherent,
        fock,
    };

    let mut meta = formats::detector_metadata(&cfg.detector);
    meta.push(("input".into(), "coherent 1".into()));
    formats::write_text(
        Some(&out_dir.join("coherent_histogram.csv")),
        &formats::histogram_to_string(&coherent_hist, &meta),
    )?;
    meta.pop();
    meta.push(("input".into(), "fock 1".into()));
    formats::write_text(
        Some(&out_dir.join("fock_histogram.csv")),
        &formats::histogram_to_string(&fock_hist, &meta),
    )?;
    formats::write_text(
        Some(&out_dir.join("response_matrix.csv")),
        &formats::matrix_to_string(&w),
    )?;

    meta.pop();
    meta.push(("seed".into(), cfg.seed.to_string()));
    meta.push(("trials".into(), cfg.trials.to_string()));
    let mut table = String::from("# loopdet reconstruction vs exact\n");
    for (k, v) in &meta {
        table.push_str(&format!("# {k} = {v}\n"));
    }
    table.push_str("panel,n,exact,rho_hat,std_error,within_3_sigma\n");
    for p in [&report.coherent, &report.fock] {
        let name = p.input.split(' ').next().unwrap_or("");
        for row in &p.comparison {
            table.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                row.n,
                fmt_f64(row.exact),
                fmt_f64(row.rho_hat),
                fmt_f64(row.std_error),
                row.within_3_sigma
            ));
        }
    }
    formats::write_text(Some(&out_dir.join("comparison.csv")), &table)?;
    formats::write_text(
        Some(&out_dir.join("fig2_result.json")),
        &formats::to_json(&report),
    )?;
    Ok(report)
}
