use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loopdet_cli::commands::{self, Fig2Options, Overrides, ReconstructSource};
use loopdet_cli::config::policy_for;
use loopdet_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "loopdet",
    version,
    about = "Fiber-loop photon-counting detector toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    sv_threshold: Option<f64>,
    /// Output file; defaults to the config's output path, then stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            n_max: self.n_max,
            workers: self.workers,
            sv_threshold: self.sv_threshold,
        }
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::from_path(&self.config)?;
        self.overrides().apply(&mut cfg)?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    /// Keep 1 - t_r - t_c fixed while t_c moves.
    ExcessLoss,
    /// Keep t_r fixed; t_c ranges up to 1 - t_r.
    FixedTransmission,
}

#[derive(Subcommand)]
enum Command {
    /// Write the response matrix w(k|n).
    Response(Common),
    /// Simulate a count histogram for the configured input.
    Simulate(Common),
    /// Reconstruct the photon-number distribution from a histogram.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Histogram file (defaults to the config's output.histogram).
        #[arg(long, conflicts_with = "exact")]
        histogram: Option<PathBuf>,
        /// Use exact count probabilities: from a `k,probability` file if
        /// given, otherwise from the configured input.
        #[arg(long, num_args = 0..=1)]
        exact: Option<Option<PathBuf>>,
        /// Exit with status 2 if the system is rank-deficient.
        #[arg(long)]
        strict: bool,
    },
    /// Tabulate the confidence C_k for k = 0..k_max.
    Confidence {
        #[command(flatten)]
        common: Common,
        /// Prior `n,probability` file (defaults to the configured input).
        #[arg(long)]
        prior: Option<PathBuf>,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Scan and maximise C_k over the coupler fraction t_c.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        #[arg(long)]
        prior: Option<PathBuf>,
    },
    /// Singular values, condition number and invertibility of w(k|n).
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strict: bool,
    },
    /// Simulate and reconstruct coherent (mean 1) and single-photon inputs.
    Fig2 {
        /// Optional config overriding the built-in detector and run settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "fig2_out")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Response(c) => {
            let w = commands::response(&c.load()?, c.out.as_deref())?;
            eprintln!("response matrix {}x{}", w.rows(), w.cols());
        }
        Command::Simulate(c) => {
            let h = commands::simulate(&c.load()?, c.out.as_deref())?;
            eprintln!("simulated {} trials, mean count {:.6}", h.trials, h.mean());
        }
        Command::Reconstruct {
            common,
            histogram,
            exact,
            strict,
        } => {
            let cfg = common.load()?;
            let source = match exact {
                Some(Some(path)) => ReconstructSource::ExactFile(path),
                Some(None) => ReconstructSource::ExactModel,
                None => ReconstructSource::Histogram(
                    histogram
                        .or_else(|| cfg.output.histogram.clone())
                        .ok_or_else(|| {
                            CliError::Usage("no histogram given (--histogram)".into())
                        })?,
                ),
            };
            let doc = commands::reconstruct(&cfg, &source, strict, common.out.as_deref())?;
            if doc.reconstruction.rank_deficient {
                eprintln!(
                    "warning: rank-deficient system (rank {} of {})",
                    doc.reconstruction.numerical_rank,
                    cfg.n_max + 1
                );
            }
        }
        Command::Confidence {
            common,
            prior,
            k_max,
        } => {
            commands::confidence_table(
                &common.load()?,
                prior.as_deref(),
                k_max,
                common.out.as_deref(),
            )?;
        }
        Command::Optimize {
            common,
            k,
            grid,
            policy,
            prior,
        } => {
            let cfg = common.load()?;
            let policy =
                policy.map(|p| policy_for(&cfg.detector, matches!(p, Policy::FixedTransmission)));
            let opt = commands::optimize(
                &cfg,
                k,
                grid,
                policy,
                prior.as_deref(),
                common.out.as_deref(),
            )?;
            eprintln!(
                "t_c* = {:.6}, C* = {:.6}{}",
                opt.t_c,
                opt.confidence,
                if opt.plateau { " (plateau)" } else { "" }
            );
        }
        Command::Check { common, strict } => {
            let doc = commands::check(&common.load()?, strict, common.out.as_deref())?;
            eprintln!(
                "rank {}, condition number {:.3e}, invertible: {}",
                doc.conditioning.numerical_rank,
                doc.conditioning.condition_number,
                doc.conditioning.invertible
            );
        }
        Command::Fig2 {
            config,
            seed,
            trials,
            n_max,
            workers,
            out_dir,
        } => {
            let mut opts = match &config {
                Some(path) => Fig2Options::from_config(&RunConfig::from_path(path)?),
                None => Fig2Options::default(),
            };
            let overrides = Overrides {
                seed,
                trials,
                n_max,
                workers,
                sv_threshold: None,
            };
            apply_fig2(&mut opts, &overrides)?;
            let report = commands::fig2(&opts, &out_dir)?;
            print_fig2(&report, &out_dir);
        }
    }
    Ok(())
}

fn apply_fig2(opts: &mut Fig2Options, o: &Overrides) -> Result<(), CliError> {
    if o.trials == Some(0) || o.workers == Some(0) {
        return Err(CliError::Usage(
            "--trials and --workers must be at least 1".into(),
        ));
    }
    opts.seed = o.seed.unwrap_or(opts.seed);
    opts.trials = o.trials.unwrap_or(opts.trials);
    opts.n_max = o.n_max.unwrap_or(opts.n_max);
    opts.workers = o.workers.or(opts.workers);
    Ok(())
}

fn print_fig2(report: &commands::Fig2Report, out_dir: &Path) {
    for panel in [&report.coherent, &report.fock] {
        println!("{}:", panel.input);
        println!("  n  exact      estimate   std_err    ok");
        for r in &panel.comparison {
            println!(
                "  {}  {:<9.6}  {:<9.6}  {:<9.6}  {}",
                r.n, r.exact, r.rho_hat, r.std_error, r.within_3_sigma
            );
        }
    }
    println!("files written to {}", out_dir.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
