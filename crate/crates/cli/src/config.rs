//! Run configuration documents (TOML).
//!
//! ```toml
//! seed = 0
//! trials = 100000
//! n_max = 5
//!
//! [detector]
//! t_r = 0.72
//! t_c = 0.2
//! eta = 0.8
//! p_d = 0.0
//! roundtrips = 50
//!
//! [input]
//! coherent = 1.0
//! ```

use std::path::{Path, PathBuf};

use loopdet::{DetectorParams, LossPolicy, DEFAULT_SV_THRESHOLD};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_N_MAX: usize = 5;
pub const DEFAULT_GRID: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSpec {
    Coherent(f64),
    Fock(usize),
    Distribution(PathBuf),
    Mixture(PathBuf),
}

impl std::fmt::Display for InputSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputSpec::Coherent(i) => write!(f, "coherent {i}"),
            InputSpec::Fock(n) => write!(f, "fock {n}"),
            InputSpec::Distribution(p) => write!(f, "distribution {}", p.display()),
            InputSpec::Mixture(p) => write!(f, "mixture {}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub histogram: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
    pub result: Option<PathBuf>,
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSpec {
    pub k: usize,
    pub grid: usize,
    pub policy: LossPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub detector: DetectorParams,
    pub input: Option<InputSpec>,
    pub trials: u64,
    pub seed: u64,
    pub n_max: usize,
    pub sv_threshold: f64,
    pub workers: Option<usize>,
    pub output: OutputPaths,
    pub optimize: Option<OptimizeSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    detector: DetectorParams,
    input: Option<RawInput>,
    trials: Option<u64>,
    seed: Option<u64>,
    n_max: Option<usize>,
    sv_threshold: Option<f64>,
    workers: Option<usize>,
    output: Option<RawOutput>,
    optimize: Option<RawOptimize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    coherent: Option<f64>,
    fock: Option<usize>,
    distribution: Option<PathBuf>,
    mixture: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    histogram: Option<PathBuf>,
    matrix: Option<PathBuf>,
    result: Option<PathBuf>,
    dir: Option<PathBuf>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    FixedExcessLoss,
    FixedTransmission,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimize {
    k: usize,
    grid: Option<usize>,
    policy: Option<PolicyKind>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Loss policy keeping the detector's current excess loss or transmission.
pub fn policy_for(detector: &DetectorParams, fixed_transmission: bool) -> LossPolicy {
    if fixed_transmission {
        LossPolicy::FixedTransmission(detector.t_r)
    } else {
        LossPolicy::FixedExcessLoss(detector.excess_loss())
    }
}

impl RunConfig {
    /// Parse a configuration document. Relative paths are resolved against
    /// `base_dir` and must exist.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        raw.detector
            .validate()
            .map_err(|e| config_err(format!("[detector]: {e}")))?;

        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        let existing = |key: &str, p: PathBuf| {
            let p = resolve(p);
            if p.is_file() {
                Ok(p)
            } else {
                Err(config_err(format!(
                    "input.{key}: file {} does not exist",
                    p.display()
                )))
            }
        };

        let input = match raw.input {
            None => None,
            Some(i) => {
                let set = [
                    i.coherent.is_some(),
                    i.fock.is_some(),
                    i.distribution.is_some(),
                    i.mixture.is_some(),
                ]
                .iter()
                .filter(|&&b| b)
                .count();
                if set != 1 {
                    return Err(config_err(format!(
                        "[input]: exactly one of coherent, fock, distribution, mixture must be set ({set} given)"
                    )));
                }
                Some(match (i.coherent, i.fock, i.distribution, i.mixture) {
                    (Some(c), ..) => {
                        if !(c >= 0.0 && c.is_finite()) {
                            return Err(config_err(format!(
                                "input.coherent: intensity must be finite and >= 0, got {c}"
                            )));
                        }
                        InputSpec::Coherent(c)
                    }
                    (_, Some(n), ..) => InputSpec::Fock(n),
                    (_, _, Some(p), _) => InputSpec::Distribution(existing("distribution", p)?),
                    (_, _, _, Some(p)) => InputSpec::Mixture(existing("mixture", p)?),
                    _ => unreachable!("exactly one input variant is set"),
                })
            }
        };

        let trials = raw.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            return Err(config_err("trials: must be at least 1"));
        }
        let sv_threshold = raw.sv_threshold.unwrap_or(DEFAULT_SV_THRESHOLD);
        if !(sv_threshold > 0.0 && sv_threshold < 1.0) {
            return Err(config_err(format!(
                "sv_threshold: must lie in (0, 1), got {sv_threshold}"
            )));
        }
        if raw.workers == Some(0) {
            return Err(config_err("workers: must be at least 1"));
        }
        let output = raw
            .output
            .map(|o| OutputPaths {
                histogram: o.histogram.map(resolve),
                matrix: o.matrix.map(resolve),
                result: o.result.map(resolve),
                dir: o.dir.map(resolve),
            })
            .unwrap_or_default();
        let optimize = raw.optimize.map(|o| OptimizeSpec {
            k: o.k,
            grid: o.grid.unwrap_or(DEFAULT_GRID),
            policy: policy_for(
                &raw.detector,
                matches!(o.policy, Some(PolicyKind::FixedTransmission)),
            ),
        });

        Ok(Self {
            detector: raw.detector,
            input,
            trials,
            seed: raw.seed.unwrap_or(DEFAULT_SEED),
            n_max: raw.n_max.unwrap_or(DEFAULT_N_MAX),
            sv_threshold,
            workers: raw.workers,
            output,
            optimize,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn require_input(&self) -> Result<&InputSpec, CliError> {
        self.input
            .as_ref()
            .ok_or_else(|| config_err("this command needs an [input] section"))
    }
}
