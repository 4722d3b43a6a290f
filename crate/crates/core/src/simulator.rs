//! Seeded Monte Carlo count histograms.
//!
//! Every trial draws from its own ChaCha8 stream selected by the trial
//! index, so a histogram depends only on `(params, input, trials, seed)`.
//! Trials are split into fixed-size chunks that run on a rayon pool and are
//! merged by tally addition, which makes the worker count irrelevant to the
//! result.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::response::{DetectorParams, PhotonNumberDistribution};

const CHUNK: u64 = 4096;

/// Click-count tallies over `trials` repetitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub tallies: Vec<u64>,
    pub trials: u64,
    pub seed: u64,
    pub params_digest: String,
}

impl CountHistogram {
    /// Build from tallies read back from storage; checks the trial total.
    pub fn new(tallies: Vec<u64>, trials: u64, seed: u64, params_digest: String) -> Result<Self> {
        if tallies.is_empty() {
            return invalid("histogram has no bins");
        }
        let total: u64 = tallies.iter().sum();
        if total != trials {
            return invalid(format!("tallies sum to {total} but trials = {trials}"));
        }
        Ok(Self {
            tallies,
            trials,
            seed,
            params_digest,
        })
    }

    pub fn max_count(&self) -> usize {
        self.tallies.len() - 1
    }

    /// Empirical frequencies `tallies / trials`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.trials as f64;
        self.tallies.iter().map(|&t| t as f64 / n).collect()
    }

    pub fn mean(&self) -> f64 {
        let s: u64 = self
            .tallies
            .iter()
            .enumerate()
            .map(|(k, &t)| k as u64 * t)
            .sum();
        s as f64 / self.trials as f64
    }
}

/// Short stable identifier for a parameter set (hex SHA-256 prefix of the
/// parameters' exact bit patterns).
pub fn params_digest(params: &DetectorParams) -> String {
    let mut h = Sha256::new();
    for v in [params.t_r, params.t_c, params.eta, params.p_d] {
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((params.roundtrips as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

/// Cumulative per-photon fate table: entry `i` is the probability of being
/// detected in roundtrips `1..=i+1`; anything above the last entry is "never".
struct FateTable {
    cumulative: Vec<f64>,
}

impl FateTable {
    fn new(params: &DetectorParams) -> Self {
        let mut acc = 0.0;
        let cumulative = params
            .detection_rates()
            .into_iter()
            .map(|r| {
                acc += r;
                acc
            })
            .collect();
        Self { cumulative }
    }

    /// Roundtrip index (0-based) in which the photon is detected, if any.
    fn sample<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        (i < self.cumulative.len()).then_some(i)
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn run_trials<F>(
    params: &DetectorParams,
    trials: u64,
    seed: u64,
    opts: SimOptions,
    trial: F,
) -> Result<CountHistogram>
where
    F: Fn(&mut ChaCha8Rng, &mut [bool]) -> usize + Sync,
{
    params.validate()?;
    if trials == 0 {
        return invalid("trials must be at least 1");
    }
    let l = params.roundtrips;
    let chunks = trials.div_ceil(CHUNK);
    let work = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut tallies = vec![0u64; l + 1];
                let mut windows = vec![false; l];
                for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                    let mut rng = trial_rng(seed, t);
                    windows.iter_mut().for_each(|w| *w = false);
                    let k = trial(&mut rng, &mut windows);
                    tallies[k] += 1;
                }
                tallies
            })
            .reduce(
                || vec![0u64; l + 1],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };
    let tallies = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(CountHistogram {
        tallies,
        trials,
        seed,
        params_digest: params_digest(params),
    })
}

/// One trial with `n` photons injected; `windows` is scratch of length `L`.
fn fock_trial<R: Rng>(
    params: &DetectorParams,
    fates: &FateTable,
    n: usize,
    rng: &mut R,
    windows: &mut [bool],
) -> usize {
    for _ in 0..n {
        if let Some(i) = fates.sample(rng) {
            windows[i] = true;
        }
    }
    if params.p_d > 0.0 {
        for w in windows.iter_mut() {
            if rng.random::<f64>() < params.p_d {
                *w = true;
            }
        }
    }
    windows.iter().filter(|&&w| w).count()
}

/// Histogram for a Fock state of `n` photons.
pub fn simulate_fock(
    params: &DetectorParams,
    n: usize,
    trials: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<CountHistogram> {
    let fates = FateTable::new(params);
    run_trials(params, trials, seed, opts, |rng, windows| {
        fock_trial(params, &fates, n, rng, windows)
    })
}

/// Histogram for coherent input of mean intensity `intensity`, using
/// independent Bernoulli clicks per roundtrip.
pub fn simulate_coherent(
    params: &DetectorParams,
    intensity: f64,
    trials: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<CountHistogram> {
    let click: Vec<f64> = (1..=params.roundtrips)
        .map(|i| crate::response::click_probability(params, i, intensity))
        .collect::<Result<_>>()?;
    run_trials(params, trials, seed, opts, |rng, _| {
        click.iter().filter(|&&p| rng.random::<f64>() < p).count()
    })
}

/// Histogram for a discrete mixture of coherent intensities given as
/// `(weight, intensity)` pairs: each trial picks a component, then clicks
/// roundtrip by roundtrip as in [`simulate_coherent`].
pub fn simulate_mixture(
    params: &DetectorParams,
    mixture: &[(f64, f64)],
    trials: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<CountHistogram> {
    // validates weights and intensities
    crate::response::count_distribution_mixture(params, mixture)?;
    let mut acc = 0.0;
    let components: Vec<(f64, Vec<f64>)> = mixture
        .iter()
        .map(|&(w, intensity)| {
            acc += w;
            let click = (1..=params.roundtrips)
                .map(|i| crate::response::click_probability(params, i, intensity))
                .collect::<Result<Vec<f64>>>()?;
            Ok((acc, click))
        })
        .collect::<Result<_>>()?;
    let last = components.len() - 1;
    run_trials(params, trials, seed, opts, |rng, _| {
        let u: f64 = rng.random::<f64>() * acc;
        let c = components.partition_point(|(cum, _)| *cum <= u).min(last);
        components[c]
            .1
            .iter()
            .filter(|&&p| rng.random::<f64>() < p)
            .count()
    })
}

/// Histogram for a Fock-diagonal input: each trial draws `n ~ ϱ` and then
/// follows the Fock path.
pub fn simulate_distribution(
    params: &DetectorParams,
    rho: &PhotonNumberDistribution,
    trials: u64,
    seed: u64,
    opts: SimOptions,
) -> Result<CountHistogram> {
    let fates = FateTable::new(params);
    let mut acc = 0.0;
    let cumulative: Vec<f64> = rho
        .probs()
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    let last = cumulative.len() - 1;
    run_trials(params, trials, seed, opts, |rng, windows| {
        let u: f64 = rng.random::<f64>() * acc;
        let n = cumulative.partition_point(|&c| c <= u).min(last);
        fock_trial(params, &fates, n, rng, windows)
    })
}
