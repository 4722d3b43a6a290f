//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p loopdet-cli --test acceptance`.
//!
//! Criteria listed in `KNOWN_UNATTAINABLE` still print FAIL, tagged as
//! expected, with the analysis in the detail text; they only fail the process
//! when `LOOPDET_ACCEPTANCE_STRICT=1`. Any other failure always does.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use loopdet::stats::chi_square_gof;
use loopdet::{
    condition_diagnostics, count_distribution_coherent, count_distribution_mixture,
    effective_efficiency, forward_counts, poisson_approximation, poisson_tail_mass,
    reconstruct_probabilities, response_matrix, response_matrix_bruteforce, simulate_coherent,
    simulate_fock, DetectorParams, PhotonNumberDistribution, SimOptions, DEFAULT_SV_THRESHOLD,
};
use loopdet_cli::commands::{fig2, Fig2Options, SIGMA_FLOOR};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const ORACLE_TOL: f64 = 1e-10;
const ORACLE_BUDGET: Duration = Duration::from_secs(10);
const FIG2_BUDGET: Duration = Duration::from_secs(60);
const EFFICIENCY_TOL: f64 = 1e-12;
const MEAN_TOL: f64 = 1e-12;
const POISSON_TV_TOL: f64 = 1e-3;
const NORM_TOL: f64 = 1e-9;
const GOF_ALPHA: f64 = 1e-3;
const INVERSION_TOL: f64 = 1e-6;
const TRIALS: u64 = 100_000;
const KNOWN_UNATTAINABLE: &[usize] = &[3];

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fig2_detector() -> DetectorParams {
    DetectorParams::new(0.72, 0.2, 0.8, 0.0, 50).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut points = 0;
    let mut worst: f64 = 0.0;
    for (t_r, t_c) in [(0.3, 0.05), (0.6, 0.2), (0.72, 0.28)] {
        for eta in [0.5, 0.8, 1.0] {
            for p_d in [0.0, 0.01, 0.1] {
                points += 1;
                for l in 1..=4 {
                    let p = DetectorParams::new(t_r, t_c, eta, p_d, l).unwrap();
                    for n_max in 0..=4 {
                        let fast = response_matrix(&p, n_max).unwrap();
                        let slow = response_matrix_bruteforce(&p, n_max).unwrap();
                        for k in 0..=l {
                            for n in 0..=n_max {
                                worst = worst.max((fast.get(k, n) - slow.get(k, n)).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        points >= 27 && worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET,
        format!(
            "{points} parameter points, L 1..4, n_max 0..4: max |diff| = {worst:.2e} (tol {ORACLE_TOL:e}), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fig2_reproduction() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let report = match fig2(&Fig2Options::default(), dir.path()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("fig2 failed: {e}")),
    };
    let elapsed = start.elapsed();
    let coherent_ok = report.coherent.comparison.iter().all(|r| r.within_3_sigma);
    let fock_ok = report.fock.comparison.iter().all(|r| r.within_3_sigma);
    let z = |rows: &[loopdet_cli::commands::ComparisonRow]| {
        rows.iter()
            .map(|r| {
                if r.std_error > SIGMA_FLOOR {
                    format!("{:+.2}", (r.rho_hat - r.exact) / r.std_error)
                } else {
                    format!("d={:.0e}", r.rho_hat - r.exact)
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        coherent_ok && fock_ok && elapsed < FIG2_BUDGET,
        format!(
            "(a) coherent z = [{}] {}; (b) fock z = [{}] {}; {:.2} s",
            z(&report.coherent.comparison),
            if coherent_ok { "ok" } else { "outside 3 sigma" },
            z(&report.fock.comparison),
            if fock_ok { "ok" } else { "outside 3 sigma" },
            elapsed.as_secs_f64()
        ),
    )
}

fn effective_efficiency_and_mean() -> Outcome {
    let p = fig2_detector();
    let eff = effective_efficiency(&p).unwrap();
    let eff_ok = (eff - 4.0 / 7.0).abs() <= EFFICIENCY_TOL;

    let intensity = 1.0;
    let mean = count_distribution_coherent(&p, intensity).unwrap().mean();
    let closed =
        p.eta * p.t_c * intensity * (1.0 - p.t_r.powi(p.roundtrips as i32)) / (1.0 - p.t_r);
    let mean_ok = (mean - closed).abs() <= MEAN_TOL;

    // Linear identity does hold for the expected clicks of one photon.
    let w = response_matrix(&p, 1).unwrap();
    let single: f64 = (0..=p.roundtrips).map(|k| k as f64 * w.get(k, 1)).sum();
    let saturating: f64 = p
        .detection_rates()
        .iter()
        .map(|a| -(-a * intensity).exp_m1())
        .sum();

    let mut detail = format!(
        "eta_eff = {eff:.15} vs 4/7 {}; coherent mean = {mean:.12} vs eta t_c I (1 - t_r^L)/(1 - t_r) = {closed:.12}, |diff| = {:.3e} (tol {MEAN_TOL:e})",
        if eff_ok { "ok" } else { "MISMATCH" },
        (mean - closed).abs()
    );
    if !mean_ok {
        detail.push_str(&format!(
            ". Analysis: each roundtrip clicks with probability 1 - exp(-a_i I), so the exact coherent mean is sum_i (1 - exp(-a_i I)) = {saturating:.12}, which equals the linear form only to first order in I. The linear form is the single-photon mean, sum_k k w(k|1) = {single:.12} (|diff| {:.1e}), and the mean per photon in the limit I -> 0. The requirement is unattainable for I = 1 by any correct implementation",
            (single - closed).abs()
        ));
    }
    outcome(eff_ok && mean_ok, detail)
}

fn poisson_limit() -> Outcome {
    let p = DetectorParams::new(0.98, 0.01, 0.8, 1e-6, 2000).unwrap();
    let exact = count_distribution_coherent(&p, 0.1).unwrap();
    let (lambda, approx) = poisson_approximation(&p, 0.1).unwrap();
    let tv = exact.total_variation(&approx);
    outcome(
        tv <= POISSON_TV_TOL,
        format!("lambda = {lambda:.6}, TV = {tv:.3e} (tol {POISSON_TV_TOL:e})"),
    )
}

fn normalization() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let bases = [
        (0.72, 0.2, 0.8, 0.0),
        (0.3, 0.05, 0.5, 0.01),
        (0.9, 0.08, 1.0, 0.1),
        (0.5, 0.5, 0.9, 0.3),
    ];
    for &(t_r, t_c, eta, p_d) in &bases {
        for l in [1, 2, 3, 5, 10, 20, 35, 50] {
            let p = DetectorParams::new(t_r, t_c, eta, p_d, l).unwrap();
            for n_max in [0, 1, 5, 10, 15] {
                let w = response_matrix(&p, n_max).unwrap();
                worst = worst.max(w.max_column_defect());
                count += w.cols();
                let rho = PhotonNumberDistribution::poisson(1.5, n_max).unwrap();
                let fc = forward_counts(&w, &rho).unwrap();
                worst = worst.max((fc.probs().iter().sum::<f64>() - 1.0).abs());
                count += 1;
            }
            for intensity in [0.0, 0.1, 1.0, 3.0, 10.0] {
                let d = count_distribution_coherent(&p, intensity).unwrap();
                worst = worst.max((d.probs().iter().sum::<f64>() - 1.0).abs());
                count += 1;
            }
            let mix = count_distribution_mixture(&p, &[(0.3, 0.5), (0.7, 4.0)]).unwrap();
            worst = worst.max((mix.probs().iter().sum::<f64>() - 1.0).abs());
            count += 1;
        }
    }
    outcome(
        worst <= NORM_TOL,
        format!(
            "{count} distributions and columns, max |sum - 1| = {worst:.2e} (tol {NORM_TOL:e})"
        ),
    )
}

fn simulator_fidelity() -> Outcome {
    let p = fig2_detector();
    let opts = SimOptions::default();
    let n_max = 25;
    let w = response_matrix(&p, n_max).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (seed, intensity) in [(11u64, 0.5), (12, 1.0), (13, 3.0)] {
        let rho = PhotonNumberDistribution::poisson(intensity, n_max).unwrap();
        let tail = poisson_tail_mass(intensity, n_max).unwrap();
        let expected = forward_counts(&w, &rho).unwrap();
        let hist = simulate_coherent(&p, intensity, TRIALS, seed, opts).unwrap();
        let t = chi_square_gof(&hist.tallies, expected.probs()).unwrap();
        pass &= t.p_value > GOF_ALPHA;
        parts.push(format!(
            "coherent {intensity} p = {:.3} (tail {tail:.0e})",
            t.p_value
        ));
    }
    for (seed, n) in [(21u64, 1usize), (22, 2)] {
        let rho = PhotonNumberDistribution::fock(n, n_max).unwrap();
        let expected = forward_counts(&w, &rho).unwrap();
        let hist = simulate_fock(&p, n, TRIALS, seed, opts).unwrap();
        let t = chi_square_gof(&hist.tallies, expected.probs()).unwrap();
        pass &= t.p_value > GOF_ALPHA;
        parts.push(format!("fock {n} p = {:.3}", t.p_value));
    }
    outcome(pass, format!("{} (alpha {GOF_ALPHA:e})", parts.join(", ")))
}

fn noiseless_inversion() -> Outcome {
    let n_max = 5;
    let w = response_matrix(&fig2_detector(), n_max).unwrap();
    let mut rng = StdRng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..=n_max).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        let rho = PhotonNumberDistribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
        let p = forward_counts(&w, &rho).unwrap();
        let r = reconstruct_probabilities(&w, p.probs(), None, DEFAULT_SV_THRESHOLD).unwrap();
        for (a, b) in r.rho_hat.iter().zip(rho.probs()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(
        worst <= INVERSION_TOL,
        format!("20 random distributions, max |error| = {worst:.2e} (tol {INVERSION_TOL:e})"),
    )
}

fn degeneracy_detection() -> Outcome {
    let dark = DetectorParams::new(0.72, 0.0, 0.8, 0.0, 50).unwrap();
    let r0 =
        condition_diagnostics(&response_matrix(&dark, 5).unwrap(), DEFAULT_SV_THRESHOLD).unwrap();
    let r1 = condition_diagnostics(
        &response_matrix(&fig2_detector(), 5).unwrap(),
        DEFAULT_SV_THRESHOLD,
    )
    .unwrap();
    outcome(
        !r0.invertible && r1.invertible,
        format!(
            "t_c = 0: rank {} invertible {}; reference detector: rank {} cond {:.1} invertible {}",
            r0.numerical_rank, r0.invertible, r1.numerical_rank, r1.condition_number, r1.invertible
        ),
    )
}

fn run_fig2(dir: &Path, workers: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_loopdet"))
        .args([
            "fig2",
            "--seed",
            "7",
            "--workers",
            &workers.to_string(),
            "--out-dir",
        ])
        .arg(dir)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("fig2 exited with {status}"))
    }
}

fn reproducibility() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        root.path().join("a"),
        root.path().join("b"),
        root.path().join("c"),
    );
    for (dir, workers) in [(&a, 2), (&b, 2), (&c, 5)] {
        if let Err(e) = run_fig2(dir, workers) {
            return outcome(false, e);
        }
    }
    let files = [
        "coherent_histogram.csv",
        "fock_histogram.csv",
        "response_matrix.csv",
        "comparison.csv",
        "fig2_result.json",
    ];
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    let same_seed: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| read(&a, f) != read(&b, f))
        .collect();
    let workers: Vec<&str> = files[..2]
        .iter()
        .copied()
        .filter(|f| read(&a, f) != read(&c, f))
        .collect();
    outcome(
        same_seed.is_empty() && workers.is_empty(),
        format!(
            "same seed: {} of {} files identical; 2 vs 5 workers: {} of 2 histograms identical",
            files.len() - same_seed.len(),
            files.len(),
            2 - workers.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("reference reconstruction", fig2_reproduction),
        (
            "effective efficiency and mean",
            effective_efficiency_and_mean,
        ),
        ("poisson limit", poisson_limit),
        ("normalization", normalization),
        ("simulator fidelity", simulator_fidelity),
        ("noiseless inversion", noiseless_inversion),
        ("degeneracy detection", degeneracy_detection),
        ("reproducibility", reproducibility),
    ];
    let strict = std::env::var("LOOPDET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let (mut failed, mut fatal) = (0, 0);
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let known = KNOWN_UNATTAINABLE.contains(&(i + 1));
        if !o.pass {
            failed += 1;
            if strict || !known {
                fatal += 1;
            }
        }
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL [expected]",
            (false, false) => "FAIL",
        };
        println!("{tag} {}. {name}: {}", i + 1, o.detail);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if fatal == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
