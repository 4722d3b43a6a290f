use loopdet::stats::{chi_square_gof, chi_square_homogeneity};
use loopdet::*;

const N: u64 = 100_000;
const ALPHA: f64 = 1e-3;

fn fig(p_d: f64) -> DetectorParams {
    DetectorParams::new(0.72, 0.2, 0.8, p_d, 50).unwrap()
}

#[test]
fn fock_single_photon_detection_fraction() {
    let h = simulate_fock(&fig(0.0), 1, N, 11, SimOptions::default()).unwrap();
    let frac = h.tallies[1] as f64 / N as f64;
    let p = 4.0 / 7.0;
    let band = 3.0 * (p * (1.0 - p) / N as f64).sqrt();
    assert!((frac - p).abs() <= band, "{frac} vs {p} ± {band}");
    assert_eq!(h.tallies[2..].iter().sum::<u64>(), 0);
}

#[test]
fn coherent_vacuum_probability_and_mean() {
    let p = fig(0.0);
    let h = simulate_coherent(&p, 1.0, N, 12, SimOptions::default()).unwrap();
    let p0 = h.tallies[0] as f64 / N as f64;
    assert!((p0 - 0.56472).abs() <= 0.005);

    let exact_mean: f64 = (1..=50)
        .map(|i| click_probability(&p, i, 1.0).unwrap())
        .sum();
    let m = h.mean();
    let var = h
        .tallies
        .iter()
        .enumerate()
        .map(|(k, &t)| t as f64 * (k as f64 - m).powi(2))
        .sum::<f64>()
        / (N - 1) as f64;
    assert!((m - exact_mean).abs() <= 3.0 * var.sqrt() / (N as f64).sqrt());
}

fn three_level() -> PhotonNumberDistribution {
    let mut v = vec![0.0; 15];
    v[0] = 0.2;
    v[3] = 0.5;
    v[6] = 0.3;
    PhotonNumberDistribution::new(v).unwrap()
}

#[test]
fn samplers_fit_forward_model() {
    let opts = SimOptions::default();
    for (p_d, seed) in [(0.0, 21), (0.002, 22)] {
        let p = fig(p_d);
        let w = response_matrix(&p, 14).unwrap();
        let mixed = three_level();
        // Poisson(1) tail beyond 14 is negligible at this sample size
        let scenarios = [
            (
                PhotonNumberDistribution::poisson(1.0, 14).unwrap(),
                simulate_coherent(&p, 1.0, N, seed, opts).unwrap(),
            ),
            (
                PhotonNumberDistribution::fock(2, 14).unwrap(),
                simulate_fock(&p, 2, N, seed, opts).unwrap(),
            ),
            (
                mixed.clone(),
                simulate_distribution(&p, &mixed, N, seed, opts).unwrap(),
            ),
        ];
        for (rho, h) in scenarios {
            let expected = forward_counts(&w, &rho).unwrap();
            let t = chi_square_gof(&h.tallies, expected.probs()).unwrap();
            assert!(t.p_value > ALPHA, "p_d {p_d}: {t:?}");
        }
    }
}

#[test]
fn distribution_sampler_matches_coherent_sampler() {
    let p = fig(0.0);
    let rho = PhotonNumberDistribution::poisson(1.0, 20).unwrap();
    let a = simulate_distribution(&p, &rho, N, 5, SimOptions::default()).unwrap();
    let b = simulate_coherent(&p, 1.0, N, 6, SimOptions::default()).unwrap();
    let t = chi_square_homogeneity(&a.tallies, &b.tallies).unwrap();
    assert!(t.p_value > ALPHA, "{t:?}");
}

#[test]
fn fock_delta_distribution_matches_fock_sampler() {
    let p = fig(0.0);
    let rho = PhotonNumberDistribution::fock(1, 4).unwrap();
    let a = simulate_distribution(&p, &rho, N, 7, SimOptions::default()).unwrap();
    let b = simulate_fock(&p, 1, N, 8, SimOptions::default()).unwrap();
    let t = chi_square_homogeneity(&a.tallies, &b.tallies).unwrap();
    assert!(t.p_value > ALPHA, "{t:?}");
    assert_eq!(a.tallies[2..].iter().sum::<u64>(), 0);
}

#[test]
fn mixture_matches_coherent_average() {
    let p = fig(0.0);
    let mix = count_distribution_mixture(&p, &[(0.5, 0.5), (0.5, 1.5)]).unwrap();
    let a = simulate_coherent(&p, 0.5, N / 2, 31, SimOptions::default()).unwrap();
    let b = simulate_coherent(&p, 1.5, N / 2, 32, SimOptions::default()).unwrap();
    let merged: Vec<u64> = a
        .tallies
        .iter()
        .zip(&b.tallies)
        .map(|(x, y)| x + y)
        .collect();
    let t = chi_square_gof(&merged, mix.probs()).unwrap();
    assert!(t.p_value > ALPHA, "{t:?}");
}

#[test]
fn reproducible_across_workers() {
    let p = fig(0.01);
    let rho = PhotonNumberDistribution::poisson(2.0, 10).unwrap();
    let runs: Vec<CountHistogram> = [1, 2, 5]
        .iter()
        .map(|&w| {
            simulate_distribution(&p, &rho, 50_000, 99, SimOptions { workers: Some(w) }).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[1], runs[2]);
}

#[test]
fn mixture_sampler_fits_mixture_distribution() {
    let p = fig(0.0);
    let mixture = [(0.25, 0.2), (0.5, 1.0), (0.25, 3.0)];
    let h = simulate_mixture(&p, &mixture, N, 41, SimOptions::default()).unwrap();
    let exact = count_distribution_mixture(&p, &mixture).unwrap();
    let t = chi_square_gof(&h.tallies, exact.probs()).unwrap();
    assert!(t.p_value > ALPHA, "{t:?}");
}
