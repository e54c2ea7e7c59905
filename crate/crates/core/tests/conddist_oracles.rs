use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use twophase::{
    condition, count_modes, scan, window_stats, BinningParams, IncrementSeries, RBinning,
    ScanParams,
};

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Normalised histogram of `x` on `bins` equal bins over `[lo, hi)`.
fn histogram(x: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let w = (hi - lo) / bins as f64;
    let mut h = vec![0.0; bins];
    for &v in x {
        let k = ((v - lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins {
            h[k as usize] += 1.0;
        }
    }
    let total: f64 = h.iter().sum();
    h.iter().map(|c| c / total).collect()
}

/// Local maxima of a density evaluated on a fine grid.
fn density_maxima(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = 200_001;
    let xs: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    (1..n - 1)
        .filter(|&k| ys[k] > ys[k - 1] && ys[k] >= ys[k + 1])
        .map(|k| xs[k])
        .collect()
}

#[test]
fn separated_mixture_has_two_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..100_000)
        .map(|_| {
            let shift = if rng.random::<bool>() { 5.0 } else { -5.0 };
            shift + normal.sample(&mut rng)
        })
        .collect();
    let (lo, hi, bins) = (-10.0, 10.0, 80);
    let modes = count_modes(&histogram(&x, lo, hi, bins), 5, 0.25).unwrap();
    assert_eq!(modes.count, 2);

    let phi = |u: f64| (-0.5 * u * u).exp();
    let oracle = density_maxima(|t| phi(t - 5.0) + phi(t + 5.0), lo, hi);
    assert_eq!(oracle.len(), 2);
    let w = (hi - lo) / bins as f64;
    for (p, m) in modes.positions.iter().zip(&oracle) {
        let z = lo + (p + 0.5) * w;
        assert!((z - m).abs() < 0.3, "mode {z} vs density maximum {m}");
    }
}

#[test]
fn gaussian_has_one_mode_at_zero() {
    let x = gaussian(100_000, 4);
    let modes = count_modes(&histogram(&x, -5.0, 5.0, 100), 5, 0.25).unwrap();
    assert_eq!(modes.count, 1);
    let z = -5.0 + (modes.positions[0] + 0.5) * 0.1;
    assert!(z.abs() < 0.2, "mode at {z}");
}

#[test]
fn conditioning_conserves_windows() {
    let incs = IncrementSeries::from_signed(gaussian(100_000, 8));
    let ws = window_stats(&incs, 100, 100).unwrap();
    let params = BinningParams {
        r_bins: 10,
        r_binning: RBinning::Quantile,
        min_samples: 50,
        ..BinningParams::default()
    };
    let cond = condition(&ws, &params).unwrap();
    let windows: Vec<(f64, f64)> = ws.valid().map(|e| (e.z, e.r)).collect();
    assert_eq!(windows.len(), 1000);
    assert_eq!(cond.r_bins.iter().map(|b| b.count).sum::<usize>(), 1000);

    let nb = cond.r_bins.len();
    let edges = &cond.z_edges;
    for (k, b) in cond.r_bins.iter().enumerate() {
        let inside = |r: f64| r >= b.lower && (r < b.upper || (k + 1 == nb && r <= b.upper));
        let members: Vec<f64> = windows.iter().filter(|w| inside(w.1)).map(|w| w.0).collect();
        assert_eq!(members.len(), b.count, "r-bin {k}");
        for j in 0..edges.len() - 1 {
            let last = j + 2 == edges.len();
            let direct = members
                .iter()
                .filter(|&&z| z >= edges[j] && (z < edges[j + 1] || (last && z <= edges[j + 1])))
                .count();
            let from_mass = (b.masses[j] * b.count as f64).round() as usize;
            assert_eq!(direct, from_mass, "r-bin {k}, z-bin {j}");
        }
    }
}

#[test]
fn scan_is_independent_of_thread_count() {
    let incs = twophase::surrogate::generate(&twophase::SurrogateSpec {
        zeta: 1.5,
        i_min: 7.0,
        n: 25_000,
        seed: 17,
    })
    .unwrap();
    let scales: Vec<usize> = (2..=20).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scan(&incs, &scales, &ScanParams::default()).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&run(3)).unwrap()
    );
}

#[test]
fn gaussian_increments_never_bifurcate() {
    let incs = IncrementSeries::from_signed(gaussian(25_000, 2));
    let scales: Vec<usize> = (2..=30).collect();
    let res = scan(&incs, &scales, &ScanParams::default()).unwrap();
    assert!(res.present_scales().is_empty(), "{:?}", res.present_scales());
    assert_eq!(res.range, None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Integer-valued histograms keep every smoothing sum exact.
    #[test]
    fn more_smoothing_never_adds_modes(
        h in proptest::collection::vec(0u32..50, 1..60),
        taps in 1usize..12,
    ) {
        prop_assume!(h.iter().any(|&v| v > 0));
        let h: Vec<f64> = h.into_iter().map(f64::from).collect();
        let a = count_modes(&h, taps, 0.0).unwrap().count;
        let b = count_modes(&h, taps + 1, 0.0).unwrap().count;
        prop_assert!(b <= a, "taps {}: {} modes, taps {}: {}", taps, a, taps + 1, b);
    }

    #[test]
    fn mirrored_histogram_mirrors_modes(
        h in proptest::collection::vec(0u32..50, 1..60),
        taps in 1usize..9,
        prom in 0.0f64..0.9,
    ) {
        prop_assume!(h.iter().any(|&v| v > 0));
        let h: Vec<f64> = h.into_iter().map(f64::from).collect();
        let rev: Vec<f64> = h.iter().rev().copied().collect();
        let a = count_modes(&h, taps, prom).unwrap();
        let b = count_modes(&rev, taps, prom).unwrap();
        prop_assert_eq!(a.count, b.count);
        let last = (h.len() - 1) as f64;
        for (p, q) in a.positions.iter().zip(b.positions.iter().rev()) {
            prop_assert!((p - (last - q)).abs() < 1e-12);
        }
    }

    #[test]
    fn every_populated_bin_is_normalised(seed in 0u64..1000, bins in 1usize..20) {
        let incs = IncrementSeries::from_signed(gaussian(6000, seed));
        let ws = window_stats(&incs, 5, 5).unwrap();
        let params = BinningParams { r_bins: bins, min_samples: 10, ..BinningParams::default() };
        let cond = condition(&ws, &params).unwrap();
        for b in cond.r_bins.iter().filter(|b| b.count > 0) {
            let total: f64 = b.masses.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
