use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use twophase::{window_stats, IncrementSeries};

fn naive_mad(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let mut mean = 0.0;
    for x in w {
        mean += x / n;
    }
    let mut dev = 0.0;
    for x in w {
        dev += (x - mean).abs() / n;
    }
    dev
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn random_windows_match_naive_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let incs: Vec<f64> = (0..50_000).map(|_| normal.sample(&mut rng)).collect();
    let mut y = vec![100.0];
    for i in &incs {
        y.push(y[y.len() - 1] + i);
    }
    let series = IncrementSeries::from_signed(incs.clone());
    for _ in 0..1000 {
        let scale = rng.random_range(2..200);
        let ws = window_stats(&series, scale, 1).unwrap();
        let t = rng.random_range(0..ws.entries.len());
        let e = ws.entries[t];
        assert_eq!(e.start, t);
        assert!(rel_close(e.r, naive_mad(&incs[t..t + scale])), "r at {t}/{scale}");
        assert!(rel_close(e.z, y[t + scale] - y[t]), "z at {t}/{scale}");
    }
}

proptest! {
    #[test]
    fn disjoint_returns_add_up(
        incs in proptest::collection::vec(-1000i32..1000, 2..400),
        scale in 2usize..20,
    ) {
        prop_assume!(incs.len() >= scale);
        let incs: Vec<f64> = incs.into_iter().map(f64::from).collect();
        let ws = window_stats(&IncrementSeries::from_signed(incs.clone()), scale, scale).unwrap();
        let covered = ws.entries.len() * scale;
        let net: f64 = incs[..covered].iter().sum();
        prop_assert_eq!(ws.valid_z().iter().sum::<f64>(), net);
    }

    #[test]
    fn fluctuation_is_shift_invariant_and_nonnegative(
        incs in proptest::collection::vec(-50.0f64..50.0, 2..60),
        shift in -100.0f64..100.0,
    ) {
        let scale = incs.len();
        let shifted: Vec<f64> = incs.iter().map(|x| x + shift).collect();
        let a = window_stats(&IncrementSeries::from_signed(incs), scale, 1).unwrap().entries[0];
        let b = window_stats(&IncrementSeries::from_signed(shifted), scale, 1).unwrap().entries[0];
        prop_assert!(a.r >= 0.0);
        prop_assert!((a.r - b.r).abs() < 1e-9 * (1.0 + a.r));
    }
}
