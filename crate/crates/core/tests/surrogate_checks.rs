use twophase::surrogate::{generate, sample_abs_increments, sweep};
use twophase::tailfit::ccdf_points;
use twophase::{ScanParams, SurrogateSpec};

fn spec(zeta: f64, n: usize, seed: u64) -> SurrogateSpec {
    SurrogateSpec {
        zeta,
        i_min: 7.0,
        n,
        seed,
    }
}

#[test]
fn magnitudes_pass_ks_against_the_generator() {
    let n = 20_000;
    let mut x = sample_abs_increments(&spec(1.93, n, 12)).unwrap();
    x.sort_by(f64::total_cmp);
    let cdf = |v: f64| 1.0 - (v / 7.0).powf(-1.93);
    let d = x
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let f = cdf(v);
            (f - k as f64 / n as f64).max((k + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    // 1% critical value of the one-sample KS statistic
    assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
    assert!(x[0] >= 7.0);
}

#[test]
fn signs_are_fair() {
    let incs = generate(&spec(1.5, 100_000, 5)).unwrap();
    let up = incs.signed().iter().filter(|&&v| v > 0.0).count() as f64 / 1e5;
    assert!((0.49..=0.51).contains(&up), "{up}");
    for (s, a) in incs.signed().iter().zip(incs.absolute()) {
        assert_eq!(s.abs(), *a);
    }
}

#[test]
fn ccdf_slope_matches_exponent() {
    let x = sample_abs_increments(&spec(1.93, 24_442, 6)).unwrap();
    let pts: Vec<(f64, f64)> = ccdf_points(&x)
        .into_iter()
        .filter(|&(_, p)| p >= 1e-3)
        .map(|(v, p)| (v.ln(), p.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 1.93).abs() <= 0.05, "slope {slope}");
}

#[test]
fn same_seed_same_series() {
    let a = generate(&spec(2.1, 5000, 9)).unwrap();
    let b = generate(&spec(2.1, 5000, 9)).unwrap();
    let c = generate(&spec(2.1, 5000, 10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn sweep_reports_cells_in_input_order() {
    let base = spec(1.0, 4000, 0);
    let params = ScanParams {
        binning: twophase::BinningParams {
            r_bins: 4,
            min_samples: 50,
            ..Default::default()
        },
        ..Default::default()
    };
    let res = sweep(&[2.5, 1.5], &[3, 1, 2], &base, &[2, 3, 4], &params).unwrap();
    let order: Vec<(f64, u64)> = res.cells.iter().map(|c| (c.zeta, c.seed)).collect();
    assert_eq!(
        order,
        [(2.5, 3), (2.5, 1), (2.5, 2), (1.5, 3), (1.5, 1), (1.5, 2)]
    );
    for s in &res.summary {
        assert_eq!(s.runs, 3);
        let hits = res.cells.iter().filter(|c| c.zeta == s.zeta && c.present).count();
        assert_eq!(s.present_fraction, hits as f64 / 3.0);
    }
}
