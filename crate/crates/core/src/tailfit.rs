//! Power-law tail estimation for absolute increments.
//!
//! Exponents are reported in the CCDF convention throughout: a tail with
//! `P(X >= x) ~ x^-zeta` has density exponent `alpha = zeta + 1`. The Lévy
//! stable regime is `zeta < 2`.
//!
//! Two estimators are provided. The maximum-likelihood route picks the lower
//! bound `I_min` that minimises the Kolmogorov-Smirnov distance between the
//! empirical tail and its fitted power law. The least-squares route regresses
//! log density on log position over a logarithmically binned histogram of the
//! same tail. [`fit_tail`] reports both and their mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::IncrementSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFitConfig {
    /// Minimum number of samples at or above a candidate lower bound.
    pub min_tail: usize,
    /// Above this many distinct values, candidates are quantile-decimated.
    pub max_candidates: usize,
    /// Ratio between consecutive log-histogram bin edges.
    pub log_bin_ratio: f64,
    /// Minimum number of occupied log bins for the least-squares fit.
    pub min_ls_bins: usize,
}

impl Default for TailFitConfig {
    fn default() -> Self {
        Self {
            min_tail: 50,
            max_candidates: 1000,
            log_bin_ratio: 1.25,
            min_ls_bins: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub i_min: f64,
    pub zeta_ks: f64,
    pub zeta_ls: f64,
    pub zeta_avg: f64,
    /// Asymptotic standard error of `zeta_ks`.
    pub stderr: f64,
    pub ks_stat: f64,
    pub n_tail: usize,
}

/// Result of the KS/MLE lower-bound scan, before the least-squares branch is
/// filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub i_min: f64,
    pub zeta: f64,
    pub stderr: f64,
    pub ks_stat: f64,
    pub n_tail: usize,
}

fn check_positive(samples: &[f64]) -> Result<()> {
    match samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        Some(bad) => Err(Error::InvalidParameter(format!(
            "tail samples must be finite and positive, found {bad}"
        ))),
        None => Ok(()),
    }
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Continuous maximum-likelihood CCDF exponent of the samples at or above
/// `i_min`, with its asymptotic standard error `zeta / sqrt(n)`.
pub fn mle_exponent(samples: &[f64], i_min: f64, min_tail: usize) -> Result<(f64, f64)> {
    check_positive(samples)?;
    if !(i_min > 0.0 && i_min.is_finite()) {
        return Err(Error::InvalidParameter(format!("i_min must be positive, got {i_min}")));
    }
    let (n, log_sum) = samples
        .iter()
        .filter(|&&x| x >= i_min)
        .fold((0usize, 0.0f64), |(n, s), &x| (n + 1, s + (x / i_min).ln()));
    mle_from_sums(n, log_sum, min_tail)
}

fn mle_from_sums(n: usize, log_sum: f64, min_tail: usize) -> Result<(f64, f64)> {
    if n < min_tail.max(1) {
        return Err(Error::InsufficientTail {
            needed: min_tail.max(1),
            have: n,
        });
    }
    if log_sum <= 0.0 {
        return Err(Error::InsufficientData(
            "tail samples show no variation above the lower bound".into(),
        ));
    }
    let zeta = n as f64 / log_sum;
    Ok((zeta, zeta / (n as f64).sqrt()))
}

/// KS distance between the empirical tail (samples >= `i_min`) and the model
/// CCDF `(x / i_min)^-zeta`, both conditioned on `x >= i_min`.
pub fn ks_distance(samples: &[f64], i_min: f64, zeta: f64) -> Result<f64> {
    let tail: Vec<f64> = sorted(samples).into_iter().filter(|&x| x >= i_min).collect();
    if tail.is_empty() {
        return Err(Error::InsufficientTail { needed: 1, have: 0 });
    }
    Ok(ks_sorted_tail(&tail, i_min, zeta))
}

/// KS distance for an ascending tail whose values are all >= `i_min`.
fn ks_sorted_tail(tail: &[f64], i_min: f64, zeta: f64) -> f64 {
    let n = tail.len() as f64;
    let mut d = 0.0f64;
    let mut k = 0;
    while k < tail.len() {
        let x = tail[k];
        let mut j = k;
        while j < tail.len() && tail[j] == x {
            j += 1;
        }
        let model_cdf = 1.0 - (x / i_min).powf(-zeta);
        let below = k as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - model_cdf).abs()).max((model_cdf - below).abs());
        k = j;
    }
    d.min(1.0)
}

/// Chooses `I_min` among the distinct sample values by minimising the KS
/// distance of the MLE fit above each candidate. Ties go to the smaller
/// candidate.
pub fn select_lower_bound(samples: &[f64], config: &TailFitConfig) -> Result<LowerBound> {
    check_positive(samples)?;
    let min_tail = config.min_tail.max(2);
    if samples.len() < min_tail {
        return Err(Error::InsufficientTail {
            needed: min_tail,
            have: samples.len(),
        });
    }
    let xs = sorted(samples);
    let n = xs.len();

    // suffix sums of ln x for O(1) MLE per candidate
    let mut log_suffix = vec![0.0f64; n + 1];
    for k in (0..n).rev() {
        log_suffix[k] = log_suffix[k + 1] + xs[k].ln();
    }

    // first index of each distinct value that leaves enough tail samples
    let mut starts: Vec<usize> = (0..n)
        .filter(|&k| (k == 0 || xs[k] != xs[k - 1]) && n - k >= min_tail)
        .collect();
    if starts.is_empty() {
        return Err(Error::InsufficientTail {
            needed: min_tail,
            have: n,
        });
    }
    if starts.len() > config.max_candidates.max(2) {
        let m = config.max_candidates.max(2);
        let last = starts.len() - 1;
        let mut picked: Vec<usize> = (0..m)
            .map(|k| starts[(k as f64 * last as f64 / (m - 1) as f64).round() as usize])
            .collect();
        picked.dedup();
        starts = picked;
    }

    let fits: Vec<Option<LowerBound>> = starts
        .par_iter()
        .map(|&k| {
            let i_min = xs[k];
            let n_tail = n - k;
            let log_sum = log_suffix[k] - n_tail as f64 * i_min.ln();
            let (zeta, stderr) = mle_from_sums(n_tail, log_sum, min_tail).ok()?;
            let ks_stat = ks_sorted_tail(&xs[k..], i_min, zeta);
            Some(LowerBound {
                i_min,
                zeta,
                stderr,
                ks_stat,
                n_tail,
            })
        })
        .collect();

    // serial argmin over candidates in ascending i_min: first minimum wins
    fits.into_iter()
        .flatten()
        .fold(None, |best: Option<LowerBound>, f| match best {
            Some(b) if b.ks_stat <= f.ks_stat => Some(b),
            _ => Some(f),
        })
        .ok_or_else(|| {
            Error::InsufficientData("no lower-bound candidate has tail variation".into())
        })
}

/// CCDF exponent from a least-squares line through the log-binned density of
/// the tail. Bins are weighted by their counts, the inverse of the Poisson
/// variance of each log density.
pub fn ls_exponent(samples: &[f64], i_min: f64, config: &TailFitConfig) -> Result<f64> {
    check_positive(samples)?;
    let ratio = config.log_bin_ratio;
    if !(ratio > 1.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "log bin ratio must exceed 1, got {ratio}"
        )));
    }
    let tail: Vec<f64> = samples.iter().copied().filter(|&x| x >= i_min).collect();
    if tail.is_empty() {
        return Err(Error::InsufficientTail { needed: 1, have: 0 });
    }
    let n_tail = tail.len() as f64;
    let log_ratio = ratio.ln();
    let mut counts: Vec<usize> = Vec::new();
    for &x in &tail {
        let k = ((x / i_min).ln() / log_ratio).floor().max(0.0) as usize;
        if k >= counts.len() {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }

    let points: Vec<(f64, f64, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| {
            let lo = i_min * ratio.powi(k as i32);
            let hi = lo * ratio;
            let density = c as f64 / ((hi - lo) * n_tail);
            ((lo * hi).sqrt().ln(), density.ln(), c as f64)
        })
        .collect();
    if points.len() < config.min_ls_bins.max(2) {
        return Err(Error::InsufficientData(format!(
            "least-squares fit needs {} occupied log bins, found {}",
            config.min_ls_bins.max(2),
            points.len()
        )));
    }

    let w_sum: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / w_sum;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / w_sum;
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(slope.abs() - 1.0)
}

/// Full tail fit: KS-selected lower bound and MLE exponent, least-squares
/// exponent at that bound, and their average. Zero values (unchanged index)
/// carry no tail information and are dropped first.
pub fn fit_tail(samples: &[f64], config: &TailFitConfig) -> Result<TailFit> {
    let positive: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|&x| x != 0.0)
        .collect();
    let lb = select_lower_bound(&positive, config)?;
    let zeta_ls = ls_exponent(&positive, lb.i_min, config)?;
    Ok(TailFit {
        i_min: lb.i_min,
        zeta_ks: lb.zeta,
        zeta_ls,
        zeta_avg: average(lb.zeta, zeta_ls),
        stderr: lb.stderr,
        ks_stat: lb.ks_stat,
        n_tail: lb.n_tail,
    })
}

pub(crate) fn average(a: f64, b: f64) -> f64 {
    (a + b) / 2.0
}

/// Empirical CCDF `(x, P(X >= x))` at each distinct sample value.
pub fn ccdf_points(samples: &[f64]) -> Vec<(f64, f64)> {
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut out = Vec::new();
    for (k, &x) in xs.iter().enumerate() {
        if k == 0 || x != xs[k - 1] {
            out.push((x, (xs.len() - k) as f64 / n));
        }
    }
    out
}

/// Rescaled return distributions across time scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub scales: Vec<usize>,
    /// Mean absolute deviation of Z used to rescale each scale.
    pub dispersions: Vec<f64>,
    /// Per scale: `(Z / s, s * p)` histogram points of the rescaled density.
    pub rescaled_pdfs: Vec<Vec<(f64, f64)>>,
    /// Two-sample KS distance between rescaled CDFs, per pair of scales.
    pub discrepancy: Vec<Vec<f64>>,
    pub score: f64,
}

/// Minimum number of valid windows required per scale.
pub const COLLAPSE_MIN_WINDOWS: usize = 50;

/// Collects Z over disjoint windows at each scale, rescales by the mean
/// absolute deviation, and measures pairwise sup-distance between the
/// rescaled empirical CDFs.
pub fn collapse(incs: &IncrementSeries, scales: &[usize]) -> Result<CollapseReport> {
    if scales.len() < 2 {
        return Err(Error::InvalidParameter(
            "collapse needs at least two scales".into(),
        ));
    }
    let mut rescaled = Vec::with_capacity(scales.len());
    let mut dispersions = Vec::with_capacity(scales.len());
    for &scale in scales {
        let w = crate::windows::window_stats(incs, scale, scale)?;
        let z = w.valid_z();
        if z.len() < COLLAPSE_MIN_WINDOWS {
            return Err(Error::InsufficientData(format!(
                "scale {scale} has {} valid windows, need {COLLAPSE_MIN_WINDOWS}",
                z.len()
            )));
        }
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let s = z.iter().map(|v| (v - mean).abs()).sum::<f64>() / z.len() as f64;
        if s <= 0.0 {
            return Err(Error::InsufficientData(format!(
                "returns at scale {scale} have zero dispersion"
            )));
        }
        dispersions.push(s);
        rescaled.push(sorted(&z.iter().map(|v| v / s).collect::<Vec<_>>()));
    }

    let k = scales.len();
    let mut discrepancy = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in a + 1..k {
            let d = ks_two_sample(&rescaled[a], &rescaled[b]);
            discrepancy[a][b] = d;
            discrepancy[b][a] = d;
        }
    }
    let score = discrepancy
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    let rescaled_pdfs = rescaled.iter().map(|z| density_points(z)).collect();
    Ok(CollapseReport {
        scales: scales.to_vec(),
        dispersions,
        rescaled_pdfs,
        discrepancy,
        score,
    })
}

/// Sup-distance between the empirical CDFs of two ascending samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Density histogram of an ascending sample over its central 99% with
/// Freedman-Diaconis bins.
fn density_points(sorted_z: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted_z.len();
    let q = |p: f64| sorted_z[((n - 1) as f64 * p).round() as usize];
    let (lo, hi) = (q(0.005), q(0.995));
    let iqr = q(0.75) - q(0.25);
    let width = 2.0 * iqr / (n as f64).cbrt();
    if !(width > 0.0) || hi <= lo {
        return vec![(sorted_z[n / 2], 1.0)];
    }
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, 2000);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &z in sorted_z {
        if z >= lo && z <= hi {
            counts[(((z - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    counts
        .iter()
        .enumerate()
        .map(|(k, &c)| (lo + (k as f64 + 0.5) * width, c as f64 / (n as f64 * width)))
        .collect()
}
