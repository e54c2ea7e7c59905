//! Conditional return distributions `p(Z | r)` and the unimodal-to-bimodal
//! transition.
//!
//! Windows are grouped into fluctuation bins; the returns in each bin are
//! histogrammed on one shared, zero-centred grid so that shapes are comparable
//! across bins. Modes are counted on a smoothed copy of each histogram and a
//! scale is said to show the bifurcation when low-fluctuation bins are
//! unimodal and the high-fluctuation bins turn bimodal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::IncrementSeries;
use crate::windows::{window_stats, WindowStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RBinning {
    /// Equal-count bins.
    Quantile,
    /// Equal-width bins over the observed range of r.
    Fixed,
}

impl std::str::FromStr for RBinning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantile" => Ok(RBinning::Quantile),
            "fixed" => Ok(RBinning::Fixed),
            other => Err(Error::InvalidParameter(format!(
                "r binning must be `quantile` or `fixed`, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningParams {
    pub r_bins: usize,
    pub r_binning: RBinning,
    /// Bins with fewer windows are left unclassified.
    pub min_samples: usize,
    /// Upper limit on the number of bins in the shared Z grid. When the
    /// Freedman-Diaconis width would need more, the width grows to fit.
    pub max_z_bins: usize,
}

impl Default for BinningParams {
    fn default() -> Self {
        Self {
            r_bins: 12,
            r_binning: RBinning::Quantile,
            min_samples: 200,
            max_z_bins: 3000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Number of taps of the binomial smoothing kernel (1 = none).
    pub smoothing: usize,
    /// Minimum peak prominence as a fraction of the smoothed global maximum.
    pub prominence: f64,
    /// Consecutive bimodal bins required above the transition.
    pub persist: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            smoothing: 5,
            prominence: 0.25,
            persist: 2,
        }
    }
}

/// Fluctuation bin with its normalised return histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mass per Z bin; sums to 1 when `count > 0`.
    pub masses: Vec<f64>,
}

impl RBin {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    pub scale: usize,
    /// Shared Z bin edges, symmetric about zero.
    pub z_edges: Vec<f64>,
    pub r_bins: Vec<RBin>,
    pub min_samples: usize,
}

impl ConditionalDistribution {
    pub fn z_centers(&self) -> Vec<f64> {
        self.z_edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// Linear-interpolated quantile of an ascending slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn r_edges(sorted_r: &[f64], params: &BinningParams) -> Vec<f64> {
    let m = params.r_bins.max(1);
    let (lo, hi) = (sorted_r[0], sorted_r[sorted_r.len() - 1]);
    let mut edges: Vec<f64> = match params.r_binning {
        RBinning::Quantile => (0..=m)
            .map(|k| quantile(sorted_r, k as f64 / m as f64))
            .collect(),
        RBinning::Fixed => (0..=m)
            .map(|k| lo + (hi - lo) * k as f64 / m as f64)
            .collect(),
    };
    edges[0] = lo;
    edges[m] = hi;
    edges.dedup();
    if edges.len() == 1 {
        edges.push(hi);
    }
    edges
}

/// Shared Z grid: Freedman-Diaconis width on the pooled sample, symmetric
/// about zero, covering every sample.
fn z_edges(pooled: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let zmax = sorted
        .iter()
        .fold(0.0f64, |m, z| m.max(z.abs()));
    if zmax == 0.0 {
        return vec![-0.5, 0.5];
    }
    let half_cap = (max_bins / 2).max(1);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let fd = 2.0 * iqr / (sorted.len() as f64).cbrt();
    let (half, width) = if fd > 0.0 && (zmax / fd).ceil() <= half_cap as f64 {
        ((zmax / fd).ceil() as usize, fd)
    } else {
        let half = if fd > 0.0 {
            half_cap
        } else {
            ((sorted.len() as f64).sqrt().ceil() as usize).min(half_cap)
        };
        (half, zmax / half as f64)
    };
    (0..=2 * half)
        .map(|k| (k as f64 - half as f64) * width)
        .collect()
}

fn bin_index(edges: &[f64], x: f64) -> usize {
    let last = edges.len() - 2;
    edges[1..=last].partition_point(|&e| e <= x).min(last)
}

/// Groups valid windows into r-bins and histograms each bin's returns on the
/// shared Z grid.
pub fn condition(windows: &WindowStats, params: &BinningParams) -> Result<ConditionalDistribution> {
    let valid: Vec<(f64, f64)> = windows.valid().map(|e| (e.z, e.r)).collect();
    if valid.len() < params.min_samples.max(1) {
        return Err(Error::InsufficientData(format!(
            "scale {}: {} valid windows, need {}",
            windows.scale,
            valid.len(),
            params.min_samples.max(1)
        )));
    }
    let mut sorted_r: Vec<f64> = valid.iter().map(|w| w.1).collect();
    sorted_r.sort_by(f64::total_cmp);
    let redges = r_edges(&sorted_r, params);
    let pooled: Vec<f64> = valid.iter().map(|w| w.0).collect();
    let zedges = z_edges(&pooled, params.max_z_bins);

    let nz = zedges.len() - 1;
    let mut counts = vec![vec![0usize; nz]; redges.len() - 1];
    for &(z, r) in &valid {
        counts[bin_index(&redges, r)][bin_index(&zedges, z)] += 1;
    }
    let r_bins: Vec<RBin> = counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let count: usize = c.iter().sum();
            let masses = if count == 0 {
                vec![0.0; nz]
            } else {
                c.iter().map(|&v| v as f64 / count as f64).collect()
            };
            RBin {
                lower: redges[k],
                upper: redges[k + 1],
                count,
                masses,
            }
        })
        .collect();
    if r_bins.iter().all(|b| b.count < params.min_samples) {
        return Err(Error::InsufficientData(format!(
            "scale {}: every r-bin holds fewer than {} windows",
            windows.scale, params.min_samples
        )));
    }
    Ok(ConditionalDistribution {
        scale: windows.scale,
        z_edges: zedges,
        r_bins,
        min_samples: params.min_samples,
    })
}

/// Modes found in one histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modes {
    pub count: usize,
    /// Mode positions in histogram-bin units: 0.0 is the centre of the first
    /// bin, 1.0 of the second, and so on.
    pub positions: Vec<f64>,
}

/// Repeated convolution with `[1, 1]`: the unnormalised binomial kernel with
/// `taps` coefficients. Returns the full convolution; output index `j` sits at
/// input position `j - (taps - 1) / 2`.
fn binomial_smooth(hist: &[f64], taps: usize) -> Vec<f64> {
    let mut out = hist.to_vec();
    for _ in 1..taps.max(1) {
        let mut next = Vec::with_capacity(out.len() + 1);
        next.push(out[0]);
        next.extend(out.windows(2).map(|w| w[0] + w[1]));
        next.push(out[out.len() - 1]);
        out = next;
    }
    out
}

/// Counts modes of a histogram: local maxima of the binomially smoothed,
/// zero-extended histogram whose topographic prominence is at least
/// `prominence` times the smoothed global maximum. A flat top counts once, at
/// its centre.
pub fn count_modes(hist: &[f64], smoothing: usize, prominence: f64) -> Result<Modes> {
    if hist.is_empty() || hist.iter().all(|&v| v == 0.0) {
        return Err(Error::InsufficientData("empty histogram".into()));
    }
    let smooth = binomial_smooth(hist, smoothing);
    let offset = (smoothing.max(1) - 1) as f64 / 2.0;
    // zero padding on both ends
    let mut y = Vec::with_capacity(smooth.len() + 2);
    y.push(0.0);
    y.extend_from_slice(&smooth);
    y.push(0.0);
    let global = smooth.iter().copied().fold(0.0, f64::max);

    let mut positions = Vec::new();
    let mut k = 1;
    while k < y.len() - 1 {
        if y[k] > y[k - 1] {
            let mut end = k;
            while end + 1 < y.len() - 1 && y[end + 1] == y[k] {
                end += 1;
            }
            if y[end + 1] < y[k] {
                let prom = topographic_prominence(&y, k, end);
                if prom >= prominence * global && prom > 0.0 {
                    // y index i corresponds to smoothed index i - 1
                    positions.push((k + end) as f64 / 2.0 - 1.0 - offset);
                }
            }
            k = end + 1;
        } else {
            k += 1;
        }
    }
    Ok(Modes {
        count: positions.len(),
        positions,
    })
}

/// Height of the plateau `y[start..=end]` above the higher of the lowest
/// points separating it from higher terrain (or the sequence ends) on either
/// side.
fn topographic_prominence(y: &[f64], start: usize, end: usize) -> f64 {
    let h = y[start];
    let mut left_min = h;
    for &v in y[..start].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &y[end + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Unimodal,
    Bimodal,
    Multimodal,
    Insufficient,
}

impl Modality {
    fn from_count(n: usize) -> Self {
        match n {
            0 | 1 => Modality::Unimodal,
            2 => Modality::Bimodal,
            _ => Modality::Multimodal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinModality {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub modality: Modality,
    pub mode_count: usize,
    /// Mode locations in index points.
    pub modes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityReport {
    pub scale: usize,
    pub bins: Vec<BinModality>,
    /// Midpoint of the r-bin where the terminal bimodal run begins.
    pub r_c: Option<f64>,
    pub present: bool,
    /// Why the verdict is absent, if it is.
    pub reason: Option<String>,
    pub detector: DetectorParams,
}

/// Classifies every r-bin and decides whether the scale shows the
/// unimodal-to-bimodal transition.
///
/// The transition bin is the first bimodal bin after the last unimodal one.
/// The verdict is present when some bin is unimodal, no multimodal bin sits
/// between the last unimodal bin and the transition, and at least `persist`
/// consecutive bimodal bins start at the transition. Insufficient bins are
/// skipped entirely.
pub fn classify(cond: &ConditionalDistribution, params: &DetectorParams) -> Result<ModalityReport> {
    let width = cond.z_edges[1] - cond.z_edges[0];
    let z0 = cond.z_edges[0] + 0.5 * width;
    let mut bins = Vec::with_capacity(cond.r_bins.len());
    for b in &cond.r_bins {
        let (modality, mode_count, modes) = if b.count < cond.min_samples || b.count == 0 {
            (Modality::Insufficient, 0, Vec::new())
        } else {
            let m = count_modes(&b.masses, params.smoothing, params.prominence)?;
            let locs = m.positions.iter().map(|p| z0 + p * width).collect();
            (Modality::from_count(m.count), m.count.max(1), locs)
        };
        bins.push(BinModality {
            lower: b.lower,
            upper: b.upper,
            count: b.count,
            modality,
            mode_count,
            modes,
        });
    }

    let classified: Vec<&BinModality> = bins
        .iter()
        .filter(|b| b.modality != Modality::Insufficient)
        .collect();
    let last_uni = classified
        .iter()
        .rposition(|b| b.modality == Modality::Unimodal);
    let search_from = last_uni.map_or(0, |u| u + 1);
    let transition = classified[search_from..]
        .iter()
        .position(|b| b.modality == Modality::Bimodal)
        .map(|p| search_from + p);
    let r_c = transition.map(|t| 0.5 * (classified[t].lower + classified[t].upper));

    let reason = match (last_uni, transition) {
        _ if classified.is_empty() => Some("no r-bin has enough samples".to_string()),
        (None, _) => Some("no unimodal r-bin".to_string()),
        (Some(_), None) => Some("no bimodal r-bin above the last unimodal one".to_string()),
        (Some(u), Some(t)) => {
            let run = classified[t..]
                .iter()
                .take_while(|b| b.modality == Modality::Bimodal)
                .count();
            if classified[u + 1..t]
                .iter()
                .any(|b| b.modality == Modality::Multimodal)
            {
                Some("multimodal r-bin precedes the bimodal run".to_string())
            } else if run < params.persist.max(1) {
                Some(format!(
                    "bimodal run of {run} bin(s) is shorter than {}",
                    params.persist.max(1)
                ))
            } else {
                None
            }
        }
    };

    Ok(ModalityReport {
        scale: cond.scale,
        bins,
        r_c,
        present: reason.is_none(),
        reason,
        detector: *params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanParams {
    /// Window stride; `None` means disjoint windows (stride = scale).
    pub stride: Option<usize>,
    pub binning: BinningParams,
    pub detector: DetectorParams,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            stride: None,
            binning: BinningParams::default(),
            detector: DetectorParams::default(),
        }
    }
}

impl ScanParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.stride == Some(0) {
            return bad("stride must be positive".into());
        }
        let b = &self.binning;
        if b.r_bins == 0 || b.min_samples == 0 {
            return bad("r_bins and min_samples must be positive".into());
        }
        if b.max_z_bins < 2 {
            return bad(format!("max_z_bins must be at least 2, got {}", b.max_z_bins));
        }
        let d = &self.detector;
        if d.smoothing == 0 || d.persist == 0 {
            return bad("smoothing and persist must be positive".into());
        }
        if !(0.0..1.0).contains(&d.prominence) {
            return bad(format!("prominence must lie in [0, 1), got {}", d.prominence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub scale: usize,
    pub present: bool,
    pub r_c: Option<f64>,
    pub report: Option<ModalityReport>,
    /// Set when the scale could not be classified at all.
    pub reason: Option<String>,
    #[serde(skip)]
    pub distribution: Option<ConditionalDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub entries: Vec<ScanEntry>,
    /// Longest run of consecutive grid scales with the transition present,
    /// as `(first scale, last scale)`; the earliest run wins ties.
    pub range: Option<(usize, usize)>,
}

impl PhaseScan {
    pub fn present(&self) -> bool {
        self.range.is_some()
    }

    pub fn present_scales(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.present)
            .map(|e| e.scale)
            .collect()
    }

    pub fn from_entries(entries: Vec<ScanEntry>) -> Self {
        let mut best: Option<(usize, usize)> = None; // (start index, length)
        let mut k = 0;
        while k < entries.len() {
            if entries[k].present {
                let start = k;
                while k < entries.len() && entries[k].present {
                    k += 1;
                }
                if best.is_none_or(|(_, len)| k - start > len) {
                    best = Some((start, k - start));
                }
            } else {
                k += 1;
            }
        }
        let range = best.map(|(s, len)| (entries[s].scale, entries[s + len - 1].scale));
        PhaseScan { entries, range }
    }
}

fn scan_one(incs: &IncrementSeries, scale: usize, params: &ScanParams) -> Result<ScanEntry> {
    let windows = window_stats(incs, scale, params.stride.unwrap_or(scale))?;
    match condition(&windows, &params.binning) {
        Ok(cond) => {
            let report = classify(&cond, &params.detector)?;
            Ok(ScanEntry {
                scale,
                present: report.present,
                r_c: report.r_c,
                report: Some(report),
                reason: None,
                distribution: Some(cond),
            })
        }
        Err(e) if e.is_statistical() => Ok(ScanEntry {
            scale,
            present: false,
            r_c: None,
            report: None,
            reason: Some(e.to_string()),
            distribution: None,
        }),
        Err(e) => Err(e),
    }
}

/// Classifies every scale of an ascending grid. Scales run in parallel on the
/// current rayon pool; results do not depend on the thread count.
pub fn scan(incs: &IncrementSeries, scales: &[usize], params: &ScanParams) -> Result<PhaseScan> {
    params.validate()?;
    if scales.is_empty() {
        return Err(Error::InvalidParameter("empty scale grid".into()));
    }
    if scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "scales must be strictly ascending".into(),
        ));
    }
    let entries = scales
        .par_iter()
        .map(|&s| scan_one(incs, s, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseScan::from_entries(entries))
}
