//! Surrogate increment series: i.i.d. power-law magnitudes with fair random
//! signs, and the bifurcation experiments run on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conddist::{scan, PhaseScan, ScanParams};
use crate::error::{Error, Result};
use crate::series::IncrementSeries;

/// Stream used for magnitudes; signs draw from `SIGN_STREAM` of the same seed.
const MAGNITUDE_STREAM: u64 = 0;
const SIGN_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    /// CCDF exponent of the magnitudes.
    pub zeta: f64,
    pub i_min: f64,
    pub n: usize,
    pub seed: u64,
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!("zeta must be positive, got {}", self.zeta)));
        }
        if !(self.i_min > 0.0 && self.i_min.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "i_min must be positive, got {}",
                self.i_min
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("n must be at least 2, got {}", self.n)));
        }
        Ok(())
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pareto quantile function: maps `u` in `[0, 1)` to `i_min (1 - u)^(-1/zeta)`.
pub fn inverse_transform(u: f64, i_min: f64, zeta: f64) -> f64 {
    i_min * (1.0 - u).powf(-1.0 / zeta)
}

/// `n` independent power-law magnitudes by inverse-transform sampling.
pub fn sample_abs_increments(spec: &SurrogateSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = rng(spec.seed, MAGNITUDE_STREAM);
    Ok((0..spec.n)
        .map(|_| inverse_transform(rng.random::<f64>(), spec.i_min, spec.zeta))
        .collect())
}

/// Attaches an independent fair sign to each magnitude.
pub fn assign_signs(abs: Vec<f64>, seed: u64) -> Result<IncrementSeries> {
    if abs.is_empty() {
        return Err(Error::InvalidParameter("no magnitudes to sign".into()));
    }
    let mut rng = rng(seed, SIGN_STREAM);
    let signed = abs
        .iter()
        .map(|&x| if rng.random::<bool>() { x } else { -x })
        .collect();
    Ok(IncrementSeries::from_parts(signed, abs))
}

/// Surrogate increment series for `spec`.
pub fn generate(spec: &SurrogateSpec) -> Result<IncrementSeries> {
    assign_signs(sample_abs_increments(spec)?, spec.seed)
}

/// Generates a surrogate and scans it for the bifurcation.
pub fn run_experiment(spec: &SurrogateSpec, scales: &[usize], params: &ScanParams) -> Result<PhaseScan> {
    scan(&generate(spec)?, scales, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub zeta: f64,
    pub seed: u64,
    pub present: bool,
    pub range: Option<(usize, usize)>,
    /// Scales with the transition present, whether or not contiguous.
    pub present_scales: Vec<usize>,
    /// `(scale, present, r_c)` per scanned scale.
    pub scales: Vec<(usize, bool, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaSummary {
    pub zeta: f64,
    pub runs: usize,
    pub present_fraction: f64,
    /// Smallest first scale and largest last scale over present ranges.
    pub range_union: Option<(usize, usize)>,
    /// Scales shared by every present range.
    pub range_intersection: Option<(usize, usize)>,
    /// `(scale, fraction of runs present at that scale)`.
    pub per_scale: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub base: SurrogateSpec,
    pub scales: Vec<usize>,
    pub params: ScanParams,
    pub cells: Vec<SweepCell>,
    pub summary: Vec<ZetaSummary>,
}

impl SweepResult {
    pub fn summary_for(&self, zeta: f64) -> Option<&ZetaSummary> {
        self.summary.iter().find(|s| s.zeta == zeta)
    }
}

/// Runs every `(zeta, seed)` combination on the base spec (whose `zeta` and
/// `seed` are overridden) and aggregates per exponent. Cells run in parallel
/// on the current rayon pool and are reported in input order.
pub fn sweep(
    zetas: &[f64],
    seeds: &[u64],
    base: &SurrogateSpec,
    scales: &[usize],
    params: &ScanParams,
) -> Result<SweepResult> {
    if zetas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter(
            "sweep needs at least one exponent and one seed".into(),
        ));
    }
    let jobs: Vec<(f64, u64)> = zetas
        .iter()
        .flat_map(|&z| seeds.iter().map(move |&s| (z, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(zeta, seed)| {
            let spec = SurrogateSpec { zeta, seed, ..*base };
            let scan = run_experiment(&spec, scales, params)?;
            Ok(SweepCell {
                zeta,
                seed,
                present: scan.present(),
                range: scan.range,
                present_scales: scan.present_scales(),
                scales: scan
                    .entries
                    .iter()
                    .map(|e| (e.scale, e.present, e.r_c))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = zetas
        .iter()
        .map(|&zeta| summarize(zeta, scales, cells.iter().filter(|c| c.zeta == zeta)))
        .collect();
    Ok(SweepResult {
        base: *base,
        scales: scales.to_vec(),
        params: *params,
        cells,
        summary,
    })
}

fn summarize<'a>(zeta: f64, scales: &[usize], cells: impl Iterator<Item = &'a SweepCell>) -> ZetaSummary {
    let cells: Vec<&SweepCell> = cells.collect();
    let runs = cells.len();
    let present: Vec<(usize, usize)> = cells.iter().filter_map(|c| c.range).collect();
    let range_union = present
        .iter()
        .copied()
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    let range_intersection = present
        .iter()
        .copied()
        .map(Some)
        .reduce(|a, b| {
            let (a, b) = (a?, b?);
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            (lo <= hi).then_some((lo, hi))
        })
        .flatten();
    let per_scale = scales
        .iter()
        .map(|&s| {
            let hits = cells
                .iter()
                .filter(|c| c.scales.iter().any(|&(sc, p, _)| sc == s && p))
                .count();
            (s, hits as f64 / runs.max(1) as f64)
        })
        .collect();
    ZetaSummary {
        zeta,
        runs,
        present_fraction: present.len() as f64 / runs.max(1) as f64,
        range_union,
        range_intersection,
        per_scale,
    }
}
