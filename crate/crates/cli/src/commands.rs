use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use chrono::NaiveDate;
use serde::Serialize;

use twophase::calendar::{CONTINUOUS_PRESET, HK_PRESET};
use twophase::surrogate::{self, SurrogateSpec};
use twophase::tailfit::{ccdf_points, collapse, fit_tail};
use twophase::{
    scan, Calendar, IncrementSeries, PhaseScan, ScanParams, TailFit, TailFitConfig, TickSeries,
};

use crate::output::{dat, digest_file, FileDigest, RunDir};
use crate::params::Resolver;
use crate::{Command, DetectArgs, RunArgs, SeriesArgs, SurrogateArgs, SweepArgs, TailArgs};

const DEFAULT_SCAN_SCALES: &str = "2:30:29";
const DEFAULT_COLLAPSE_SCALES: &str = "5,10,20,50";

/// State shared by one command: resolved parameters and input digests.
struct Ctx {
    params: Resolver,
    inputs: Vec<FileDigest>,
}

impl Ctx {
    fn new(run: &RunArgs) -> Result<Self> {
        Ok(Self {
            params: Resolver::from_file(run.config.as_deref())?,
            inputs: Vec::new(),
        })
    }

    fn finish(self, out: RunDir, command: &str) -> Result<PathBuf> {
        for key in self.params.unused() {
            eprintln!("warning: config key `{key}` is not used by `{command}`");
        }
        out.finish(command, self.params.resolved().clone(), self.inputs)
    }

    fn series(&mut self, s: &SeriesArgs) -> Result<Option<TickSeries>> {
        let Some(path) = self.params.opt::<PathBuf>("input", s.input.clone())? else {
            return Ok(None);
        };
        let cal_spec = self
            .params
            .get("calendar", s.calendar.clone(), CONTINUOUS_PRESET.to_string())?;
        let calendar = Calendar::resolve(&cal_spec)?;
        let series = TickSeries::load_csv(&path, &calendar)?;
        self.inputs.push(digest_file(&path)?);
        if cal_spec != HK_PRESET && cal_spec != CONTINUOUS_PRESET {
            self.inputs.push(digest_file(Path::new(&cal_spec))?);
        }
        Ok(Some(series))
    }

    fn boundaries(&mut self, s: &SeriesArgs) -> Result<Vec<NaiveDate>> {
        Ok(self
            .params
            .list("boundaries", s.boundaries.clone())?
            .unwrap_or_default())
    }

    fn surrogate_spec(&mut self, g: &SurrogateArgs) -> Result<Option<SurrogateSpec>> {
        let Some(zeta) = self.params.opt("zeta", g.zeta)? else {
            return Ok(None);
        };
        let spec = SurrogateSpec {
            zeta,
            i_min: self.params.require("imin", g.imin)?,
            n: self.params.require("n", g.n)?,
            seed: self.params.get("seed", g.seed, 0)?,
        };
        spec.validate()?;
        Ok(Some(spec))
    }

    /// Increments of the chosen segment of `--input`, or of a surrogate.
    fn increments(&mut self, s: &SeriesArgs, g: &SurrogateArgs) -> Result<IncrementSeries> {
        if let Some(series) = self.series(s)? {
            let boundaries = self.boundaries(s)?;
            let label = self.params.opt::<String>("segment", s.segment.clone())?;
            let cross = self.params.get("cross_sessions", s.cross_sessions, false)?;
            let segments = series.segment_by_calendar(&boundaries)?;
            let segment = match label {
                None if segments.len() == 1 => &segments[0],
                None => bail!(
                    "{} segments defined; choose one with --segment (1..{})",
                    segments.len(),
                    segments.len()
                ),
                Some(l) => match segments.iter().find(|seg| seg.label() == l) {
                    Some(seg) => seg,
                    None => bail!("no segment labelled `{l}`"),
                },
            };
            return Ok(segment.increments(cross)?);
        }
        match self.surrogate_spec(g)? {
            Some(spec) => Ok(surrogate::generate(&spec)?),
            None => bail!("no data: pass --input FILE, or --zeta with --imin and --n for a surrogate"),
        }
    }

    fn scan_params(&mut self, d: &DetectArgs) -> Result<ScanParams> {
        let def = ScanParams::default();
        let p = &mut self.params;
        let mut sp = ScanParams {
            stride: p.opt("stride", d.stride)?.or(def.stride),
            ..def
        };
        sp.binning.r_bins = p.get("r_bins", d.r_bins, def.binning.r_bins)?;
        sp.binning.r_binning = p.get("r_binning", d.r_binning, def.binning.r_binning)?;
        sp.binning.min_samples = p.get("min_samples", d.min_samples, def.binning.min_samples)?;
        sp.binning.max_z_bins = p.get("max_z_bins", d.max_z_bins, def.binning.max_z_bins)?;
        sp.detector.smoothing = p.get("smoothing", d.smoothing, def.detector.smoothing)?;
        sp.detector.prominence = p.get("prominence", d.prominence, def.detector.prominence)?;
        sp.detector.persist = p.get("persist", d.persist, def.detector.persist)?;
        if let Some(stride) = sp.stride {
            p.get("stride", Some(stride), stride)?;
        }
        sp.validate()?;
        Ok(sp)
    }

    fn tail_config(&mut self, t: &TailArgs) -> Result<TailFitConfig> {
        let def = TailFitConfig::default();
        let p = &mut self.params;
        Ok(TailFitConfig {
            min_tail: p.get("min_tail", t.min_tail, def.min_tail)?,
            max_candidates: p.get("max_candidates", t.max_candidates, def.max_candidates)?,
            log_bin_ratio: p.get("log_bin_ratio", t.log_bin_ratio, def.log_bin_ratio)?,
            min_ls_bins: p.get("min_ls_bins", t.min_ls_bins, def.min_ls_bins)?,
        })
    }
}

pub fn run(command: Command) -> Result<String> {
    match command {
        Command::Ingest { run, series } => ingest(&run, &series),
        Command::FitTail {
            run,
            series,
            surrogate,
            tail,
        } => fit_tail_cmd(&run, &series, &surrogate, &tail),
        Command::Scan {
            run,
            series,
            surrogate,
            detect,
        } => scan_cmd(&run, &series, &surrogate, &detect),
        Command::Simulate {
            run,
            surrogate,
            detect,
        } => simulate(&run, &surrogate, &detect),
        Command::Sweep { run, sweep, detect } => sweep_cmd(&run, &sweep, &detect),
        Command::Collapse {
            run,
            series,
            surrogate,
            scales,
        } => collapse_cmd(&run, &series, &surrogate, scales),
    }
}

#[derive(Serialize)]
struct SegmentSummary {
    label: String,
    first_index: usize,
    points: usize,
    start: String,
    end: String,
    increments: usize,
    crossing_increments: usize,
}

fn ingest(run: &RunArgs, s: &SeriesArgs) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let Some(series) = ctx.series(s)? else {
        bail!("ingest needs --input FILE");
    };
    let boundaries = ctx.boundaries(s)?;
    let segments = series.segment_by_calendar(&boundaries)?;
    let mut out = RunDir::create(&run.out)?;

    let mut csv = String::from("timestamp,value,segment\n");
    let mut summaries = Vec::new();
    for seg in &segments {
        for p in seg.points() {
            let _ = writeln!(
                csv,
                "{},{},{}",
                p.timestamp.format("%Y-%m-%dT%H:%M"),
                p.value,
                seg.label()
            );
        }
        let incs = seg.increments(true)?;
        let pts = seg.points();
        summaries.push(SegmentSummary {
            label: seg.label().to_string(),
            first_index: seg.range().start,
            points: seg.len(),
            start: pts[0].timestamp.format("%Y-%m-%dT%H:%M").to_string(),
            end: pts[pts.len() - 1].timestamp.format("%Y-%m-%dT%H:%M").to_string(),
            increments: incs.len(),
            crossing_increments: incs.crossing_flags().iter().filter(|&&f| f).count(),
        });
    }
    out.write("series.csv", csv.as_bytes())?;

    let mut index = String::from("label,first_index,points,start,end,increments,crossing_increments\n");
    for m in &summaries {
        let _ = writeln!(
            index,
            "{},{},{},{},{},{},{}",
            m.label, m.first_index, m.points, m.start, m.end, m.increments, m.crossing_increments
        );
    }
    out.write("segments.csv", index.as_bytes())?;
    out.write_json(
        "segments.json",
        &serde_json::json!({ "source": series.source(), "points": series.len(), "segments": summaries }),
    )?;

    let dir = ctx.finish(out, "ingest")?;
    Ok(format!(
        "ingested {} points in {} segment(s) -> {}",
        series.len(),
        segments.len(),
        dir.display()
    ))
}

#[derive(Serialize)]
struct TailReport<'a> {
    samples: usize,
    zeros_dropped: usize,
    config: &'a TailFitConfig,
    fit: &'a TailFit,
}

fn fit_tail_cmd(run: &RunArgs, s: &SeriesArgs, g: &SurrogateArgs, t: &TailArgs) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let incs = ctx.increments(s, g)?;
    let config = ctx.tail_config(t)?;
    let samples = incs.usable_absolute();
    let fit = fit_tail(&samples, &config)?;
    let positive: Vec<f64> = samples.iter().copied().filter(|&x| x > 0.0).collect();

    let mut out = RunDir::create(&run.out)?;
    out.write_json(
        "tailfit.json",
        &TailReport {
            samples: samples.len(),
            zeros_dropped: samples.len() - positive.len(),
            config: &config,
            fit: &fit,
        },
    )?;
    let ccdf = ccdf_points(&positive);
    out.write(
        "ccdf.dat",
        dat(
            &["absolute increment I, P(X >= I)".into()],
            ccdf.iter().map(|&(x, p)| vec![x, p]),
        )
        .as_bytes(),
    )?;
    let tail_share = fit.n_tail as f64 / positive.len() as f64;
    out.write(
        "ccdf_fit.dat",
        dat(
            &[format!(
                "power-law fit above I_min = {}, zeta = {}: I, model P(X >= I)",
                fit.i_min, fit.zeta_ks
            )],
            ccdf.iter()
                .filter(|&&(x, _)| x >= fit.i_min)
                .map(|&(x, _)| vec![x, tail_share * (x / fit.i_min).powf(-fit.zeta_ks)]),
        )
        .as_bytes(),
    )?;

    let dir = ctx.finish(out, "fit-tail")?;
    Ok(format!(
        "I_min = {}, zeta_ks = {:.4}, zeta_ls = {:.4}, zeta_avg = {:.4} -> {}",
        fit.i_min,
        fit.zeta_ks,
        fit.zeta_ls,
        fit.zeta_avg,
        dir.display()
    ))
}

fn describe(scan: &PhaseScan) -> String {
    match scan.range {
        Some((a, b)) => format!("bifurcation present over scales {a}..={b}"),
        None => "bifurcation absent at every scale".to_string(),
    }
}

/// `scan.json`, a per-scale CSV table and one `.dat` file per r-bin.
fn write_scan(out: &mut RunDir, params: &ScanParams, scan: &PhaseScan) -> Result<()> {
    out.write_json(
        "scan.json",
        &serde_json::json!({ "params": params, "scan": scan }),
    )?;
    let mut table = String::from("scale,present,r_c,reason\n");
    for e in &scan.entries {
        let reason = e
            .reason
            .as_deref()
            .or(e.report.as_ref().and_then(|r| r.reason.as_deref()))
            .unwrap_or("");
        let _ = writeln!(
            table,
            "{},{},{},\"{}\"",
            e.scale,
            e.present,
            e.r_c.map(|r| r.to_string()).unwrap_or_default(),
            reason.replace('"', "'")
        );
    }
    out.write("scan.csv", table.as_bytes())?;

    for e in &scan.entries {
        let (Some(dist), Some(report)) = (&e.distribution, &e.report) else {
            continue;
        };
        let centers = dist.z_centers();
        for (k, (bin, cls)) in dist.r_bins.iter().zip(&report.bins).enumerate() {
            let header = vec![
                format!("scale {}, r-bin {} of {}", e.scale, k + 1, dist.r_bins.len()),
                format!("r in [{}, {}], {} windows, {:?}", bin.lower, bin.upper, bin.count, cls.modality),
                "Z bin centre, mass".to_string(),
            ];
            let rows = centers.iter().zip(&bin.masses).map(|(&z, &m)| vec![z, m]);
            out.write(
                &format!("dist/scale_{:04}/rbin_{:02}.dat", e.scale, k + 1),
                dat(&header, rows).as_bytes(),
            )?;
        }
    }
    Ok(())
}

fn scan_cmd(run: &RunArgs, s: &SeriesArgs, g: &SurrogateArgs, d: &DetectArgs) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let incs = ctx.increments(s, g)?;
    let scales = ctx.params.scales(d.scales.clone(), DEFAULT_SCAN_SCALES)?;
    let params = ctx.scan_params(d)?;
    let result = scan(&incs, &scales, &params)?;
    let mut out = RunDir::create(&run.out)?;
    write_scan(&mut out, &params, &result)?;
    let dir = ctx.finish(out, "scan")?;
    Ok(format!("{} -> {}", describe(&result), dir.display()))
}

fn simulate(run: &RunArgs, g: &SurrogateArgs, d: &DetectArgs) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let Some(spec) = ctx.surrogate_spec(g)? else {
        bail!("simulate needs --zeta, --imin and --n");
    };
    let scales = ctx.params.scales(d.scales.clone(), DEFAULT_SCAN_SCALES)?;
    let params = ctx.scan_params(d)?;
    let incs = surrogate::generate(&spec)?;
    let result = scan(&incs, &scales, &params)?;

    let mut out = RunDir::create(&run.out)?;
    out.write_json("surrogate.json", &spec)?;
    out.write(
        "increments.dat",
        dat(
            &["index, signed increment, absolute increment".into()],
            incs.signed()
                .iter()
                .zip(incs.absolute())
                .enumerate()
                .map(|(k, (&s, &a))| vec![k as f64, s, a]),
        )
        .as_bytes(),
    )?;
    write_scan(&mut out, &params, &result)?;
    let dir = ctx.finish(out, "simulate")?;
    Ok(format!("{} -> {}", describe(&result), dir.display()))
}

fn sweep_cmd(run: &RunArgs, a: &SweepArgs, d: &DetectArgs) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let Some(zetas) = ctx.params.list::<f64>("zeta", a.zeta.clone())? else {
        bail!("sweep needs --zeta Z1,Z2,...");
    };
    let Some(seeds) = ctx.params.list::<u64>("seeds", a.seeds.clone())? else {
        bail!("sweep needs --seeds S1,S2,...");
    };
    let base = SurrogateSpec {
        zeta: zetas.first().copied().unwrap_or(1.0),
        i_min: ctx.params.require("imin", a.imin)?,
        n: ctx.params.require("n", a.n)?,
        seed: 0,
    };
    let scales = ctx.params.scales(d.scales.clone(), DEFAULT_SCAN_SCALES)?;
    let params = ctx.scan_params(d)?;
    let result = surrogate::sweep(&zetas, &seeds, &base, &scales, &params)?;

    let mut out = RunDir::create(&run.out)?;
    out.write_json("sweep.json", &result)?;
    let mut phase = String::from("zeta,scale,present_fraction\n");
    for z in &result.summary {
        for &(scale, frac) in &z.per_scale {
            let _ = writeln!(phase, "{},{},{}", z.zeta, scale, frac);
        }
    }
    out.write("phase.csv", phase.as_bytes())?;
    let mut summary = String::from("zeta,runs,present_fraction\n");
    for z in &result.summary {
        let _ = writeln!(summary, "{},{},{}", z.zeta, z.runs, z.present_fraction);
    }
    out.write("summary.csv", summary.as_bytes())?;

    let dir = ctx.finish(out, "sweep")?;
    let fractions: Vec<String> = result
        .summary
        .iter()
        .map(|z| format!("{}: {}", z.zeta, z.present_fraction))
        .collect();
    Ok(format!(
        "present fraction by zeta [{}] -> {}",
        fractions.join(", "),
        dir.display()
    ))
}

fn collapse_cmd(run: &RunArgs, s: &SeriesArgs, g: &SurrogateArgs, scales: Option<String>) -> Result<String> {
    let mut ctx = Ctx::new(run)?;
    let incs = ctx.increments(s, g)?;
    let scales = ctx.params.scales(scales, DEFAULT_COLLAPSE_SCALES)?;
    let report = collapse(&incs, &scales)?;

    let mut out = RunDir::create(&run.out)?;
    out.write_json("collapse.json", &report)?;
    for (k, &scale) in report.scales.iter().enumerate() {
        out.write(
            &format!("collapse_{scale:04}.dat"),
            dat(
                &[
                    format!("scale {scale}, dispersion {}", report.dispersions[k]),
                    "Z / dispersion, dispersion * p(Z)".into(),
                ],
                report.rescaled_pdfs[k].iter().map(|&(x, p)| vec![x, p]),
            )
            .as_bytes(),
        )?;
    }
    let dir = ctx.finish(out, "collapse")?;
    Ok(format!(
        "max pairwise KS distance {:.4} -> {}",
        report.score,
        dir.display()
    ))
}
