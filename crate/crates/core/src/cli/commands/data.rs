use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::manifest::{EyeEntry, LoadedManifest, Manifest, VisitEntry};
use crate::cli::output::{write_atomic, write_image, write_json};
use crate::cli::phantom::{write_phantom, PhantomSpec};
use crate::cli::{BaselineArgs, BaselineKind, IngestArgs, Outcome, PhantomArgs, RunContext};
use crate::raster::{GrayImage, Scale};
use crate::registration::quality_score;
use crate::temporal::{copy_last, linear_spline};
use crate::{Error, Result};

pub fn phantom(ctx: &RunContext, args: &PhantomArgs) -> anyhow::Result<Outcome> {
    let mut spec: PhantomSpec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ctx.config.phantom.clone(),
    };
    if let Some(n) = args.n_eyes {
        spec.n_eyes = n;
    }
    if let Some(n) = args.frames {
        spec.frames_per_eye = n;
    }
    if let Some(n) = args.size {
        spec.image_size = n;
    }
    if let Some(g) = args.growth {
        spec.lesion_growth_rate = g;
    }
    if let Some(a) = args.noise {
        spec.noise_amplitude = a;
    }
    if args.keypoints {
        spec.keypoints = true;
    }
    if let Some(s) = ctx.seed_override {
        spec.rng_seed = s;
    }
    spec.validate()?;
    write_phantom(&spec, &ctx.out)?;
    Ok(Outcome::Complete)
}

fn baseline_eye(
    m: &LoadedManifest,
    eye: &EyeEntry,
    kind: BaselineKind,
) -> Result<(String, GrayImage)> {
    let seq = m.load_sequence(eye)?;
    let n = seq.len();
    if n < 2 {
        return Err(Error::InsufficientHistory(n.saturating_sub(1)));
    }
    let history = seq.history(n - 1)?;
    let t_star = seq.last().t;
    let stem = format!("{}_{}", eye.eye_id, n - 1);
    Ok(match kind {
        BaselineKind::CopyLast if m.manifest.scale == Scale::Byte => (
            format!("{stem}.pgm"),
            copy_last(&history, t_star)?.to_byte(),
        ),
        BaselineKind::CopyLast => (
            format!("{stem}.llf1"),
            copy_last(&history, t_star)?.to_unit(),
        ),
        BaselineKind::Spline => (
            format!("{stem}.llf1"),
            linear_spline(&history, t_star)?.to_unit(),
        ),
    })
}

pub fn baseline(ctx: &RunContext, args: &BaselineArgs) -> anyhow::Result<Outcome> {
    let m = super::load_manifest(&args.manifest)?;
    let results: Vec<_> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| baseline_eye(&m, eye, args.kind))
        .collect();
    let (mut written, mut failures) = (0, Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(results) {
        match r {
            Ok((name, img)) => {
                write_image(ctx.out.join(name), &img)?;
                written += 1;
            }
            Err(e) => failures.push(format!("{}: {e}", eye.eye_id)),
        }
    }
    if written == 0 {
        bail!("no baseline prediction could be produced");
    }
    Ok(Outcome::from_failures(failures))
}

#[derive(Debug, Serialize)]
struct DuplicateGroup {
    t: f64,
    candidates: Vec<String>,
    quality: Vec<f64>,
    kept: Option<usize>,
}

#[derive(Debug, Serialize)]
struct IngestEye {
    eye_id: String,
    groups: Vec<DuplicateGroup>,
    n_kept: usize,
}

#[derive(Serialize)]
struct IngestReport<'a> {
    tool_version: &'a str,
    quality_cutoff: Option<f64>,
    eyes: Vec<IngestEye>,
    failed: Vec<String>,
}

/// Same-day visits grouped in time order; the manifest order breaks ties.
fn duplicate_groups(visits: &[VisitEntry]) -> Vec<Vec<&VisitEntry>> {
    let mut sorted: Vec<&VisitEntry> = visits.iter().collect();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut groups: Vec<Vec<&VisitEntry>> = Vec::new();
    for v in sorted {
        match groups.last_mut() {
            Some(g) if g[0].t == v.t => g.push(v),
            _ => groups.push(vec![v]),
        }
    }
    groups
}

fn ingest_eye<'a>(
    m: &LoadedManifest,
    eye: &'a EyeEntry,
    cutoff: Option<f64>,
) -> Result<(IngestEye, Vec<&'a VisitEntry>)> {
    let mut groups = Vec::new();
    let mut kept = Vec::new();
    for g in duplicate_groups(&eye.visits) {
        let quality = g
            .iter()
            .map(|v| Ok(quality_score(&m.load_visit_image(v)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut best: Option<usize> = None;
        for (i, &q) in quality.iter().enumerate() {
            if best.is_none_or(|b| q > quality[b]) {
                best = Some(i);
            }
        }
        let chosen = best.filter(|&b| cutoff.is_none_or(|c| quality[b] >= c));
        if let Some(i) = chosen {
            kept.push(g[i]);
        }
        groups.push(DuplicateGroup {
            t: g[0].t,
            candidates: g.iter().map(|v| v.image_path.clone()).collect(),
            quality,
            kept: chosen,
        });
    }
    Ok((
        IngestEye {
            eye_id: eye.eye_id.clone(),
            groups,
            n_kept: kept.len(),
        },
        kept,
    ))
}

fn copy_file(from: &Path, to: &Path) -> Result<()> {
    let bytes = fs::read(from).map_err(|e| Error::io(from, e))?;
    write_atomic(to, &bytes)
}

fn extension(path: &str) -> &str {
    Path::new(path)
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("pgm")
}

fn copy_visits(
    m: &LoadedManifest,
    eye_id: &str,
    visits: &[&VisitEntry],
    out: &Path,
) -> Result<Vec<VisitEntry>> {
    visits
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let stem = format!("{eye_id}_v{k}");
            let image_path = format!("{stem}.{}", extension(&v.image_path));
            let mask_path = format!("{stem}_mask.{}", extension(&v.mask_path));
            copy_file(&m.resolve(&v.image_path), &out.join(&image_path))?;
            copy_file(&m.resolve(&v.mask_path), &out.join(&mask_path))?;
            let keypoints_path = match &v.keypoints_path {
                Some(kp) => {
                    let rel = format!("{stem}_kp.json");
                    copy_file(&m.resolve(kp), &out.join(&rel))?;
                    Some(rel)
                }
                None => None,
            };
            Ok(VisitEntry {
                t: v.t,
                image_path,
                mask_path,
                keypoints_path,
            })
        })
        .collect()
}

pub fn ingest(ctx: &RunContext, args: &IngestArgs) -> anyhow::Result<Outcome> {
    let m = LoadedManifest::load_raw(&args.manifest)
        .with_context(|| format!("loading manifest {}", args.manifest.display()))?;
    let cutoff = args.cutoff.or(ctx.config.ingest.quality_cutoff);
    let results: Vec<_> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| {
            let (report, kept) = ingest_eye(&m, eye, cutoff)?;
            let visits = copy_visits(&m, &eye.eye_id, &kept, &ctx.out)?;
            Ok((report, visits))
        })
        .collect::<Vec<Result<_>>>();
    let (mut reports, mut entries, mut failed) = (Vec::new(), Vec::new(), Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(results) {
        match r {
            Ok((report, visits)) => {
                reports.push(report);
                if !visits.is_empty() {
                    entries.push(EyeEntry {
                        eye_id: eye.eye_id.clone(),
                        laterality: eye.laterality,
                        visits,
                    });
                }
            }
            Err(e) => failed.push(format!("{}: {e}", eye.eye_id)),
        }
    }
    write_json(
        ctx.out.join("ingest_report.json"),
        &IngestReport {
            tool_version: crate::TOOL_VERSION,
            quality_cutoff: cutoff,
            eyes: reports,
            failed: failed.clone(),
        },
    )?;
    if entries.is_empty() {
        bail!("no visit survived ingest");
    }
    let out = Manifest {
        dataset_id: m.manifest.dataset_id.clone(),
        scale: m.manifest.scale,
        eyes: entries,
    };
    write_atomic(ctx.out.join("manifest.json"), out.to_json()?.as_bytes())?;
    Ok(Outcome::from_failures(failed))
}
