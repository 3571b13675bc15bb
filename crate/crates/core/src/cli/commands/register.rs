use std::path::Path;

use anyhow::bail;
use rayon::prelude::*;
use serde::Serialize;

use super::load_manifest;
use crate::cli::manifest::{EyeEntry, LoadedManifest, Manifest, VisitEntry};
use crate::cli::output::{write_atomic, write_image, write_json, write_mask};
use crate::cli::{Outcome, RunContext};
use crate::raster::{ImageFormat, Scale};
use crate::registration::{
    histogram_match, normalize_chirality, register_eye, EyeReport, MixtureReference,
    RegisterConfig, VisitInput,
};
use crate::temporal::{EyeSequence, Frame};
use crate::Result;

fn image_ext(scale: Scale) -> &'static str {
    match scale {
        Scale::Byte => ImageFormat::Pgm.extension(),
        Scale::Unit => ImageFormat::Llf1.extension(),
    }
}

/// Writes `<eye>_v<k>.<ext>` and `<eye>_v<k>_mask.pgm` into `out`.
pub(super) fn write_sequence(out: &Path, seq: &EyeSequence, scale: Scale) -> Result<EyeEntry> {
    let ext = image_ext(scale);
    let mut visits = Vec::with_capacity(seq.len());
    for (k, f) in seq.frames().iter().enumerate() {
        let image_path = format!("{}_v{k}.{ext}", seq.eye_id());
        let mask_path = format!("{}_v{k}_mask.pgm", seq.eye_id());
        let img = match scale {
            Scale::Byte => f.image.to_byte(),
            Scale::Unit => f.image.to_unit(),
        };
        write_image(out.join(&image_path), &img)?;
        write_mask(out.join(&mask_path), &f.mask)?;
        visits.push(VisitEntry {
            t: f.t,
            image_path,
            mask_path,
            keypoints_path: None,
        });
    }
    Ok(EyeEntry {
        eye_id: seq.eye_id().to_string(),
        laterality: seq.laterality(),
        visits,
    })
}

fn write_manifest(out: &Path, source: &Manifest, eyes: Vec<EyeEntry>) -> Result<()> {
    let m = Manifest {
        dataset_id: source.dataset_id.clone(),
        scale: source.scale,
        eyes,
    };
    write_atomic(out.join("manifest.json"), m.to_json()?.as_bytes())
}

fn register_one(
    m: &LoadedManifest,
    eye: &EyeEntry,
    cfg: &RegisterConfig,
    seed: u64,
) -> Result<crate::registration::Registered> {
    let visits = eye
        .visits
        .iter()
        .map(|v| {
            Ok(VisitInput {
                t: v.t,
                image: m.load_visit_image(v)?,
                mask: m.load_visit_mask(v)?,
                keypoints: m.load_visit_keypoints(&eye.eye_id, v)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    register_eye(&eye.eye_id, eye.laterality, &visits, cfg, seed)
}

#[derive(Serialize)]
struct RegistrationReport<'a> {
    tool_version: &'a str,
    eyes: Vec<EyeReport>,
    failed: Vec<String>,
}

pub fn register(ctx: &RunContext, manifest: &Path) -> anyhow::Result<Outcome> {
    let m = load_manifest(manifest)?;
    let cfg = &ctx.config.registration;
    let results: Vec<_> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| register_one(&m, eye, cfg, ctx.seed))
        .collect();
    let (mut reports, mut entries, mut problems, mut failed) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(results) {
        match r {
            Ok(reg) => {
                if let Some(reason) = &reg.report.dropped {
                    problems.push(format!("{}: dropped ({reason})", eye.eye_id));
                }
                if let Some(seq) = &reg.sequence {
                    entries.push(write_sequence(&ctx.out, seq, m.manifest.scale)?);
                }
                reports.push(reg.report);
            }
            Err(e) => {
                problems.push(format!("{}: {e}", eye.eye_id));
                failed.push(eye.eye_id.clone());
            }
        }
    }
    write_json(
        ctx.out.join("registration_report.json"),
        &RegistrationReport {
            tool_version: crate::TOOL_VERSION,
            eyes: reports,
            failed,
        },
    )?;
    if entries.is_empty() {
        bail!("no eye survived registration");
    }
    write_manifest(&ctx.out, &m.manifest, entries)?;
    Ok(Outcome::from_failures(problems))
}

fn harmonize_one(
    m: &LoadedManifest,
    eye: &EyeEntry,
    reference: &MixtureReference,
) -> Result<EyeSequence> {
    let seq = m.load_sequence(eye)?;
    let frames = seq
        .frames()
        .iter()
        .map(|f| {
            Ok(Frame {
                image: histogram_match(&f.image, &f.mask, reference)?.image,
                mask: f.mask.clone(),
                t: f.t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    normalize_chirality(&EyeSequence::new(seq.eye_id(), seq.laterality(), frames)?)
}

pub fn harmonize(ctx: &RunContext, manifest: &Path) -> anyhow::Result<Outcome> {
    let m = load_manifest(manifest)?;
    let reference = MixtureReference::calibrated();
    let results: Vec<_> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| harmonize_one(&m, eye, &reference))
        .collect();
    let (mut entries, mut problems) = (Vec::new(), Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(results) {
        match r {
            Ok(seq) => entries.push(write_sequence(&ctx.out, &seq, m.manifest.scale)?),
            Err(e) => problems.push(format!("{}: {e}", eye.eye_id)),
        }
    }
    if entries.is_empty() {
        bail!("no eye could be harmonized");
    }
    write_manifest(&ctx.out, &m.manifest, entries)?;
    Ok(Outcome::from_failures(problems))
}
