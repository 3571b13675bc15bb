use std::path::Path;

use anyhow::bail;
use rayon::prelude::*;

use super::{csv_writer, find_image, load_manifest, load_unit, parse_named_dir};
use crate::cli::manifest::{EyeEntry, LoadedManifest};
use crate::cli::output::{fmt_num, write_atomic, write_json};
use crate::cli::{Outcome, PosteriorArgs, RunContext};
use crate::diagnostics::{
    entropy_report, pair_stats, posterior_report, PairStats, PosteriorEye, PosteriorReport,
};
use crate::{Error, Result};

fn eye_pairs(m: &LoadedManifest, eye: &EyeEntry, threshold: f64) -> Result<Vec<PairStats>> {
    let seq = m.load_sequence(eye)?;
    seq.frames()
        .windows(2)
        .map(|w| {
            let mask = w[0].mask.intersection(&w[1].mask)?;
            pair_stats(
                &eye.eye_id,
                &w[0].image,
                &w[1].image,
                &mask,
                w[1].t - w[0].t,
                threshold,
            )
        })
        .collect()
}

fn pairs_csv(pairs: &[PairStats]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "eye_id",
        "delta_t",
        "n_valid",
        "changed_fraction",
        "mean_abs_delta",
        "copy_last_ssim",
    ])
    .map_err(csv_err)?;
    for p in pairs {
        w.write_record([
            p.eye_id.clone(),
            fmt_num(p.delta_t),
            p.n_valid.to_string(),
            fmt_num(p.changed_fraction),
            fmt_num(p.mean_abs_delta),
            fmt_num(p.copy_last_ssim),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn entropy(ctx: &RunContext, manifest: &Path) -> anyhow::Result<Outcome> {
    let m = load_manifest(manifest)?;
    let cfg = &ctx.config.entropy;
    let results: Vec<Result<Vec<PairStats>>> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| eye_pairs(&m, eye, cfg.changed_threshold))
        .collect();
    let (mut pairs, mut failures) = (Vec::new(), Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(results) {
        match r {
            Ok(p) => pairs.extend(p),
            Err(e) => failures.push(format!("{}: {e}", eye.eye_id)),
        }
    }
    if pairs.is_empty() {
        bail!("no visit pairs to analyse");
    }
    let report = entropy_report(&pairs, &cfg.strata_edges)?;
    write_json(ctx.out.join("entropy.json"), &report)?;
    write_atomic(ctx.out.join("entropy.txt"), report.to_text().as_bytes())?;
    write_atomic(ctx.out.join("entropy_pairs.csv"), &pairs_csv(&pairs)?)?;
    Ok(Outcome::from_failures(failures))
}

fn posterior_eye(m: &LoadedManifest, eye: &EyeEntry, dir: &Path, k: usize) -> Result<PosteriorEye> {
    let n = eye.visits.len();
    let last = &eye.visits[n - 1];
    let target = m.load_visit_image(last)?.to_unit();
    let mut mask = m.load_visit_mask(last)?;
    if n >= 2 {
        mask = mask.intersection(&m.load_visit_mask(&eye.visits[n - 2])?)?;
    }
    let samples = (0..k)
        .map(|i| {
            let stem = format!("{}_s{i}", eye.eye_id);
            let path = find_image(dir, &stem).ok_or_else(|| Error::MissingPrediction {
                eye_id: eye.eye_id.clone(),
                stem,
            })?;
            load_unit(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorEye {
        eye_id: eye.eye_id.clone(),
        samples,
        target,
        mask,
    })
}

pub fn posterior(ctx: &RunContext, args: &PosteriorArgs) -> anyhow::Result<Outcome> {
    let m = load_manifest(&args.manifest)?;
    let k = args.k.unwrap_or(ctx.config.posterior.k);
    if k < 2 {
        bail!("posterior needs at least 2 samples per eye, got {k}");
    }
    let named = args
        .samples
        .iter()
        .map(|s| parse_named_dir(s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (name, dir) in &named {
        let loaded: Vec<Result<PosteriorEye>> = m
            .manifest
            .eyes
            .par_iter()
            .map(|eye| posterior_eye(&m, eye, dir, k))
            .collect();
        let mut eyes = Vec::new();
        for (eye, r) in m.manifest.eyes.iter().zip(loaded) {
            match r {
                Ok(e) => eyes.push(e),
                Err(e) => failures.push(format!("{name}: {}: {e}", eye.eye_id)),
            }
        }
        if eyes.is_empty() {
            failures.push(format!("{name}: no eye had {k} samples"));
            continue;
        }
        models.push(posterior_report(
            name,
            &eyes,
            ctx.config.posterior.agreement,
        )?);
    }
    if models.is_empty() {
        bail!("no model could be analysed");
    }
    let report = PosteriorReport::new(models);
    write_json(ctx.out.join("posterior.json"), &report)?;
    write_atomic(ctx.out.join("posterior.txt"), report.to_text().as_bytes())?;
    Ok(Outcome::from_failures(failures))
}
