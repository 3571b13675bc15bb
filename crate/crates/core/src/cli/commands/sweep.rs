use std::path::PathBuf;

use anyhow::bail;
use rayon::prelude::*;

use super::{find_image, load_manifest, load_unit, parse_named_dir};
use crate::atrophy::{sensitivity_sweep, SweepCase};
use crate::cli::manifest::{EyeEntry, LoadedManifest};
use crate::cli::output::{write_atomic, write_json};
use crate::cli::{Outcome, RunContext, SweepArgs};
use crate::{Error, Result};

fn sweep_case(m: &LoadedManifest, eye: &EyeEntry, dirs: &[(String, PathBuf)]) -> Result<SweepCase> {
    let n = eye.visits.len();
    let target = m.load_visit_image(&eye.visits[n - 1])?.to_unit();
    let stem = format!("{}_{}", eye.eye_id, n - 1);
    let predictions = dirs
        .iter()
        .map(|(_, dir)| {
            let path = find_image(dir, &stem).ok_or_else(|| Error::MissingPrediction {
                eye_id: eye.eye_id.clone(),
                stem: stem.clone(),
            })?;
            let p = load_unit(&path)?;
            p.same_dims(&target)?;
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepCase {
        eye_id: eye.eye_id.clone(),
        target,
        predictions,
    })
}

pub fn seg_sweep(ctx: &RunContext, args: &SweepArgs) -> anyhow::Result<Outcome> {
    let named = args
        .methods
        .iter()
        .map(|s| parse_named_dir(s))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if named.len() < 2 {
        bail!("seg-sweep needs at least two --method entries");
    }
    let m = load_manifest(&args.manifest)?;
    let loaded: Vec<Result<SweepCase>> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| sweep_case(&m, eye, &named))
        .collect();
    let (mut cases, mut failures) = (Vec::new(), Vec::new());
    for (eye, r) in m.manifest.eyes.iter().zip(loaded) {
        match r {
            Ok(c) => cases.push(c),
            Err(e) => failures.push(format!("{}: {e}", eye.eye_id)),
        }
    }
    if cases.is_empty() {
        bail!("no eye has predictions from every method");
    }
    let methods: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let report = sensitivity_sweep(
        &methods,
        &cases,
        &ctx.config.sweep,
        &ctx.config.segmentation,
    )?;
    write_atomic(
        ctx.out.join("seg_sweep.csv"),
        report.table.to_csv().as_bytes(),
    )?;
    write_json(ctx.out.join("seg_sweep.json"), &report)?;
    Ok(Outcome::from_failures(failures))
}
