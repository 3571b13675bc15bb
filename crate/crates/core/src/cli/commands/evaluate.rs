use std::path::Path;

use anyhow::bail;
use rayon::prelude::*;
use serde::Serialize;

use super::{csv_writer, find_image, load_manifest, load_unit};
use crate::atrophy::{dice, hd95, segment_atrophy, SegParams};
use crate::cli::manifest::{EyeEntry, LoadedManifest};
use crate::cli::output::{fmt_num, fmt_opt, write_atomic, write_json};
use crate::cli::{EvaluateArgs, Outcome, RunContext};
use crate::diagnostics::MeanSd;
use crate::metrics::{pixel_metrics, MetricRecord};
use crate::stats::{describe, Summary};
use crate::temporal::Frame;
use crate::{Error, Result};

/// Scores one prediction of `target` given the most recent history frame.
/// Images are converted to the unit scale; the evaluation mask is the
/// intersection of both visits' masks.
pub fn score_prediction(
    eye_id: &str,
    method: &str,
    pred: &crate::raster::GrayImage,
    target: &Frame,
    last: &Frame,
    params: &SegParams,
) -> Result<MetricRecord> {
    let pred = pred.to_unit();
    let (tgt, prev) = (target.image.to_unit(), last.image.to_unit());
    pred.same_dims(&tgt)?;
    let mask = target.mask.intersection(&last.mask)?;
    let (mae, psnr, ssim, delta_ssim) = pixel_metrics(&pred, &tgt, &prev, &mask)?;
    let (dice_v, hd) = match (
        segment_atrophy(&pred, params),
        segment_atrophy(&tgt, params),
    ) {
        (Ok(p), Ok(t)) => (dice(&p.mask, &t.mask).ok(), hd95(&p.mask, &t.mask).ok()),
        _ => (None, None),
    };
    Ok(MetricRecord {
        eye_id: eye_id.to_string(),
        method: method.to_string(),
        delta_t: target.t - last.t,
        mae,
        psnr,
        ssim,
        delta_ssim,
        dice: dice_v,
        hd95: hd,
    })
}

pub fn write_metric_csv(records: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "eye_id",
        "delta_t",
        "mae",
        "psnr",
        "ssim",
        "delta_ssim",
        "dice",
        "hd95",
    ])
    .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.eye_id.clone(),
            fmt_num(r.delta_t),
            fmt_num(r.mae),
            fmt_num(r.psnr),
            fmt_num(r.ssim),
            fmt_num(r.delta_ssim),
            fmt_opt(r.dice),
            fmt_opt(r.hd95),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    /// Finite values summarized.
    pub n: usize,
    pub n_inf: usize,
    pub n_na: usize,
    pub mean_sd: Option<String>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EyeFailure {
    pub eye_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub tool_version: String,
    pub method: String,
    pub n_eyes: usize,
    pub n_evaluated: usize,
    pub coverage: f64,
    pub missing: Vec<String>,
    pub failed: Vec<EyeFailure>,
    pub skipped: Vec<EyeFailure>,
    pub metrics: Vec<MetricSummary>,
}

fn summarize(name: &str, values: impl Iterator<Item = Option<f64>>) -> Result<MetricSummary> {
    let (mut finite, mut n_inf, mut n_na) = (Vec::new(), 0, 0);
    for v in values {
        match v {
            Some(x) if x.is_finite() => finite.push(x),
            Some(_) => n_inf += 1,
            None => n_na += 1,
        }
    }
    let summary = if finite.is_empty() {
        None
    } else {
        Some(describe(&finite)?)
    };
    Ok(MetricSummary {
        metric: name.to_string(),
        n: finite.len(),
        n_inf,
        n_na,
        mean_sd: MeanSd::of(&finite).map(|m| m.display(4)),
        summary,
    })
}

pub fn summarize_records(records: &[MetricRecord]) -> Result<Vec<MetricSummary>> {
    Ok(vec![
        summarize("mae", records.iter().map(|r| Some(r.mae)))?,
        summarize("psnr", records.iter().map(|r| Some(r.psnr)))?,
        summarize("ssim", records.iter().map(|r| Some(r.ssim)))?,
        summarize("delta_ssim", records.iter().map(|r| Some(r.delta_ssim)))?,
        summarize("dice", records.iter().map(|r| r.dice))?,
        summarize("hd95", records.iter().map(|r| r.hd95))?,
    ])
}

enum EyeResult {
    Scored(MetricRecord),
    Missing(Error),
    Failed(EyeFailure),
    Skipped(EyeFailure),
}

fn evaluate_eye(
    m: &LoadedManifest,
    eye: &EyeEntry,
    dir: &Path,
    method: &str,
    params: &SegParams,
) -> EyeResult {
    let fail = |e: Error| {
        EyeResult::Failed(EyeFailure {
            eye_id: eye.eye_id.clone(),
            error: e.to_string(),
        })
    };
    let n = eye.visits.len();
    if n < 2 {
        return EyeResult::Skipped(EyeFailure {
            eye_id: eye.eye_id.clone(),
            error: "fewer than 2 visits".into(),
        });
    }
    let stem = format!("{}_{}", eye.eye_id, n - 1);
    let Some(path) = find_image(dir, &stem) else {
        return EyeResult::Missing(Error::MissingPrediction {
            eye_id: eye.eye_id.clone(),
            stem,
        });
    };
    let seq = match m.load_sequence(eye) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let pred = match load_unit(&path) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let frames = seq.frames();
    match score_prediction(
        &eye.eye_id,
        method,
        &pred,
        &frames[n - 1],
        &frames[n - 2],
        params,
    ) {
        Ok(r) => EyeResult::Scored(r),
        Err(e) => fail(e),
    }
}

pub fn evaluate(ctx: &RunContext, args: &EvaluateArgs) -> anyhow::Result<Outcome> {
    let m = load_manifest(&args.manifest)?;
    let params = ctx.config.segmentation;
    params.validate()?;
    let results: Vec<EyeResult> = m
        .manifest
        .eyes
        .par_iter()
        .map(|eye| evaluate_eye(&m, eye, &args.predictions, &args.method, &params))
        .collect();
    let (mut records, mut missing, mut failed, mut skipped) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut problems = Vec::new();
    for r in results {
        match r {
            EyeResult::Scored(r) => records.push(r),
            EyeResult::Missing(e) => {
                if let Error::MissingPrediction { eye_id, .. } = &e {
                    missing.push(eye_id.clone());
                }
                problems.push(e.to_string());
            }
            EyeResult::Failed(f) => failed.push(f),
            EyeResult::Skipped(f) => skipped.push(f),
        }
    }
    let eligible = m.manifest.eyes.len() - skipped.len();
    let summary = EvaluationSummary {
        tool_version: crate::TOOL_VERSION.to_string(),
        method: args.method.clone(),
        n_eyes: m.manifest.eyes.len(),
        n_evaluated: records.len(),
        coverage: if eligible == 0 {
            0.0
        } else {
            records.len() as f64 / eligible as f64
        },
        missing: missing.clone(),
        failed: failed.clone(),
        skipped,
        metrics: summarize_records(&records)?,
    };
    write_atomic(
        ctx.out.join(format!("{}_metrics.csv", args.method)),
        &write_metric_csv(&records)?,
    )?;
    write_json(
        ctx.out.join(format!("{}_summary.json", args.method)),
        &summary,
    )?;
    if records.is_empty() {
        bail!(
            "no eye could be evaluated ({} missing predictions, {} failures)",
            missing.len(),
            failed.len()
        );
    }
    problems.extend(failed.iter().map(|f| format!("{}: {}", f.eye_id, f.error)));
    Ok(Outcome::from_failures(problems))
}
