mod analysis;
mod compare;
mod data;
mod evaluate;
mod register;
mod sweep;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use super::manifest::LoadedManifest;
use crate::raster::{load_image, GrayImage};

pub use analysis::{entropy, posterior};
pub use compare::{compare, compare_tables, CompareRow, MetricTable};
pub use data::{baseline, ingest, phantom};
pub use evaluate::{evaluate, score_prediction, write_metric_csv, EvaluationSummary};
pub use register::{harmonize, register};
pub use sweep::seg_sweep;

pub(crate) fn load_manifest(path: &Path) -> anyhow::Result<LoadedManifest> {
    LoadedManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

/// `<dir>/<stem>.llf1`, falling back to `<dir>/<stem>.pgm`.
pub fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    ["llf1", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

pub(crate) fn load_unit(path: &Path) -> crate::Result<GrayImage> {
    Ok(load_image(path)?.to_unit())
}

/// Splits `name=dir`.
pub fn parse_named_dir(s: &str) -> anyhow::Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => bail!("expected name=dir, got {s:?}"),
    }
}

pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}
