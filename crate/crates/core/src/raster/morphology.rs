use serde::{Deserialize, Serialize};

use super::{StructuringElement, ValidityMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MorphOp {
    Erode,
    Dilate,
    /// Dilate then erode.
    Close,
    /// Erode then dilate.
    Open,
}

/// Binary morphology; pixels outside the raster count as false.
///
/// Each element row is a horizontal run, so every output pixel costs one
/// prefix-sum lookup per element row.
pub fn morphology(
    mask: &ValidityMask,
    element: &StructuringElement,
    op: MorphOp,
) -> Result<ValidityMask> {
    element.validate()?;
    if element.width > mask.width() || element.height > mask.height() {
        return Err(Error::Dimension(format!(
            "{}x{} element larger than {}x{} mask",
            element.width,
            element.height,
            mask.width(),
            mask.height()
        )));
    }
    let runs = element_runs(element);
    Ok(match op {
        MorphOp::Erode => erode(mask, &runs),
        MorphOp::Dilate => dilate(mask, &runs),
        MorphOp::Close => erode(&dilate(mask, &runs), &runs),
        MorphOp::Open => dilate(&erode(mask, &runs), &runs),
    })
}

fn element_runs(element: &StructuringElement) -> Vec<(i64, i64)> {
    let b = ((element.height - 1) / 2) as i64;
    (-b..=b)
        .filter_map(|dy| element.row_half_width(dy).map(|r| (dy, r)))
        .collect()
}

/// Per-row prefix counts: `p[y][x]` = number of true pixels in row y before x.
fn row_prefix(mask: &ValidityMask) -> Vec<Vec<u32>> {
    mask.bits()
        .chunks(mask.width())
        .map(|row| {
            let mut p = Vec::with_capacity(row.len() + 1);
            p.push(0u32);
            let mut acc = 0u32;
            for &b in row {
                acc += u32::from(b);
                p.push(acc);
            }
            p
        })
        .collect()
}

fn dilate(mask: &ValidityMask, runs: &[(i64, i64)]) -> ValidityMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let prefix = row_prefix(mask);
    ValidityMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        runs.iter().any(|&(dy, r)| {
            let yy = y + dy;
            if yy < 0 || yy >= h {
                return false;
            }
            let lo = (x - r).max(0) as usize;
            let hi = (x + r).min(w - 1) as usize;
            let row = &prefix[yy as usize];
            row[hi + 1] > row[lo]
        })
    })
}

fn erode(mask: &ValidityMask, runs: &[(i64, i64)]) -> ValidityMask {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let prefix = row_prefix(mask);
    ValidityMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        runs.iter().all(|&(dy, r)| {
            let yy = y + dy;
            if yy < 0 || yy >= h || x - r < 0 || x + r >= w {
                return false;
            }
            let row = &prefix[yy as usize];
            (row[(x + r + 1) as usize] - row[(x - r) as usize]) as i64 == 2 * r + 1
        })
    })
}
