use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::raster::{GrayImage, Scale, ValidityMask};
use crate::temporal::{EyeSequence, Frame, Laterality};
use crate::{Error, Result};

/// Three-component Gaussian reference for intensity harmonization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureReference {
    pub weights: [f64; 3],
    pub means: [f64; 3],
    pub sigmas: [f64; 3],
}

const WEIGHTS: [f64; 3] = [0.15, 0.70, 0.15];
const BULK_MEAN: f64 = 128.0;
const ANCHOR_LOW: (f64, f64) = (50.0, 0.05);
const ANCHOR_HIGH: (f64, f64) = (190.0, 0.95);

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl MixtureReference {
    /// Dark and bright offsets `dd`, `db` from the bulk mean; each side
    /// component has sigma equal to half its offset and the bulk sigma is
    /// their average.
    pub fn from_offsets(dd: f64, db: f64) -> Self {
        let (sd, sb) = (dd / 2.0, db / 2.0);
        Self {
            weights: WEIGHTS,
            means: [BULK_MEAN - dd, BULK_MEAN, BULK_MEAN + db],
            sigmas: [sd, (sd + sb) / 2.0, sb],
        }
    }

    /// Solves both offsets by nested bisection so the CDF meets the low and
    /// high percentile anchors.
    pub fn calibrated() -> Self {
        let solve_db = |dd: f64| {
            bisect(0.5, 127.0, |db| {
                Self::from_offsets(dd, db).cdf(ANCHOR_HIGH.0) - ANCHOR_HIGH.1
            })
        };
        let dd = bisect(0.5, 127.0, |dd| {
            Self::from_offsets(dd, solve_db(dd)).cdf(ANCHOR_LOW.0) - ANCHOR_LOW.1
        });
        Self::from_offsets(dd, solve_db(dd))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        (0..3)
            .map(|i| {
                let n = Normal::new(self.means[i], self.sigmas[i]).expect("positive sigma");
                self.weights[i] * n.cdf(x)
            })
            .sum()
    }

    /// Discrete CDF over byte levels: mass at or below `v + 0.5`, with the
    /// top level absorbing the tail.
    pub fn level_cdf(&self) -> [f64; 256] {
        let mut out = [0.0; 256];
        for (v, o) in out.iter_mut().enumerate() {
            *o = if v == 255 {
                1.0
            } else {
                self.cdf(v as f64 + 0.5)
            };
        }
        out
    }
}

impl Default for MixtureReference {
    fn default() -> Self {
        Self::calibrated()
    }
}

/// Histogram-matched image plus the level lookup table that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Matched {
    pub image: GrayImage,
    pub lut: [u8; 256],
}

/// Maps each byte level to the reference level whose CDF is closest to the
/// in-mask source CDF. The table is applied to every pixel.
pub fn histogram_match(
    img: &GrayImage,
    mask: &ValidityMask,
    reference: &MixtureReference,
) -> Result<Matched> {
    img.check_mask(mask)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let levels = img.byte_levels();
    let mut hist = [0u64; 256];
    for (&l, &m) in levels.iter().zip(mask.bits()) {
        if m {
            hist[l as usize] += 1;
        }
    }
    let total = mask.valid_count() as f64;
    let r = reference.level_cdf();
    let mut lut = [0u8; 256];
    let mut acc = 0u64;
    for (v, slot) in lut.iter_mut().enumerate() {
        acc += hist[v];
        let f = acc as f64 / total;
        let mut best = (0usize, f64::INFINITY);
        for (u, &ru) in r.iter().enumerate() {
            let d = (ru - f).abs();
            if d < best.1 {
                best = (u, d);
            }
        }
        *slot = best.0 as u8;
    }
    let mapped: Vec<f64> = levels.iter().map(|&l| f64::from(lut[l as usize])).collect();
    let byte = GrayImage::new(img.width(), img.height(), mapped, Scale::Byte)?;
    let image = match img.scale() {
        Scale::Byte => byte,
        Scale::Unit => byte.to_unit(),
    };
    Ok(Matched { image, lut })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * values[y * w + clamp(x as i64 + i as i64 - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as i64 + i as i64 - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Contrast metric for choosing among same-day duplicates:
/// `(P95 - P5) * sd(blur(img, 16))` on the byte scale.
pub fn quality_score(img: &GrayImage) -> f64 {
    let byte = img.to_byte();
    let mut sorted = byte.pixels().to_vec();
    sorted.sort_by(f64::total_cmp);
    let range = crate::stats::percentile_sorted(&sorted, 0.95)
        - crate::stats::percentile_sorted(&sorted, 0.05);
    let blurred = gaussian_blur(byte.pixels(), byte.width(), byte.height(), 16.0);
    let n = blurred.len() as f64;
    let mean = blurred.iter().sum::<f64>() / n;
    let var = blurred.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    range * var.sqrt()
}

/// Index of the highest-quality image, or `None` if it falls below `cutoff`.
/// Ties go to the earliest image.
pub fn select_best_duplicate(images: &[GrayImage], cutoff: Option<f64>) -> Result<Option<usize>> {
    if images.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, img) in images.iter().enumerate() {
        let q = quality_score(img);
        if q > best.1 {
            best = (i, q);
        }
    }
    Ok(match cutoff {
        Some(c) if best.1 < c => None,
        _ => Some(best.0),
    })
}

/// Mirrors every frame and toggles the laterality label.
pub fn flip_sequence(seq: &EyeSequence) -> Result<EyeSequence> {
    let lat = match seq.laterality() {
        Laterality::Left => Laterality::Right,
        Laterality::Right => Laterality::Left,
        Laterality::Unknown => return Err(Error::UnknownLaterality(seq.eye_id().to_string())),
    };
    let frames = seq
        .frames()
        .iter()
        .map(|f| Frame {
            image: f.image.flip_horizontal(),
            mask: f.mask.flip_horizontal(),
            t: f.t,
        })
        .collect();
    EyeSequence::new(seq.eye_id(), lat, frames)
}

/// Flips left eyes so every sequence shares right-eye orientation.
pub fn normalize_chirality(seq: &EyeSequence) -> Result<EyeSequence> {
    match seq.laterality() {
        Laterality::Right => Ok(seq.clone()),
        Laterality::Left => flip_sequence(seq),
        Laterality::Unknown => Err(Error::UnknownLaterality(seq.eye_id().to_string())),
    }
}
