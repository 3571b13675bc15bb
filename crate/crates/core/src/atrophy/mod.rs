//! Adaptive-threshold atrophy segmentation, overlap metrics and the
//! segmentation-parameter sweep.
//!
//! Segmentation runs on the byte scale. The region of interest is a disc
//! centered on the image center; lesion components must reach a smaller
//! central seed disc to be kept.

mod overlap;
mod sweep;

pub use overlap::{boundary_pixels, dice, hd95, squared_distance_transform};
pub use sweep::{
    sensitivity_sweep, CellResult, RankRow, RankTable, SweepCase, SweepGrid, SweepReport,
};

use serde::{Deserialize, Serialize};

use crate::raster::{
    connected_components, morphology, Connectivity, GrayImage, MorphOp, StructuringElement,
    ValidityMask,
};
use crate::stats::compensated_sum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegParams {
    pub sigma_coef: f64,
    pub cap_frac: f64,
    pub roi_radius_frac: f64,
    pub seed_radius_frac: f64,
    pub min_component_px: usize,
    /// Byte intensity; ROI pixels at or below it are ignored for statistics.
    pub fundus_floor: f64,
    /// Byte intensity.
    pub threshold_floor: f64,
    pub morph_element: StructuringElement,
    /// Unimodality statistic above which a bimodality warning is raised.
    pub bimodality_warn: f64,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            sigma_coef: 1.5,
            cap_frac: 0.70,
            roi_radius_frac: 0.40,
            seed_radius_frac: 0.15,
            min_component_px: 20,
            fundus_floor: 10.0,
            threshold_floor: 1.0,
            morph_element: StructuringElement::ellipse(5, 5).expect("odd element"),
            bimodality_warn: 0.05,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.sigma_coef > 0.0) {
            return bad("sigma_coef must be positive");
        }
        if !(self.cap_frac > 0.0 && self.cap_frac < 1.0) {
            return bad("cap_frac must lie in (0, 1)");
        }
        if !(self.seed_radius_frac > 0.0
            && self.seed_radius_frac < self.roi_radius_frac
            && self.roi_radius_frac < 0.5)
        {
            return bad("need 0 < seed_radius_frac < roi_radius_frac < 0.5");
        }
        self.morph_element.validate()
    }

    /// `max(min(mu - k sigma, cap mu), floor)`.
    pub fn threshold(&self, mean: f64, sd: f64) -> f64 {
        (mean - self.sigma_coef * sd)
            .min(self.cap_frac * mean)
            .max(self.threshold_floor)
    }
}

/// Segmentation result with the statistics that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: ValidityMask,
    pub threshold: f64,
    /// Mean and population SD of qualifying ROI pixels (byte scale).
    pub mean: f64,
    pub sd: f64,
    pub dip: f64,
    pub bimodal_warning: bool,
}

fn disc(width: usize, height: usize, radius: f64) -> ValidityMask {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let r2 = radius * radius;
    ValidityMask::from_fn(width, height, |x, y| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        dx * dx + dy * dy <= r2
    })
}

/// Region-of-interest disc used by [`segment_atrophy`].
pub fn roi_disc(width: usize, height: usize, params: &SegParams) -> ValidityMask {
    disc(
        width,
        height,
        params.roi_radius_frac * width.min(height) as f64,
    )
}

pub fn seed_disc(width: usize, height: usize, params: &SegParams) -> ValidityMask {
    disc(
        width,
        height,
        params.seed_radius_frac * width.min(height) as f64,
    )
}

pub fn segment_atrophy(img: &GrayImage, params: &SegParams) -> Result<Segmentation> {
    params.validate()?;
    let byte = img.to_byte();
    let (w, h) = byte.dims();
    let roi = roi_disc(w, h, params);
    let px = byte.pixels();

    let fundus: Vec<f64> = px
        .iter()
        .zip(roi.bits())
        .filter(|(&v, &r)| r && v > params.fundus_floor)
        .map(|(&v, _)| v)
        .collect();
    if fundus.is_empty() {
        return Err(Error::NoFundusPixels);
    }
    let n = fundus.len() as f64;
    let mean = compensated_sum(fundus.iter().copied()) / n;
    let sd = (compensated_sum(fundus.iter().map(|v| (v - mean) * (v - mean))) / n).sqrt();
    let threshold = params.threshold(mean, sd);

    let mut hist = [0u64; 256];
    for &v in &fundus {
        hist[v as usize] += 1;
    }
    let dip = dip_statistic(&hist);

    let candidate = ValidityMask::new(
        w,
        h,
        px.iter()
            .zip(roi.bits())
            .map(|(&v, &r)| r && v < threshold)
            .collect(),
    )?;
    let closed = morphology(&candidate, &params.morph_element, MorphOp::Close)?;
    let cleaned = morphology(&closed, &params.morph_element, MorphOp::Open)?.intersection(&roi)?;

    let seed = seed_disc(w, h, params);
    let mut bits = vec![false; w * h];
    for comp in connected_components(&cleaned, Connectivity::Eight) {
        if comp.area() < params.min_component_px {
            continue;
        }
        if comp.pixels.iter().any(|&i| seed.bits()[i]) {
            for &i in &comp.pixels {
                bits[i] = true;
            }
        }
    }
    Ok(Segmentation {
        mask: ValidityMask::new(w, h, bits)?,
        threshold,
        mean,
        sd,
        dip,
        bimodal_warning: dip > params.bimodality_warn,
    })
}

/// Convex (lower) or concave (upper) hull of `pts`, evaluated at every
/// point's abscissa.
fn hull_values(pts: &[(f64, f64)], lower: bool) -> Vec<f64> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if (lower && cross <= 0.0) || (!lower && cross >= 0.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(pts.len());
    let mut seg = 0;
    for &(x, _) in pts {
        while seg + 1 < hull.len() - 1 && hull[seg + 1].0 < x {
            seg += 1;
        }
        if hull.len() == 1 {
            out.push(hull[0].1);
            continue;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        out.push(if b.0 == a.0 {
            a.1
        } else {
            a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
        });
    }
    out
}

/// Dip-style unimodality statistic of a 256-level histogram.
///
/// For every candidate mode the piecewise-linear empirical CDF is compared
/// with its greatest convex minorant to the left and least concave majorant
/// to the right; the smallest worst-case gap, halved, is returned. Zero for
/// an exactly unimodal histogram, larger for well-separated modes.
pub fn dip_statistic(hist: &[u64; 256]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut pts = Vec::with_capacity(257);
    pts.push((-1.0, 0.0));
    let mut acc = 0u64;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        pts.push((v as f64, acc as f64 / total as f64));
    }
    let mut best = f64::INFINITY;
    for m in 0..pts.len() {
        let left = &pts[..=m];
        let right = &pts[m..];
        let gcm = hull_values(left, true);
        let lcm = hull_values(right, false);
        let dl = left
            .iter()
            .zip(&gcm)
            .map(|(p, g)| p.1 - g)
            .fold(0.0, f64::max);
        let dr = right
            .iter()
            .zip(&lcm)
            .map(|(p, l)| l - p.1)
            .fold(0.0, f64::max);
        best = best.min(dl.max(dr));
    }
    best / 2.0
}
