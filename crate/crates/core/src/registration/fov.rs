use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Projective};
use crate::raster::{
    connected_components, convex_hull_mask, morphology, quantize_byte, Connectivity, GrayImage,
    MorphOp, Scale, StructuringElement, ValidityMask,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FovConfig {
    /// Byte intensity; pixels strictly above it are field of view.
    pub threshold: f64,
    /// Side of the elliptic closing element; shrunk to the largest odd size
    /// that fits small images.
    pub close_size: usize,
}

impl Default for FovConfig {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            close_size: 51,
        }
    }
}

/// Threshold, close, keep the largest component and fill its convex hull.
pub fn estimate_fov_mask(img: &GrayImage, cfg: &FovConfig) -> Result<ValidityMask> {
    let byte = img.to_byte();
    let (w, h) = byte.dims();
    let raw = ValidityMask::new(
        w,
        h,
        byte.pixels().iter().map(|&v| v > cfg.threshold).collect(),
    )?;
    if raw.is_empty() {
        return Err(Error::EmptyMask);
    }
    let fit = w.min(h);
    let side = cfg
        .close_size
        .min(if fit % 2 == 1 { fit } else { fit - 1 })
        .max(1);
    let element = StructuringElement::ellipse(side, side)?;
    let closed = morphology(&raw, &element, MorphOp::Close)?;
    let largest = connected_components(&closed, Connectivity::Eight)
        .into_iter()
        .next()
        .ok_or(Error::EmptyMask)?;
    convex_hull_mask(&largest.to_mask(w, h))
}

/// Aspect-preserving resize into a square canvas with centered zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Letterbox {
    pub size: usize,
    pub scale: f64,
    /// Left and top padding in canvas pixels.
    pub pad: (usize, usize),
    /// Resized content dimensions.
    pub content: (usize, usize),
    pub source: (usize, usize),
}

impl Letterbox {
    pub fn new(source: (usize, usize), size: usize) -> Result<Self> {
        let (w, h) = source;
        if w < 2 || h < 2 || size < 2 {
            return Err(Error::Dimension(format!(
                "cannot letterbox {w}x{h} into {size}"
            )));
        }
        let scale = size as f64 / w.max(h) as f64;
        let cw = ((w as f64 * scale).round() as usize).clamp(1, size);
        let ch = ((h as f64 * scale).round() as usize).clamp(1, size);
        Ok(Self {
            size,
            scale,
            pad: ((size - cw) / 2, (size - ch) / 2),
            content: (cw, ch),
            source,
        })
    }

    /// Crop pixel coordinates to canvas coordinates.
    pub fn to_model(&self, p: Point2) -> Point2 {
        Point2::new(
            p.x * self.scale + self.pad.0 as f64,
            p.y * self.scale + self.pad.1 as f64,
        )
    }

    /// Canvas coordinates back to crop pixel coordinates.
    pub fn to_source(&self, p: Point2) -> Point2 {
        Point2::new(
            (p.x - self.pad.0 as f64) / self.scale,
            (p.y - self.pad.1 as f64) / self.scale,
        )
    }

    /// The crop-to-canvas map as a matrix.
    pub fn matrix(&self) -> Projective {
        Projective([
            [self.scale, 0.0, self.pad.0 as f64],
            [0.0, self.scale, self.pad.1 as f64],
            [0.0, 0.0, 1.0],
        ])
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        if img.dims() != self.source {
            return Err(Error::Dimension(format!(
                "letterbox built for {:?}, image is {:?}",
                self.source,
                img.dims()
            )));
        }
        let (w, h) = self.source;
        let (cw, ch) = self.content;
        let (px, py) = self.pad;
        let src = img.pixels();
        let at = |x: usize, y: usize| src[y * w + x];
        let n = self.size;
        let mut out = vec![0.0; n * n];
        for y in py..py + ch {
            let sy = ((y - py) as f64 / self.scale).clamp(0.0, (h - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let fy = sy - y0 as f64;
            for x in px..px + cw {
                let sx = ((x - px) as f64 / self.scale).clamp(0.0, (w - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let fx = sx - x0 as f64;
                let v = if fx == 0.0 && fy == 0.0 {
                    at(x0, y0)
                } else {
                    (1.0 - fx) * (1.0 - fy) * at(x0, y0)
                        + fx * (1.0 - fy) * at(x1, y0)
                        + (1.0 - fx) * fy * at(x0, y1)
                        + fx * fy * at(x1, y1)
                };
                out[y * n + x] = v;
            }
        }
        let out = match img.scale() {
            Scale::Byte => out
                .into_iter()
                .map(|v| f64::from(quantize_byte(v)))
                .collect(),
            Scale::Unit => out,
        };
        GrayImage::new(n, n, out, img.scale())
    }
}

/// Letterboxes `img` into a `size` x `size` canvas.
pub fn letterbox(img: &GrayImage, size: usize) -> Result<(GrayImage, Letterbox)> {
    let lb = Letterbox::new(img.dims(), size)?;
    Ok((lb.apply(img)?, lb))
}
