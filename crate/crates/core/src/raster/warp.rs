use super::{quantize_byte, GrayImage, Scale, ValidityMask};
use crate::geometry::{Point2, Projective};
use crate::Result;

/// Snap coordinates within this distance of an integer onto it.
const SNAP: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP {
        r
    } else {
        v
    }
}

/// Bilinear sample at `(x, y)`; points outside `[0, w-1] x [0, h-1]` read 0.
#[inline]
fn sample(pixels: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let (x, y) = (snap(x), snap(y));
    if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
        return 0.0;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let p = |xx: usize, yy: usize| pixels[yy * w + xx];
    if fx == 0.0 && fy == 0.0 {
        return p(x0, y0);
    }
    (1.0 - fx) * (1.0 - fy) * p(x0, y0)
        + fx * (1.0 - fy) * p(x1, y0)
        + (1.0 - fx) * fy * p(x0, y1)
        + fx * fy * p(x1, y1)
}

fn warp_raw(
    pixels: &[f64],
    (w, h): (usize, usize),
    transform: &Projective,
    (out_w, out_h): (usize, usize),
) -> Result<Vec<f64>> {
    let inv = transform.inverse()?;
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let v = match inv.apply(Point2::new(x as f64, y as f64)) {
                Some(src) => sample(pixels, w, h, src.x, src.y),
                None => 0.0,
            };
            out.push(v);
        }
    }
    Ok(out)
}

/// Inverse-mapped bilinear resample. `transform` maps source pixel
/// coordinates to output coordinates. Byte-scale output is rounded back onto
/// the byte lattice.
pub fn warp_bilinear(
    img: &GrayImage,
    transform: &Projective,
    out_size: (usize, usize),
) -> Result<GrayImage> {
    let mut out = warp_raw(img.pixels(), img.dims(), transform, out_size)?;
    let max = img.scale().max_value();
    for v in out.iter_mut() {
        *v = match img.scale() {
            Scale::Byte => f64::from(quantize_byte(*v)),
            Scale::Unit => v.clamp(0.0, max),
        };
    }
    Ok(GrayImage::from_raw(
        out_size.0,
        out_size.1,
        out,
        img.scale(),
    ))
}

/// Warps the mask as a 0/1 float raster and rebinarizes with `> 0.5`.
pub fn warp_mask(
    mask: &ValidityMask,
    transform: &Projective,
    out_size: (usize, usize),
) -> Result<ValidityMask> {
    let src: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let out = warp_raw(&src, mask.dims(), transform, out_size)?;
    ValidityMask::new(
        out_size.0,
        out_size.1,
        out.iter().map(|&v| v > 0.5).collect(),
    )
}
