use crate::raster::ValidityMask;
use crate::stats::percentile_sorted;
use crate::{Error, Result};

fn check_dims(a: &ValidityMask, b: &ValidityMask) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "mask dims {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// `2|A n B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(a: &ValidityMask, b: &ValidityMask) -> Result<f64> {
    check_dims(a, b)?;
    let na = a.valid_count();
    let nb = b.valid_count();
    if na + nb == 0 {
        return Ok(1.0);
    }
    let both = a
        .bits()
        .iter()
        .zip(b.bits())
        .filter(|(&x, &y)| x && y)
        .count();
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// True pixels with a 4-neighbour that is false or outside the raster.
pub fn boundary_pixels(mask: &ValidityMask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                out.push((x, y));
            }
        }
    }
    out
}

/// Lower envelope of parabolas; `f` holds squared distances (or `inf`).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let sites: Vec<usize> = (0..f.len()).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut v = vec![sites[0]];
    let mut z = vec![f64::NEG_INFINITY, f64::INFINITY];
    for &q in &sites[1..] {
        loop {
            let p = *v.last().unwrap();
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[v.len() - 1] {
                v.pop();
                z.pop();
            } else {
                *z.last_mut().unwrap() = s;
                v.push(q);
                z.push(f64::INFINITY);
                break;
            }
        }
    }
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest feature
/// pixel (`inf` everywhere when there are none).
pub fn squared_distance_transform(features: &ValidityMask) -> Vec<f64> {
    let (w, h) = features.dims();
    let mut grid: Vec<f64> = features
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = grid[y * w + x];
        }
        edt_1d(&col, &mut col_out);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w], &mut row_out);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

fn directed_p95(from: &[(usize, usize)], to: &ValidityMask) -> f64 {
    let dt = squared_distance_transform(to);
    let w = to.width();
    let mut d: Vec<f64> = from.iter().map(|&(x, y)| dt[y * w + x].sqrt()).collect();
    d.sort_by(f64::total_cmp);
    percentile_sorted(&d, 0.95)
}

/// Symmetric 95th-percentile Hausdorff distance between mask boundaries, in
/// pixels.
pub fn hd95(a: &ValidityMask, b: &ValidityMask) -> Result<f64> {
    check_dims(a, b)?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = a.dims();
    let ba = boundary_pixels(a);
    let bb = boundary_pixels(b);
    let as_mask = |pts: &[(usize, usize)]| {
        let mut m = ValidityMask::empty(w, h);
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    };
    let ab = directed_p95(&ba, &as_mask(&bb));
    let ba_ = directed_p95(&bb, &as_mask(&ba));
    Ok(ab.max(ba_))
}
