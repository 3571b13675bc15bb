//! Masked pixel-fidelity metrics and the change-map SSIM.
//!
//! SSIM uses a uniform square window with population statistics and is
//! averaged over every window position that lies fully inside the evaluated
//! region. When a validity mask is involved, SSIM is evaluated on the mask's
//! tight bounding box.

use serde::{Deserialize, Serialize};

use crate::raster::{GrayImage, Rect, ValidityMask};
use crate::stats::compensated_sum;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    /// Odd window side, >= 3.
    pub window: usize,
    pub data_range: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self::image()
    }
}

impl SsimConfig {
    /// Unit-scale images: range 1.
    pub fn image() -> Self {
        Self {
            window: 7,
            data_range: 1.0,
            k1: 0.01,
            k2: 0.03,
        }
    }

    /// Signed change maps in [-1, 1]: range 2.
    pub fn change_map() -> Self {
        Self {
            data_range: 2.0,
            ..Self::image()
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.data_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.data_range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "SSIM window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if !(self.data_range > 0.0) || !(self.c1() > 0.0) || !(self.c2() > 0.0) {
            return Err(Error::InvalidConfig(
                "SSIM data range and constants must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Signed raster (values may be negative); used for change maps.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRaster {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SignedRaster {
    /// `a - b`.
    pub fn difference(a: &GrayImage, b: &GrayImage) -> Result<Self> {
        a.same_dims(b)?;
        Ok(Self {
            width: a.width(),
            height: a.height(),
            values: a
                .pixels()
                .iter()
                .zip(b.pixels())
                .map(|(x, y)| x - y)
                .collect(),
        })
    }

    pub fn constant(width: usize, height: usize, v: f64) -> Self {
        Self {
            width,
            height,
            values: vec![v; width * height],
        }
    }
}

/// Ground-truth and predicted change relative to the last observed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMaps {
    pub delta_gt: SignedRaster,
    pub delta_pred: SignedRaster,
    pub bbox: Rect,
}

impl ChangeMaps {
    pub fn new(
        pred: &GrayImage,
        target: &GrayImage,
        last: &GrayImage,
        mask: &ValidityMask,
    ) -> Result<Self> {
        check_same_scale(pred, target)?;
        check_same_scale(pred, last)?;
        target.check_mask(mask)?;
        let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
        Ok(Self {
            delta_gt: SignedRaster::difference(target, last)?,
            delta_pred: SignedRaster::difference(pred, last)?,
            bbox,
        })
    }
}

fn check_same_scale(a: &GrayImage, b: &GrayImage) -> Result<()> {
    a.same_dims(b)?;
    if a.scale() != b.scale() {
        return Err(Error::ScaleMismatch(format!(
            "{:?} vs {:?}",
            a.scale(),
            b.scale()
        )));
    }
    Ok(())
}

fn masked_residuals<'a>(
    pred: &'a GrayImage,
    target: &'a GrayImage,
    mask: &'a ValidityMask,
) -> Result<impl Iterator<Item = f64> + 'a> {
    check_same_scale(pred, target)?;
    target.check_mask(mask)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(pred
        .pixels()
        .iter()
        .zip(target.pixels())
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .map(|((p, t), _)| p - t))
}

/// Mean absolute error over valid pixels.
pub fn mae(pred: &GrayImage, target: &GrayImage, mask: &ValidityMask) -> Result<f64> {
    let n = mask.valid_count();
    let total = compensated_sum(masked_residuals(pred, target, mask)?.map(f64::abs));
    Ok(total / n as f64)
}

pub fn masked_mse(pred: &GrayImage, target: &GrayImage, mask: &ValidityMask) -> Result<f64> {
    let n = mask.valid_count();
    let total = compensated_sum(masked_residuals(pred, target, mask)?.map(|r| r * r));
    Ok(total / n as f64)
}

/// `10 log10(range^2 / MSE)`; `+inf` when the masked MSE is zero.
pub fn psnr(
    pred: &GrayImage,
    target: &GrayImage,
    mask: &ValidityMask,
    data_range: f64,
) -> Result<f64> {
    if !(data_range > 0.0) {
        return Err(Error::InvalidConfig(
            "PSNR data range must be positive".into(),
        ));
    }
    let mse = masked_mse(pred, target, mask)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Mean SSIM of two images over `region`.
pub fn ssim(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig, region: Rect) -> Result<f64> {
    a.same_dims(b)?;
    ssim_values(a.pixels(), b.pixels(), a.width(), a.height(), cfg, region)
}

/// SSIM over raw row-major buffers (used for signed change maps).
pub fn ssim_values(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    cfg: &SsimConfig,
    region: Rect,
) -> Result<f64> {
    cfg.validate()?;
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::Dimension("buffer length does not match dims".into()));
    }
    region.check_fits(width, height)?;
    let win = cfg.window;
    if region.width < win || region.height < win {
        return Err(Error::RegionTooSmall {
            width: region.width,
            height: region.height,
            window: win,
        });
    }
    let (rw, rh) = (region.width, region.height);
    let at = |buf: &[f64], x: usize, y: usize| buf[(region.y + y) * width + region.x + x];

    // Horizontal window sums of a, b, a^2, b^2, ab.
    let ow = rw - win + 1;
    let oh = rh - win + 1;
    let mut hsum = vec![[0.0f64; 5]; ow * rh];
    for y in 0..rh {
        for ox in 0..ow {
            let mut acc = [0.0f64; 5];
            for x in ox..ox + win {
                let va = at(a, x, y);
                let vb = at(b, x, y);
                acc[0] += va;
                acc[1] += vb;
                acc[2] += va * va;
                acc[3] += vb * vb;
                acc[4] += va * vb;
            }
            hsum[y * ow + ox] = acc;
        }
    }

    let n = (win * win) as f64;
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let mut scores = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut s = [0.0f64; 5];
            for y in oy..oy + win {
                let h = &hsum[y * ow + ox];
                for k in 0..5 {
                    s[k] += h[k];
                }
            }
            let mu_a = s[0] / n;
            let mu_b = s[1] / n;
            let var_a = (s[2] / n - mu_a * mu_a).max(0.0);
            let var_b = (s[3] / n - mu_b * mu_b).max(0.0);
            let cov = s[4] / n - mu_a * mu_b;
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            scores.push(num / den);
        }
    }
    Ok(compensated_sum(scores.iter().copied()) / scores.len() as f64)
}

/// SSIM between predicted and ground-truth change maps (both relative to
/// `last`) on the bounding box of `mask`. `cfg.data_range` must be 2.
pub fn delta_ssim(
    pred: &GrayImage,
    target: &GrayImage,
    last: &GrayImage,
    mask: &ValidityMask,
    cfg: &SsimConfig,
) -> Result<f64> {
    if cfg.data_range != 2.0 {
        return Err(Error::InvalidConfig(format!(
            "change-map SSIM needs data range 2.0, got {}",
            cfg.data_range
        )));
    }
    let maps = ChangeMaps::new(pred, target, last, mask)?;
    change_map_ssim(&maps, cfg)
}

pub fn change_map_ssim(maps: &ChangeMaps, cfg: &SsimConfig) -> Result<f64> {
    let g = &maps.delta_gt;
    ssim_values(
        &maps.delta_pred.values,
        &g.values,
        g.width,
        g.height,
        cfg,
        maps.bbox,
    )
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub eye_id: String,
    pub method: String,
    pub delta_t: f64,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub delta_ssim: f64,
    /// `None` when segmentation failed on either side.
    pub dice: Option<f64>,
    /// `None` when either segmentation is empty or failed.
    pub hd95: Option<f64>,
}

/// Pixel metrics for one prediction: MAE, PSNR (range 1), SSIM and change-map
/// SSIM on the mask bounding box. Inputs must be Unit scale.
pub fn pixel_metrics(
    pred: &GrayImage,
    target: &GrayImage,
    last: &GrayImage,
    mask: &ValidityMask,
) -> Result<(f64, f64, f64, f64)> {
    let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
    Ok((
        mae(pred, target, mask)?,
        psnr(pred, target, mask, 1.0)?,
        ssim(pred, target, &SsimConfig::image(), bbox)?,
        delta_ssim(pred, target, last, mask, &SsimConfig::change_map())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Scale;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(w: usize, h: usize, v: f64) -> GrayImage {
        GrayImage::filled(w, h, v, Scale::Unit).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, Scale::Unit, |_, _| rng.random::<f64>()).unwrap()
    }

    /// Direct per-window SSIM with two-pass statistics.
    fn naive_ssim(a: &GrayImage, b: &GrayImage, cfg: &SsimConfig, r: Rect) -> f64 {
        let win = cfg.window;
        let mut total = 0.0;
        let mut count = 0usize;
        for oy in r.y..=r.y + r.height - win {
            for ox in r.x..=r.x + r.width - win {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in oy..oy + win {
                    for x in ox..ox + win {
                        xs.push(a.get(x, y));
                        ys.push(b.get(x, y));
                    }
                }
                let n = xs.len() as f64;
                let ma = xs.iter().sum::<f64>() / n;
                let mb = ys.iter().sum::<f64>() / n;
                let va = xs.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / n;
                let vb = ys.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / n;
                let cv = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| (x - ma) * (y - mb))
                    .sum::<f64>()
                    / n;
                total += ((2.0 * ma * mb + cfg.c1()) * (2.0 * cv + cfg.c2()))
                    / ((ma * ma + mb * mb + cfg.c1()) * (va + vb + cfg.c2()));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn mae_examples() {
        let full = ValidityMask::full(4, 4);
        let t = constant(4, 4, 0.1);
        assert_eq!(mae(&t, &t, &full).unwrap(), 0.0);
        assert!((mae(&constant(4, 4, 0.0), &t, &full).unwrap() - 0.1).abs() < 1e-15);
        let mut p = t.clone().into_pixels();
        p[0] = 0.9;
        let p = GrayImage::new(4, 4, p, Scale::Unit).unwrap();
        let m = ValidityMask::from_fn(4, 4, |x, y| (x, y) != (0, 0));
        assert_eq!(mae(&p, &t, &m).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_and_dims_errors() {
        let a = constant(4, 4, 0.1);
        assert!(matches!(
            mae(&a, &a, &ValidityMask::empty(4, 4)),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            mae(&a, &constant(3, 4, 0.1), &ValidityMask::full(4, 4)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn psnr_examples() {
        let full = ValidityMask::full(8, 8);
        let t = constant(8, 8, 0.5);
        assert_eq!(psnr(&t, &t, &full, 1.0).unwrap(), f64::INFINITY);
        let p = constant(8, 8, 0.6);
        assert!((psnr(&p, &t, &full, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr(&p, &t, &full, 2.0).unwrap() - 26.020_599_913_279_625).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_image(&mut rng, 20, 20);
        let cfg = SsimConfig::image();
        assert!((ssim(&x, &x, &cfg, Rect::full(20, 20)).unwrap() - 1.0).abs() < 1e-12);
        let a = constant(10, 10, 0.2);
        let b = constant(10, 10, 0.7);
        let expect = (0.28 + 1e-4) / (0.53 + 1e-4);
        assert!((ssim(&a, &b, &cfg, Rect::full(10, 10)).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SsimConfig::image();
        for _ in 0..20 {
            let a = random_image(&mut rng, 16, 16);
            let b = random_image(&mut rng, 16, 16);
            let r = Rect::new(1, 2, 14, 12);
            let fast = ssim(&a, &b, &cfg, r).unwrap();
            assert!((fast - naive_ssim(&a, &b, &cfg, r)).abs() < 1e-9);
        }
    }

    #[test]
    fn small_region_rejected() {
        let a = constant(10, 10, 0.2);
        assert!(matches!(
            ssim(&a, &a, &SsimConfig::image(), Rect::new(0, 0, 6, 10)),
            Err(Error::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn delta_ssim_examples() {
        let mask =
            ValidityMask::from_fn(16, 16, |x, y| (2..14).contains(&x) && (2..14).contains(&y));
        let last = constant(16, 16, 0.3);
        let target = constant(16, 16, 0.4);
        let cfg = SsimConfig::change_map();
        assert!((delta_ssim(&target, &target, &last, &mask, &cfg).unwrap() - 1.0).abs() < 1e-12);
        let copy_last = delta_ssim(&last, &target, &last, &mask, &cfg).unwrap();
        let c1 = 4e-4;
        assert!((copy_last - c1 / (0.01 + c1)).abs() < 1e-9);
        assert!(delta_ssim(&last, &target, &last, &mask, &SsimConfig::image()).is_err());
    }

    #[test]
    fn delta_ssim_ignores_pixels_outside_bbox() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mask =
            ValidityMask::from_fn(20, 20, |x, y| (3..15).contains(&x) && (4..17).contains(&y));
        let last = random_image(&mut rng, 20, 20);
        let target = random_image(&mut rng, 20, 20);
        let pred = random_image(&mut rng, 20, 20);
        let cfg = SsimConfig::change_map();
        let base = delta_ssim(&pred, &target, &last, &mask, &cfg).unwrap();
        let altered = GrayImage::from_fn(20, 20, Scale::Unit, |x, y| {
            if mask.bbox().unwrap().contains(x, y) {
                pred.get(x, y)
            } else {
                0.77
            }
        })
        .unwrap();
        assert_eq!(
            delta_ssim(&altered, &target, &last, &mask, &cfg).unwrap(),
            base
        );
    }

    #[test]
    fn perfect_prediction_is_perfect_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_image(&mut rng, 12, 12);
        let last = random_image(&mut rng, 12, 12);
        let m = ValidityMask::full(12, 12);
        let (e, p, s, d) = pixel_metrics(&t, &t, &last, &m).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(p, f64::INFINITY);
        assert!((s - 1.0).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn ssim_symmetric_and_bounded(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_image(&mut rng, 12, 12);
            let b = random_image(&mut rng, 12, 12);
            let cfg = SsimConfig::image();
            let s1 = ssim(&a, &b, &cfg, Rect::full(12, 12)).unwrap();
            let s2 = ssim(&b, &a, &cfg, Rect::full(12, 12)).unwrap();
            prop_assert!((s1 - s2).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s1));
        }

        #[test]
        fn psnr_decreases_with_error_scale(seed in any::<u64>(), s in 1.01f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = GrayImage::filled(8, 8, 0.5, Scale::Unit).unwrap();
            let err: Vec<f64> = (0..64).map(|_| rng.random_range(-0.1..0.1)).collect();
            let p1 = GrayImage::new(8, 8, err.iter().map(|e| 0.5 + e).collect(), Scale::Unit).unwrap();
            let p2 = GrayImage::new(8, 8, err.iter().map(|e| 0.5 + s * e).collect(), Scale::Unit).unwrap();
            let m = ValidityMask::full(8, 8);
            prop_assert!(psnr(&p2, &t, &m, 1.0).unwrap() < psnr(&p1, &t, &m, 1.0).unwrap());
        }

        #[test]
        fn delta_ssim_shift_invariant(seed in any::<u64>(), c in 0.0f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gen = |rng: &mut ChaCha8Rng| GrayImage::from_fn(10, 10, Scale::Unit, |_, _| rng.random_range(0.0..0.8)).unwrap();
            let (p, t, l) = (gen(&mut rng), gen(&mut rng), gen(&mut rng));
            let m = ValidityMask::full(10, 10);
            let cfg = SsimConfig::change_map();
            let shift = |i: &GrayImage| i.map(|v| v + c).unwrap();
            let d1 = delta_ssim(&p, &t, &l, &m, &cfg).unwrap();
            let d2 = delta_ssim(&shift(&p), &shift(&t), &shift(&l), &m, &cfg).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-9);
        }
    }
}
