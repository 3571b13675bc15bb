use serde::{Deserialize, Serialize};

use super::MeanSd;
use crate::metrics::{ssim, SsimConfig};
use crate::raster::{GrayImage, ValidityMask};
use crate::stats::{compensated_sum, pearson_r, percentile_sorted};
use crate::{Error, Result};

pub const HIST_BINS: usize = 1024;

fn bin_of(abs_delta: f64) -> usize {
    ((abs_delta * HIST_BINS as f64).floor() as usize).min(HIST_BINS - 1)
}

/// Change statistics of one consecutive visit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub eye_id: String,
    pub delta_t: f64,
    pub n_valid: usize,
    pub changed_fraction: f64,
    pub mean_abs_delta: f64,
    pub copy_last_ssim: f64,
    /// Counts of `|delta|` over `HIST_BINS` uniform bins on [0, 1].
    #[serde(skip)]
    pub histogram: Vec<u64>,
}

/// `|target - last|` statistics over valid pixels. Byte inputs are converted
/// to the unit scale first.
pub fn pair_stats(
    eye_id: &str,
    last: &GrayImage,
    target: &GrayImage,
    mask: &ValidityMask,
    delta_t: f64,
    changed_threshold: f64,
) -> Result<PairStats> {
    if !(delta_t >= 0.0) {
        return Err(Error::NegativeDelta(delta_t));
    }
    last.same_dims(target)?;
    if last.scale() != target.scale() {
        return Err(Error::ScaleMismatch(format!(
            "{:?} vs {:?}",
            last.scale(),
            target.scale()
        )));
    }
    target.check_mask(mask)?;
    let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
    let (last, target) = (last.to_unit(), target.to_unit());

    let mut histogram = vec![0u64; HIST_BINS];
    let mut changed = 0usize;
    let mut abs = Vec::with_capacity(mask.valid_count());
    for ((a, b), &m) in last.pixels().iter().zip(target.pixels()).zip(mask.bits()) {
        if !m {
            continue;
        }
        let d = (b - a).abs();
        histogram[bin_of(d)] += 1;
        if d > changed_threshold {
            changed += 1;
        }
        abs.push(d);
    }
    let n = abs.len();
    Ok(PairStats {
        eye_id: eye_id.to_string(),
        delta_t,
        n_valid: n,
        changed_fraction: changed as f64 / n as f64,
        mean_abs_delta: compensated_sum(abs) / n as f64,
        copy_last_ssim: ssim(&last, &target, &SsimConfig::image(), bbox)?,
        histogram,
    })
}

/// Pooled histogram of `|delta|` with in-bin linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl PooledHistogram {
    pub fn new<'a>(pairs: impl IntoIterator<Item = &'a PairStats>) -> Result<Self> {
        let mut counts = vec![0u64; HIST_BINS];
        for p in pairs {
            if p.histogram.len() != HIST_BINS {
                return Err(Error::InvalidValue(format!(
                    "pair {} has {} histogram bins, expected {HIST_BINS}",
                    p.eye_id,
                    p.histogram.len()
                )));
            }
            for (c, &v) in counts.iter_mut().zip(&p.histogram) {
                *c += v;
            }
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Fraction of pixels with `|delta| < x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let pos = (x * HIST_BINS as f64).clamp(0.0, HIST_BINS as f64);
        let full = pos.floor() as usize;
        let mut acc: f64 = self.counts[..full].iter().sum::<u64>() as f64;
        if full < HIST_BINS {
            acc += self.counts[full] as f64 * (pos - full as f64);
        }
        acc / self.total as f64
    }

    /// Value below which a fraction `q` of pixels lies.
    pub fn quantile(&self, q: f64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let target = q.clamp(0.0, 1.0) * self.total as f64;
        let mut acc = 0.0;
        for (i, &c) in self.counts.iter().enumerate() {
            let next = acc + c as f64;
            if c > 0 && next >= target {
                let within = (target - acc) / c as f64;
                return (i as f64 + within) / HIST_BINS as f64;
            }
            acc = next;
        }
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub label: String,
    pub n_pairs: usize,
    pub frac_below_5pct: Option<f64>,
    pub median_changed_fraction: Option<f64>,
    pub mean_abs_delta: Option<MeanSd>,
    pub copy_last_ssim: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub n_pairs: usize,
    pub n_pixels: u64,
    pub median_delta_t: f64,
    pub frac_below_1pct: f64,
    pub frac_below_5pct: f64,
    pub frac_below_10pct: f64,
    pub median_abs_delta: f64,
    pub p95: f64,
    pub p99: f64,
    /// Correlation of interval and changed fraction; `None` when either is
    /// constant.
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub tool_version: String,
    pub strata_edges: Vec<f64>,
    pub strata: Vec<StratumRow>,
    pub all: StratumRow,
    pub global: GlobalStats,
}

fn stratum_labels(edges: &[f64]) -> Vec<String> {
    let k = edges.len() + 1;
    (0..k)
        .map(|i| {
            let range = if i == 0 {
                format!("dt < {} y", edges[0])
            } else if i == k - 1 {
                format!("dt >= {} y", edges[i - 1])
            } else {
                format!("{} <= dt < {} y", edges[i - 1], edges[i])
            };
            match (k, i) {
                (3, 0) => format!("Short ({range})"),
                (3, 1) => format!("Medium ({range})"),
                (3, 2) => format!("Long ({range})"),
                _ => range,
            }
        })
        .collect()
}

fn stratum_row(label: String, pairs: &[&PairStats]) -> Result<StratumRow> {
    if pairs.is_empty() {
        return Ok(StratumRow {
            label,
            n_pairs: 0,
            frac_below_5pct: None,
            median_changed_fraction: None,
            mean_abs_delta: None,
            copy_last_ssim: None,
        });
    }
    let hist = PooledHistogram::new(pairs.iter().copied())?;
    let mut changed: Vec<f64> = pairs.iter().map(|p| p.changed_fraction).collect();
    changed.sort_by(f64::total_cmp);
    let abs: Vec<f64> = pairs.iter().map(|p| p.mean_abs_delta).collect();
    let ssims: Vec<f64> = pairs.iter().map(|p| p.copy_last_ssim).collect();
    Ok(StratumRow {
        label,
        n_pairs: pairs.len(),
        frac_below_5pct: Some(hist.fraction_below(0.05)),
        median_changed_fraction: Some(percentile_sorted(&changed, 0.5)),
        mean_abs_delta: MeanSd::of(&abs),
        copy_last_ssim: MeanSd::of(&ssims),
    })
}

/// Aggregates pair statistics into interval strata plus global pooled
/// pixel statistics. The result does not depend on the order of `pairs`.
pub fn entropy_report(pairs: &[PairStats], strata_edges: &[f64]) -> Result<EntropyReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyList);
    }
    if strata_edges.is_empty()
        || strata_edges.windows(2).any(|w| !(w[0] < w[1]))
        || strata_edges.iter().any(|e| !e.is_finite())
    {
        return Err(Error::InvalidConfig(
            "strata edges must be finite and strictly increasing".into(),
        ));
    }
    let mut sorted: Vec<&PairStats> = pairs.iter().collect();
    sorted.sort_by(|a, b| {
        a.delta_t
            .total_cmp(&b.delta_t)
            .then_with(|| a.eye_id.cmp(&b.eye_id))
            .then_with(|| a.changed_fraction.total_cmp(&b.changed_fraction))
            .then_with(|| a.mean_abs_delta.total_cmp(&b.mean_abs_delta))
            .then_with(|| a.copy_last_ssim.total_cmp(&b.copy_last_ssim))
            .then_with(|| a.histogram.cmp(&b.histogram))
    });

    let labels = stratum_labels(strata_edges);
    let mut buckets: Vec<Vec<&PairStats>> = vec![Vec::new(); labels.len()];
    for p in &sorted {
        let k = strata_edges.iter().take_while(|&&e| p.delta_t >= e).count();
        buckets[k].push(p);
    }
    let strata = labels
        .into_iter()
        .zip(&buckets)
        .map(|(l, b)| stratum_row(l, b))
        .collect::<Result<Vec<_>>>()?;

    let mut dts: Vec<f64> = sorted.iter().map(|p| p.delta_t).collect();
    let all = stratum_row(
        format!("All pairs (median dt = {:.2} y)", {
            dts.sort_by(f64::total_cmp);
            percentile_sorted(&dts, 0.5)
        }),
        &sorted,
    )?;
    let hist = PooledHistogram::new(sorted.iter().copied())?;
    let xs: Vec<f64> = sorted.iter().map(|p| p.delta_t).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.changed_fraction).collect();
    let global = GlobalStats {
        n_pairs: sorted.len(),
        n_pixels: hist.total(),
        median_delta_t: percentile_sorted(&dts, 0.5),
        frac_below_1pct: hist.fraction_below(0.01),
        frac_below_5pct: hist.fraction_below(0.05),
        frac_below_10pct: hist.fraction_below(0.10),
        median_abs_delta: hist.quantile(0.5),
        p95: hist.quantile(0.95),
        p99: hist.quantile(0.99),
        pearson_r: pearson_r(&xs, &ys).ok(),
    };
    Ok(EntropyReport {
        tool_version: crate::TOOL_VERSION.to_string(),
        strata_edges: strata_edges.to_vec(),
        strata,
        all,
        global,
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn opt_ms(v: &Option<MeanSd>) -> String {
    v.as_ref()
        .map_or_else(|| "n/a".to_string(), |m| m.display(3))
}

impl EntropyReport {
    /// Aligned text table, one row per stratum plus the pooled row.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Task entropy: inter-visit change by interval ({})\n",
            self.tool_version
        );
        s.push_str(&format!(
            "{:<36} {:>8} {:>12} {:>15} {:>16} {:>16}\n",
            "Stratum", "N pairs", "Frac |d|<5%", "Median changed", "Mean |d|", "Copy-last SSIM"
        ));
        for r in self.strata.iter().chain(std::iter::once(&self.all)) {
            s.push_str(&format!(
                "{:<36} {:>8} {:>12} {:>15} {:>16} {:>16}\n",
                r.label,
                r.n_pairs,
                opt(r.frac_below_5pct, 3),
                opt(r.median_changed_fraction, 3),
                opt_ms(&r.mean_abs_delta),
                opt_ms(&r.copy_last_ssim),
            ));
        }
        let g = &self.global;
        s.push_str(&format!(
            "\npixels {}  frac |d|<1% {:.3}  <5% {:.3}  <10% {:.3}  median |d| {:.4}  p95 {:.4}  p99 {:.4}  r(dt, changed) {}\n",
            g.n_pixels,
            g.frac_below_1pct,
            g.frac_below_5pct,
            g.frac_below_10pct,
            g.median_abs_delta,
            g.p95,
            g.p99,
            opt(g.pearson_r, 3),
        ));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Scale;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(w: usize, h: usize, f: impl FnMut(usize, usize) -> f64) -> GrayImage {
        GrayImage::from_fn(w, h, Scale::Unit, f).unwrap()
    }

    fn random_pair(rng: &mut ChaCha8Rng, id: &str, dt: f64, amp: f64) -> PairStats {
        let last = img(12, 12, |_, _| rng.random_range(0.2..0.8));
        let noise: Vec<f64> = (0..144).map(|_| rng.random_range(-amp..amp)).collect();
        let target = img(12, 12, |x, y| {
            (last.get(x, y) + noise[y * 12 + x]).clamp(0.0, 1.0)
        });
        pair_stats(id, &last, &target, &ValidityMask::full(12, 12), dt, 0.05).unwrap()
    }

    #[test]
    fn pair_stats_examples() {
        let m = ValidityMask::full(10, 10);
        let a = img(10, 10, |x, y| 0.1 + 0.05 * ((x + y) % 5) as f64);
        let same = pair_stats("e", &a, &a, &m, 0.5, 0.05).unwrap();
        assert_eq!(same.changed_fraction, 0.0);
        assert_eq!(same.mean_abs_delta, 0.0);
        assert!((same.copy_last_ssim - 1.0).abs() < 1e-12);
        let b = a.map(|v| v + 0.1).unwrap();
        let up = pair_stats("e", &a, &b, &m, 0.5, 0.05).unwrap();
        assert_eq!(up.changed_fraction, 1.0);
        assert!((up.mean_abs_delta - 0.1).abs() < 1e-12);
        let half = img(10, 10, |x, y| a.get(x, y) + if x < 5 { 0.06 } else { 0.0 });
        assert_eq!(
            pair_stats("e", &a, &half, &m, 0.5, 0.05)
                .unwrap()
                .changed_fraction,
            0.5
        );
        assert!(pair_stats("e", &a, &a, &ValidityMask::empty(10, 10), 0.5, 0.05).is_err());
    }

    #[test]
    fn identical_frames_report_zero_change_and_undefined_r() {
        let a = img(10, 10, |x, _| x as f64 / 10.0);
        let m = ValidityMask::full(10, 10);
        let pairs: Vec<_> = (0..4)
            .map(|i| pair_stats(&format!("e{i}"), &a, &a, &m, 0.1 + i as f64 * 0.5, 0.05).unwrap())
            .collect();
        let r = entropy_report(&pairs, &[0.25, 1.0]).unwrap();
        assert_eq!(r.global.pearson_r, None);
        assert_eq!(r.global.frac_below_5pct, 1.0);
        assert_eq!(r.all.median_changed_fraction, Some(0.0));
        assert_eq!(r.strata.iter().map(|s| s.n_pairs).sum::<usize>(), 4);
        assert!(r.strata[0].label.starts_with("Short"));
    }

    #[test]
    fn pooled_fraction_within_one_bin_of_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut all = Vec::new();
        let mut pairs = Vec::new();
        for i in 0..6 {
            let last = img(16, 16, |_, _| rng.random_range(0.0..1.0));
            let target = img(16, 16, |_, _| rng.random_range(0.0..1.0));
            all.extend(
                last.pixels()
                    .iter()
                    .zip(target.pixels())
                    .map(|(a, b)| (b - a).abs()),
            );
            pairs.push(
                pair_stats(
                    &format!("e{i}"),
                    &last,
                    &target,
                    &ValidityMask::full(16, 16),
                    i as f64,
                    0.05,
                )
                .unwrap(),
            );
        }
        let hist = PooledHistogram::new(&pairs).unwrap();
        for x in [0.01, 0.05, 0.1, 0.5] {
            let direct = all.iter().filter(|&&d| d < x).count() as f64 / all.len() as f64;
            let lo =
                all.iter().filter(|&&d| d < x - 1.0 / 1024.0).count() as f64 / all.len() as f64;
            let hi =
                all.iter().filter(|&&d| d < x + 1.0 / 1024.0).count() as f64 / all.len() as f64;
            let est = hist.fraction_below(x);
            assert!(
                est >= lo - 1e-12 && est <= hi + 1e-12,
                "x={x} est={est} direct={direct}"
            );
        }
        all.sort_by(f64::total_cmp);
        let med = percentile_sorted(&all, 0.5);
        assert!((hist.quantile(0.5) - med).abs() <= 1.0 / 1024.0 + 1e-12);
    }

    #[test]
    fn correlated_change_gives_high_r() {
        let base = img(16, 16, |x, y| 0.3 + 0.01 * ((x * y) % 7) as f64);
        let m = ValidityMask::full(16, 16);
        let pairs: Vec<_> = (1..=8)
            .map(|i| {
                let dt = i as f64 * 0.25;
                let target = img(16, 16, |x, y| {
                    base.get(x, y) + if x < 2 * i { 0.2 } else { 0.0 }
                });
                pair_stats(&format!("e{i}"), &base, &target, &m, dt, 0.05).unwrap()
            })
            .collect();
        let r = entropy_report(&pairs, &[0.25, 1.0]).unwrap();
        assert!(r.global.pearson_r.unwrap() > 0.9);
    }

    #[test]
    fn text_report_has_all_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<_> = (0..5)
            .map(|i| random_pair(&mut rng, &format!("e{i}"), i as f64 * 0.4, 0.1))
            .collect();
        let text = entropy_report(&pairs, &[0.25, 1.0]).unwrap().to_text();
        assert!(
            text.contains("Short")
                && text.contains("Medium")
                && text.contains("Long")
                && text.contains("All pairs")
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn permutation_invariant(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<_> = (0..7)
                .map(|i| {
                    let dt = rng.random_range(0.0..2.0);
                    let amp = rng.random_range(0.01..0.2);
                    random_pair(&mut rng, &format!("e{i}"), dt, amp)
                })
                .collect();
            let mut shuffled = pairs.clone();
            let mut srng = ChaCha8Rng::seed_from_u64(shuffle_seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, srng.random_range(0..=i));
            }
            let a = entropy_report(&pairs, &[0.25, 1.0]).unwrap();
            let b = entropy_report(&shuffled, &[0.25, 1.0]).unwrap();
            prop_assert_eq!(&a, &b);
            if let Some(r) = a.global.pearson_r {
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            for s in &a.strata {
                if let Some(f) = s.frac_below_5pct {
                    prop_assert!((0.0..=1.0).contains(&f));
                }
            }
        }
    }
}
