//! Paired nonparametric tests, correlation and descriptive summaries.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| compensated_sum(values.iter().copied()) / values.len() as f64)
}

/// Sample (n - 1) standard deviation; `None` below two values.
pub fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values)?;
    let ss = compensated_sum(values.iter().map(|v| (v - m) * (v - m)));
    Some((ss / (values.len() - 1) as f64).sqrt())
}

/// Linear-interpolation percentile (`q` in [0, 1]) of ascending data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; absent for a single value.
    pub sd: Option<f64>,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub p99: f64,
}

pub fn describe(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidValue("NaN in describe input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        n: values.len(),
        mean: mean(&sorted).unwrap(),
        sd: sample_sd(&sorted),
        median: percentile_sorted(&sorted, 0.5),
        p5: percentile_sorted(&sorted, 0.05),
        p95: percentile_sorted(&sorted, 0.95),
        p99: percentile_sorted(&sorted, 0.99),
    })
}

/// Product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "{} vs {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::DegenerateCorrelation("fewer than two points".into()));
    }
    let mx = mean(x).unwrap();
    let my = mean(y).unwrap();
    let sxx = compensated_sum(x.iter().map(|v| (v - mx) * (v - mx)));
    let syy = compensated_sum(y.iter().map(|v| (v - my) * (v - my)));
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::DegenerateCorrelation("constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Per-eye paired observations.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!(
                "{} vs {} values",
                a.len(),
                b.len()
            )));
        }
        if a.is_empty() {
            return Err(Error::EmptyList);
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(
                "paired samples must be finite; drop infinities upstream".into(),
            ));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn swapped(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
        }
    }

    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| a - b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WilcoxonMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub n_effective: usize,
    pub method: WilcoxonMethod,
    /// Set when every difference is zero; `p` is then 1.
    pub degenerate: bool,
}

/// Largest effective n for which the null distribution is enumerated.
pub const EXACT_MAX_N: usize = 12;

/// Mid-ranks of `|d|`, doubled so ties stay integral.
pub fn doubled_midranks(abs_diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs_diffs.len()).collect();
    order.sort_by(|&i, &j| abs_diffs[i].total_cmp(&abs_diffs[j]));
    let mut ranks = vec![0u64; abs_diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs_diffs[order[j + 1]] == abs_diffs[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1; doubled mean = i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped; ties
/// receive mid-ranks. Up to [`EXACT_MAX_N`] non-zero differences the exact
/// null distribution is used, beyond that a normal approximation with tie
/// and continuity corrections.
pub fn wilcoxon_signed_rank(sample: &PairedSample) -> WilcoxonResult {
    let diffs: Vec<f64> = sample
        .differences()
        .into_iter()
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            p: 1.0,
            n_effective: 0,
            method: WilcoxonMethod::Exact,
            degenerate: true,
        };
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let w2_plus: u64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total2: u64 = ranks.iter().sum();
    let w_plus = w2_plus as f64 / 2.0;
    let w_minus = (total2 - w2_plus) as f64 / 2.0;

    let (p, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w2_plus), WilcoxonMethod::Exact)
    } else {
        (normal_p(&abs, w_plus), WilcoxonMethod::NormalApprox)
    };
    WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        p,
        n_effective: n,
        method,
        degenerate: false,
    }
}

/// Exact two-sided p: `min(1, 2 min(P(W+ <= w), P(W+ >= w)))` from the
/// subset-sum distribution of the doubled ranks.
fn exact_p(ranks: &[u64], w2_plus: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let w = w2_plus as usize;
    let le: u64 = counts[..=w].iter().sum();
    let ge: u64 = counts[w..].iter().sum();
    let patterns = (1u64 << ranks.len()) as f64;
    ((2 * le.min(ge)) as f64 / patterns).min(1.0)
}

fn normal_p(abs_diffs: &[f64], w_plus: f64) -> f64 {
    let n = abs_diffs.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = abs_diffs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
