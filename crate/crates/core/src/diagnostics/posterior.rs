use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MeanSd;
use crate::metrics::{ssim, SsimConfig};
use crate::raster::{GrayImage, ValidityMask};
use crate::stats::compensated_sum;
use crate::{Error, Result};

/// How inter-sample agreement is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleAgreement {
    /// Mean SSIM over all unordered sample pairs.
    #[default]
    AllPairs,
    /// Mean SSIM of each sample against the sample mean.
    SampleVsMean,
}

/// K predictions of one eye from a stochastic model, plus the target.
#[derive(Debug, Clone)]
pub struct PosteriorEye {
    pub eye_id: String,
    pub samples: Vec<GrayImage>,
    pub target: GrayImage,
    pub mask: ValidityMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeDecomposition {
    pub eye_id: String,
    pub mse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub inter_sample_ssim: f64,
}

/// Population bias-variance decomposition over valid pixels.
pub fn decompose_eye(eye: &PosteriorEye, agreement: SampleAgreement) -> Result<EyeDecomposition> {
    let k = eye.samples.len();
    if k < 2 {
        return Err(Error::KTooSmall(k));
    }
    for s in &eye.samples {
        s.same_dims(&eye.target)?;
        if s.scale() != eye.target.scale() {
            return Err(Error::ScaleMismatch(format!(
                "{:?} vs {:?}",
                s.scale(),
                eye.target.scale()
            )));
        }
    }
    eye.target.check_mask(&eye.mask)?;
    let bbox = eye.mask.bbox().ok_or(Error::EmptyMask)?;
    let target = eye.target.to_unit();
    let samples: Vec<GrayImage> = eye.samples.iter().map(GrayImage::to_unit).collect();

    let valid: Vec<usize> = eye
        .mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    let n = valid.len() as f64;
    let kf = k as f64;

    let mean_px: Vec<f64> = (0..target.pixels().len())
        .map(|i| {
            let a = samples[0].pixels()[i];
            a + compensated_sum(samples.iter().map(|s| s.pixels()[i] - a)) / kf
        })
        .collect();
    let y = target.pixels();

    let mse = compensated_sum(
        samples
            .iter()
            .map(|s| compensated_sum(valid.iter().map(|&i| (s.pixels()[i] - y[i]).powi(2))) / n),
    ) / kf;
    let bias2 = compensated_sum(valid.iter().map(|&i| (mean_px[i] - y[i]).powi(2))) / n;
    let variance =
        compensated_sum(samples.iter().map(|s| {
            compensated_sum(valid.iter().map(|&i| (s.pixels()[i] - mean_px[i]).powi(2))) / n
        })) / kf;

    let cfg = SsimConfig::image();
    let inter_sample_ssim = match agreement {
        SampleAgreement::AllPairs => {
            let mut vals = Vec::with_capacity(k * (k - 1) / 2);
            for a in 0..k {
                for b in a + 1..k {
                    vals.push(ssim(&samples[a], &samples[b], &cfg, bbox)?);
                }
            }
            compensated_sum(vals.iter().copied()) / vals.len() as f64
        }
        SampleAgreement::SampleVsMean => {
            let mean_img = GrayImage::new(
                target.width(),
                target.height(),
                mean_px.clone(),
                target.scale(),
            )?;
            let vals = samples
                .iter()
                .map(|s| ssim(s, &mean_img, &cfg, bbox))
                .collect::<Result<Vec<_>>>()?;
            compensated_sum(vals.iter().copied()) / kf
        }
    };
    Ok(EyeDecomposition {
        eye_id: eye.eye_id.clone(),
        mse,
        bias2,
        variance,
        inter_sample_ssim,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub model: String,
    pub k: usize,
    pub n_eyes: usize,
    pub agreement: SampleAgreement,
    pub inter_sample_ssim: MeanSd,
    /// Means of the per-eye quantities.
    pub prediction_mse: f64,
    pub bias2: f64,
    pub variance: f64,
    /// `100 * mean(var) / mean(mse)`.
    pub var_over_mse_pct_pooled: f64,
    /// `100 * mean(var / mse)`; eyes with zero error contribute 0.
    pub var_over_mse_pct_per_eye_mean: f64,
    pub bias2_fraction_pct: f64,
    pub variance_fraction_pct: f64,
    pub eyes: Vec<EyeDecomposition>,
}

/// Decomposes every eye (in parallel) and pools the results in input order.
pub fn posterior_report(
    model: &str,
    eyes: &[PosteriorEye],
    agreement: SampleAgreement,
) -> Result<ModelPosterior> {
    if eyes.is_empty() {
        return Err(Error::EmptyList);
    }
    let k = eyes[0].samples.len();
    if let Some(e) = eyes.iter().find(|e| e.samples.len() != k) {
        return Err(Error::InvalidValue(format!(
            "eye {} has {} samples, expected {k}",
            e.eye_id,
            e.samples.len()
        )));
    }
    let per_eye = eyes
        .par_iter()
        .map(|e| decompose_eye(e, agreement))
        .collect::<Result<Vec<_>>>()?;
    let n = per_eye.len() as f64;
    let mean_of = |f: fn(&EyeDecomposition) -> f64| compensated_sum(per_eye.iter().map(f)) / n;
    let mse = mean_of(|e| e.mse);
    let bias2 = mean_of(|e| e.bias2);
    let variance = mean_of(|e| e.variance);
    let ratio = mean_of(|e| if e.mse > 0.0 { e.variance / e.mse } else { 0.0 });
    let total = bias2 + variance;
    let (bias_pct, var_pct) = if total > 0.0 {
        (100.0 * bias2 / total, 100.0 * variance / total)
    } else {
        (100.0, 0.0)
    };
    let ssims: Vec<f64> = per_eye.iter().map(|e| e.inter_sample_ssim).collect();
    Ok(ModelPosterior {
        model: model.to_string(),
        k,
        n_eyes: per_eye.len(),
        agreement,
        inter_sample_ssim: MeanSd::of(&ssims).expect("at least one eye"),
        prediction_mse: mse,
        bias2,
        variance,
        var_over_mse_pct_pooled: if mse > 0.0 {
            100.0 * variance / mse
        } else {
            0.0
        },
        var_over_mse_pct_per_eye_mean: 100.0 * ratio,
        bias2_fraction_pct: bias_pct,
        variance_fraction_pct: var_pct,
        eyes: per_eye,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub tool_version: String,
    pub models: Vec<ModelPosterior>,
}

impl PosteriorReport {
    pub fn new(models: Vec<ModelPosterior>) -> Self {
        Self {
            tool_version: crate::TOOL_VERSION.to_string(),
            models,
        }
    }

    /// Metric rows by model columns.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "Posterior concentration: bias-variance decomposition ({})\n",
            self.tool_version
        );
        let width = 24;
        s.push_str(&format!("{:<44}", "Metric"));
        for m in &self.models {
            s.push_str(&format!(
                " {:>width$}",
                format!("{} (K={}, N={})", m.model, m.k, m.n_eyes)
            ));
        }
        s.push('\n');
        let rows: [(&str, Box<dyn Fn(&ModelPosterior) -> String>); 7] = [
            (
                "Inter-sample SSIM (mean +/- SD across eyes)",
                Box::new(|m| m.inter_sample_ssim.display(5)),
            ),
            (
                "Prediction MSE",
                Box::new(|m| format!("{:.3e}", m.prediction_mse)),
            ),
            (
                "Inter-sample variance / MSE (pooled)",
                Box::new(|m| format!("{:.3}%", m.var_over_mse_pct_pooled)),
            ),
            (
                "Inter-sample variance / MSE (per-eye mean)",
                Box::new(|m| format!("{:.3}%", m.var_over_mse_pct_per_eye_mean)),
            ),
            (
                "Bias^2 fraction of total error",
                Box::new(|m| format!("{:.2}%", m.bias2_fraction_pct)),
            ),
            (
                "Variance fraction of total error",
                Box::new(|m| format!("{:.2}%", m.variance_fraction_pct)),
            ),
            (
                "Inter-sample variance",
                Box::new(|m| format!("{:.3e}", m.variance)),
            ),
        ];
        for (label, f) in rows.iter() {
            s.push_str(&format!("{label:<44}"));
            for m in &self.models {
                s.push_str(&format!(" {:>width$}", f(m)));
            }
            s.push('\n');
        }
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

    fn random_img(rng: &mut ChaCha8Rng, n: usize) -> GrayImage {
        GrayImage::from_fn(n, n, Scale::Unit, |_, _| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn identical_samples_are_pure_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_img(&mut rng, 10);
        let eye = PosteriorEye {
            eye_id: "e".into(),
            samples: vec![s.clone(); 5],
            target: random_img(&mut rng, 10),
            mask: ValidityMask::full(10, 10),
        };
        let r = posterior_report("m", &[eye], SampleAgreement::AllPairs).unwrap();
        assert_eq!(r.variance, 0.0);
        assert_eq!(r.bias2_fraction_pct, 100.0);
        assert_eq!(r.variance_fraction_pct, 0.0);
        assert!((r.inter_sample_ssim.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_samples_are_pure_variance() {
        let t = GrayImage::filled(10, 10, 0.5, Scale::Unit).unwrap();
        let eye = PosteriorEye {
            eye_id: "e".into(),
            samples: vec![t.map(|v| v + 0.1).unwrap(), t.map(|v| v - 0.1).unwrap()],
            target: t,
            mask: ValidityMask::full(10, 10),
        };
        let d = decompose_eye(&eye, SampleAgreement::AllPairs).unwrap();
        assert!(d.bias2 < 1e-30);
        let r = posterior_report("m", &[eye], SampleAgreement::AllPairs).unwrap();
        assert!((r.variance_fraction_pct - 100.0).abs() < 1e-9);
    }

    #[test]
    fn k_too_small_and_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eye = PosteriorEye {
            eye_id: "e".into(),
            samples: vec![random_img(&mut rng, 8)],
            target: random_img(&mut rng, 8),
            mask: ValidityMask::full(8, 8),
        };
        assert!(matches!(
            decompose_eye(&eye, SampleAgreement::AllPairs),
            Err(Error::KTooSmall(1))
        ));
        let eye = PosteriorEye {
            samples: vec![random_img(&mut rng, 8), random_img(&mut rng, 9)],
            ..eye
        };
        assert!(matches!(
            decompose_eye(&eye, SampleAgreement::AllPairs),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn sample_vs_mean_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_img(&mut rng, 10);
        let eye = PosteriorEye {
            eye_id: "e".into(),
            samples: vec![s.clone(), s],
            target: random_img(&mut rng, 10),
            mask: ValidityMask::full(10, 10),
        };
        let d = decompose_eye(&eye, SampleAgreement::SampleVsMean).unwrap();
        assert!((d.inter_sample_ssim - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn decomposition_identity(seed in any::<u64>(), k in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eye = PosteriorEye {
                eye_id: "e".into(),
                samples: (0..k).map(|_| random_img(&mut rng, 9)).collect(),
                target: random_img(&mut rng, 9),
                mask: ValidityMask::from_fn(9, 9, |x, y| (x + y) % 4 != 0),
            };
            let d = decompose_eye(&eye, SampleAgreement::AllPairs).unwrap();
            prop_assert!((d.mse - d.bias2 - d.variance).abs() < 1e-12);
            let r = posterior_report("m", &[eye], SampleAgreement::AllPairs).unwrap();
            prop_assert!((r.bias2_fraction_pct + r.variance_fraction_pct - 100.0).abs() < 1e-6);
            prop_assert!(r.var_over_mse_pct_pooled >= 0.0);
        }
    }
}
