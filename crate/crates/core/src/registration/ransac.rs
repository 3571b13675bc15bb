use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    degenerate, fit_least_squares, has_collinear_triple, inliers, ModelKind, ScoreConfig,
    TransformModel,
};
use super::Correspondence;
use crate::geometry::Point2;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub confidence: f64,
    pub max_iters: usize,
    pub refit_rounds: usize,
    pub score: ScoreConfig,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            confidence: 0.999,
            max_iters: 10_000,
            refit_rounds: 5,
            score: ScoreConfig::default(),
        }
    }
}

/// Iterations needed to draw one all-inlier sample of size `s` with
/// probability `confidence`, given inlier fraction `w`.
pub fn required_iterations(w: f64, s: usize, confidence: f64, cap: usize) -> usize {
    if w >= 1.0 {
        return 1;
    }
    let good = w.powi(s as i32);
    if good <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil();
    if n.is_finite() && n >= 1.0 {
        (n as usize).min(cap)
    } else if n.is_finite() {
        1
    } else {
        cap
    }
}

fn sample_is_degenerate(kind: ModelKind, sample: &[Correspondence]) -> bool {
    let src: Vec<Point2> = sample.iter().map(|c| c.src).collect();
    let dst: Vec<Point2> = sample.iter().map(|c| c.dst).collect();
    match kind {
        ModelKind::Similarity => src[0] == src[1] || dst[0] == dst[1],
        _ => has_collinear_triple(&src) || has_collinear_triple(&dst),
    }
}

/// Adaptive RANSAC followed by iterated least-squares refits on the inliers.
pub fn fit_model_ransac(
    matches: &[Correspondence],
    kind: ModelKind,
    cfg: &RansacConfig,
    seed: u64,
) -> Result<TransformModel> {
    let s = kind.min_samples();
    if matches.len() < s {
        return Err(Error::InsufficientMatches {
            needed: s,
            got: matches.len(),
        });
    }
    let thresh = cfg.score.reproj_thresh;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Vec<usize>> = None;
    let mut needed = cfg.max_iters.max(1);
    let mut iter = 0;
    let mut buf = Vec::with_capacity(s);
    while iter < needed {
        iter += 1;
        buf.clear();
        buf.extend(
            sample(&mut rng, matches.len(), s)
                .into_iter()
                .map(|i| matches[i]),
        );
        if sample_is_degenerate(kind, &buf) {
            continue;
        }
        let Ok(h) = fit_least_squares(kind, &buf) else {
            continue;
        };
        let idx = inliers(&h, matches, thresh);
        if best.as_ref().is_none_or(|b| idx.len() > b.len()) {
            let w = idx.len() as f64 / matches.len() as f64;
            needed = required_iterations(w, s, cfg.confidence, cfg.max_iters).max(1);
            best = Some(idx);
        }
    }
    let mut set = best.ok_or_else(|| degenerate("every sample was degenerate"))?;
    if set.len() < s {
        return Err(degenerate("too few inliers"));
    }
    let mut h = fit_least_squares(kind, &select(matches, &set))?;
    for _ in 0..cfg.refit_rounds {
        let next = inliers(&h, matches, thresh);
        if next == set || next.len() < s {
            break;
        }
        match fit_least_squares(kind, &select(matches, &next)) {
            Ok(refit) => {
                h = refit;
                set = next;
            }
            Err(_) => break,
        }
    }
    Ok(TransformModel::new(kind, h, matches, &cfg.score))
}

fn select(matches: &[Correspondence], idx: &[usize]) -> Vec<Correspondence> {
    idx.iter().map(|&i| matches[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Projective;
    use rand::Rng;

    fn synth(
        t: &Projective,
        n: usize,
        outlier_frac: f64,
        seed: u64,
    ) -> (Vec<Correspondence>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_out = (n as f64 * outlier_frac).round() as usize;
        let m = (0..n)
            .map(|i| {
                let src = Point2::new(rng.random_range(50.0..970.0), rng.random_range(50.0..970.0));
                let dst = if i < n - n_out {
                    t.apply(src).unwrap()
                } else {
                    Point2::new(rng.random_range(0.0..1024.0), rng.random_range(0.0..1024.0))
                };
                Correspondence { src, dst }
            })
            .collect();
        (m, n - n_out)
    }

    #[test]
    fn iteration_formula() {
        assert_eq!(required_iterations(1.0, 4, 0.999, 10_000), 1);
        assert_eq!(required_iterations(0.0, 4, 0.999, 10_000), 10_000);
        let expected = ((0.001f64).ln() / (1.0 - 0.5f64.powi(2)).ln()).ceil() as usize;
        assert_eq!(required_iterations(0.5, 2, 0.999, 10_000), expected);
        assert_eq!(required_iterations(0.01, 4, 0.999, 10_000), 10_000);
    }

    #[test]
    fn exact_similarity_recovered() {
        let t = Projective::similarity(1.1, 0.2, 15.0, -20.0);
        let (m, _) = synth(&t, 50, 0.0, 1);
        let fit = fit_model_ransac(&m, ModelKind::Similarity, &RansacConfig::default(), 7).unwrap();
        assert!(fit.matrix.max_abs_diff(&t) < 1e-6);
        assert_eq!(fit.diagnostics.inlier_ratio, 1.0);
    }

    #[test]
    fn outliers_are_rejected() {
        let t = Projective::similarity(0.95, -0.1, 8.0, 4.0);
        let (m, n_in) = synth(&t, 50, 0.3, 2);
        let fit = fit_model_ransac(&m, ModelKind::Similarity, &RansacConfig::default(), 3).unwrap();
        let idx = inliers(&fit.matrix, &m, 2.0);
        assert!((0..n_in).all(|i| idx.contains(&i)));
        assert!(fit.matrix.max_abs_diff(&t) < 1e-3);
    }

    #[test]
    fn deterministic_under_seed() {
        let t = Projective([[1.0, 0.03, 5.0], [-0.02, 1.01, 2.0], [1e-5, 2e-5, 1.0]]);
        let (m, _) = synth(&t, 60, 0.25, 4);
        let cfg = RansacConfig::default();
        let a = fit_model_ransac(&m, ModelKind::Homography, &cfg, 11).unwrap();
        let b = fit_model_ransac(&m, ModelKind::Homography, &cfg, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_matches() {
        let m = [Correspondence {
            src: Point2::new(0.0, 0.0),
            dst: Point2::new(1.0, 1.0),
        }];
        assert!(matches!(
            fit_model_ransac(&m, ModelKind::Similarity, &RansacConfig::default(), 0),
            Err(Error::InsufficientMatches { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn collinear_data_is_degenerate_for_affine() {
        let m: Vec<Correspondence> = (0..10)
            .map(|i| {
                let p = Point2::new(i as f64, 2.0 * i as f64);
                Correspondence { src: p, dst: p }
            })
            .collect();
        assert!(matches!(
            fit_model_ransac(
                &m,
                ModelKind::Affine,
                &RansacConfig {
                    max_iters: 50,
                    ..Default::default()
                },
                0
            ),
            Err(Error::DegenerateConfiguration(_))
        ));
    }
}
