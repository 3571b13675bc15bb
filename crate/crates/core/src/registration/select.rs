use serde::{Deserialize, Serialize};

use super::model::{ModelKind, TransformModel};
use super::ransac::{fit_model_ransac, RansacConfig};
use super::Correspondence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    pub promotion_margin: f64,
    pub max_homography_cond: f64,
    pub max_projective: f64,
    pub ransac: RansacConfig,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            promotion_margin: 0.10,
            max_homography_cond: 3.0,
            max_projective: 1e-3,
            ransac: RansacConfig::default(),
        }
    }
}

/// Homography guard: well-conditioned linear part and a small projective row.
pub fn homography_admissible(model: &TransformModel, cfg: &SelectConfig) -> bool {
    let d = &model.diagnostics;
    d.cond_number <= cfg.max_homography_cond && d.proj_magnitude < cfg.max_projective
}

/// Fits every feasible candidate and promotes a more complex model only when
/// its composite score beats the current winner by the promotion margin.
pub fn select_model(
    matches: &[Correspondence],
    candidates: &[ModelKind],
    cfg: &SelectConfig,
    seed: u64,
) -> Result<TransformModel> {
    let mut kinds: Vec<ModelKind> = candidates.to_vec();
    kinds.sort();
    kinds.dedup();
    let mut winner: Option<TransformModel> = None;
    for kind in kinds {
        if matches.len() < kind.min_samples() {
            continue;
        }
        let Ok(model) = fit_model_ransac(matches, kind, &cfg.ransac, seed) else {
            continue;
        };
        if kind == ModelKind::Homography && !homography_admissible(&model, cfg) {
            continue;
        }
        let promote = match &winner {
            None => true,
            Some(w) => {
                let s = model.diagnostics.composite_score;
                let base = w.diagnostics.composite_score;
                s > base && s >= (1.0 + cfg.promotion_margin) * base
            }
        };
        if promote {
            winner = Some(model);
        }
    }
    winner.ok_or(Error::NoViableModel)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub min_matches: usize,
    pub min_inliers: usize,
    pub max_median_err: f64,
    pub min_spread: f64,
    pub min_score: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            min_matches: 20,
            min_inliers: 10,
            max_median_err: 1.5,
            min_spread: 0.05,
            min_score: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub accepted: bool,
    pub reasons: Vec<String>,
}

impl GateDecision {
    pub fn rejected(reason: impl Into<String>) -> Self {
        Self {
            accepted: false,
            reasons: vec![reason.into()],
        }
    }
}

/// Evaluates all five acceptance criteria; thresholds are inclusive.
pub fn gate(model: &TransformModel, n_matches: usize, cfg: &GateConfig) -> GateDecision {
    let d = &model.diagnostics;
    let mut reasons = Vec::new();
    if n_matches < cfg.min_matches {
        reasons.push(format!("matches<{}", cfg.min_matches));
    }
    if d.inlier_count < cfg.min_inliers {
        reasons.push(format!("inliers<{}", cfg.min_inliers));
    }
    if !(d.median_reproj_err <= cfg.max_median_err) {
        reasons.push(format!("median_err>{}", cfg.max_median_err));
    }
    if !(d.hull_spread_frac >= cfg.min_spread) {
        reasons.push(format!("spread<{}", cfg.min_spread));
    }
    if !(d.composite_score >= cfg.min_score) {
        reasons.push(format!("score<{}", cfg.min_score));
    }
    GateDecision {
        accepted: reasons.is_empty(),
        reasons,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorCandidate {
    pub keypoints_in_fov: usize,
    pub fov_area_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnchorConfig {
    pub min_fov_frac: f64,
    pub penalty: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            min_fov_frac: 0.35,
            penalty: 0.2,
        }
    }
}

pub fn anchor_score(c: &AnchorCandidate, cfg: &AnchorConfig) -> f64 {
    let s = c.keypoints_in_fov as f64 * c.fov_area_frac;
    if c.fov_area_frac < cfg.min_fov_frac {
        s * cfg.penalty
    } else {
        s
    }
}

/// Index of the best-scoring visit; the earliest wins ties.
pub fn select_anchor(visits: &[AnchorCandidate], cfg: &AnchorConfig) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in visits.iter().enumerate() {
        let s = anchor_score(v, cfg);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::EmptyList)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Projective};
    use crate::registration::model::{FitDiagnostics, ScoreConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synth(t: &Projective, n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let src = Point2::new(
                    rng.random_range(100.0..900.0),
                    rng.random_range(100.0..900.0),
                );
                Correspondence {
                    src,
                    dst: t.apply(src).unwrap(),
                }
            })
            .collect()
    }

    fn with_diag(d: FitDiagnostics) -> TransformModel {
        TransformModel {
            kind: ModelKind::Affine,
            matrix: Projective::identity(),
            diagnostics: d,
        }
    }

    fn boundary() -> FitDiagnostics {
        FitDiagnostics {
            inlier_count: 10,
            inlier_ratio: 0.5,
            median_reproj_err: 1.5,
            hull_spread_frac: 0.05,
            composite_score: 0.03,
            anisotropy: 1.0,
            cond_number: 1.0,
            proj_magnitude: 0.0,
        }
    }

    #[test]
    fn similarity_data_selects_similarity() {
        let t = Projective::similarity(1.02, 0.05, 10.0, -5.0);
        let m = synth(&t, 60, 1);
        let model = select_model(&m, &ModelKind::ALL, &SelectConfig::default(), 5).unwrap();
        assert_eq!(model.kind, ModelKind::Similarity);
    }

    #[test]
    fn affine_data_promotes_affine() {
        let t = Projective::affine(1.1, 0.08, 3.0, -0.05, 0.92, 6.0);
        let m = synth(&t, 60, 2);
        let model = select_model(&m, &ModelKind::ALL, &SelectConfig::default(), 5).unwrap();
        assert_eq!(model.kind, ModelKind::Affine);
        assert!(model.matrix.max_abs_diff(&t) < 1e-6);
    }

    #[test]
    fn homography_guards() {
        let cfg = SelectConfig::default();
        let strong = Projective([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.01, 0.0, 1.0]]);
        let m = synth(&strong, 60, 3);
        let fit = fit_model_ransac(&m, ModelKind::Homography, &cfg.ransac, 0).unwrap();
        assert!(!homography_admissible(&fit, &cfg));
        assert!(select_model(&m, &[ModelKind::Homography], &cfg, 0).is_err());

        let stretched = Projective([[3.5, 0.0, 0.0], [0.0, 1.0, 0.0], [1e-5, 0.0, 1.0]]);
        let m = synth(&stretched, 60, 4);
        let fit = fit_model_ransac(&m, ModelKind::Homography, &cfg.ransac, 0).unwrap();
        assert!(fit.diagnostics.cond_number > 3.0);
        assert!(matches!(
            select_model(&m, &[ModelKind::Homography], &cfg, 0),
            Err(Error::NoViableModel)
        ));

        let mild = Projective([[1.0, 0.02, 1.0], [0.01, 0.98, 2.0], [2e-4, -1e-4, 1.0]]);
        let fit =
            fit_model_ransac(&synth(&mild, 60, 5), ModelKind::Homography, &cfg.ransac, 0).unwrap();
        assert!(homography_admissible(&fit, &cfg));
    }

    #[test]
    fn gate_boundaries_inclusive() {
        let cfg = GateConfig::default();
        let ok = gate(&with_diag(boundary()), 20, &cfg);
        assert!(ok.accepted && ok.reasons.is_empty());
        let d = FitDiagnostics {
            inlier_count: 9,
            ..boundary()
        };
        assert_eq!(gate(&with_diag(d), 20, &cfg).reasons, vec!["inliers<10"]);
        let d = FitDiagnostics {
            median_reproj_err: 1.6,
            ..boundary()
        };
        assert_eq!(
            gate(&with_diag(d), 20, &cfg).reasons,
            vec!["median_err>1.5"]
        );
        let all = FitDiagnostics {
            inlier_count: 0,
            median_reproj_err: f64::INFINITY,
            hull_spread_frac: 0.049,
            composite_score: 0.0299,
            ..boundary()
        };
        let g = gate(&with_diag(all), 19, &cfg);
        assert!(!g.accepted);
        assert_eq!(
            g.reasons,
            vec![
                "matches<20",
                "inliers<10",
                "median_err>1.5",
                "spread<0.05",
                "score<0.03"
            ]
        );
    }

    #[test]
    fn anchor_examples() {
        let cfg = AnchorConfig::default();
        let c = |k, f| AnchorCandidate {
            keypoints_in_fov: k,
            fov_area_frac: f,
        };
        assert_eq!(select_anchor(&[c(10, 0.1)], &cfg).unwrap(), 0);
        assert_eq!(select_anchor(&[c(100, 0.5), c(200, 0.5)], &cfg).unwrap(), 1);
        assert_eq!(
            select_anchor(&[c(500, 0.30), c(100, 0.50)], &cfg).unwrap(),
            1
        );
        assert_eq!(select_anchor(&[c(100, 0.5), c(100, 0.5)], &cfg).unwrap(), 0);
        assert!(matches!(select_anchor(&[], &cfg), Err(Error::EmptyList)));
    }

    #[test]
    fn score_is_resolution_independent() {
        let t = Projective::similarity(1.0, 0.1, 3.0, 2.0);
        let m = synth(&t, 40, 6);
        let scaled: Vec<Correspondence> = m
            .iter()
            .map(|c| Correspondence {
                src: Point2::new(c.src.x * 2.0, c.src.y * 2.0),
                dst: Point2::new(c.dst.x * 2.0, c.dst.y * 2.0),
            })
            .collect();
        let t2 = Projective::similarity(1.0, 0.1, 6.0, 4.0);
        let a = TransformModel::new(ModelKind::Similarity, t, &m, &ScoreConfig::default());
        let big = ScoreConfig {
            image_area: 4.0 * 1024.0 * 1024.0,
            ..Default::default()
        };
        let b = TransformModel::new(ModelKind::Similarity, t2, &scaled, &big);
        assert!((a.diagnostics.composite_score - b.diagnostics.composite_score).abs() < 1e-9);
    }
}
