use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fov::{estimate_fov_mask, FovConfig};
use super::harmonize::{histogram_match, normalize_chirality, MixtureReference};
use super::matching::{correspondences, match_descriptors};
use super::model::{FitDiagnostics, ModelKind};
use super::select::{
    gate, select_anchor, select_model, AnchorCandidate, AnchorConfig, GateConfig, SelectConfig,
};
use super::KeypointSet;
use crate::geometry::Projective;
use crate::raster::{warp_bilinear, warp_mask, GrayImage, Rect, ValidityMask};
use crate::temporal::{EyeSequence, Frame, Laterality};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterConfig {
    pub fov: FovConfig,
    pub ratio: f64,
    pub candidates: Vec<ModelKind>,
    pub select: SelectConfig,
    pub gate: GateConfig,
    pub anchor: AnchorConfig,
    /// Center-crop fraction keyed by native resolution `"WxH"`; absent
    /// resolutions are not cropped.
    pub crop_fractions: BTreeMap<String, f64>,
    pub post_crop: f64,
    pub harmonize: bool,
}

impl Default for RegisterConfig {
    fn default() -> Self {
        Self {
            fov: FovConfig::default(),
            ratio: 0.85,
            candidates: ModelKind::ALL.to_vec(),
            select: SelectConfig::default(),
            gate: GateConfig::default(),
            anchor: AnchorConfig::default(),
            crop_fractions: BTreeMap::new(),
            post_crop: 0.80,
            harmonize: true,
        }
    }
}

impl RegisterConfig {
    pub fn crop_fraction(&self, dims: (usize, usize)) -> f64 {
        self.crop_fractions
            .get(&format!("{}x{}", dims.0, dims.1))
            .copied()
            .unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitInput {
    pub t: f64,
    pub image: GrayImage,
    pub mask: ValidityMask,
    pub keypoints: KeypointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitReport {
    pub index: usize,
    pub t: f64,
    pub kind: Option<ModelKind>,
    /// Crop-space map from this visit onto the anchor, row-major.
    pub matrix: [f64; 9],
    pub n_matches: usize,
    pub diagnostics: Option<FitDiagnostics>,
    pub accepted: bool,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeReport {
    pub eye_id: String,
    pub laterality: Laterality,
    pub anchor: usize,
    pub visits: Vec<VisitReport>,
    pub dropped: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registered {
    pub report: EyeReport,
    pub sequence: Option<EyeSequence>,
}

fn letterbox_matrix(kp: &KeypointSet) -> Projective {
    Projective([
        [kp.scale, 0.0, kp.pad.0],
        [0.0, kp.scale, kp.pad.1],
        [0.0, 0.0, 1.0],
    ])
}

fn anchor_candidate(img: &GrayImage, kp: &KeypointSet, cfg: &FovConfig) -> AnchorCandidate {
    let Ok(fov) = estimate_fov_mask(img, cfg) else {
        return AnchorCandidate {
            keypoints_in_fov: 0,
            fov_area_frac: 0.0,
        };
    };
    let (w, h) = fov.dims();
    let inside = kp
        .points
        .iter()
        .filter(|&&p| {
            let c = kp.to_crop(p);
            let (x, y) = (c.x.round(), c.y.round());
            x >= 0.0
                && y >= 0.0
                && (x as usize) < w
                && (y as usize) < h
                && fov.get(x as usize, y as usize)
        })
        .count();
    AnchorCandidate {
        keypoints_in_fov: inside,
        fov_area_frac: fov.valid_count() as f64 / (w * h) as f64,
    }
}

fn register_visit(
    index: usize,
    visit: &VisitInput,
    anchor: &VisitInput,
    cfg: &RegisterConfig,
    seed: u64,
) -> VisitReport {
    let pairs = match_descriptors(&visit.keypoints, &anchor.keypoints, cfg.ratio);
    let corr = correspondences(&visit.keypoints, &anchor.keypoints, &pairs);
    let mut report = VisitReport {
        index,
        t: visit.t,
        kind: None,
        matrix: Projective::identity().to_row_major(),
        n_matches: corr.len(),
        diagnostics: None,
        accepted: false,
        reasons: Vec::new(),
    };
    let model = match select_model(&corr, &cfg.candidates, &cfg.select, seed) {
        Ok(m) => m,
        Err(e) => {
            if corr.len() < cfg.gate.min_matches {
                report
                    .reasons
                    .push(format!("matches<{}", cfg.gate.min_matches));
            }
            report.reasons.push(format!("fit: {e}"));
            return report;
        }
    };
    let decision = gate(&model, corr.len(), &cfg.gate);
    let to_crop = letterbox_matrix(&anchor.keypoints)
        .inverse()
        .map(|inv| {
            inv.compose(&model.matrix)
                .compose(&letterbox_matrix(&visit.keypoints))
        })
        .and_then(|m| m.normalized());
    report.kind = Some(model.kind);
    report.diagnostics = Some(model.diagnostics);
    report.accepted = decision.accepted;
    report.reasons = decision.reasons;
    match to_crop {
        Ok(m) => report.matrix = m.to_row_major(),
        Err(e) => {
            report.accepted = false;
            report.reasons.push(format!("transform: {e}"));
        }
    }
    report
}

fn center_crop(
    img: &GrayImage,
    mask: &ValidityMask,
    fraction: f64,
) -> Result<(GrayImage, ValidityMask)> {
    if fraction >= 1.0 {
        return Ok((img.clone(), mask.clone()));
    }
    let rect = Rect::centered_fraction(img.width(), img.height(), fraction);
    Ok((img.crop(rect)?, mask.crop(rect)?))
}

/// Registers all visits of one eye onto its anchor visit.
///
/// Visits failing the gate are left out of the output sequence; an eye with
/// fewer than two surviving visits yields no sequence.
pub fn register_eye(
    eye_id: &str,
    laterality: Laterality,
    visits: &[VisitInput],
    cfg: &RegisterConfig,
    seed: u64,
) -> Result<Registered> {
    let cropped: Vec<VisitInput> = visits
        .iter()
        .map(|v| {
            let (image, mask) = center_crop(&v.image, &v.mask, cfg.crop_fraction(v.image.dims()))?;
            Ok(VisitInput {
                image,
                mask,
                ..v.clone()
            })
        })
        .collect::<Result<_>>()?;
    let candidates: Vec<AnchorCandidate> = cropped
        .iter()
        .map(|v| anchor_candidate(&v.image, &v.keypoints, &cfg.fov))
        .collect();
    let anchor = select_anchor(&candidates, &cfg.anchor)?;
    let a = &cropped[anchor];
    let mut reports: Vec<VisitReport> = cropped
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            if i == anchor {
                VisitReport {
                    index: i,
                    t: v.t,
                    kind: None,
                    matrix: Projective::identity().to_row_major(),
                    n_matches: v.keypoints.len(),
                    diagnostics: None,
                    accepted: true,
                    reasons: Vec::new(),
                }
            } else {
                register_visit(i, v, a, cfg, seed.wrapping_add(i as u64))
            }
        })
        .collect();

    let out_dims = a.image.dims();
    let post = Rect::centered_fraction(out_dims.0, out_dims.1, cfg.post_crop);
    let reference = MixtureReference::calibrated();
    let mut frames = Vec::new();
    for (v, r) in cropped.iter().zip(reports.iter_mut()) {
        if !r.accepted {
            continue;
        }
        let m = Projective::from_row_major(&r.matrix);
        let warped = warp_bilinear(&v.image, &m, out_dims)?.crop(post)?;
        let mask = warp_mask(&v.mask, &m, out_dims)?.crop(post)?;
        let image = if cfg.harmonize {
            match histogram_match(&warped, &mask, &reference) {
                Ok(matched) => matched.image,
                Err(e) => {
                    r.accepted = false;
                    r.reasons.push(format!("harmonize: {e}"));
                    continue;
                }
            }
        } else {
            warped
        };
        frames.push(Frame {
            image,
            mask,
            t: v.t,
        });
    }

    let mut report = EyeReport {
        eye_id: eye_id.to_string(),
        laterality,
        anchor,
        visits: reports,
        dropped: None,
    };
    if frames.len() < 2 {
        report.dropped = Some(format!("{} surviving visits", frames.len()));
        return Ok(Registered {
            report,
            sequence: None,
        });
    }
    let seq = EyeSequence::new(eye_id, laterality, frames)?;
    let sequence = match normalize_chirality(&seq) {
        Ok(s) => Some(s),
        Err(e) => {
            report.dropped = Some(e.to_string());
            None
        }
    };
    Ok(Registered { report, sequence })
}

/// Composes per-step transforms `T_{k -> k-1}` into maps onto frame 0.
pub fn chain_to_first(steps: &[Projective]) -> Result<Vec<Projective>> {
    let mut out = vec![Projective::identity()];
    for s in steps {
        let prev = out.last().expect("non-empty");
        out.push(prev.compose(s).normalized()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::raster::Scale;
    use crate::registration::keypoints::{normalize_descriptor, DESCRIPTOR_DIM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fundus(n: usize, seed: u64) -> GrayImage {
        let c = (n as f64 - 1.0) / 2.0;
        GrayImage::from_fn(n, n, Scale::Byte, |x, y| {
            let r = (x as f64 - c).hypot(y as f64 - c);
            if r < 0.45 * n as f64 {
                (120.0 + 40.0 * ((x as f64 * 0.1 + seed as f64).sin() * (y as f64 * 0.07).cos()))
                    .round()
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn keypoints(size: usize, count: usize, drop: &[usize]) -> KeypointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let scale = 1024.0 / size as f64;
        let c = size as f64 / 2.0;
        let mut pts = Vec::new();
        let mut desc = Vec::new();
        for i in 0..count {
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(0.0..0.4 * size as f64);
            let mut d: Vec<f32> = (0..DESCRIPTOR_DIM)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect();
            normalize_descriptor(&mut d);
            if drop.contains(&i) {
                continue;
            }
            pts.push(Point2::new(
                (c + r * a.cos()) * scale,
                (c + r * a.sin()) * scale,
            ));
            desc.push(d);
        }
        KeypointSet::new("k", scale, (0.0, 0.0), pts, desc).unwrap()
    }

    fn visit(t: f64, kp: KeypointSet) -> VisitInput {
        VisitInput {
            t,
            image: fundus(128, t as u64),
            mask: ValidityMask::full(128, 128),
            keypoints: kp,
        }
    }

    #[test]
    fn self_registration_is_identity() {
        let kp = keypoints(128, 80, &[]);
        let visits: Vec<VisitInput> = (0..3).map(|i| visit(i as f64, kp.clone())).collect();
        let reg = register_eye(
            "e",
            Laterality::Right,
            &visits,
            &RegisterConfig::default(),
            1,
        )
        .unwrap();
        for v in &reg.report.visits {
            assert!(v.accepted, "{:?}", v.reasons);
            let m = Projective::from_row_major(&v.matrix);
            assert!(m.max_abs_diff(&Projective::identity()) < 1e-6);
        }
        let seq = reg.sequence.unwrap();
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.frames()[0].image.dims(), (102, 102));
    }

    #[test]
    fn few_matches_rejected_and_eye_dropped() {
        let full = keypoints(128, 60, &[]);
        let sparse = keypoints(128, 60, &(15..60).collect::<Vec<_>>());
        let visits = vec![visit(0.0, full), visit(1.0, sparse)];
        let reg = register_eye(
            "e",
            Laterality::Left,
            &visits,
            &RegisterConfig::default(),
            1,
        )
        .unwrap();
        let v = &reg.report.visits[1 - reg.report.anchor];
        assert_eq!(v.n_matches, 15);
        assert!(!v.accepted);
        assert!(v.reasons.contains(&"matches<20".to_string()));
        assert!(reg.sequence.is_none());
        assert!(reg.report.dropped.is_some());
    }

    #[test]
    fn left_eyes_are_flipped() {
        let kp = keypoints(128, 60, &[]);
        let visits: Vec<VisitInput> = (0..2).map(|i| visit(i as f64, kp.clone())).collect();
        let cfg = RegisterConfig {
            harmonize: false,
            ..Default::default()
        };
        let left = register_eye("e", Laterality::Left, &visits, &cfg, 1)
            .unwrap()
            .sequence
            .unwrap();
        let right = register_eye("e", Laterality::Right, &visits, &cfg, 1)
            .unwrap()
            .sequence
            .unwrap();
        assert_eq!(left.laterality(), Laterality::Right);
        assert_eq!(
            left.frames()[0].image,
            right.frames()[0].image.flip_horizontal()
        );
    }

    #[test]
    fn chaining_composes() {
        let a = Projective::translation(1.0, 2.0);
        let b = Projective::translation(3.0, -1.0);
        let chain = chain_to_first(&[a, b]).unwrap();
        assert!(chain[2].max_abs_diff(&Projective::translation(4.0, 1.0)) < 1e-12);
    }
}
