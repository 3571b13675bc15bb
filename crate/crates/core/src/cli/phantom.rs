//! Synthetic longitudinal fundus phantoms.
//!
//! Each eye is a bright fundus disc with a dark, soft-edged lesion at the
//! center whose radius grows linearly in time. Every visit is degraded by a
//! multiplicative illumination field: a smooth low-frequency component plus
//! per-pixel grain, both scaled by `noise_amplitude`.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{EyeEntry, Manifest, VisitEntry};
use super::output::{write_atomic, write_image, write_json, write_mask};
use crate::geometry::Point2;
use crate::raster::{GrayImage, Scale, ValidityMask};
use crate::registration::{normalize_descriptor, KeypointSet, DESCRIPTOR_DIM, MODEL_SIZE};
use crate::temporal::Laterality;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub dataset_id: String,
    pub n_eyes: usize,
    pub frames_per_eye: usize,
    pub image_size: usize,
    /// Pixels per year.
    pub lesion_growth_rate: f64,
    /// Lesion radius at t = 0, in pixels.
    pub lesion_radius: f64,
    pub noise_amplitude: f64,
    /// Years between consecutive visits, drawn uniformly.
    pub visit_interval: IntervalRange,
    pub rng_seed: u64,
    /// Also emit keypoint files (identical points and descriptors per visit).
    pub keypoints: bool,
    pub n_keypoints: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dataset_id: "phantom".into(),
            n_eyes: 8,
            frames_per_eye: 4,
            image_size: 128,
            lesion_growth_rate: 1.5,
            lesion_radius: 12.0,
            noise_amplitude: 0.05,
            visit_interval: IntervalRange {
                min: 0.05,
                max: 2.0,
            },
            rng_seed: 0,
            keypoints: false,
            n_keypoints: 120,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_eyes == 0 || self.frames_per_eye == 0 {
            return bad("n_eyes and frames_per_eye must be positive");
        }
        if self.image_size < 16 {
            return bad("image_size must be at least 16");
        }
        if !(self.lesion_growth_rate >= 0.0
            && self.noise_amplitude >= 0.0
            && self.lesion_radius >= 0.0)
        {
            return bad("rates, radius and noise must be non-negative");
        }
        let iv = self.visit_interval;
        if !(iv.min > 0.0 && iv.min <= iv.max && iv.max.is_finite()) {
            return bad("visit_interval needs 0 < min <= max");
        }
        Ok(())
    }

    fn fundus_radius(&self) -> f64 {
        0.46 * self.image_size as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomVisit {
    pub t: f64,
    pub image: GrayImage,
    pub mask: ValidityMask,
    pub lesion: ValidityMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomEye {
    pub eye_id: String,
    pub laterality: Laterality,
    pub visits: Vec<PhantomVisit>,
    pub keypoints: Option<KeypointSet>,
}

const FUNDUS_LEVEL: f64 = 0.6;
const LESION_LEVEL: f64 = 0.12;
const EDGE_WIDTH: f64 = 1.0;

fn eye_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

struct SmoothField {
    terms: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let terms = (0..4)
            .map(|_| {
                let amp: f64 = rng.sample::<f64, _>(StandardNormal) / 2.0;
                let fx = rng.random_range(-1.5..1.5);
                let fy = rng.random_range(-1.5..1.5);
                let phase = rng.random_range(0.0..TAU);
                (amp, fx, fy, phase)
            })
            .collect();
        Self { terms }
    }

    fn at(&self, u: f64, v: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, fx, fy, ph)| a * (TAU * (fx * u + fy * v) + ph).cos())
            .sum()
    }
}

pub fn generate_eye(spec: &PhantomSpec, index: usize) -> Result<PhantomEye> {
    spec.validate()?;
    let mut rng = eye_rng(spec.rng_seed, index);
    let n = spec.image_size;
    let c = (n as f64 - 1.0) / 2.0;
    let fr = spec.fundus_radius();
    let r0 = spec.lesion_radius * rng.random_range(0.8..1.2);
    let off = 0.02 * n as f64;
    let (lx, ly) = (
        c + rng.random_range(-off..off),
        c + rng.random_range(-off..off),
    );
    let mut times = vec![0.0];
    for _ in 1..spec.frames_per_eye {
        let step = rng.random_range(spec.visit_interval.min..=spec.visit_interval.max);
        times.push(times.last().expect("non-empty") + step);
    }
    let mask = ValidityMask::from_fn(n, n, |x, y| (x as f64 - c).hypot(y as f64 - c) <= fr);
    let base = |x: usize, y: usize, radius: f64| {
        let r = (x as f64 - c).hypot(y as f64 - c);
        if r > fr {
            return 0.0;
        }
        let fundus = FUNDUS_LEVEL * (1.0 - 0.25 * (r / fr).powi(2));
        let d = (x as f64 - lx).hypot(y as f64 - ly);
        let w = 1.0 / (1.0 + ((d - radius) / EDGE_WIDTH).exp());
        fundus * (1.0 - w) + LESION_LEVEL * w
    };
    let mut visits = Vec::with_capacity(times.len());
    for &t in &times {
        let radius = r0 + spec.lesion_growth_rate * t;
        let field = SmoothField::draw(&mut rng);
        let grain: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
        let a = spec.noise_amplitude;
        let pixels: Vec<f64> = (0..n * n)
            .map(|i| {
                let (x, y) = (i % n, i / n);
                let v = base(x, y, radius);
                let illum =
                    1.0 + a * (0.5 * field.at(x as f64 / n as f64, y as f64 / n as f64) + grain[i]);
                (v * illum).clamp(0.0, 1.0)
            })
            .collect();
        let image = GrayImage::new(n, n, pixels, Scale::Unit)?.to_byte();
        let lesion =
            ValidityMask::from_fn(n, n, |x, y| (x as f64 - lx).hypot(y as f64 - ly) <= radius);
        visits.push(PhantomVisit {
            t,
            image,
            mask: mask.clone(),
            lesion,
        });
    }
    let keypoints = if spec.keypoints {
        let scale = MODEL_SIZE as f64 / n as f64;
        let mut points = Vec::with_capacity(spec.n_keypoints);
        let mut descriptors = Vec::with_capacity(spec.n_keypoints);
        for _ in 0..spec.n_keypoints {
            let ang = rng.random_range(0.0..TAU);
            let rad = fr * rng.random::<f64>().sqrt() * 0.95;
            points.push(Point2::new(
                (c + rad * ang.cos()) * scale,
                (c + rad * ang.sin()) * scale,
            ));
            let mut d: Vec<f32> = (0..DESCRIPTOR_DIM)
                .map(|_| rng.sample::<f32, _>(StandardNormal))
                .collect();
            normalize_descriptor(&mut d);
            descriptors.push(d);
        }
        Some(KeypointSet::new(
            format!("p{index:04}"),
            scale,
            (0.0, 0.0),
            points,
            descriptors,
        )?)
    } else {
        None
    };
    Ok(PhantomEye {
        eye_id: format!("p{index:04}"),
        laterality: if index.is_multiple_of(2) {
            Laterality::Right
        } else {
            Laterality::Left
        },
        visits,
        keypoints,
    })
}

pub fn generate(spec: &PhantomSpec) -> Result<Vec<PhantomEye>> {
    spec.validate()?;
    (0..spec.n_eyes)
        .into_par_iter()
        .map(|i| generate_eye(spec, i))
        .collect()
}

/// Writes images, masks, lesion masks, optional keypoints and
/// `manifest.json` into `dir`; returns the manifest.
pub fn write_phantom(spec: &PhantomSpec, dir: &Path) -> Result<Manifest> {
    let eyes = generate(spec)?;
    let entries = eyes
        .par_iter()
        .map(|eye| {
            let mut visits = Vec::with_capacity(eye.visits.len());
            for (k, v) in eye.visits.iter().enumerate() {
                let stem = format!("{}_v{k}", eye.eye_id);
                let image_path = format!("{stem}.pgm");
                let mask_path = format!("{stem}_mask.pgm");
                write_image(dir.join(&image_path), &v.image)?;
                write_mask(dir.join(&mask_path), &v.mask)?;
                write_mask(dir.join(format!("{stem}_lesion.pgm")), &v.lesion)?;
                let keypoints_path = match &eye.keypoints {
                    Some(kp) => {
                        let rel = format!("{stem}_kp.json");
                        let mut kp = kp.clone();
                        kp.image_id = stem.clone();
                        write_atomic(dir.join(&rel), (kp.to_json()? + "\n").as_bytes())?;
                        Some(rel)
                    }
                    None => None,
                };
                visits.push(VisitEntry {
                    t: v.t,
                    image_path,
                    mask_path,
                    keypoints_path,
                });
            }
            Ok(EyeEntry {
                eye_id: eye.eye_id.clone(),
                laterality: eye.laterality,
                visits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        dataset_id: spec.dataset_id.clone(),
        scale: Scale::Byte,
        eyes: entries,
    };
    write_json(dir.join("phantom_spec.json"), spec)?;
    write_json(dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_per_eye_independent() {
        let spec = PhantomSpec {
            n_eyes: 3,
            image_size: 32,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_eye(&spec, 2).unwrap(), a[2]);
        let other = generate(&PhantomSpec {
            rng_seed: 1,
            ..spec
        })
        .unwrap();
        assert_ne!(a[0].visits[0].image, other[0].visits[0].image);
    }

    #[test]
    fn noiseless_static_frames_are_identical() {
        let spec = PhantomSpec {
            n_eyes: 1,
            image_size: 48,
            lesion_growth_rate: 0.0,
            noise_amplitude: 0.0,
            ..Default::default()
        };
        let eye = generate_eye(&spec, 0).unwrap();
        assert!(eye
            .visits
            .windows(2)
            .all(|w| w[0].image == w[1].image && w[0].t < w[1].t));
    }

    #[test]
    fn lesion_grows_and_is_dark() {
        let spec = PhantomSpec {
            n_eyes: 1,
            image_size: 64,
            noise_amplitude: 0.0,
            lesion_growth_rate: 3.0,
            ..Default::default()
        };
        let eye = generate_eye(&spec, 0).unwrap();
        let areas: Vec<usize> = eye.visits.iter().map(|v| v.lesion.valid_count()).collect();
        assert!(areas.windows(2).all(|w| w[0] < w[1]));
        let v = &eye.visits[0];
        assert!(v.image.get(32, 32) < 40.0 && v.image.get(32, 6) > 100.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PhantomSpec {
            noise_amplitude: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let iv = IntervalRange { min: 2.0, max: 1.0 };
        assert!(PhantomSpec {
            visit_interval: iv,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
