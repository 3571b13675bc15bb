//! Dataset manifests.
//!
//! ```json
//! {"dataset_id": "demo", "scale": "byte",
//!  "eyes": [{"eye_id": "e001", "laterality": "right",
//!            "visits": [{"t": 0.0, "image_path": "e001_v0.pgm",
//!                        "mask_path": "e001_v0_mask.pgm"}]}]}
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::raster::{load_image, load_mask, GrayImage, Scale, ValidityMask};
use crate::registration::KeypointSet;
use crate::temporal::{EyeSequence, Frame, Laterality};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitEntry {
    pub t: f64,
    pub image_path: String,
    pub mask_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeEntry {
    pub eye_id: String,
    pub laterality: Laterality,
    pub visits: Vec<VisitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub scale: Scale,
    pub eyes: Vec<EyeEntry>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base: PathBuf,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Structural checks that do not touch the file system.
    pub fn check_structure(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for eye in &self.eyes {
            if !ids.insert(eye.eye_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate eye id {}", eye.eye_id)));
            }
            if eye.visits.is_empty() {
                return Err(Error::Manifest(format!("eye {} has no visits", eye.eye_id)));
            }
            for (i, v) in eye.visits.iter().enumerate() {
                if !v.t.is_finite() {
                    return Err(Error::Manifest(format!(
                        "eye {} visit {i}: non-finite t",
                        eye.eye_id
                    )));
                }
                if i > 0 && v.t <= eye.visits[i - 1].t {
                    return Err(Error::Manifest(format!(
                        "eye {}: visit times must be strictly increasing ({} after {})",
                        eye.eye_id,
                        v.t,
                        eye.visits[i - 1].t
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eye(&self, eye_id: &str) -> Option<&EyeEntry> {
        self.eyes.iter().find(|e| e.eye_id == eye_id)
    }
}

impl LoadedManifest {
    /// Parses without validation (used by ingestion, which repairs
    /// duplicate time stamps).
    pub fn load_raw(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest = Manifest::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, base })
    }

    /// Parses and validates structure and file existence.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let loaded = Self::load_raw(path)?;
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.check_structure()?;
        for eye in &self.manifest.eyes {
            for v in &eye.visits {
                let paths = [
                    Some(&v.image_path),
                    Some(&v.mask_path),
                    v.keypoints_path.as_ref(),
                ];
                for p in paths.into_iter().flatten() {
                    let full = self.resolve(p);
                    if !full.is_file() {
                        return Err(Error::Manifest(format!(
                            "eye {}: missing file {}",
                            eye.eye_id,
                            full.display()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base.join(rel)
    }

    /// Image in the manifest's declared scale.
    pub fn load_visit_image(&self, v: &VisitEntry) -> Result<GrayImage> {
        let img = load_image(self.resolve(&v.image_path))?;
        Ok(match self.manifest.scale {
            Scale::Unit => img.to_unit(),
            Scale::Byte => img.to_byte(),
        })
    }

    pub fn load_visit_mask(&self, v: &VisitEntry) -> Result<ValidityMask> {
        load_mask(self.resolve(&v.mask_path))
    }

    pub fn load_visit_keypoints(&self, eye_id: &str, v: &VisitEntry) -> Result<KeypointSet> {
        let rel = v.keypoints_path.as_ref().ok_or_else(|| {
            Error::Manifest(format!("eye {eye_id}: visit at t={} has no keypoints", v.t))
        })?;
        KeypointSet::load(self.resolve(rel))
    }

    pub fn load_sequence(&self, eye: &EyeEntry) -> Result<EyeSequence> {
        let frames = eye
            .visits
            .iter()
            .map(|v| {
                Ok(Frame {
                    image: self.load_visit_image(v)?,
                    mask: self.load_visit_mask(v)?,
                    t: v.t,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EyeSequence::new(eye.eye_id.clone(), eye.laterality, frames)
    }
}
