//! Keypoint files.
//!
//! ```json
//! {"image_id": "e1_v0", "model_space": "1024", "scale": 2.0, "pad": [0, 0],
//!  "points": [{"x": 10.5, "y": 20.0}],
//!  "descriptors": "<base64 of little-endian f32, n x 256>"}
//! ```

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::{Error, Result};

pub const DESCRIPTOR_DIM: usize = 256;
pub const MODEL_SIZE: usize = 1024;

/// Keypoints in letterboxed model space with unit-norm descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub image_id: String,
    /// Letterbox scale (model pixels per crop pixel).
    pub scale: f64,
    pub pad: (f64, f64),
    pub points: Vec<Point2>,
    pub descriptors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct KeypointFile {
    image_id: String,
    model_space: String,
    scale: f64,
    pad: [f64; 2],
    points: Vec<Point2>,
    descriptors: String,
}

impl KeypointSet {
    pub fn new(
        image_id: impl Into<String>,
        scale: f64,
        pad: (f64, f64),
        points: Vec<Point2>,
        descriptors: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let set = Self {
            image_id: image_id.into(),
            scale,
            pad,
            points,
            descriptors,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.descriptors.len() {
            return Err(Error::Format(format!(
                "{} points but {} descriptors",
                self.points.len(),
                self.descriptors.len()
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Format(format!(
                "invalid letterbox scale {}",
                self.scale
            )));
        }
        for (i, d) in self.descriptors.iter().enumerate() {
            if d.len() != DESCRIPTOR_DIM {
                return Err(Error::Format(format!(
                    "descriptor {i} has length {}, expected {DESCRIPTOR_DIM}",
                    d.len()
                )));
            }
            let norm = d
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > 1e-4 {
                return Err(Error::Format(format!(
                    "descriptor {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Model-space point mapped back to crop pixel coordinates.
    pub fn to_crop(&self, p: Point2) -> Point2 {
        Point2::new(
            (p.x - self.pad.0) / self.scale,
            (p.y - self.pad.1) / self.scale,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let mut bytes = Vec::with_capacity(self.descriptors.len() * DESCRIPTOR_DIM * 4);
        for d in &self.descriptors {
            for v in d {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let file = KeypointFile {
            image_id: self.image_id.clone(),
            model_space: MODEL_SIZE.to_string(),
            scale: self.scale,
            pad: [self.pad.0, self.pad.1],
            points: self.points.clone(),
            descriptors: B64.encode(bytes),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: KeypointFile = serde_json::from_str(text)?;
        if file.model_space != MODEL_SIZE.to_string() {
            return Err(Error::Format(format!(
                "unsupported model space {:?}",
                file.model_space
            )));
        }
        let bytes = B64
            .decode(file.descriptors.as_bytes())
            .map_err(|e| Error::Format(format!("descriptor base64: {e}")))?;
        if bytes.len() != file.points.len() * DESCRIPTOR_DIM * 4 {
            return Err(Error::Format(format!(
                "descriptor payload has {} bytes for {} points",
                bytes.len(),
                file.points.len()
            )));
        }
        let descriptors = bytes
            .chunks_exact(DESCRIPTOR_DIM * 4)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            })
            .collect();
        Self::new(
            file.image_id,
            file.scale,
            (file.pad[0], file.pad[1]),
            file.points,
            descriptors,
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// L2-normalizes `v` in place (no-op on the zero vector).
pub fn normalize_descriptor(v: &mut [f32]) {
    let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(seed: usize) -> Vec<f32> {
        let mut v: Vec<f32> = (0..DESCRIPTOR_DIM)
            .map(|i| ((i * 31 + seed * 17) % 97) as f32 - 48.0)
            .collect();
        normalize_descriptor(&mut v);
        v
    }

    #[test]
    fn json_round_trip() {
        let set = KeypointSet::new(
            "img",
            2.0,
            (0.0, 256.0),
            vec![Point2::new(1.5, 2.0), Point2::new(700.0, 300.25)],
            vec![unit(1), unit(2)],
        )
        .unwrap();
        let back = KeypointSet::from_json(&set.to_json().unwrap()).unwrap();
        assert_eq!(back, set);
        assert_eq!(
            back.to_crop(Point2::new(10.0, 266.0)),
            Point2::new(5.0, 5.0)
        );
    }

    #[test]
    fn rejects_bad_descriptors() {
        assert!(KeypointSet::new(
            "i",
            1.0,
            (0.0, 0.0),
            vec![Point2::new(0.0, 0.0)],
            vec![vec![0.5; DESCRIPTOR_DIM]]
        )
        .is_err());
        assert!(
            KeypointSet::new("i", 1.0, (0.0, 0.0), vec![Point2::new(0.0, 0.0)], vec![]).is_err()
        );
        let bad = r#"{"image_id":"x","model_space":"1024","scale":1.0,"pad":[0,0],"points":[{"x":1,"y":1}],"descriptors":"AAAA"}"#;
        assert!(matches!(KeypointSet::from_json(bad), Err(Error::Format(_))));
    }
}
