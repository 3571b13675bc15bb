//! Eye sequences, the reference predictors and the time-delta embedding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::raster::{GrayImage, ValidityMask};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Laterality {
    Left,
    Right,
    Unknown,
}

impl fmt::Display for Laterality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Laterality::Left => "left",
            Laterality::Right => "right",
            Laterality::Unknown => "unknown",
        })
    }
}

impl FromStr for Laterality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" | "os" => Ok(Laterality::Left),
            "right" | "r" | "od" => Ok(Laterality::Right),
            "unknown" | "" => Ok(Laterality::Unknown),
            other => Err(Error::UnknownLaterality(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: GrayImage,
    pub mask: ValidityMask,
    /// Years since the first visit.
    pub t: f64,
}

/// Time-ordered frames of one eye.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeSequence {
    eye_id: String,
    laterality: Laterality,
    frames: Vec<Frame>,
}

impl EyeSequence {
    pub fn new(
        eye_id: impl Into<String>,
        laterality: Laterality,
        frames: Vec<Frame>,
    ) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptySequence)?;
        let dims = first.image.dims();
        for (i, f) in frames.iter().enumerate() {
            if !f.t.is_finite() {
                return Err(Error::InvalidValue(format!(
                    "frame {i} has non-finite time"
                )));
            }
            if f.image.dims() != dims {
                return Err(Error::Dimension(format!(
                    "frame {i} is {:?}, expected {:?}",
                    f.image.dims(),
                    dims
                )));
            }
            f.image.check_mask(&f.mask)?;
            if i > 0 && f.t <= frames[i - 1].t {
                return Err(Error::InvalidValue(format!(
                    "frame times must be strictly increasing (frame {i}: {} after {})",
                    f.t,
                    frames[i - 1].t
                )));
            }
        }
        Ok(Self {
            eye_id: eye_id.into(),
            laterality,
            frames,
        })
    }

    pub fn eye_id(&self) -> &str {
        &self.eye_id
    }

    pub fn laterality(&self) -> Laterality {
        self.laterality
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn last(&self) -> &Frame {
        self.frames.last().expect("sequence is never empty")
    }

    /// Sequence restricted to the first `n` frames.
    pub fn history(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        Self::new(
            self.eye_id.clone(),
            self.laterality,
            self.frames[..n.min(self.frames.len())].to_vec(),
        )
    }
}

/// The most recent frame, unchanged.
pub fn copy_last(seq: &EyeSequence, t_star: f64) -> Result<GrayImage> {
    let last = seq.last();
    if t_star < last.t {
        return Err(Error::TargetBeforeHistory {
            t_star,
            t_last: last.t,
        });
    }
    Ok(last.image.clone())
}

/// Per-pixel line through the two most recent frames, evaluated at `t_star`
/// and clamped to the intensity range.
pub fn linear_spline(seq: &EyeSequence, t_star: f64) -> Result<GrayImage> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::InsufficientHistory(n));
    }
    let prev = &seq.frames[n - 2];
    let last = &seq.frames[n - 1];
    let dt = last.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::DegenerateTimes);
    }
    if t_star < last.t {
        return Err(Error::TargetBeforeHistory {
            t_star,
            t_last: last.t,
        });
    }
    let ratio = (t_star - last.t) / dt;
    let max = last.image.scale().max_value();
    let pixels = last
        .image
        .pixels()
        .iter()
        .zip(prev.image.pixels())
        .map(|(&a, &b)| (a + (a - b) * ratio).clamp(0.0, max))
        .collect();
    GrayImage::new(
        last.image.width(),
        last.image.height(),
        pixels,
        last.image.scale(),
    )
}

pub const EMBEDDING_PAIRS: usize = 128;

/// `f_i = exp(-i ln(100) / 127)`: log-uniform from 1 down to 1/100.
pub fn embedding_frequency(i: usize) -> f64 {
    (-(i as f64) * 100f64.ln() / (EMBEDDING_PAIRS - 1) as f64).exp()
}

/// Sinusoidal encoding of a time gap.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaEmbedding {
    pub values: [f64; 2 * EMBEDDING_PAIRS],
}

pub fn delta_embedding(delta_t: f64) -> Result<DeltaEmbedding> {
    if !(delta_t >= 0.0) || !delta_t.is_finite() {
        return Err(Error::NegativeDelta(delta_t));
    }
    let phase = delta_t.ln_1p();
    let mut values = [0.0; 2 * EMBEDDING_PAIRS];
    for i in 0..EMBEDDING_PAIRS {
        let (s, c) = (phase * embedding_frequency(i)).sin_cos();
        values[2 * i] = s;
        values[2 * i + 1] = c;
    }
    Ok(DeltaEmbedding { values })
}
