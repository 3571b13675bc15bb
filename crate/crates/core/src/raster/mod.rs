//! Image and mask value types plus the pixel-level primitives the rest of
//! the crate builds on.
//!
//! Images are single-channel, row-major, and carry their intensity scale.
//! All intensity arithmetic happens in `f64`.

mod components;
mod hull;
mod io;
mod morphology;
mod warp;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use components::{connected_components, Component, Connectivity};
pub use hull::convex_hull_mask;
pub use io::{
    decode_llf1, decode_pgm, encode_llf1, encode_pgm, load_image, load_mask, save_image, save_mask,
    ImageFormat,
};
pub use morphology::{morphology, MorphOp};
pub use warp::{warp_bilinear, warp_mask};

/// Intensity scale of a [`GrayImage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Values in `[0, 1]`.
    Unit,
    /// Values in `[0, 255]`.
    Byte,
}

impl Scale {
    pub fn max_value(self) -> f64 {
        match self {
            Scale::Unit => 1.0,
            Scale::Byte => 255.0,
        }
    }
}

/// Rounds half up onto the 0..=255 byte lattice.
#[inline]
pub fn quantize_byte(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    scale: Scale,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, scale: Scale) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let max = scale.max_value();
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=max).contains(*v)) {
            return Err(Error::InvalidValue(format!(
                "pixel value {bad} outside [0, {max}] for {scale:?} scale"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            scale,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64, scale: Scale) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], scale)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        scale: Scale,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels, scale)
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| f64::from(b)).collect(),
            Scale::Byte,
        )
    }

    /// Skips range validation; callers guarantee values are in range.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f64>, scale: Scale) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
            scale,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Unit-scale copy; Byte values are divided by 255.
    pub fn to_unit(&self) -> GrayImage {
        match self.scale {
            Scale::Unit => self.clone(),
            Scale::Byte => GrayImage::from_raw(
                self.width,
                self.height,
                self.pixels.iter().map(|v| v / 255.0).collect(),
                Scale::Unit,
            ),
        }
    }

    /// Byte-scale copy; Unit values are multiplied by 255 and rounded half up.
    pub fn to_byte(&self) -> GrayImage {
        match self.scale {
            Scale::Byte => self.clone(),
            Scale::Unit => GrayImage::from_raw(
                self.width,
                self.height,
                self.pixels
                    .iter()
                    .map(|v| f64::from(quantize_byte(v * 255.0)))
                    .collect(),
                Scale::Byte,
            ),
        }
    }

    /// Byte levels of this image (after conversion to Byte scale).
    pub fn byte_levels(&self) -> Vec<u8> {
        match self.scale {
            Scale::Byte => self.pixels.iter().map(|&v| quantize_byte(v)).collect(),
            Scale::Unit => self
                .pixels
                .iter()
                .map(|&v| quantize_byte(v * 255.0))
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GrayImage> {
        GrayImage::new(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| f(v)).collect(),
            self.scale,
        )
    }

    pub fn flip_horizontal(&self) -> GrayImage {
        let mut out = Vec::with_capacity(self.pixels.len());
        for row in self.pixels.chunks(self.width) {
            out.extend(row.iter().rev());
        }
        GrayImage::from_raw(self.width, self.height, out, self.scale)
    }

    /// Copy of the pixels inside `rect`.
    pub fn crop(&self, rect: Rect) -> Result<GrayImage> {
        rect.check_fits(self.width, self.height)?;
        let mut out = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let start = y * self.width + rect.x;
            out.extend_from_slice(&self.pixels[start..start + rect.width]);
        }
        Ok(GrayImage::from_raw(
            rect.width,
            rect.height,
            out,
            self.scale,
        ))
    }

    pub fn same_dims(&self, other: &GrayImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn check_mask(&self, mask: &ValidityMask) -> Result<()> {
        if self.dims() != mask.dims() {
            return Err(Error::Dimension(format!(
                "image {}x{} vs mask {}x{}",
                self.width,
                self.height,
                mask.width(),
                mask.height()
            )));
        }
        Ok(())
    }
}

/// Binary raster marking valid pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> ValidityMask {
        ValidityMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn zip_with(&self, other: &ValidityMask, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(ValidityMask {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn intersection(&self, other: &ValidityMask) -> Result<Self> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn union(&self, other: &ValidityMask) -> Result<Self> {
        self.zip_with(other, |a, b| a || b)
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &ValidityMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box of the true pixels; `None` for an empty mask.
    pub fn bbox(&self) -> Option<Rect> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn flip_horizontal(&self) -> ValidityMask {
        let mut bits = Vec::with_capacity(self.bits.len());
        for row in self.bits.chunks(self.width) {
            bits.extend(row.iter().rev());
        }
        ValidityMask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    pub fn crop(&self, rect: Rect) -> Result<ValidityMask> {
        rect.check_fits(self.width, self.height)?;
        let mut bits = Vec::with_capacity(rect.width * rect.height);
        for y in rect.y..rect.y + rect.height {
            let start = y * self.width + rect.x;
            bits.extend_from_slice(&self.bits[start..start + rect.width]);
        }
        Ok(ValidityMask {
            width: rect.width,
            height: rect.height,
            bits,
        })
    }

    /// Float raster with true = 1.0.
    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
            Scale::Unit,
        )
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    pub const fn full(width: usize, height: usize) -> Self {
        Self::new(0, 0, width, height)
    }

    /// Centered rectangle covering `fraction` of each dimension.
    pub fn centered_fraction(width: usize, height: usize, fraction: f64) -> Self {
        let w = ((width as f64 * fraction).round() as usize).clamp(1, width);
        let h = ((height as f64 * fraction).round() as usize).clamp(1, height);
        Self::new((width - w) / 2, (height - h) / 2, w, h)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.x + self.width > width
            || self.y + self.height > height
        {
            return Err(Error::Dimension(format!(
                "rect {self:?} does not fit a {width}x{height} raster"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementShape {
    Ellipse,
}

/// Binary structuring element with odd dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub shape: ElementShape,
    pub width: usize,
    pub height: usize,
}

impl StructuringElement {
    pub fn ellipse(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "structuring element must have odd dimensions >= 1, got {width}x{height}"
            )));
        }
        Ok(Self {
            shape: ElementShape::Ellipse,
            width,
            height,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::ellipse(self.width, self.height).map(|_| ())
    }

    /// Pixel (dx, dy) is a member iff `(dx/a)^2 + (dy/b)^2 <= 1` with
    /// `a = (w-1)/2`, `b = (h-1)/2`; a zero semi-axis admits only offset 0.
    pub fn contains(&self, dx: i64, dy: i64) -> bool {
        let a = ((self.width - 1) / 2) as i64;
        let b = ((self.height - 1) / 2) as i64;
        if dx.abs() > a || dy.abs() > b {
            return false;
        }
        match (a, b) {
            (0, _) | (_, 0) => true,
            // dx^2 b^2 + dy^2 a^2 <= a^2 b^2, exact in integers
            _ => dx * dx * b * b + dy * dy * a * a <= a * a * b * b,
        }
    }

    /// Half-width of the element's row at vertical offset `dy`.
    pub(crate) fn row_half_width(&self, dy: i64) -> Option<i64> {
        let a = ((self.width - 1) / 2) as i64;
        (0..=a).rev().find(|&dx| self.contains(dx, dy))
    }

    pub fn offsets(&self) -> Vec<(i64, i64)> {
        let a = ((self.width - 1) / 2) as i64;
        let b = ((self.height - 1) / 2) as i64;
        let mut out = Vec::new();
        for dy in -b..=b {
            for dx in -a..=a {
                if self.contains(dx, dy) {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}
