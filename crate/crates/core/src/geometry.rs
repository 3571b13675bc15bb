//! Planar projective transforms.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 2-D point in pixel coordinates (pixel centers sit on integers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Row-major 3x3 projective matrix acting on homogeneous column vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projective(pub [[f64; 3]; 3]);

impl Default for Projective {
    fn default() -> Self {
        Self::identity()
    }
}

impl Projective {
    pub const fn identity() -> Self {
        Projective([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Projective([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    /// `scale * R(angle)` followed by a translation.
    pub fn similarity(scale: f64, angle: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Projective([
            [scale * c, -scale * s, tx],
            [scale * s, scale * c, ty],
            [0.0, 0.0, 1.0],
        ])
    }

    pub fn affine(a: f64, b: f64, tx: f64, c: f64, d: f64, ty: f64) -> Self {
        Projective([[a, b, tx], [c, d, ty], [0.0, 0.0, 1.0]])
    }

    pub fn from_row_major(v: &[f64; 9]) -> Self {
        Projective([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Scale so that `h33 == 1`. Fails when `h33` is (numerically) zero.
    pub fn normalized(&self) -> Result<Self> {
        let h33 = self.0[2][2];
        if h33.abs() < 1e-15 {
            return Err(Error::SingularTransform);
        }
        let mut out = *self;
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v /= h33;
            }
        }
        Ok(out)
    }

    /// Maps a point; `None` when it lands on or behind the line at infinity.
    pub fn apply(&self, p: Point2) -> Option<Point2> {
        let m = &self.0;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w <= 1e-15 {
            return None;
        }
        let x = m[0][0] * p.x + m[0][1] * p.y + m[0][2];
        let y = m[1][0] * p.x + m[1][1] * p.y + m[1][2];
        Some(Point2::new(x / w, y / w))
    }

    pub fn compose(&self, rhs: &Projective) -> Projective {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Projective(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn linear_determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Inverse via the adjugate. Requires both the full matrix and its
    /// linear part to be non-singular.
    pub fn inverse(&self) -> Result<Projective> {
        let det = self.determinant();
        let scale = self
            .0
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(1e-300);
        if det.abs() <= 1e-12 * scale.powi(3) || self.linear_determinant().abs() <= 1e-12 {
            return Err(Error::SingularTransform);
        }
        let m = &self.0;
        let inv = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        let mut out = Projective(inv);
        for row in out.0.iter_mut() {
            for v in row.iter_mut() {
                *v /= det;
            }
        }
        if out.0[2][2].abs() > 1e-15 {
            out = out.normalized()?;
        }
        Ok(out)
    }

    /// Singular values `(max, min)` of the upper-left 2x2 block.
    pub fn linear_singular_values(&self) -> (f64, f64) {
        let m = &self.0;
        let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
        // Closed form for 2x2: s1,2 = (sqrt((a+d)^2+(c-b)^2) ± sqrt((a-d)^2+(b+c)^2)) / 2
        let p = (a + d).hypot(c - b);
        let q = (a - d).hypot(b + c);
        ((p + q) / 2.0, ((p - q) / 2.0).abs())
    }

    /// Ratio of the linear part's singular values (>= 1, infinite if singular).
    pub fn linear_condition(&self) -> f64 {
        let (hi, lo) = self.linear_singular_values();
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// `max(|h31|, |h32|)` after `h33` normalization.
    pub fn projective_magnitude(&self) -> f64 {
        let m = self.normalized().unwrap_or(*self);
        m.0[2][0].abs().max(m.0[2][1].abs())
    }

    pub fn max_abs_diff(&self, other: &Projective) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
