use std::fmt;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Correspondence;
use crate::geometry::{Point2, Projective};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Similarity,
    Affine,
    Homography,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Similarity,
        ModelKind::Affine,
        ModelKind::Homography,
    ];

    pub fn min_samples(self) -> usize {
        match self {
            ModelKind::Similarity => 2,
            ModelKind::Affine => 3,
            ModelKind::Homography => 4,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Similarity => "similarity",
            ModelKind::Affine => "affine",
            ModelKind::Homography => "homography",
        })
    }
}

/// Scoring constants shared by diagnostics and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub reproj_thresh: f64,
    /// Area the inlier hull is compared against (model-space canvas).
    pub image_area: f64,
    pub anisotropy_limit: f64,
    pub anisotropy_penalty: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            reproj_thresh: 2.0,
            image_area: 1024.0 * 1024.0,
            anisotropy_limit: 1.5,
            anisotropy_penalty: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub median_reproj_err: f64,
    pub hull_spread_frac: f64,
    pub composite_score: f64,
    pub anisotropy: f64,
    pub cond_number: f64,
    pub proj_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformModel {
    pub kind: ModelKind,
    /// Maps moving (src) coordinates to reference (dst) coordinates.
    pub matrix: Projective,
    pub diagnostics: FitDiagnostics,
}

/// Euclidean reprojection error; infinite when the point maps to infinity.
pub fn reprojection_error(m: &Projective, c: &Correspondence) -> f64 {
    m.apply(c.src).map_or(f64::INFINITY, |p| p.distance(&c.dst))
}

pub(crate) fn degenerate(msg: &str) -> Error {
    Error::DegenerateConfiguration(msg.to_string())
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Area of the convex hull of `pts`.
pub fn hull_area(pts: &[Point2]) -> f64 {
    let mut p: Vec<Point2> = pts.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0
            {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n)
        .map(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        .abs()
        / 2.0
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::INFINITY;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Inlier indices (error <= threshold).
pub fn inliers(m: &Projective, matches: &[Correspondence], thresh: f64) -> Vec<usize> {
    (0..matches.len())
        .filter(|&i| reprojection_error(m, &matches[i]) <= thresh)
        .collect()
}

/// Quality diagnostics of `matrix` against all putative matches.
///
/// `composite = inlier_ratio * hull_spread * exp(-median_err / thresh)`,
/// halved for affine/homography models whose singular-value ratio exceeds the
/// anisotropy limit.
pub fn diagnostics(
    kind: ModelKind,
    matrix: &Projective,
    matches: &[Correspondence],
    cfg: &ScoreConfig,
) -> FitDiagnostics {
    let idx = inliers(matrix, matches, cfg.reproj_thresh);
    let mut errs: Vec<f64> = idx
        .iter()
        .map(|&i| reprojection_error(matrix, &matches[i]))
        .collect();
    let median_err = median(&mut errs);
    let inlier_pts: Vec<Point2> = idx.iter().map(|&i| matches[i].dst).collect();
    let spread = hull_area(&inlier_pts) / cfg.image_area;
    let ratio = if matches.is_empty() {
        0.0
    } else {
        idx.len() as f64 / matches.len() as f64
    };
    let cond = matrix.linear_condition();
    let mut score = if idx.is_empty() {
        0.0
    } else {
        ratio * spread * (-median_err / cfg.reproj_thresh).exp()
    };
    if kind != ModelKind::Similarity && cond > cfg.anisotropy_limit {
        score *= cfg.anisotropy_penalty;
    }
    FitDiagnostics {
        inlier_count: idx.len(),
        inlier_ratio: ratio,
        median_reproj_err: if idx.is_empty() {
            f64::INFINITY
        } else {
            median_err
        },
        hull_spread_frac: spread,
        composite_score: score,
        anisotropy: cond,
        cond_number: cond,
        proj_magnitude: matrix.projective_magnitude(),
    }
}

impl TransformModel {
    pub fn new(
        kind: ModelKind,
        matrix: Projective,
        matches: &[Correspondence],
        cfg: &ScoreConfig,
    ) -> Self {
        Self {
            kind,
            matrix,
            diagnostics: diagnostics(kind, &matrix, matches, cfg),
        }
    }

    pub fn recompute_diagnostics(
        &self,
        matches: &[Correspondence],
        cfg: &ScoreConfig,
    ) -> FitDiagnostics {
        diagnostics(self.kind, &self.matrix, matches, cfg)
    }
}

fn span(pts: &[Point2]) -> f64 {
    let (mut lo, mut hi) = (
        Point2::new(f64::MAX, f64::MAX),
        Point2::new(f64::MIN, f64::MIN),
    );
    for p in pts {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (hi.x - lo.x).max(hi.y - lo.y)
}

/// True when three of the points are (nearly) collinear.
pub fn has_collinear_triple(pts: &[Point2]) -> bool {
    let s = span(pts).max(1e-12);
    let tol = 1e-9 * s * s;
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if cross(pts[i], pts[j], pts[k]).abs() <= tol {
                    return true;
                }
            }
        }
    }
    false
}

fn centroid(pts: impl Iterator<Item = Point2>) -> Point2 {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for p in pts {
        sx += p.x;
        sy += p.y;
        n += 1.0;
    }
    Point2::new(sx / n, sy / n)
}

/// Least-squares rotation + uniform scale + translation.
fn fit_similarity(m: &[Correspondence]) -> Result<Projective> {
    let cs = centroid(m.iter().map(|c| c.src));
    let cd = centroid(m.iter().map(|c| c.dst));
    let (mut a, mut b, mut norm) = (0.0, 0.0, 0.0);
    for c in m {
        let (xs, ys) = (c.src.x - cs.x, c.src.y - cs.y);
        let (xd, yd) = (c.dst.x - cd.x, c.dst.y - cd.y);
        a += xs * xd + ys * yd;
        b += xs * yd - ys * xd;
        norm += xs * xs + ys * ys;
    }
    if norm <= 1e-12 {
        return Err(degenerate("collinear or coincident points"));
    }
    let (p, q) = (a / norm, b / norm);
    if p == 0.0 && q == 0.0 {
        return Err(degenerate("collinear or coincident points"));
    }
    let tx = cd.x - (p * cs.x - q * cs.y);
    let ty = cd.y - (q * cs.x + p * cs.y);
    Ok(Projective([[p, -q, tx], [q, p, ty], [0.0, 0.0, 1.0]]))
}

/// Least-squares affine map via the normal equations on centered points.
fn fit_affine(m: &[Correspondence]) -> Result<Projective> {
    let cs = centroid(m.iter().map(|c| c.src));
    let cd = centroid(m.iter().map(|c| c.dst));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut ux, mut uy, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
    for c in m {
        let (x, y) = (c.src.x - cs.x, c.src.y - cs.y);
        let (u, v) = (c.dst.x - cd.x, c.dst.y - cd.y);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        ux += u * x;
        uy += u * y;
        vx += v * x;
        vy += v * y;
    }
    let det = sxx * syy - sxy * sxy;
    if det.abs() <= 1e-12 * (sxx * syy).max(1e-300) {
        return Err(degenerate("collinear or coincident points"));
    }
    let a = (ux * syy - uy * sxy) / det;
    let b = (uy * sxx - ux * sxy) / det;
    let c = (vx * syy - vy * sxy) / det;
    let d = (vy * sxx - vx * sxy) / det;
    let tx = cd.x - a * cs.x - b * cs.y;
    let ty = cd.y - c * cs.x - d * cs.y;
    Ok(Projective::affine(a, b, tx, c, d, ty))
}

/// Similarity that moves the centroid to the origin and the mean distance to
/// sqrt(2).
fn normalizer(pts: impl Iterator<Item = Point2> + Clone) -> Result<Matrix3<f64>> {
    let c = centroid(pts.clone());
    let (mut sum, mut n) = (0.0, 0.0);
    for p in pts {
        sum += (p.x - c.x).hypot(p.y - c.y);
        n += 1.0;
    }
    let mean = sum / n;
    if mean <= 1e-12 {
        return Err(degenerate("collinear or coincident points"));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * c.x,
        0.0,
        s,
        -s * c.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply3(t: &Matrix3<f64>, p: Point2) -> (f64, f64) {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    (v[0] / v[2], v[1] / v[2])
}

/// Normalized direct linear transform.
fn fit_homography(m: &[Correspondence]) -> Result<Projective> {
    let ts = normalizer(m.iter().map(|c| c.src))?;
    let td = normalizer(m.iter().map(|c| c.dst))?;
    let rows = (2 * m.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in m.iter().enumerate() {
        let (x, y) = apply3(&ts, c.src);
        let (u, v) = apply3(&td, c.dst);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| degenerate("svd failed"))?;
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(i, _)| i)
        .ok_or_else(|| degenerate("svd failed"))?;
    let h = vt.row(k);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| degenerate("singular normalization"))?;
    let full = td_inv * hn * ts;
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = full[(i, j)];
        }
    }
    let p = Projective(out)
        .normalized()
        .map_err(|_| degenerate("homography at infinity"))?;
    if p.0.iter().flatten().any(|v| !v.is_finite()) {
        return Err(degenerate("non-finite homography"));
    }
    Ok(p)
}

/// Least-squares fit of `kind` to all `matches`.
pub fn fit_least_squares(kind: ModelKind, matches: &[Correspondence]) -> Result<Projective> {
    if matches.len() < kind.min_samples() {
        return Err(Error::InsufficientMatches {
            needed: kind.min_samples(),
            got: matches.len(),
        });
    }
    if kind != ModelKind::Similarity {
        let src: Vec<Point2> = matches.iter().map(|c| c.src).collect();
        let dst: Vec<Point2> = matches.iter().map(|c| c.dst).collect();
        if matches.len() == kind.min_samples()
            && (has_collinear_triple(&src) || has_collinear_triple(&dst))
        {
            return Err(degenerate("collinear or coincident points"));
        }
    }
    match kind {
        ModelKind::Similarity => fit_similarity(matches),
        ModelKind::Affine => fit_affine(matches),
        ModelKind::Homography => fit_homography(matches),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn exact_fits_recover_each_model() {
        let sim = Projective::similarity(1.05, 0.1, 12.0, -7.0);
        let aff = Projective::affine(1.02, 0.05, 3.0, -0.04, 0.97, 8.0);
        let hom = Projective([[1.01, 0.02, 4.0], [-0.01, 0.99, -3.0], [2e-5, -1e-5, 1.0]]);
        for (kind, t) in [
            (ModelKind::Similarity, sim),
            (ModelKind::Affine, aff),
            (ModelKind::Homography, hom),
        ] {
            let m = synth(&t, 40, 1);
            let fit = fit_least_squares(kind, &m).unwrap();
            assert!(fit.max_abs_diff(&t) < 1e-6, "{kind}: {:?}", fit);
            let minimal = fit_least_squares(kind, &m[..kind.min_samples()]).unwrap();
            assert!(minimal.max_abs_diff(&t) < 1e-6, "{kind} minimal");
        }
    }

    #[test]
    fn similarity_fit_has_equal_singular_values() {
        let t = Projective::similarity(0.9, -0.3, 1.0, 2.0);
        let fit = fit_least_squares(ModelKind::Similarity, &synth(&t, 10, 2)).unwrap();
        let (a, b) = fit.linear_singular_values();
        assert!((a - b).abs() < 1e-9);
        assert_eq!(fit.0[2], [0.0, 0.0, 1.0]);
    }

    #[test]
    fn collinear_minimal_samples_are_degenerate() {
        let line: Vec<Correspondence> = (0..4)
            .map(|i| {
                let p = Point2::new(i as f64 * 10.0, i as f64 * 5.0);
                Correspondence { src: p, dst: p }
            })
            .collect();
        assert!(matches!(
            fit_least_squares(ModelKind::Affine, &line[..3]),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            fit_least_squares(ModelKind::Homography, &line),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(matches!(
            fit_least_squares(ModelKind::Similarity, &line[..1]),
            Err(Error::InsufficientMatches { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn hull_area_of_square() {
        let pts = [
            (0.0, 0.0),
            (10.0, 0.0),
            (10.0, 10.0),
            (0.0, 10.0),
            (5.0, 5.0),
            (5.0, 0.0),
        ]
        .map(|(x, y)| Point2::new(x, y));
        assert!((hull_area(&pts) - 100.0).abs() < 1e-12);
        assert_eq!(hull_area(&pts[..2]), 0.0);
    }

    #[test]
    fn diagnostics_are_reproducible() {
        let t = Projective::affine(1.8, 0.0, 0.0, 0.0, 1.0, 0.0);
        let m = synth(&t, 30, 3);
        let cfg = ScoreConfig::default();
        let model = TransformModel::new(ModelKind::Affine, t, &m, &cfg);
        let d = model.diagnostics;
        assert_eq!(d.inlier_count, 30);
        assert!((d.anisotropy - 1.8).abs() < 1e-12);
        let unpenalized = d.inlier_ratio * d.hull_spread_frac * (-d.median_reproj_err / 2.0).exp();
        assert!((d.composite_score - 0.5 * unpenalized).abs() < 1e-15);
        assert_eq!(model.recompute_diagnostics(&m, &cfg), d);
    }
}
