use super::ValidityMask;
use crate::{Error, Result};

type Pt = (i64, i64);

fn cross(o: Pt, a: Pt, b: Pt) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; collinear points dropped, counter-clockwise.
fn hull_vertices(mut pts: Vec<Pt>) -> Vec<Pt> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Pt> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Pt> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn floor_div(n: i64, d: i64) -> i64 {
    let q = n / d;
    if (n % d != 0) && ((n < 0) != (d < 0)) {
        q - 1
    } else {
        q
    }
}

fn ceil_div(n: i64, d: i64) -> i64 {
    -floor_div(-n, d)
}

/// Filled convex hull of the true pixel centers.
///
/// A pixel is set iff its center lies inside or on the hull. Row spans are
/// computed with exact integer arithmetic, so the result is a superset of the
/// input and idempotent.
pub fn convex_hull_mask(mask: &ValidityMask) -> Result<ValidityMask> {
    let pts: Vec<Pt> = mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| ((i % mask.width()) as i64, (i / mask.width()) as i64))
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyMask);
    }
    let hull = hull_vertices(pts);
    let mut out = ValidityMask::empty(mask.width(), mask.height());
    let n = hull.len();
    let y_min = hull.iter().map(|p| p.1).min().unwrap();
    let y_max = hull.iter().map(|p| p.1).max().unwrap();
    for y in y_min..=y_max {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for i in 0..n {
            let p = hull[i];
            let q = hull[(i + 1) % n];
            if y < p.1.min(q.1) || y > p.1.max(q.1) {
                continue;
            }
            if p.1 == q.1 {
                lo = lo.min(p.0.min(q.0));
                hi = hi.max(p.0.max(q.0));
            } else {
                // x = p.x + (y - p.y) (q.x - p.x) / (q.y - p.y)
                let num = p.0 * (q.1 - p.1) + (y - p.1) * (q.0 - p.0);
                let den = q.1 - p.1;
                lo = lo.min(ceil_div(num, den));
                hi = hi.max(floor_div(num, den));
            }
        }
        if n == 1 {
            lo = hull[0].0;
            hi = hull[0].0;
        }
        for x in lo.max(0)..=hi.min(mask.width() as i64 - 1) {
            out.set(x as usize, y as usize, true);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Point-in-hull oracle: `p` is outside iff the directions to all set
    /// points leave an angular gap wider than pi.
    fn in_hull_oracle(mask: &ValidityMask, px: usize, py: usize) -> bool {
        let mut angles = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.get(x, y) {
                    if (x, y) == (px, py) {
                        return true;
                    }
                    angles.push((y as f64 - py as f64).atan2(x as f64 - px as f64));
                }
            }
        }
        if angles.is_empty() {
            return false;
        }
        angles.sort_by(f64::total_cmp);
        let mut max_gap: f64 = angles[0] + 2.0 * std::f64::consts::PI - angles[angles.len() - 1];
        for w in angles.windows(2) {
            max_gap = max_gap.max(w[1] - w[0]);
        }
        max_gap <= std::f64::consts::PI + 1e-9
    }

    #[test]
    fn rectangle_is_its_own_hull() {
        let m = ValidityMask::from_fn(12, 9, |x, y| (2..10).contains(&x) && (3..7).contains(&y));
        assert_eq!(convex_hull_mask(&m).unwrap(), m);
    }

    #[test]
    fn four_corners_fill_the_square() {
        let mut m = ValidityMask::empty(10, 10);
        for (x, y) in [(0, 0), (9, 0), (0, 9), (9, 9)] {
            m.set(x, y, true);
        }
        assert_eq!(convex_hull_mask(&m).unwrap(), ValidityMask::full(10, 10));
    }

    #[test]
    fn annulus_fills_to_disc() {
        let n = 32;
        let c = 15.5;
        let ring = ValidityMask::from_fn(n, n, |x, y| {
            let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
            (9.0..13.0).contains(&r)
        });
        let hull = convex_hull_mask(&ring).unwrap();
        let oracle = ValidityMask::from_fn(n, n, |x, y| in_hull_oracle(&ring, x, y));
        assert_eq!(hull, oracle);
        assert!(ring.is_subset_of(&hull));
        // center hole is filled
        assert!(hull.get(15, 15) && hull.get(16, 16));
    }

    #[test]
    fn single_pixel_and_segment() {
        let mut m = ValidityMask::empty(8, 8);
        m.set(3, 4, true);
        assert_eq!(convex_hull_mask(&m).unwrap(), m);
        m.set(7, 6, true);
        let hull = convex_hull_mask(&m).unwrap();
        // only (5,5) lies exactly on the segment between them
        assert_eq!(hull.valid_count(), 3);
        assert!(hull.get(5, 5));
    }

    #[test]
    fn empty_mask_errors() {
        assert!(matches!(
            convex_hull_mask(&ValidityMask::empty(3, 3)),
            Err(Error::EmptyMask)
        ));
    }

    proptest! {
        #[test]
        fn matches_oracle_and_is_idempotent(
            pts in proptest::collection::vec((0usize..16, 0usize..16), 1..8)
        ) {
            let mut m = ValidityMask::empty(16, 16);
            for (x, y) in pts {
                m.set(x, y, true);
            }
            let hull = convex_hull_mask(&m).unwrap();
            prop_assert!(m.is_subset_of(&hull));
            prop_assert_eq!(convex_hull_mask(&hull).unwrap(), hull.clone());
            let oracle = ValidityMask::from_fn(16, 16, |x, y| in_hull_oracle(&m, x, y));
            prop_assert_eq!(hull, oracle);
        }
    }
}
