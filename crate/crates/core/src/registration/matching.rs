use serde::{Deserialize, Serialize};

use super::KeypointSet;
use crate::geometry::Point2;

/// A putative correspondence: `src` in the moving image, `dst` in the
/// reference image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: Point2,
    pub dst: Point2,
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

/// Nearest and second-nearest squared distances; ties go to the lower index.
fn nearest_two(q: &[f32], pool: &[Vec<f32>]) -> (usize, f64, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    let mut second = f64::INFINITY;
    for (j, d) in pool.iter().enumerate() {
        let dist = sq_dist(q, d);
        if dist < best.1 {
            second = best.1;
            best = (j, dist);
        } else if dist < second {
            second = dist;
        }
    }
    (best.0, best.1, second)
}

/// Mutual nearest neighbours that also pass the a-to-b ratio test
/// `d1 < ratio * d2`. When `b` has fewer than two descriptors the ratio test
/// is skipped. Pairs are returned in ascending `a` index.
pub fn match_descriptors(a: &KeypointSet, b: &KeypointSet, ratio: f64) -> Vec<(usize, usize)> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let back: Vec<usize> = b
        .descriptors
        .iter()
        .map(|d| nearest_two(d, &a.descriptors).0)
        .collect();
    let mut out = Vec::new();
    for (i, d) in a.descriptors.iter().enumerate() {
        let (j, d1, d2) = nearest_two(d, &b.descriptors);
        if back[j] != i {
            continue;
        }
        if b.len() >= 2 && !(d1 < ratio * ratio * d2) {
            continue;
        }
        out.push((i, j));
    }
    out
}

/// Point pairs for matched indices.
pub fn correspondences(
    a: &KeypointSet,
    b: &KeypointSet,
    pairs: &[(usize, usize)],
) -> Vec<Correspondence> {
    pairs
        .iter()
        .map(|&(i, j)| Correspondence {
            src: a.points[i],
            dst: b.points[j],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::keypoints::{normalize_descriptor, DESCRIPTOR_DIM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut v: Vec<f32> = (0..DESCRIPTOR_DIM)
            .map(|_| rng.sample::<f32, _>(StandardNormal))
            .collect();
        normalize_descriptor(&mut v);
        v
    }

    fn set(descriptors: Vec<Vec<f32>>) -> KeypointSet {
        let points = (0..descriptors.len())
            .map(|i| Point2::new(i as f64, 0.0))
            .collect();
        KeypointSet::new("s", 1.0, (0.0, 0.0), points, descriptors).unwrap()
    }

    #[test]
    fn identical_sets_match_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d: Vec<_> = (0..30).map(|_| random_unit(&mut rng)).collect();
        let m = match_descriptors(&set(d.clone()), &set(d), 0.85);
        assert_eq!(m, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn non_mutual_pairs_are_excluded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = random_unit(&mut rng);
        let near = |eps: f32, rng: &mut ChaCha8Rng| {
            let mut v: Vec<f32> = base
                .iter()
                .map(|&x| x + eps * rng.random_range(-1.0f32..1.0))
                .collect();
            normalize_descriptor(&mut v);
            v
        };
        // a0 and a1 both closest to b0, but b0 prefers a1.
        let a1 = near(0.001, &mut rng);
        let a0 = near(0.05, &mut rng);
        let a = set(vec![a0, a1]);
        let b = set(vec![base.clone(), random_unit(&mut rng)]);
        let m = match_descriptors(&a, &b, 1.0);
        assert_eq!(m, vec![(1, 0)]);
    }

    #[test]
    fn single_candidate_skips_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_unit(&mut rng);
        assert_eq!(
            match_descriptors(&set(vec![d.clone()]), &set(vec![d]), 0.85),
            vec![(0, 0)]
        );
    }

    #[test]
    fn known_correspondence_with_distractors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let truth: Vec<_> = (0..100).map(|_| random_unit(&mut rng)).collect();
        let mut a = truth.clone();
        for _ in 0..20 {
            a.push(random_unit(&mut rng));
        }
        let b: Vec<_> = truth
            .iter()
            .map(|t| {
                let mut v: Vec<f32> = t
                    .iter()
                    .map(|&x| x + 0.02 * rng.sample::<f32, _>(StandardNormal))
                    .collect();
                normalize_descriptor(&mut v);
                v
            })
            .collect();
        let m = match_descriptors(&set(a), &set(b), 0.85);
        let correct = m.iter().filter(|(i, j)| i == j).count();
        assert!(correct >= 95, "{correct} correct");
        assert!(m.iter().all(|(i, _)| *i < 100));
    }
}
